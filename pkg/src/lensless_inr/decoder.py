"""Under-parameterized upsampling decoder used as the comparison baseline.

A fixed random latent tensor passes through six blocks of
``1x1 channel mix -> ReLU -> channel normalization``, the first five
followed by a 2x bilinear upsample, and then a ``3 x k`` output map with
bias and a sigmoid. The mixes carry no bias, which makes the parameter
count ``6k^2 + 15k + 3``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .autodiff import Tape, Var


@dataclass(frozen=True)
class DecoderConfig:
    channels: int = 64
    height: int = 256
    width: int = 256
    upsample_blocks: int = 5

    def __post_init__(self):
        if self.channels < 0:
            raise ValueError("channels must be >= 0")
        f = 2**self.upsample_blocks
        if self.height % f or self.width % f:
            raise ValueError(f"output size must be divisible by {f}, got {self.height}x{self.width}")

    @property
    def mixing_layers(self) -> int:
        return self.upsample_blocks + 1

    @property
    def input_spatial(self) -> tuple[int, int]:
        f = 2**self.upsample_blocks
        return self.height // f, self.width // f

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class DecoderParams:
    mix: list[np.ndarray]
    norm_scale: list[np.ndarray]
    norm_shift: list[np.ndarray]
    out_weight: np.ndarray
    out_bias: np.ndarray
    latent: np.ndarray  # frozen input, never optimized

    def as_dict(self) -> dict[str, np.ndarray]:
        """Trainable tensors only; the latent is excluded."""
        out = {}
        for i, (m, s, t) in enumerate(zip(self.mix, self.norm_scale, self.norm_shift)):
            out[f"mix{i}.weight"] = m
            out[f"norm{i}.scale"] = s
            out[f"norm{i}.shift"] = t
        out["out.weight"] = self.out_weight
        out["out.bias"] = self.out_bias
        return out

    @classmethod
    def from_dict(cls, tensors: dict[str, np.ndarray], latent: np.ndarray) -> "DecoderParams":
        n = sum(1 for k in tensors if k.startswith("mix"))
        return cls(
            [np.asarray(tensors[f"mix{i}.weight"]) for i in range(n)],
            [np.asarray(tensors[f"norm{i}.scale"]) for i in range(n)],
            [np.asarray(tensors[f"norm{i}.shift"]) for i in range(n)],
            np.asarray(tensors["out.weight"]),
            np.asarray(tensors["out.bias"]),
            latent,
        )

    def copy(self) -> "DecoderParams":
        return DecoderParams.from_dict({k: v.copy() for k, v in self.as_dict().items()}, self.latent.copy())

    def matches(self, config: DecoderConfig) -> bool:
        k = config.channels
        return (
            len(self.mix) == config.mixing_layers
            and all(m.shape == (k, k) for m in self.mix)
            and self.out_weight.shape == (3, k)
            and self.latent.shape == (*config.input_spatial, k)
        )


def decoder_parameter_count(k: int) -> int:
    return 6 * k * k + 15 * k + 3


def init_decoder(config: DecoderConfig, seed: int = 0) -> DecoderParams:
    k = config.channels
    rng = np.random.default_rng(seed)
    bound = math.sqrt(6.0 / k) if k else 0.0
    mix = [rng.uniform(-bound, bound, (k, k)).astype(np.float32) for _ in range(config.mixing_layers)]
    out_bound = 1.0 / math.sqrt(k) if k else 0.0
    out_weight = rng.uniform(-out_bound, out_bound, (3, k)).astype(np.float32)
    latent = (0.1 * rng.standard_normal((*config.input_spatial, k))).astype(np.float32)
    return DecoderParams(
        mix,
        [np.ones(k, np.float32) for _ in range(config.mixing_layers)],
        [np.zeros(k, np.float32) for _ in range(config.mixing_layers)],
        out_weight,
        np.zeros(3, np.float32),
        latent,
    )


def decoder_graph(tape: Tape, config: DecoderConfig, params: dict[str, Var], latent: np.ndarray) -> Var:
    """Record the decoder on ``tape``; returns the ``(H, W, 3)`` image."""
    h = tape.constant(latent)
    for i in range(config.mixing_layers):
        h = tape.dense(h, params[f"mix{i}.weight"])
        h = tape.relu(h)
        h = tape.channel_norm(h, params[f"norm{i}.scale"], params[f"norm{i}.shift"])
        if i < config.upsample_blocks:
            h = tape.upsample2x(h)
    out = tape.dense(h, params["out.weight"], params["out.bias"])
    return tape.sigmoid(out)


def decoder_forward(params: DecoderParams, config: DecoderConfig) -> np.ndarray:
    tensors = params.as_dict()
    tape = Tape(np.result_type(*tensors.values()))
    pv = {k: tape.param(k, v) for k, v in tensors.items()}
    out = decoder_graph(tape, config, pv, params.latent)
    for op in tape.ops:
        if not np.all(np.isfinite(op.output.value)):
            raise FloatingPointError(f"non-finite values after {op.kind} (shape {op.output.shape})")
    return out.value
