"""Sinusoidal coordinate network mapping pixel coordinates (u, v) to RGB."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .autodiff import Tape, Var


@dataclass(frozen=True)
class SirenConfig:
    """Layer layout of the coordinate MLP.

    ``hidden_layers`` counts hidden-to-hidden linear maps, so the network
    has ``hidden_layers + 2`` linear layers in total.
    """

    hidden_width: int = 208
    hidden_layers: int = 3
    omega0_first: float = 30.0
    omega0_hidden: float = 30.0
    output_activation: str = "linear"
    in_dim: int = 2
    out_dim: int = 3

    def __post_init__(self):
        if self.hidden_width < 1 or self.hidden_layers < 0:
            raise ValueError("hidden_width must be >= 1 and hidden_layers >= 0")
        if self.output_activation not in ("linear", "sigmoid"):
            raise ValueError(f"unknown output activation {self.output_activation!r}")

    @property
    def layer_dims(self) -> list[tuple[int, int]]:
        """``(fan_in, fan_out)`` for every linear layer."""
        n = self.hidden_width
        return [(self.in_dim, n)] + [(n, n)] * self.hidden_layers + [(n, self.out_dim)]

    def omega0(self, layer: int) -> float:
        return self.omega0_first if layer == 0 else self.omega0_hidden

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class SirenParams:
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def as_dict(self) -> dict[str, np.ndarray]:
        out = {}
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            out[f"layer{i}.weight"] = w
            out[f"layer{i}.bias"] = b
        return out

    @classmethod
    def from_dict(cls, tensors: dict[str, np.ndarray]) -> "SirenParams":
        n = len(tensors) // 2
        return cls(
            [np.asarray(tensors[f"layer{i}.weight"]) for i in range(n)],
            [np.asarray(tensors[f"layer{i}.bias"]) for i in range(n)],
        )

    def copy(self) -> "SirenParams":
        return SirenParams([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def matches(self, config: SirenConfig) -> bool:
        shapes = [(w.shape, b.shape) for w, b in zip(self.weights, self.biases)]
        expected = [((o, i), (o,)) for i, o in config.layer_dims]
        return shapes == expected


def parameter_count(config: SirenConfig) -> int:
    return sum(fan_in * fan_out + fan_out for fan_in, fan_out in config.layer_dims)


def make_coordinate_grid(height: int, width: int) -> np.ndarray:
    """Row-major ``(H*W, 2)`` array of (u, v) pairs spanning [-1, 1].

    u runs along the width and v along the height, corners hit +-1 exactly.
    """
    if height < 2 or width < 2:
        raise ValueError(f"grid needs at least 2x2 points, got {height}x{width}")
    u = np.linspace(-1.0, 1.0, width)
    v = np.linspace(-1.0, 1.0, height)
    uu, vv = np.meshgrid(u, v)
    return np.stack([uu.ravel(), vv.ravel()], axis=1).astype(np.float32)


def init_bound(config: SirenConfig, layer: int) -> float:
    fan_in = config.layer_dims[layer][0]
    if layer == 0:
        return 1.0 / fan_in
    return math.sqrt(6.0) / (config.omega0(layer) * math.sqrt(fan_in))


def init_siren(config: SirenConfig, seed: int = 0) -> SirenParams:
    # biases share their layer's weight range
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for i, (fan_in, fan_out) in enumerate(config.layer_dims):
        bound = init_bound(config, i)
        weights.append(rng.uniform(-bound, bound, (fan_out, fan_in)).astype(np.float32))
        biases.append(rng.uniform(-bound, bound, fan_out).astype(np.float32))
    return SirenParams(weights, biases)


def siren_graph(tape: Tape, config: SirenConfig, params: dict[str, Var], coords: Var) -> Var:
    """Record the network on ``tape``; returns the ``(N, out_dim)`` output."""
    h = coords
    last = len(config.layer_dims) - 1
    for i in range(last):
        z = tape.dense(h, params[f"layer{i}.weight"], params[f"layer{i}.bias"])
        h = tape.sin(z, config.omega0(i))
    out = tape.dense(h, params[f"layer{last}.weight"], params[f"layer{last}.bias"])
    if config.output_activation == "sigmoid":
        out = tape.sigmoid(out)
    return out


def siren_forward(params: SirenParams, config: SirenConfig, coords: np.ndarray) -> np.ndarray:
    if len(coords) == 0:
        raise ValueError("no coordinates given")
    tensors = params.as_dict()
    if not all(np.all(np.isfinite(t)) for t in tensors.values()):
        raise ValueError("network parameters contain non-finite values")
    tape = Tape(np.result_type(*tensors.values()))
    pv = {k: tape.param(k, v) for k, v in tensors.items()}
    return siren_graph(tape, config, pv, tape.constant(coords)).value


def render(params: SirenParams, config: SirenConfig, height: int, width: int) -> np.ndarray:
    """Evaluate the network on the full pixel grid as an ``(H, W, 3)`` image."""
    out = siren_forward(params, config, make_coordinate_grid(height, width))
    return out.reshape(height, width, config.out_dim)
