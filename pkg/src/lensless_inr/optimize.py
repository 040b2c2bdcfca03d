"""Untrained reconstruction, prior embedding and prior-initialized reconstruction.

All three share one loop. At step ``t`` the network renders ``x~``, the
forward model predicts ``y~ = k * x~`` (skipped when embedding a prior),
and the loss against the target is backpropagated into an Adam or SGD
update. The loop evaluates ``T + 1`` forwards and applies ``T`` updates;
the trace row for step ``t`` describes the parameters after ``t`` updates.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .autodiff import Tape, Var, backward
from .checkpoint import save_checkpoint
from .decoder import DecoderConfig, DecoderParams, decoder_graph, decoder_parameter_count, init_decoder
from .forward_model import FFTConvolver
from .inr import SirenConfig, SirenParams, init_siren, make_coordinate_grid, parameter_count, siren_graph
from .metrics import SsimConfig, psnr, ssim

log = logging.getLogger(__name__)

DEFAULT_LR = {"siren": 1e-4, "mdd": 1e-2}
TRACE_HEADER = ["step", "loss", "psnr_db", "ssim", "wall_ms"]


class DivergenceError(FloatingPointError):
    def __init__(self, step: int, what: str = "gradients"):
        super().__init__(f"non-finite {what} at step {step}")
        self.step = step


class ArchitectureMismatch(ValueError):
    pass


# ---------------------------------------------------------------------------
# optimizers
# ---------------------------------------------------------------------------


@dataclass
class OptimizerState:
    kind: str = "adam"
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0

    def __post_init__(self):
        if self.kind not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.kind!r}")


def _check_grads(grads, step):
    for g in grads.values():
        if not np.all(np.isfinite(g)):
            raise DivergenceError(step)


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray], state: OptimizerState) -> dict[str, np.ndarray]:
    """Bias-corrected Adam update. Advances ``state`` in place."""
    _check_grads(grads, state.t + 1)
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1 - b1**state.t
    c2 = 1 - b2**state.t
    out = {}
    for name, p in params.items():
        g = grads[name]
        m = state.m.get(name)
        v = state.v.get(name)
        if m is None:
            m = np.zeros_like(p)
            v = np.zeros_like(p)
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * (g * g)
        state.m[name], state.v[name] = m, v
        step = (state.lr / c1) * m / (np.sqrt(v / c2) + state.eps)
        out[name] = (p - step).astype(p.dtype, copy=False)
    return out


def sgd_step(params, grads, state: OptimizerState):
    _check_grads(grads, state.t + 1)
    state.t += 1
    return {name: (p - state.lr * grads[name]).astype(p.dtype, copy=False) for name, p in params.items()}


def optimizer_step(params, grads, state: OptimizerState):
    return adam_step(params, grads, state) if state.kind == "adam" else sgd_step(params, grads, state)


# ---------------------------------------------------------------------------
# run bookkeeping
# ---------------------------------------------------------------------------


@dataclass
class RunOptions:
    steps: int = 2000
    summary_interval: int = 100
    loss: str = "mse"
    weight_decay: float = 0.0
    seed: int = 0
    lr: float | None = None  # None picks the architecture default
    optimizer: str = "adam"
    checkpoint_interval: int = 0
    checkpoint_dir: str | None = None
    deterministic: bool = False  # zeroes wall-clock fields so traces are bit-reproducible
    track_ssim: bool = True

    def __post_init__(self):
        if self.steps < 0:
            raise ValueError("steps must be >= 0")
        if self.summary_interval < 1 or (self.steps >= 1 and self.summary_interval > self.steps):
            raise ValueError("summary_interval must satisfy 1 <= S <= T")
        if self.loss not in ("mse", "l1"):
            raise ValueError(f"unknown loss {self.loss!r}")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be >= 0")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TraceRow:
    step: int
    loss: float
    psnr_db: float | None = None
    ssim: float | None = None
    wall_ms: int = 0


@dataclass
class RunRecord:
    kind: str
    arch: str
    config: dict
    options: dict
    seed: int
    param_count: int
    rows: list[TraceRow] = field(default_factory=list)
    status: str = "ok"
    message: str = ""
    checkpoint: str | None = None
    params: SirenParams | DecoderParams | None = field(default=None, repr=False)

    @property
    def final_loss(self) -> float:
        return self.rows[-1].loss if self.rows else math.nan

    def best_so_far(self) -> list[float]:
        return list(np.minimum.accumulate([r.loss for r in self.rows]))

    def steps_to_psnr(self, threshold: float) -> int | None:
        """First recorded step whose PSNR reaches ``threshold`` dB."""
        for r in self.rows:
            if r.psnr_db is not None and r.psnr_db >= threshold:
                return r.step
        return None

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("params")
        return d

    def write_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    def write_trace_csv(self, path) -> None:
        write_trace_csv(self.rows, path)


def _fmt(x) -> str:
    return "" if x is None else repr(float(x))


def write_trace_csv(rows: list[TraceRow], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_HEADER)
        for r in rows:
            w.writerow([r.step, _fmt(r.loss), _fmt(r.psnr_db), _fmt(r.ssim), r.wall_ms])


def read_trace_csv(path) -> list[TraceRow]:
    rows = []
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            rows.append(TraceRow(
                int(rec["step"]),
                float(rec["loss"]),
                float(rec["psnr_db"]) if rec["psnr_db"] else None,
                float(rec["ssim"]) if rec["ssim"] else None,
                int(rec["wall_ms"]),
            ))
    return rows


# ---------------------------------------------------------------------------
# network plumbing
# ---------------------------------------------------------------------------


def arch_of(config) -> str:
    if isinstance(config, SirenConfig):
        return "siren"
    if isinstance(config, DecoderConfig):
        return "mdd"
    raise TypeError(f"unsupported network config {type(config).__name__}")


def count_params(config) -> int:
    return parameter_count(config) if arch_of(config) == "siren" else decoder_parameter_count(config.channels)


def init_network(config, seed: int):
    return init_siren(config, seed) if arch_of(config) == "siren" else init_decoder(config, seed)


def _image_builder(config, params, shape) -> Callable[[Tape, dict[str, Var]], Var]:
    h, w, c = shape
    if arch_of(config) == "siren":
        if c != config.out_dim:
            raise ArchitectureMismatch(f"network emits {config.out_dim} channels, target has {c}")
        coords = make_coordinate_grid(h, w)

        def build(tape, pv):
            return tape.reshape(siren_graph(tape, config, pv, tape.constant(coords)), (h, w, c))
    else:
        if (config.height, config.width, 3) != (h, w, c):
            raise ArchitectureMismatch(f"decoder renders {config.height}x{config.width}x3, target is {h}x{w}x{c}")
        latent = params.latent

        def build(tape, pv):
            return decoder_graph(tape, config, pv, latent)
    return build


def _rebuild(config, params, tensors):
    if isinstance(params, SirenParams):
        return SirenParams.from_dict(tensors)
    return DecoderParams.from_dict(tensors, params.latent)


def _optimize(kind, config, params, target, conv, opts: RunOptions, ground_truth):
    arch = arch_of(config)
    if not params.matches(config):
        raise ArchitectureMismatch(f"{arch} parameters do not match config {config}")
    target = np.asarray(target, dtype=np.float32)
    if target.ndim != 3:
        raise ValueError(f"target must be (H, W, C), got {target.shape}")
    lr = opts.lr if opts.lr is not None else DEFAULT_LR[arch]
    state = OptimizerState(kind=opts.optimizer, lr=lr)
    build = _image_builder(config, params, target.shape)
    record = RunRecord(kind, arch, config.to_dict(), opts.to_dict() | {"lr": lr}, opts.seed, count_params(config))

    theta = {k: np.array(v, dtype=np.float32) for k, v in params.as_dict().items()}
    image = None
    start = time.perf_counter()
    T, S = opts.steps, opts.summary_interval
    for t in range(T + 1):
        tape = Tape(np.float32)
        pv = {k: tape.param(k, v) for k, v in theta.items()}
        img = build(tape, pv)
        pred = tape.fft_conv2d(img, conv) if conv is not None else img
        tgt = tape.constant(target)
        with np.errstate(over="ignore", invalid="ignore"):
            loss_var = tape.mse_loss(pred, tgt) if opts.loss == "mse" else tape.l1_loss(pred, tgt)
        loss = float(loss_var.value)
        if opts.weight_decay:
            loss += opts.weight_decay * sum(float(np.sum(v.astype(np.float64) ** 2)) for v in theta.values())
        if not np.isfinite(loss):
            record.status = "diverged"
            record.message = f"non-finite loss at step {t}"
            log.warning(record.message)
            break
        image = img.value

        if t > 0 and (t % S == 0 or t == T):
            row = TraceRow(t, loss)
            if ground_truth is not None:
                row.psnr_db = psnr(image, ground_truth)
                if opts.track_ssim and min(target.shape[:2]) >= SsimConfig().window:
                    row.ssim = ssim(image, ground_truth)
            if not opts.deterministic:
                row.wall_ms = int(round(1000 * (time.perf_counter() - start)))
            record.rows.append(row)
            log.debug("step %d loss %.6g psnr %s", t, loss, row.psnr_db)
        if opts.checkpoint_interval and opts.checkpoint_dir and t > 0 and t % opts.checkpoint_interval == 0:
            save_checkpoint(Path(opts.checkpoint_dir) / f"ckpt_{t:06d}.bin", config, _rebuild(config, params, theta), opts.seed)
        if t == T:
            break

        grads = backward(tape)
        if opts.weight_decay:
            grads = {k: g + 2 * opts.weight_decay * theta[k] for k, g in grads.items()}
        try:
            theta = optimizer_step(theta, grads, state)
        except DivergenceError as exc:
            record.status = "diverged"
            record.message = str(exc)
            log.warning(record.message)
            break

    record.params = _rebuild(config, params, theta)
    if image is None:
        image = np.full(target.shape, np.nan, dtype=np.float32)
    return np.clip(image, 0, 1), record


def _convolver(y, psf):
    y = np.asarray(y, dtype=np.float32)
    if y.ndim != 3:
        raise ValueError(f"measurement must be (H, W, C), got {y.shape}")
    return y, FFTConvolver(psf, y.shape, np.float32)


def reconstruct_untrained(y, psf, net, opts: RunOptions = RunOptions(), ground_truth=None):
    """Fit a randomly initialized network through the forward model to ``y``.

    Returns the clamped reconstruction and the run record.
    """
    y, conv = _convolver(y, psf)
    params = init_network(net, opts.seed)
    return _optimize("untrained", net, params, y, conv, opts, ground_truth)


def reconstruct_with_prior(y, psf, prior, net, opts: RunOptions = RunOptions(), ground_truth=None):
    """Same loop as :func:`reconstruct_untrained`, started from ``prior``."""
    if not prior.matches(net):
        raise ArchitectureMismatch("prior checkpoint does not match the requested network")
    y, conv = _convolver(y, psf)
    return _optimize("prior", net, prior.copy(), y, conv, opts, ground_truth)


def embed_prior(x_prior, net: SirenConfig, opts: RunOptions = RunOptions()):
    """Fit the network directly to an image by MSE.

    Returns ``(params, record)``; the record's last row holds the
    embedding PSNR against ``x_prior``.
    """
    x_prior = np.asarray(x_prior, dtype=np.float32)
    if x_prior.min() < 0 or x_prior.max() > 1:
        raise ValueError("prior image must lie in [0, 1]")
    params = init_network(net, opts.seed)
    _, record = _optimize("embed", net, params, x_prior, None, opts, x_prior)
    return record.params, record
