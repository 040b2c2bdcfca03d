"""Reverse-mode gradients over a closed set of array primitives.

Every primitive has a forward rule and a hand-written vector-Jacobian
product. A :class:`Tape` records primitives in execution order and
:func:`backward` replays them in reverse::

    tape = Tape()
    w = tape.param("w", np.ones((1, 1)))
    x = tape.constant([[2.0]])
    loss = tape.mse_loss(tape.dense(x, w), tape.constant([[0.0]]))
    grads = backward(tape)  # {"w": [[8.0]]}

Only what the reconstruction pipelines need is supported: dense maps,
sine/ReLU/sigmoid activations, bilinear 2x upsampling, channel
normalization, FFT convolution with a fixed kernel, bias addition,
constant scaling, reshaping and the MSE / L1 losses.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Mapping

import numpy as np
from scipy.special import expit


class ShapeError(ValueError):
    """Operand shapes do not satisfy a primitive's shape rule."""


def _shape_error(kind: str, *arrays: np.ndarray, why: str = "") -> ShapeError:
    shapes = ", ".join(str(np.shape(a)) for a in arrays)
    msg = f"{kind}: incompatible operand shapes {shapes}"
    if why:
        msg += f" ({why})"
    return ShapeError(msg)


@dataclass(eq=False)
class Var:
    """A value on a tape. Leaves carry a parameter name or are constants."""

    value: np.ndarray
    name: str | None = None
    requires_grad: bool = False

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape


@dataclass(eq=False)
class Op:
    kind: str
    inputs: tuple[Var, ...]
    output: Var
    ctx: dict[str, Any] = field(default_factory=dict)


# ---------------------------------------------------------------------------
# primitives
# ---------------------------------------------------------------------------


class Primitive:
    kind: str = ""

    def forward(self, *xs: np.ndarray, **attrs):
        """Return ``(output, ctx)``; ``ctx`` holds what backward needs."""
        raise NotImplementedError

    def backward(self, ctx: dict, g: np.ndarray, needs: tuple[bool, ...]):
        raise NotImplementedError


def _flat2(a: np.ndarray) -> np.ndarray:
    return a.reshape(-1, a.shape[-1])


class Dense(Primitive):
    kind = "dense"

    def forward(self, x, w, b=None):
        if w.ndim != 2 or x.ndim < 1 or x.shape[-1] != w.shape[1]:
            raise _shape_error(self.kind, x, w, why="need x[..., d_in] and W[d_out, d_in]")
        if b is not None and b.shape != (w.shape[0],):
            raise _shape_error(self.kind, x, w, b, why="bias must be (d_out,)")
        out = x @ w.T
        if b is not None:
            out = out + b
        return out, {"x": x, "w": w, "has_bias": b is not None}

    def backward(self, ctx, g, needs):
        x, w = ctx["x"], ctx["w"]
        gx = g @ w if needs[0] else None
        gw = _flat2(g).T @ _flat2(x) if needs[1] else None
        grads = [gx, gw]
        if ctx["has_bias"]:
            grads.append(_flat2(g).sum(axis=0) if needs[2] else None)
        return grads


class AddBias(Primitive):
    kind = "add-bias"

    def forward(self, x, b):
        if b.ndim != 1 or x.shape[-1] != b.shape[0]:
            raise _shape_error(self.kind, x, b)
        return x + b, {}

    def backward(self, ctx, g, needs):
        return [g, _flat2(g).sum(axis=0)]


class Sine(Primitive):
    kind = "sin-activation"

    def forward(self, z, omega0=1.0):
        a = omega0 * z
        return np.sin(a), {"a": a, "omega0": omega0}

    def backward(self, ctx, g, needs):
        return [g * (ctx["omega0"] * np.cos(ctx["a"]))]


class Relu(Primitive):
    kind = "relu"

    def forward(self, x):
        mask = x > 0
        return np.where(mask, x, 0).astype(x.dtype, copy=False), {"mask": mask}

    def backward(self, ctx, g, needs):
        return [np.where(ctx["mask"], g, 0).astype(g.dtype, copy=False)]


class Sigmoid(Primitive):
    kind = "sigmoid"

    def forward(self, x):
        s = expit(x)
        return s, {"s": s}

    def backward(self, ctx, g, needs):
        s = ctx["s"]
        return [g * s * (1 - s)]


def upsample_matrix(n: int, dtype=np.float64) -> np.ndarray:
    """``(2n, n)`` linear interpolation matrix with aligned corners."""
    m = 2 * n
    u = np.zeros((m, n), dtype=dtype)
    if n == 1:
        u[:, 0] = 1
        return u
    pos = np.arange(m) * (n - 1) / (m - 1)
    lo = np.minimum(np.floor(pos).astype(int), n - 2)
    frac = pos - lo
    u[np.arange(m), lo] = 1 - frac
    u[np.arange(m), lo + 1] += frac
    return u


class BilinearUpsample(Primitive):
    kind = "bilinear-upsample"

    def forward(self, x):
        if x.ndim != 3:
            raise _shape_error(self.kind, x, why="expected (h, w, c)")
        h, w, c = x.shape
        uh = upsample_matrix(h, x.dtype)
        uw = upsample_matrix(w, x.dtype)
        tmp = (uh @ x.reshape(h, w * c)).reshape(2 * h, w, c)
        return np.matmul(uw, tmp), {"uh": uh, "uw": uw}

    def backward(self, ctx, g, needs):
        uh, uw = ctx["uh"], ctx["uw"]
        tmp = np.matmul(uw.T, g)
        h2, w, c = tmp.shape
        return [(uh.T @ tmp.reshape(h2, w * c)).reshape(uh.shape[1], w, c)]


class ChannelNorm(Primitive):
    """Per-channel standardization over spatial positions plus affine."""

    kind = "channel-norm"

    def forward(self, x, scale, shift, eps=1e-5):
        if x.ndim != 3 or scale.shape != (x.shape[2],) or shift.shape != (x.shape[2],):
            raise _shape_error(self.kind, x, scale, shift)
        mu = x.mean(axis=(0, 1))
        xc = x - mu
        var = (xc * xc).mean(axis=(0, 1))
        inv = 1 / np.sqrt(var + eps)
        xhat = xc * inv
        return xhat * scale + shift, {"xhat": xhat, "inv": inv, "scale": scale}

    def backward(self, ctx, g, needs):
        xhat, inv, scale = ctx["xhat"], ctx["inv"], ctx["scale"]
        gxhat = g * scale
        gx = inv * (
            gxhat - gxhat.mean(axis=(0, 1)) - xhat * (gxhat * xhat).mean(axis=(0, 1))
        )
        return [gx, (g * xhat).sum(axis=(0, 1)), g.sum(axis=(0, 1))]


class FFTConv2d(Primitive):
    """Convolution with a fixed kernel; ``conv`` supplies forward and adjoint."""

    kind = "fft-conv2d"

    def forward(self, x, conv=None):
        if x.shape != tuple(conv.image_shape):
            raise _shape_error(self.kind, x, why=f"convolver built for {conv.image_shape}")
        return conv.forward(x), {"conv": conv}

    def backward(self, ctx, g, needs):
        return [ctx["conv"].adjoint(g)]


class Scale(Primitive):
    kind = "scale"

    def forward(self, x, factor=1.0):
        return x * np.asarray(factor, dtype=x.dtype), {"factor": factor}

    def backward(self, ctx, g, needs):
        return [g * np.asarray(ctx["factor"], dtype=g.dtype)]


class Reshape(Primitive):
    kind = "reshape"

    def forward(self, x, shape=()):
        try:
            out = x.reshape(shape)
        except ValueError:
            raise _shape_error(self.kind, x, why=f"cannot reshape to {shape}") from None
        return out, {"in_shape": x.shape}

    def backward(self, ctx, g, needs):
        return [g.reshape(ctx["in_shape"])]


class MSELoss(Primitive):
    kind = "mse-loss"

    def forward(self, a, b):
        if a.shape != b.shape:
            raise _shape_error(self.kind, a, b)
        d = a - b
        return np.asarray(np.mean(d * d)), {"d": d}

    def backward(self, ctx, g, needs):
        d = ctx["d"]
        ga = d * (g * (2 / d.size)).astype(d.dtype)
        return [ga, -ga]


class L1Loss(Primitive):
    kind = "l1-loss"

    def forward(self, a, b):
        if a.shape != b.shape:
            raise _shape_error(self.kind, a, b)
        d = a - b
        return np.asarray(np.mean(np.abs(d))), {"sign": np.sign(d)}

    def backward(self, ctx, g, needs):
        sign = ctx["sign"]
        ga = sign * (g / sign.size).astype(sign.dtype)
        return [ga, -ga]


PRIMITIVES: dict[str, Primitive] = {
    p.kind: p
    for p in (
        Dense(), AddBias(), Sine(), Relu(), Sigmoid(), BilinearUpsample(),
        ChannelNorm(), FFTConv2d(), Scale(), Reshape(), MSELoss(), L1Loss(),
    )
}


# ---------------------------------------------------------------------------
# tape
# ---------------------------------------------------------------------------


class Tape:
    """Ordered record of primitive applications.

    ``dtype`` fixes the working precision: float32 for optimization,
    float64 for gradient checks. A tape is single-owner.
    """

    def __init__(self, dtype=np.float32):
        self.dtype = np.dtype(dtype)
        self.ops: list[Op] = []
        self.params: dict[str, Var] = {}

    def param(self, name: str, value) -> Var:
        if name in self.params:
            raise ValueError(f"parameter {name!r} declared twice")
        var = Var(np.array(value, dtype=self.dtype), name=name, requires_grad=True)
        self.params[name] = var
        return var

    def constant(self, value) -> Var:
        return Var(np.asarray(value, dtype=self.dtype))

    def record_forward(self, kind: str, *inputs: Var | None, **attrs) -> Var:
        prim = PRIMITIVES[kind]
        present = tuple(v for v in inputs if v is not None)
        out, ctx = prim.forward(*(v.value for v in inputs if v is not None), **attrs)
        out = Var(np.asarray(out), requires_grad=any(v.requires_grad for v in present))
        self.ops.append(Op(kind, present, out, ctx))
        return out

    # thin wrappers, one per primitive
    def dense(self, x, w, b=None):
        return self.record_forward("dense", x, w, b)

    def add_bias(self, x, b):
        return self.record_forward("add-bias", x, b)

    def sin(self, x, omega0=1.0):
        return self.record_forward("sin-activation", x, omega0=omega0)

    def relu(self, x):
        return self.record_forward("relu", x)

    def sigmoid(self, x):
        return self.record_forward("sigmoid", x)

    def upsample2x(self, x):
        return self.record_forward("bilinear-upsample", x)

    def channel_norm(self, x, scale, shift, eps=1e-5):
        return self.record_forward("channel-norm", x, scale, shift, eps=eps)

    def fft_conv2d(self, x, conv):
        return self.record_forward("fft-conv2d", x, conv=conv)

    def scale(self, x, factor):
        return self.record_forward("scale", x, factor=factor)

    def reshape(self, x, shape):
        return self.record_forward("reshape", x, shape=tuple(shape))

    def mse_loss(self, a, b):
        return self.record_forward("mse-loss", a, b)

    def l1_loss(self, a, b):
        return self.record_forward("l1-loss", a, b)


def backward(tape: Tape, seed_grad: float = 1.0) -> dict[str, np.ndarray]:
    """Gradients of the tape's last output with respect to every parameter.

    Parameters declared on the tape but not reached by the loss get zeros.
    """
    if not tape.ops:
        return {name: np.zeros_like(v.value) for name, v in tape.params.items()}
    root = tape.ops[-1].output
    if root.value.size != 1 or root.value.ndim > 1:
        raise ValueError(f"backward needs a scalar terminal node, got shape {root.shape}")

    grads: dict[int, np.ndarray] = {id(root): np.asarray(seed_grad, dtype=root.value.dtype).reshape(root.shape)}
    for op in reversed(tape.ops):
        g = grads.pop(id(op.output), None)
        if g is None:
            continue
        needs = tuple(v.requires_grad for v in op.inputs)
        if not any(needs):
            continue
        in_grads = PRIMITIVES[op.kind].backward(op.ctx, g, needs)
        for var, gi, need in zip(op.inputs, in_grads, needs):
            if not need or gi is None:
                continue
            key = id(var)
            if key in grads:
                grads[key] = grads[key] + gi
            else:
                grads[key] = gi

    return {
        name: grads.get(id(v), np.zeros_like(v.value)).astype(tape.dtype, copy=False)
        for name, v in tape.params.items()
    }


# ---------------------------------------------------------------------------
# finite-difference checking
# ---------------------------------------------------------------------------

LossBuilder = Callable[[Tape, Mapping[str, Var]], Var]


@dataclass
class GradCheckReport:
    errors: dict[str, float]
    tolerance: float
    non_finite: bool = False
    analytic: dict[str, np.ndarray] = field(default_factory=dict, repr=False)
    numeric: dict[str, np.ndarray] = field(default_factory=dict, repr=False)

    @property
    def max_error(self) -> float:
        return max(self.errors.values(), default=0.0)

    @property
    def passed(self) -> bool:
        return not self.non_finite and self.max_error <= self.tolerance

    def summary(self) -> str:
        if self.non_finite:
            return "FAIL (non-finite loss)"
        state = "PASS" if self.passed else "FAIL"
        return f"{state} max rel err {self.max_error:.3e} (tol {self.tolerance:.1e})"


def _loss_value(builder: LossBuilder, params: Mapping[str, np.ndarray], dtype) -> float:
    tape = Tape(dtype)
    pv = {k: tape.param(k, v) for k, v in params.items()}
    return float(builder(tape, pv).value)


def check_gradients(
    builder: LossBuilder,
    params: Mapping[str, np.ndarray],
    step: float = 1e-4,
    tolerance: float = 1e-4,
    dtype=np.float64,
    floor: float = 1e-6,
) -> GradCheckReport:
    """Compare tape gradients against central differences, entry by entry.

    The error for each parameter is ``|a - n| / max(|a|, |n|, floor)`` in
    the Euclidean norm over that parameter's entries. ``floor`` keeps
    exactly-zero analytic gradients from being judged against rounding
    noise in the difference quotient.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    params = {k: np.array(v, dtype=dtype) for k, v in params.items()}

    tape = Tape(dtype)
    pv = {k: tape.param(k, v) for k, v in params.items()}
    loss = builder(tape, pv)
    if not np.all(np.isfinite(loss.value)):
        return GradCheckReport({}, tolerance, non_finite=True)
    analytic = backward(tape)

    numeric: dict[str, np.ndarray] = {}
    non_finite = False
    for name, value in params.items():
        num = np.zeros_like(value)
        flat = value.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            up = _loss_value(builder, params, dtype)
            flat[i] = orig - step
            down = _loss_value(builder, params, dtype)
            flat[i] = orig
            if not (np.isfinite(up) and np.isfinite(down)):
                non_finite = True
            num.reshape(-1)[i] = (up - down) / (2 * step)
        numeric[name] = num

    errors = {}
    for name in params:
        a, n = analytic[name].astype(np.float64), numeric[name]
        denom = max(np.linalg.norm(a), np.linalg.norm(n), floor)
        errors[name] = float(np.linalg.norm(a - n) / denom)
    return GradCheckReport(errors, tolerance, non_finite, analytic, numeric)
