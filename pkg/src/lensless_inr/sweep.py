"""Size sweep: SSIM against under-parameterization ratio.

Each cell is one untrained reconstruction of the same measurement with a
different network size. A cell runs to the largest requested checkpoint
and reads SSIM off the trace at every checkpoint. Cells are independent
and may run in worker processes.
"""

from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import reduce
from pathlib import Path

import numpy as np

from .decoder import DecoderConfig
from .inr import SirenConfig
from .metrics import upr
from .optimize import RunOptions, count_params, reconstruct_untrained

log = logging.getLogger(__name__)

DEFAULT_CHECKPOINTS = (2000, 6000, 10000)

# published reference rows at 256x256x3, rounded as published:
# size parameter -> (UPR, parameter count in thousands)
REFERENCE = {
    "inr": {208: (1.49, 131.66), 128: (3.90, 50.37), 64: (15.28, 12.86), 48: (26.78, 7.34), 32: (58.51, 3.36), 24: (100.30, 1.94)},
    "mdd": {148: (1.47, 133.64), 96: (3.46, 56.73), 48: (13.52, 14.54), 32: (29.67, 6.62), 24: (51.46, 3.82), 16: (111.07, 1.78)},
}
REFERENCE_SHAPE = (256, 256, 3)


@dataclass
class SweepCell:
    method: str
    size_param: int
    param_count: int
    upr: float
    ssim: dict[int, float | None] = field(default_factory=dict)
    error: str = ""
    flags: list[str] = field(default_factory=list)


def network_for(method: str, size_param: int, shape, hidden: int = 3):
    h, w = shape[:2]
    if method == "inr":
        return SirenConfig(size_param, hidden)
    if method == "mdd":
        return DecoderConfig(size_param, h, w)
    raise ValueError(f"unknown method {method!r}")


def reference_flags(method: str, size_param: int, param_count: int) -> list[str]:
    """Differences between the computed size figures and the reference row, if any."""
    ref = REFERENCE.get(method, {}).get(size_param)
    if ref is None:
        return []
    ref_upr, ref_k = ref
    flags = []
    got_k = param_count / 1000
    if not _agrees(got_k, ref_k):
        flags.append(f"params {got_k:.2f}k vs reference {ref_k:.2f}k")
    got_upr = upr(REFERENCE_SHAPE, param_count)
    if not _agrees(got_upr, ref_upr):
        flags.append(f"UPR {got_upr:.2f} vs reference {ref_upr:.2f}")
    return flags


def _agrees(value: float, published: float) -> bool:
    # published figures are either truncated or rounded to two decimals
    return abs(math.floor(value * 100) / 100 - published) < 1e-9 or abs(round(value, 2) - published) < 1e-9


def _run_cell(args) -> SweepCell:
    method, size_param, y, psf, truth, checkpoints, hidden, seed, lr, deterministic = args
    cell = SweepCell(method, size_param, 0, math.nan, {c: None for c in checkpoints})
    interval = reduce(math.gcd, checkpoints)
    opts = RunOptions(steps=max(checkpoints), summary_interval=interval, seed=seed, lr=lr, deterministic=deterministic)
    try:
        net = network_for(method, size_param, y.shape, hidden)
        cell.param_count = count_params(net)
        cell.upr = upr(y.shape, cell.param_count)
        cell.flags = reference_flags(method, size_param, cell.param_count)
        _, rec = reconstruct_untrained(y, psf, net, opts, ground_truth=truth)
    except Exception as exc:  # a failed cell must not stop the sweep
        cell.error = f"{type(exc).__name__}: {exc}"
        return cell
    by_step = {r.step: r.ssim for r in rec.rows}
    for c in checkpoints:
        cell.ssim[c] = by_step.get(c)
    if rec.status != "ok":
        cell.error = rec.message
    return cell


def run_sweep(
    y,
    psf,
    ground_truth,
    sizes: dict[str, list[int]],
    checkpoints=DEFAULT_CHECKPOINTS,
    hidden: int = 3,
    seed: int = 0,
    lr: dict[str, float] | None = None,
    jobs: int = 1,
    deterministic: bool = False,
) -> list[SweepCell]:
    """Run every (method, size) cell and collect SSIM at each checkpoint.

    ``sizes`` maps "inr" to hidden widths and "mdd" to channel counts.
    """
    checkpoints = tuple(sorted(set(int(c) for c in checkpoints)))
    if not checkpoints or checkpoints[0] < 1:
        raise ValueError("checkpoints must be positive step counts")
    y = np.asarray(y, dtype=np.float32)
    truth = None if ground_truth is None else np.asarray(ground_truth, dtype=np.float32)
    lr = lr or {}
    tasks = [
        (method, int(s), y, psf, truth, checkpoints, hidden, seed, lr.get(method), deterministic)
        for method, values in sizes.items()
        for s in values
    ]
    if jobs <= 1 or len(tasks) == 1:
        cells = [_run_cell(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            cells = list(pool.map(_run_cell, tasks))
    for c in cells:
        if c.error:
            log.warning("%s %d failed: %s", c.method, c.size_param, c.error)
    return cells


def _col(c: int) -> str:
    return f"ssim_{c // 1000}k" if c % 1000 == 0 else f"ssim_{c}"


def write_sweep_csv(cells: list[SweepCell], path) -> None:
    checkpoints = sorted({c for cell in cells for c in cell.ssim})
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["method", "size_param", "param_count", "upr", *map(_col, checkpoints), "error", "flags"])
        for cell in cells:
            vals = ["" if cell.ssim.get(c) is None else f"{cell.ssim[c]:.6f}" for c in checkpoints]
            w.writerow([cell.method, cell.size_param, cell.param_count, f"{cell.upr:.4f}", *vals, cell.error, "; ".join(cell.flags)])


def render_table(cells: list[SweepCell]) -> str:
    checkpoints = sorted({c for cell in cells for c in cell.ssim})
    head = ["method", "size", "params", "UPR", *(_col(c).replace("ssim_", "SSIM@") for c in checkpoints)]
    lines = []
    for cell in cells:
        size = f"n={cell.size_param}" if cell.method == "inr" else f"k={cell.size_param}"
        vals = ["failed" if cell.ssim.get(c) is None else f"{cell.ssim[c]:.4f}" for c in checkpoints]
        lines.append([cell.method.upper(), size, str(cell.param_count), f"{cell.upr:.2f}", *vals])
    widths = [max(len(r[i]) for r in [head, *lines]) for i in range(len(head))]
    fmt = "  ".join(f"{{:>{w}}}" for w in widths)
    out = [fmt.format(*head), fmt.format(*("-" * w for w in widths))]
    out += [fmt.format(*r) for r in lines]
    notes = [f"{c.method} {c.size_param}: {f}" for c in cells for f in c.flags]
    notes += [f"{c.method} {c.size_param}: {c.error}" for c in cells if c.error]
    if notes:
        out += ["", *notes]
    return "\n".join(out) + "\n"


def write_report(cells: list[SweepCell], out_dir) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_sweep_csv(cells, out_dir / "sweep.csv")
    (out_dir / "sweep.txt").write_text(render_table(cells))
