"""PSNR, SSIM and the under-parameterization ratio.

Both image metrics clamp their inputs to [0, peak] first. SSIM uses the
usual 11x11 Gaussian window (sigma 1.5), K1 = 0.01, K2 = 0.03, evaluates
only positions where the window fits entirely inside the image, and
averages the per-channel means.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

PSNR_CAP_DB = 100.0


@dataclass(frozen=True)
class SsimConfig:
    window: int = 11
    sigma: float = 1.5
    k1: float = 0.01
    k2: float = 0.03
    data_range: float = 1.0

    def __post_init__(self):
        if self.k1 <= 0 or self.k2 <= 0:
            raise ValueError("SSIM stabilizers must be positive")

    def kernel_1d(self) -> np.ndarray:
        r = np.arange(self.window) - (self.window - 1) / 2
        g = np.exp(-(r**2) / (2 * self.sigma**2))
        return g / g.sum()


def _pair(a, b) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"image shapes differ: {a.shape} vs {b.shape}")
    return a, b


def psnr(a, b, peak: float = 1.0) -> float:
    """Peak signal-to-noise ratio in dB, capped at 100 dB for identical inputs."""
    a, b = _pair(a, b)
    a = np.clip(a, 0, peak)
    b = np.clip(b, 0, peak)
    mse = np.mean((a - b) ** 2)
    if mse == 0:
        return PSNR_CAP_DB
    return float(min(10 * np.log10(peak**2 / mse), PSNR_CAP_DB))


def _filter_valid(img: np.ndarray, g: np.ndarray) -> np.ndarray:
    r = len(g) // 2
    out = ndimage.correlate1d(img, g, axis=0, mode="constant")
    out = ndimage.correlate1d(out, g, axis=1, mode="constant")
    return out[r:img.shape[0] - r, r:img.shape[1] - r]


def ssim_map(a, b, cfg: SsimConfig = SsimConfig()) -> np.ndarray:
    """SSIM at every valid window position, one plane per channel."""
    a, b = _pair(a, b)
    if a.ndim == 2:
        a, b = a[:, :, None], b[:, :, None]
    if min(a.shape[:2]) < cfg.window:
        raise ValueError(f"images of size {a.shape[:2]} are smaller than the {cfg.window}x{cfg.window} window")
    a = np.clip(a, 0, cfg.data_range)
    b = np.clip(b, 0, cfg.data_range)
    c1 = (cfg.k1 * cfg.data_range) ** 2
    c2 = (cfg.k2 * cfg.data_range) ** 2
    g = cfg.kernel_1d()
    planes = []
    for ch in range(a.shape[2]):
        x, y = a[:, :, ch], b[:, :, ch]
        mx, my = _filter_valid(x, g), _filter_valid(y, g)
        sxx = _filter_valid(x * x, g) - mx * mx
        syy = _filter_valid(y * y, g) - my * my
        sxy = _filter_valid(x * y, g) - mx * my
        num = (2 * mx * my + c1) * (2 * sxy + c2)
        den = (mx * mx + my * my + c1) * (sxx + syy + c2)
        planes.append(num / den)
    return np.stack(planes, axis=2)


def ssim(a, b, cfg: SsimConfig = SsimConfig()) -> float:
    return float(ssim_map(a, b, cfg).mean(axis=(0, 1)).mean())


def upr(image_dims: tuple[int, ...], param_count: int) -> float:
    """Under-parameterization ratio: pixel-value count over parameter count."""
    if param_count < 1:
        raise ValueError("parameter count must be at least 1")
    return float(np.prod(image_dims)) / param_count
