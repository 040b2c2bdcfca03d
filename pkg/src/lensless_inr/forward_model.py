"""Shift-invariant lensless forward model ``y = k * x + noise``.

Convolution is linear (zero padded), evaluated with real FFTs on a grid of
at least ``(H + Hk - 1, W + Wk - 1)`` and cropped back to ``(H, W)``. The
crop starts at ``(Hk // 2, Wk // 2)``, so a kernel whose only nonzero entry
sits at index ``(Hk // 2, Wk // 2)`` is the identity. The adjoint is
correlation with the kernel under the same crop.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import fft as sfft
from scipy import ndimage

from .images import read_raw, resize_bilinear


@dataclass(frozen=True)
class Psf:
    """Non-negative blur kernel of shape ``(Hk, Wk, C)`` with ``C`` in {1, 3}.

    A single-channel kernel blurs every image channel identically.
    """

    kernel: np.ndarray
    normalization: str = "sum"

    def __post_init__(self):
        k = np.asarray(self.kernel)
        if k.ndim == 2:
            k = k[:, :, None]
        if k.ndim != 3 or k.shape[2] not in (1, 3):
            raise ValueError(f"PSF must be (Hk, Wk) or (Hk, Wk, 1|3), got {k.shape}")
        if not np.all(np.isfinite(k)) or np.any(k < 0):
            raise ValueError("PSF entries must be finite and non-negative")
        object.__setattr__(self, "kernel", k)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.kernel.shape

    @classmethod
    def from_array(cls, arr, normalize: str = "sum") -> "Psf":
        k = np.clip(np.asarray(arr, dtype=np.float64), 0, None)
        if k.ndim == 2:
            k = k[:, :, None]
        if normalize == "sum":
            sums = k.sum(axis=(0, 1))
            if np.any(sums <= 0):
                raise ValueError("PSF is all zero after clamping; cannot normalize")
            k = k / sums
        elif normalize != "none":
            raise ValueError(f"unknown PSF normalization {normalize!r}")
        return cls(k.astype(np.float32), normalize)

    @classmethod
    def delta(cls, size: tuple[int, int], channels: int = 1) -> "Psf":
        k = np.zeros((*size, channels), dtype=np.float32)
        k[size[0] // 2, size[1] // 2, :] = 1
        return cls(k)


@dataclass(frozen=True)
class NoiseModel:
    sigma: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if not self.sigma >= 0:
            raise ValueError("noise sigma must be >= 0")

    def sample(self, shape, dtype=np.float32) -> np.ndarray:
        rng = np.random.default_rng(self.seed)
        return (self.sigma * rng.standard_normal(shape)).astype(dtype)


def load_psf(path, target: tuple[int, int] | None = None, normalize: str = "sum") -> Psf:
    k = read_raw(path)
    if target is not None:
        k = resize_bilinear(k, target)
    return Psf.from_array(k, normalize)


def _kernel_array(k) -> np.ndarray:
    return k.kernel if isinstance(k, Psf) else Psf(np.asarray(k)).kernel


class FFTConvolver:
    """Cached kernel spectrum for repeated convolutions of one image shape."""

    def __init__(self, k, image_shape: tuple[int, int, int], dtype=np.float32):
        kernel = _kernel_array(k)
        h, w, c = image_shape
        hk, wk, ck = kernel.shape
        if ck not in (1, c):
            raise ValueError(f"PSF has {ck} channels, image has {c}")
        self.image_shape = (h, w, c)
        self.dtype = np.dtype(dtype)
        self.offset = (hk // 2, wk // 2)
        self.fft_shape = (sfft.next_fast_len(h + hk - 1, real=True), sfft.next_fast_len(w + wk - 1, real=True))
        self.kernel_ft = sfft.rfft2(kernel.astype(self.dtype), s=self.fft_shape, axes=(0, 1))

    def forward(self, x: np.ndarray) -> np.ndarray:
        h, w, _ = self.image_shape
        full = sfft.irfft2(sfft.rfft2(x, s=self.fft_shape, axes=(0, 1)) * self.kernel_ft, s=self.fft_shape, axes=(0, 1))
        oh, ow = self.offset
        return np.ascontiguousarray(full[oh:oh + h, ow:ow + w])

    def adjoint(self, g: np.ndarray) -> np.ndarray:
        h, w, c = self.image_shape
        oh, ow = self.offset
        padded = np.zeros((*self.fft_shape, c), dtype=g.dtype)
        padded[oh:oh + h, ow:ow + w] = g
        full = sfft.irfft2(sfft.rfft2(padded, axes=(0, 1)) * np.conj(self.kernel_ft), s=self.fft_shape, axes=(0, 1))
        return np.ascontiguousarray(full[:h, :w])


def _check_image(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x)
    if x.ndim == 2:
        x = x[:, :, None]
    if x.ndim != 3:
        raise ValueError(f"expected an (H, W, C) image, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("image contains non-finite values")
    return x


def fft_convolve(x: np.ndarray, k) -> np.ndarray:
    """Linear convolution of each image channel with the PSF, same size as ``x``."""
    x = _check_image(x)
    dtype = x.dtype if x.dtype in (np.float32, np.float64) else np.float64
    return FFTConvolver(k, x.shape, dtype).forward(x.astype(dtype, copy=False))


def convolve_adjoint(g: np.ndarray, k) -> np.ndarray:
    """Adjoint of :func:`fft_convolve`: correlation with the PSF."""
    g = _check_image(g)
    dtype = g.dtype if g.dtype in (np.float32, np.float64) else np.float64
    return FFTConvolver(k, g.shape, dtype).adjoint(g.astype(dtype, copy=False))


def simulate_measurement(x0: np.ndarray, k, noise: NoiseModel = NoiseModel()) -> np.ndarray:
    """Blur ``x0`` and add seeded Gaussian noise. The result is not clamped."""
    x0 = _check_image(x0)
    if x0.min() < 0 or x0.max() > 1:
        raise ValueError("scene intensities must lie in [0, 1]")
    y = fft_convolve(x0, k)
    if noise.sigma > 0:
        y = y + noise.sample(y.shape, y.dtype)
    return y


def make_caustic_psf(
    size: tuple[int, int],
    seed: int = 0,
    aperture: float = 0.5,
    correlation: float = 4.0,
    focus: float = 2.5,
    rays_per_pixel: int = 8,
) -> Psf:
    """Simulated diffuser PSF: a caustic network of sharp bright filaments.

    Rays leave a circular aperture (``aperture`` is its diameter as a
    fraction of the field) and are deflected by the gradient of a smooth
    random surface with correlation length ``correlation`` pixels. Where
    the deflection map folds, rays pile up into caustic curves. ``focus``
    above ~1 is needed for folds to appear.
    """
    h, w = size
    rng = np.random.default_rng(seed)
    ss = rays_per_pixel
    surface = ndimage.gaussian_filter(rng.standard_normal((h * ss, w * ss)), correlation * ss, mode="wrap")
    surface /= surface.std()
    gy, gx = np.gradient(surface, 1.0 / ss)

    yy, xx = np.meshgrid((np.arange(h * ss) + 0.5) / ss - 0.5, (np.arange(w * ss) + 0.5) / ss - 0.5, indexing="ij")
    cy, cx = h // 2, w // 2
    radius = aperture * min(h, w) / 2
    inside = (yy - cy) ** 2 + (xx - cx) ** 2 <= radius**2
    shift = focus * correlation**2
    ly = yy[inside] + shift * gy[inside]
    lx = xx[inside] + shift * gx[inside]
    hist, _, _ = np.histogram2d(ly, lx, bins=(h, w), range=((-0.5, h - 0.5), (-0.5, w - 0.5)))
    hist = ndimage.gaussian_filter(hist, 0.5)
    return Psf.from_array(hist)
