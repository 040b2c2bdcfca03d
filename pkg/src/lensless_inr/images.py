"""PNG/BMP ingestion and export, and bilinear resizing.

Images are plain ``float32`` arrays of shape ``(H, W, C)`` with nominal
range [0, 1]. Decoding goes through OpenCV because it handles 8- and
16-bit PNGs in both grayscale and RGB.
"""

from __future__ import annotations

from pathlib import Path

import cv2
import numpy as np


class ImageReadError(OSError):
    pass


def read_raw(path) -> np.ndarray:
    """Decode an image file to floats in [0, 1], keeping its channel count.

    Integer images are scaled by their type's maximum value. Alpha is
    dropped. Returns ``(H, W)`` for grayscale and ``(H, W, 3)`` for color.
    """
    path = Path(path)
    data = cv2.imread(str(path), cv2.IMREAD_UNCHANGED) if path.is_file() else None
    if data is None:
        raise ImageReadError(f"cannot read image {path}")
    if data.ndim == 3:
        if data.shape[2] == 4:
            data = data[:, :, :3]
        data = data[:, :, ::-1]  # BGR -> RGB
    if np.issubdtype(data.dtype, np.integer):
        out = data.astype(np.float64) / np.iinfo(data.dtype).max
    else:
        out = data.astype(np.float64)
    return np.ascontiguousarray(out, dtype=np.float32)


def _resize_matrix(n_in: int, n_out: int) -> np.ndarray:
    # half-pixel centers, edge clamped; rows are convex weights
    src = (np.arange(n_out) + 0.5) * n_in / n_out - 0.5
    src = np.clip(src, 0, n_in - 1)
    lo = np.floor(src).astype(int)
    hi = np.minimum(lo + 1, n_in - 1)
    frac = src - lo
    m = np.zeros((n_out, n_in))
    m[np.arange(n_out), lo] += 1 - frac
    m[np.arange(n_out), hi] += frac
    return m


def resize_bilinear(img: np.ndarray, size: tuple[int, int]) -> np.ndarray:
    """Bilinear resize of an ``(H, W)`` or ``(H, W, C)`` array to ``size``."""
    h_out, w_out = size
    if h_out <= 0 or w_out <= 0:
        raise ValueError(f"target size must be positive, got {size}")
    h, w = img.shape[:2]
    if (h, w) == (h_out, w_out):
        return img.copy()
    rh = _resize_matrix(h, h_out)
    rw = _resize_matrix(w, w_out)
    out = np.einsum("ij,jk...->ik...", rh, img.astype(np.float64))
    out = np.einsum("kl,il...->ik...", rw, out)
    return out.astype(img.dtype)


def load_image(path, target: tuple[int, int] | None = None) -> np.ndarray:
    """Load an image as ``(H, W, 3)`` float32; grayscale is broadcast to RGB."""
    img = read_raw(path)
    if img.ndim == 2:
        img = np.repeat(img[:, :, None], 3, axis=2)
    if target is not None:
        img = resize_bilinear(img, target)
    return img


def quantize(img: np.ndarray, bit_depth: int = 8) -> np.ndarray:
    """Clamp to [0, 1] and round half up to unsigned integers."""
    if bit_depth not in (8, 16):
        raise ValueError("bit_depth must be 8 or 16")
    dtype = np.uint8 if bit_depth == 8 else np.uint16
    top = np.iinfo(dtype).max
    q = np.floor(np.clip(np.asarray(img, dtype=np.float64), 0, 1) * top + 0.5)
    return q.astype(dtype)


def save_image(img: np.ndarray, path, bit_depth: int = 8) -> None:
    img = np.asarray(img)
    if img.ndim == 3 and img.shape[2] == 1:
        img = img[:, :, 0]
    if img.ndim not in (2, 3) or (img.ndim == 3 and img.shape[2] != 3) or img.size == 0:
        raise ValueError(f"cannot save image of shape {img.shape}")
    q = quantize(img, bit_depth)
    if q.ndim == 3:
        q = np.ascontiguousarray(q[:, :, ::-1])
    path = Path(path)
    try:
        ok = cv2.imwrite(str(path), q)
    except cv2.error as exc:
        raise OSError(f"cannot write image {path}: {exc}") from None
    if not ok:
        raise OSError(f"cannot write image {path}")
