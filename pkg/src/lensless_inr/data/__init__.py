"""Small bundled images for tests, examples and the acceptance suite.

All images are 64x64 RGB PNGs derived from public-domain or CC0 photos
shipped with scikit-image; ``scripts/make_samples.py`` regenerates them.
"""

from __future__ import annotations

from importlib import resources

import numpy as np

from ..images import load_image

SAMPLES = {
    "astronaut": "astronaut.png",
    "chelsea": "chelsea.png",
}


def sample_path(name: str):
    if name not in SAMPLES:
        raise KeyError(f"unknown sample {name!r}; available: {sorted(SAMPLES)}")
    return resources.files(__name__) / SAMPLES[name]


def load_sample(name: str) -> np.ndarray:
    """Return a bundled sample as ``(H, W, 3)`` float32 in [0, 1]."""
    with resources.as_file(sample_path(name)) as path:
        return load_image(path)
