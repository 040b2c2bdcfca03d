"""Regenerate the bundled 64x64 sample images from scikit-image's data set.

Each photo is center-cropped to a square, resized with the package's
bilinear resize and stored as 8-bit PNG.
"""

from pathlib import Path

import numpy as np
from skimage import data

from lensless_inr.images import resize_bilinear, save_image

OUT = Path(__file__).resolve().parent.parent / "src" / "lensless_inr" / "data"
SOURCES = {
    "astronaut": data.astronaut,
    "chelsea": data.chelsea,
}


def prepare(img: np.ndarray, size: int = 64) -> np.ndarray:
    img = img.astype(np.float32) / 255
    h, w = img.shape[:2]
    s = min(h, w)
    top, left = (h - s) // 2, (w - s) // 2
    img = img[top:top + s, left:left + s]
    return np.clip(resize_bilinear(img, (size, size)), 0, 1)


def main() -> None:
    for name, source in SOURCES.items():
        save_image(prepare(source()), OUT / f"{name}.png")
        print(f"wrote {OUT / name}.png")


if __name__ == "__main__":
    main()
