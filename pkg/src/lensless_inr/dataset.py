"""Paired measurement / ground-truth samples and their manifest files.

A manifest is a JSON document::

    {"samples": [{"name": ..., "measurement": "y.png", "ground_truth": "x0.png",
                  "psf": "psf.png", "size": [H, W],
                  "provenance": {"kind": "synthetic", "seed": 7, "sigma": 0.01}}]}

Paths are stored relative to the manifest's directory when possible.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .forward_model import NoiseModel, Psf, load_psf, simulate_measurement
from .images import load_image, save_image


@dataclass(frozen=True)
class Provenance:
    kind: str = "synthetic"  # "synthetic" or "captured"
    seed: int | None = None
    sigma: float | None = None

    def __post_init__(self):
        if self.kind not in ("synthetic", "captured"):
            raise ValueError(f"unknown provenance {self.kind!r}")
        if self.kind == "synthetic" and (self.seed is None or self.sigma is None):
            raise ValueError("synthetic provenance needs seed and sigma")

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        if self.kind == "synthetic":
            d |= {"seed": int(self.seed), "sigma": float(self.sigma)}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Provenance":
        return cls(d["kind"], d.get("seed"), d.get("sigma"))


@dataclass
class PairedSample:
    measurement: np.ndarray
    ground_truth: np.ndarray | None
    psf: Psf
    provenance: Provenance
    paths: dict[str, str] = field(default_factory=dict)

    def regenerate(self) -> np.ndarray:
        """Recompute a synthetic measurement from its ground truth."""
        if self.provenance.kind != "synthetic" or self.ground_truth is None:
            raise ValueError("only synthetic samples with a ground truth can be regenerated")
        noise = NoiseModel(self.provenance.sigma, self.provenance.seed)
        return simulate_measurement(self.ground_truth, self.psf, noise)


def _size(size) -> tuple[int, int] | None:
    if size is None:
        return None
    if isinstance(size, int):
        size = (size, size)
    h, w = (int(s) for s in size)
    if h < 1 or w < 1:
        raise ValueError(f"target size must be positive, got {size}")
    return h, w


def make_pair(x0: np.ndarray, psf: Psf, sigma: float = 0.01, seed: int = 0) -> PairedSample:
    x0 = np.clip(np.asarray(x0, dtype=np.float32), 0, 1)
    y = simulate_measurement(x0, psf, NoiseModel(sigma, seed))
    return PairedSample(y, x0, psf, Provenance("synthetic", seed, sigma))


def assemble_pair(x0_path, psf_path, sigma: float = 0.01, seed: int = 0, size=None) -> PairedSample:
    """Load a ground truth and a PSF and simulate the lensless measurement.

    The PSF is resized to the same ``size`` as the image. Loader errors
    propagate unchanged.
    """
    target = _size(size)
    x0 = load_image(x0_path, target)
    psf = load_psf(psf_path, x0.shape[:2])
    sample = make_pair(x0, psf, sigma, seed)
    sample.paths = {"ground_truth": str(x0_path), "psf": str(psf_path)}
    return sample


def _rel(path, base: Path) -> str:
    try:
        return os.path.relpath(path, base)
    except ValueError:
        return str(Path(path).resolve())


def manifest_entry(sample: PairedSample, name: str, base) -> dict:
    base = Path(base)
    entry = {"name": name, "size": list(sample.measurement.shape[:2]), "provenance": sample.provenance.to_dict()}
    for key in ("measurement", "ground_truth", "psf"):
        if key in sample.paths:
            entry[key] = _rel(sample.paths[key], base)
    return entry


def write_manifest(path, entries: list[dict]) -> None:
    path = Path(path)
    doc = {"samples": entries}
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def read_manifest(path) -> list[dict]:
    path = Path(path)
    doc = json.loads(path.read_text())
    if not isinstance(doc, dict) or not isinstance(doc.get("samples"), list):
        raise ValueError(f"{path}: manifest must hold a 'samples' list")
    return doc["samples"]


def load_entry(entry: dict, base) -> PairedSample:
    """Load one manifest entry. Paths are resolved against ``base``."""
    base = Path(base)
    size = tuple(entry["size"]) if "size" in entry else None
    y = load_image(base / entry["measurement"], size)
    x0 = load_image(base / entry["ground_truth"], size) if entry.get("ground_truth") else None
    psf = load_psf(base / entry["psf"], y.shape[:2])
    paths = {k: str(base / entry[k]) for k in ("measurement", "ground_truth", "psf") if entry.get(k)}
    return PairedSample(y, x0, psf, Provenance.from_dict(entry["provenance"]), paths)


def save_pair(sample: PairedSample, out_dir, name: str = "sample", bit_depth: int = 16) -> dict:
    """Write ``y.png`` (and ``x0.png`` when known) into ``out_dir``; return its manifest entry.

    Measurements are stored at 16 bits by default since the simulated noise
    sits near the 8-bit quantization step.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    save_image(sample.measurement, out_dir / "y.png", bit_depth)
    sample.paths["measurement"] = str(out_dir / "y.png")
    if sample.ground_truth is not None and "ground_truth" not in sample.paths:
        save_image(sample.ground_truth, out_dir / "x0.png", bit_depth)
        sample.paths["ground_truth"] = str(out_dir / "x0.png")
    if "psf" not in sample.paths:
        k = sample.psf.kernel
        save_image(k / k.max(), out_dir / "psf.png", 16)
        sample.paths["psf"] = str(out_dir / "psf.png")
    return manifest_entry(sample, name, out_dir)
