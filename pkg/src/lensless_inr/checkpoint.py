"""Portable parameter checkpoints.

Layout (all integers little-endian)::

    bytes 0-7    magic b"LINRCKPT"
    bytes 8-11   uint32 format version (currently 1)
    bytes 12-15  uint32 header length L
    next L bytes UTF-8 JSON header, keys sorted:
                   arch     "siren" or "mdd"
                   config   network config fields
                   seed     initialization seed
                   tensors  [{"name": ..., "shape": [...]}, ...] in payload order
    payload      float32 little-endian values of each tensor, C order

SIREN tensors are stored layer by layer, weight before bias. Decoder
checkpoints store the trainable tensors followed by the frozen latent
under the name ``latent``.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .decoder import DecoderConfig, DecoderParams
from .inr import SirenConfig, SirenParams

MAGIC = b"LINRCKPT"
VERSION = 1


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    arch: str
    config: SirenConfig | DecoderConfig
    params: SirenParams | DecoderParams
    seed: int


def _tensors(params) -> dict[str, np.ndarray]:
    tensors = dict(params.as_dict())
    if isinstance(params, DecoderParams):
        tensors["latent"] = params.latent
    return tensors


def to_bytes(config, params, seed: int = 0) -> bytes:
    if isinstance(config, SirenConfig):
        arch = "siren"
    elif isinstance(config, DecoderConfig):
        arch = "mdd"
    else:
        raise TypeError(f"unsupported config {type(config).__name__}")
    if not params.matches(config):
        raise CheckpointError("parameter shapes do not match the config")
    tensors = _tensors(params)
    header = {
        "arch": arch,
        "config": config.to_dict(),
        "seed": int(seed),
        "tensors": [{"name": k, "shape": list(v.shape)} for k, v in tensors.items()],
    }
    head = json.dumps(header, sort_keys=True).encode()
    payload = b"".join(np.ascontiguousarray(v, dtype="<f4").tobytes() for v in tensors.values())
    return MAGIC + struct.pack("<II", VERSION, len(head)) + head + payload


def from_bytes(blob: bytes) -> Checkpoint:
    if blob[:8] != MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic)")
    version, hlen = struct.unpack("<II", blob[8:16])
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    header = json.loads(blob[16:16 + hlen].decode())
    offset = 16 + hlen
    tensors = {}
    for entry in header["tensors"]:
        shape = tuple(entry["shape"])
        n = int(np.prod(shape))
        chunk = blob[offset:offset + 4 * n]
        if len(chunk) != 4 * n:
            raise CheckpointError("checkpoint payload is truncated")
        tensors[entry["name"]] = np.frombuffer(chunk, dtype="<f4").astype(np.float32).reshape(shape)
        offset += 4 * n

    if header["arch"] == "siren":
        config = SirenConfig(**header["config"])
        params = SirenParams.from_dict(tensors)
    elif header["arch"] == "mdd":
        config = DecoderConfig(**header["config"])
        latent = tensors.pop("latent")
        params = DecoderParams.from_dict(tensors, latent)
    else:
        raise CheckpointError(f"unknown architecture {header['arch']!r}")
    if not params.matches(config):
        raise CheckpointError("tensor shapes disagree with the stored config")
    return Checkpoint(header["arch"], config, params, header["seed"])


def save_checkpoint(path, config, params, seed: int = 0) -> None:
    Path(path).write_bytes(to_bytes(config, params, seed))


def load_checkpoint(path) -> Checkpoint:
    return from_bytes(Path(path).read_bytes())
