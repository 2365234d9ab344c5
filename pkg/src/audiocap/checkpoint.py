"""Binary checkpoints: a JSON manifest followed by raw little-endian blobs.

Layout: 4-byte magic, uint32 format version, uint64 header length, UTF-8
JSON header, then tensor bytes at the offsets the header declares. The
header carries the full run configuration, the vocabulary and tag names,
so a checkpoint alone reproduces the preprocessing and decode setup.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .model import CaptionerModel

MAGIC = b"ACPK"
FORMAT_VERSION = 1
_DTYPE = "<f8"


@dataclass
class Checkpoint:
    kind: str                      # "caption" | "tagging"
    config: dict
    vocab: list[str] | None
    tags: list[str] | None
    tensors: dict[str, np.ndarray]
    epoch: int | None = None
    optimizer: dict[str, np.ndarray] = field(default_factory=dict)
    optimizer_step: int = 0


def model_state(model: CaptionerModel) -> dict[str, np.ndarray]:
    return {name: p.data for name, p in model.named_parameters()}


def save_checkpoint(path: str | Path, ckpt: Checkpoint) -> None:
    entries = []
    offset = 0
    blobs = []
    for group, tensors in (("", ckpt.tensors), ("opt.", ckpt.optimizer)):
        for name in sorted(tensors):
            arr = np.ascontiguousarray(tensors[name], dtype=_DTYPE)
            entries.append({
                "name": group + name,
                "shape": list(arr.shape),
                "dtype": _DTYPE,
                "offset": offset,
            })
            blobs.append(arr.tobytes())
            offset += arr.nbytes
    header = {
        "format_version": FORMAT_VERSION,
        "kind": ckpt.kind,
        "config": ckpt.config,
        "vocab": ckpt.vocab,
        "tags": ckpt.tags,
        "epoch": ckpt.epoch,
        "optimizer_step": ckpt.optimizer_step,
        "tensors": entries,
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", FORMAT_VERSION))
        f.write(struct.pack("<Q", len(header_bytes)))
        f.write(header_bytes)
        for blob in blobs:
            f.write(blob)


def load_checkpoint(path: str | Path) -> Checkpoint:
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise ValueError(f"{path}: not a checkpoint file (bad magic)")
    version = struct.unpack("<I", raw[4:8])[0]
    if version > FORMAT_VERSION:
        raise ValueError(
            f"{path}: checkpoint format version {version} is newer than the "
            f"supported version {FORMAT_VERSION}")
    header_len = struct.unpack("<Q", raw[8:16])[0]
    header = json.loads(raw[16:16 + header_len].decode("utf-8"))
    body = raw[16 + header_len:]
    tensors: dict[str, np.ndarray] = {}
    optimizer: dict[str, np.ndarray] = {}
    for entry in header["tensors"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = entry["offset"]
        arr = np.frombuffer(body, dtype=entry["dtype"], count=count,
                            offset=start).reshape(shape).copy()
        name = entry["name"]
        if name.startswith("opt."):
            optimizer[name[4:]] = arr
        else:
            tensors[name] = arr
    return Checkpoint(
        kind=header["kind"], config=header["config"], vocab=header["vocab"],
        tags=header["tags"], tensors=tensors, epoch=header.get("epoch"),
        optimizer=optimizer, optimizer_step=header.get("optimizer_step", 0))


def load_model_state(model: CaptionerModel, tensors: dict[str, np.ndarray],
                     prefix: str | None = None) -> list[str]:
    """Copy stored tensors into the model, validating shapes. With a prefix,
    only matching parameters are touched. Returns the loaded names."""
    loaded = []
    for name, param in model.named_parameters():
        if prefix is not None and not name.startswith(prefix):
            continue
        if name not in tensors:
            raise ValueError(f"checkpoint is missing tensor {name!r}")
        arr = tensors[name]
        if arr.shape != param.data.shape:
            raise ValueError(
                f"shape mismatch for tensor {name!r}: checkpoint has "
                f"{arr.shape}, model expects {param.data.shape}")
        param.data[...] = arr
        loaded.append(name)
    return loaded
