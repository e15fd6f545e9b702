"""Checkpoint container.

Layout (all integers little-endian)::

    bytes 0-7    magic  b"MFCKPT\\x00\\x00"
    bytes 8-11   uint32 format version (currently 1)
    bytes 12-19  uint64 header length H
    next H bytes UTF-8 JSON header:
                   {"model_config": {...}, "train_config": {...}, "extra": {...},
                    "tensors": [{"name", "shape", "offset", "count"}, ...]}
    remainder    float64 little-endian payload; each tensor occupies
                 ``count`` values starting at value index ``offset``

Tensor names are "<network>.<parameter path>", e.g. "generator.enc0.conv.weight".
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"MFCKPT\x00\x00"
VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(
    path,
    tensors: dict[str, np.ndarray],
    model_config: dict,
    train_config: dict | None = None,
    extra: dict | None = None,
) -> None:
    entries, chunks, offset = [], [], 0
    for name in tensors:
        arr = np.asarray(tensors[name], dtype="<f8")  # ascontiguousarray would promote 0-d to 1-d
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset, "count": int(arr.size)})
        chunks.append(arr.reshape(-1).tobytes())
        offset += arr.size
    header = json.dumps(
        {
            "model_config": model_config,
            "train_config": train_config or {},
            "extra": extra or {},
            "tensors": entries,
        },
        sort_keys=True,
    ).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IQ", VERSION, len(header)))
        fh.write(header)
        for c in chunks:
            fh.write(c)


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    """Returns (tensors, header) where header carries the configs and extras."""
    raw = Path(path).read_bytes()
    if raw[:8] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (bad magic)")
    version, hlen = struct.unpack("<IQ", raw[8:20])
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    header = json.loads(raw[20 : 20 + hlen].decode("utf-8"))
    payload = np.frombuffer(raw[20 + hlen :], dtype="<f8")
    tensors = {}
    for e in header["tensors"]:
        lo, n = e["offset"], e["count"]
        if lo + n > payload.size:
            raise CheckpointError(f"{path}: tensor {e['name']} runs past end of payload")
        tensors[e["name"]] = payload[lo : lo + n].astype(np.float64).reshape(e["shape"])
    return tensors, header
