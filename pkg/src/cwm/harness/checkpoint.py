"""Versioned, byte-deterministic checkpoints.

Layout: 4-byte magic, 1 version byte, an 8-byte little-endian length,
a canonical JSON index (metadata plus array descriptors in sorted name
order), then the raw little-endian array payloads in index order.
Writing the same logical state twice produces identical bytes.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"CWMC"
FORMAT_VERSION = 1


class CheckpointError(RuntimeError):
    pass


def save_checkpoint(path: str | Path, arrays: dict[str, np.ndarray],
                    meta: dict) -> None:
    names = sorted(arrays)
    descriptors = []
    payloads = []
    for name in names:
        original = np.asarray(arrays[name])
        arr = np.ascontiguousarray(original)  # promotes 0-d to 1-d
        descriptors.append({"name": name, "dtype": arr.dtype.str,
                            "shape": list(original.shape)})
        payloads.append(arr.tobytes())
    index = json.dumps({"format": FORMAT_VERSION, "meta": meta,
                        "arrays": descriptors},
                       sort_keys=True, separators=(",", ":")).encode()
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(bytes([FORMAT_VERSION]))
        f.write(struct.pack("<Q", len(index)))
        f.write(index)
        for payload in payloads:
            f.write(payload)


def load_checkpoint(path: str | Path) -> tuple[dict[str, np.ndarray], dict]:
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != MAGIC:
            raise CheckpointError(f"{path}: not a checkpoint file")
        version = f.read(1)[0]
        if version != FORMAT_VERSION:
            raise CheckpointError(
                f"{path}: format version {version} unsupported "
                f"(expected {FORMAT_VERSION})")
        (index_len,) = struct.unpack("<Q", f.read(8))
        index = json.loads(f.read(index_len).decode())
        arrays = {}
        for desc in index["arrays"]:
            dtype = np.dtype(desc["dtype"])
            count = int(np.prod(desc["shape"])) if desc["shape"] else 1
            buf = f.read(count * dtype.itemsize)
            arrays[desc["name"]] = np.frombuffer(
                buf, dtype=dtype).reshape(desc["shape"]).copy()
    return arrays, index["meta"]
