"""Versioned binary container for named float64 tensors.

Layout (all integers unsigned 64-bit little-endian, floats IEEE-754
little-endian):

    magic   8 bytes  b"TENSORS\\0"
    version u64      currently 1
    count   u64      number of named tensors
    per tensor:
        name_len u64, name UTF-8 bytes
        rank u64, dims u64 * rank
        data f64 * prod(dims), row-major
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from ..errors import DataCorruptionError

MAGIC = b"TENSORS\x00"
VERSION = 1


def save_tensors(path, tensors: dict) -> None:
    path = Path(path)
    blobs = [MAGIC, struct.pack("<Q", VERSION), struct.pack("<Q", len(tensors))]
    for name, arr in tensors.items():
        arr = np.ascontiguousarray(arr, dtype=np.float64)
        nb = name.encode("utf-8")
        blobs.append(struct.pack("<Q", len(nb)))
        blobs.append(nb)
        blobs.append(struct.pack("<Q", arr.ndim))
        blobs.append(struct.pack(f"<{arr.ndim}Q", *arr.shape) if arr.ndim else b"")
        blobs.append(arr.astype("<f8").tobytes())
    path.write_bytes(b"".join(blobs))


def load_tensors(path) -> dict:
    path = Path(path)
    raw = path.read_bytes()
    if raw[:8] != MAGIC:
        raise DataCorruptionError(f"{path}: bad magic, not a tensor container")
    off = 8
    version, count = struct.unpack_from("<QQ", raw, off)
    off += 16
    if version != VERSION:
        raise DataCorruptionError(f"{path}: unsupported container version {version}")
    out = {}
    try:
        for _ in range(count):
            (name_len,) = struct.unpack_from("<Q", raw, off)
            off += 8
            name = raw[off:off + name_len].decode("utf-8")
            off += name_len
            (rank,) = struct.unpack_from("<Q", raw, off)
            off += 8
            dims = struct.unpack_from(f"<{rank}Q", raw, off) if rank else ()
            off += 8 * rank
            n = int(np.prod(dims)) if rank else 1
            arr = np.frombuffer(raw, dtype="<f8", count=n, offset=off).reshape(dims)
            off += 8 * n
            out[name] = arr.astype(np.float64)
    except (struct.error, ValueError) as exc:
        raise DataCorruptionError(f"{path}: truncated or corrupt container") from exc
    if off != len(raw):
        raise DataCorruptionError(f"{path}: trailing bytes after declared tensors")
    return out
