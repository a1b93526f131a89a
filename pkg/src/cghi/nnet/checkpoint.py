"""Flat binary checkpoint format.

Layout (all integers and floats little-endian)::

    8 bytes   magic  b"CGHICKPT"
    uint32    format version (1)
    uint32    number of tensors N
    N times:  uint16 name length, UTF-8 name, uint8 ndim, ndim x uint32 dims
    then      the tensors' values as float64, concatenated in manifest order

A plain-text manifest (``<file>.manifest.txt``) lists ``name<TAB>shape`` per line.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from ..errors import DataError

MAGIC = b"CGHICKPT"
VERSION = 1


def manifest_path(path: str | Path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".manifest.txt")


def save_checkpoint(path: str | Path, tensors: dict[str, np.ndarray]) -> None:
    path = Path(path)
    header = [MAGIC, struct.pack("<II", VERSION, len(tensors))]
    lines = []
    for name, arr in tensors.items():
        raw = name.encode("utf-8")
        header.append(struct.pack("<H", len(raw)) + raw)
        header.append(struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape))
        lines.append(f"{name}\t{'x'.join(str(d) for d in arr.shape) or 'scalar'}")
    body = [np.ascontiguousarray(a, dtype="<f8").tobytes() for a in tensors.values()]
    path.write_bytes(b"".join(header + body))
    manifest_path(path).write_text("\n".join(lines) + "\n")


def load_checkpoint(path: str | Path) -> dict[str, np.ndarray]:
    path = Path(path)
    if not path.exists():
        raise DataError(f"checkpoint not found: {path}")
    buf = path.read_bytes()
    if buf[:8] != MAGIC:
        raise DataError(f"{path}: bad magic bytes")
    version, count = struct.unpack_from("<II", buf, 8)
    if version != VERSION:
        raise DataError(f"{path}: unsupported checkpoint version {version}")
    off = 16
    entries = []
    for _ in range(count):
        (nlen,) = struct.unpack_from("<H", buf, off)
        off += 2
        name = buf[off:off + nlen].decode("utf-8")
        off += nlen
        (ndim,) = struct.unpack_from("<B", buf, off)
        off += 1
        shape = struct.unpack_from(f"<{ndim}I", buf, off)
        off += 4 * ndim
        entries.append((name, shape))
    out = {}
    for name, shape in entries:
        n = int(np.prod(shape)) if shape else 1
        out[name] = np.frombuffer(buf, dtype="<f8", count=n, offset=off).reshape(shape).astype(np.float64)
        off += 8 * n
    if off != len(buf):
        raise DataError(f"{path}: trailing bytes after tensor data")
    return out
