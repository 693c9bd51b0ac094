"""Binary field snapshots.

Layout (little-endian): a 32-byte header

    magic  b"CFLD"      4 bytes
    version            u16
    dim                u16
    p (contravariant)  u16
    q (covariant)      u16
    N_1 .. N_dim       u32 each, zero padded to 4 slots
    reserved           4 zero bytes

followed by float64 components in row-major node order with the index tuple
varying fastest.  Contravariant slots are written first.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import RankMismatch

MAGIC = b"CFLD"
VERSION = 1
_HEADER = struct.Struct("<4sHHHH4I4x")
assert _HEADER.size == 32


def encode(data: np.ndarray, dim: int, p: int, q: int, extents: tuple[int, ...]) -> bytes:
    extents = tuple(int(n) for n in extents)
    expected = extents + (dim,) * (p + q)
    if data.shape != expected:
        raise RankMismatch(f"component array has shape {data.shape}, expected {expected}")
    if len(extents) > 4:
        raise ValueError("at most four node axes fit in the header")
    header = _HEADER.pack(MAGIC, VERSION, dim, p, q, *(extents + (0,) * (4 - len(extents))))
    return header + np.ascontiguousarray(data, dtype="<f8").tobytes()


def decode(buf: bytes):
    """Return ``(data, dim, p, q, extents)``."""
    magic, version, dim, p, q, *ns = _HEADER.unpack_from(buf, 0)
    if magic != MAGIC:
        raise ValueError("not a CFLD snapshot")
    if version != VERSION:
        raise ValueError(f"unsupported snapshot version {version}")
    extents = tuple(n for n in ns[:dim] if n > 0)
    shape = extents + (dim,) * (p + q)
    count = int(np.prod(shape)) if shape else 1
    body = np.frombuffer(buf, dtype="<f8", count=count, offset=_HEADER.size)
    if len(buf) != _HEADER.size + 8 * count:
        raise ValueError("snapshot length does not match its header")
    return body.reshape(shape).astype(np.float64), dim, p, q, extents


def write_field(path, T) -> None:
    """Write a TensorField with all contravariant slots ahead of covariant ones."""
    ups = [i for i, c in enumerate(T.index) if c == "u"]
    downs = [i for i, c in enumerate(T.index) if c == "d"]
    if ups + downs != list(range(T.order)):
        T = T.transpose(*(ups + downs))
    p, q = T.rank
    extents = T.grid.shape if T.grid.shape else (1,) * T.grid.dim
    data = T.data.reshape(tuple(extents) + (T.grid.dim,) * T.order)
    Path(path).write_bytes(encode(data, T.grid.dim, p, q, extents))


def read_array(path):
    return decode(Path(path).read_bytes())
