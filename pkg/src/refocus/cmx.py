"""CMX container: axis-labelled n-dimensional arrays, bit-exact round trip.

Layout (all little-endian):
    magic   4 bytes  "CMX1"
    dtype   u8       0 = float64, 1 = complex128
    rank    u32
    per axis: u32 length, u32 label byte count, UTF-8 label,
              float64 coordinates (length entries)
    payload row-major values

Sizes are validated against the file before any allocation, so a hostile
header cannot trigger a huge allocation.
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

__all__ = ["write_cmx", "read_cmx", "CmxError"]

MAGIC = b"CMX1"
_DTYPES = {0: np.dtype("<f8"), 1: np.dtype("<c16")}
_CODES = {np.dtype(np.float64): 0, np.dtype(np.complex128): 1}
MAX_RANK = 8


class CmxError(ValueError):
    """Malformed or inconsistent CMX file."""


def write_cmx(path, data: np.ndarray, axes) -> None:
    """Write an array with one (label, coords) pair per dimension."""
    data = np.asarray(data)
    if data.dtype not in _CODES:
        if np.iscomplexobj(data):
            data = data.astype(np.complex128)
        else:
            data = data.astype(np.float64)
    axes = list(axes)
    if len(axes) != data.ndim:
        raise CmxError(f"need {data.ndim} axes, got {len(axes)}")
    chunks = [MAGIC, struct.pack("<BI", _CODES[data.dtype], data.ndim)]
    for dim, (label, coords) in zip(data.shape, axes):
        coords = np.asarray(coords, dtype="<f8")
        if coords.size != dim:
            raise CmxError(f"axis '{label}' has {coords.size} coords for dim {dim}")
        raw = str(label).encode("utf-8")
        chunks.append(struct.pack("<II", dim, len(raw)))
        chunks.append(raw)
        chunks.append(coords.tobytes())
    if data.dtype == np.complex128:
        payload = np.ascontiguousarray(data).astype("<c16", copy=False)
    else:
        payload = np.ascontiguousarray(data).astype("<f8", copy=False)
    chunks.append(payload.tobytes())
    Path(path).write_bytes(b"".join(chunks))


def read_cmx(path):
    """Read back (data, [(label, coords), ...]); inverse of write_cmx."""
    blob = Path(path).read_bytes()
    if len(blob) < 9 or blob[:4] != MAGIC:
        raise CmxError(f"{path}: not a CMX file")
    code, rank = struct.unpack_from("<BI", blob, 4)
    if code not in _DTYPES:
        raise CmxError(f"{path}: unknown dtype code {code}")
    if rank > MAX_RANK:
        raise CmxError(f"{path}: rank {rank} exceeds limit {MAX_RANK}")
    offset = 9
    dims = []
    axes = []
    remaining = len(blob)
    for _ in range(rank):
        if offset + 8 > remaining:
            raise CmxError(f"{path}: truncated axis header")
        dim, label_len = struct.unpack_from("<II", blob, offset)
        offset += 8
        if offset + label_len + 8 * dim > remaining:
            raise CmxError(f"{path}: truncated axis block")
        label = blob[offset:offset + label_len].decode("utf-8")
        offset += label_len
        coords = np.frombuffer(blob, dtype="<f8", count=dim, offset=offset).copy()
        offset += 8 * dim
        dims.append(dim)
        axes.append((label, coords))
    dtype = _DTYPES[code]
    count = 1
    for d in dims:
        count *= int(d)
    payload_bytes = count * dtype.itemsize
    if len(blob) - offset != payload_bytes:
        raise CmxError(
            f"{path}: payload is {len(blob) - offset} bytes, header declares {payload_bytes}"
        )
    data = np.frombuffer(blob, dtype=dtype, count=count, offset=offset).copy()
    return data.reshape(dims), axes
