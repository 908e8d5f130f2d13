"""FTNS raw tensor files.

Layout (little-endian): magic ``FTNS``, u32 version (1), u32 ndim,
u64 dims[ndim], u8 dtype (0 = f64, 1 = f32), then the row-major payload.
"""

from __future__ import annotations

import io
import struct
from pathlib import Path

import numpy as np

from scaleform.errors import FormatError

MAGIC = b"FTNS"
VERSION = 1
_DTYPES = {0: np.dtype("<f8"), 1: np.dtype("<f4")}
_CODES = {np.dtype(np.float64): 0, np.dtype(np.float32): 1}


def dumps(arr) -> bytes:
    arr = np.asarray(arr)
    if arr.dtype not in _CODES:
        arr = arr.astype(np.float64)
    code = _CODES[arr.dtype]
    header = MAGIC + struct.pack("<II", VERSION, arr.ndim)
    header += struct.pack(f"<{arr.ndim}Q", *arr.shape) + struct.pack("<B", code)
    return header + np.ascontiguousarray(arr, dtype=_DTYPES[code]).tobytes()


def read_from(stream) -> np.ndarray:
    magic = stream.read(4)
    if magic != MAGIC:
        raise FormatError(f"bad FTNS magic {magic!r}")
    version, ndim = struct.unpack("<II", stream.read(8))
    if version != VERSION:
        raise FormatError(f"unsupported FTNS version {version}")
    dims = struct.unpack(f"<{ndim}Q", stream.read(8 * ndim))
    (code,) = struct.unpack("<B", stream.read(1))
    if code not in _DTYPES:
        raise FormatError(f"unknown FTNS dtype code {code}")
    dtype = _DTYPES[code]
    count = int(np.prod(dims, dtype=np.int64)) if ndim else 1
    payload = stream.read(count * dtype.itemsize)
    if len(payload) != count * dtype.itemsize:
        raise FormatError("truncated FTNS payload")
    return np.frombuffer(payload, dtype=dtype).reshape(dims).astype(dtype.newbyteorder("="))


def loads(blob: bytes) -> np.ndarray:
    return read_from(io.BytesIO(blob))


def save(path, arr) -> None:
    Path(path).write_bytes(dumps(arr))


def load(path) -> np.ndarray:
    with open(path, "rb") as fh:
        return read_from(fh)
