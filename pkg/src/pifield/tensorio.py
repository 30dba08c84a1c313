"""Minimal binary tensor files.

Layout: b"PIFT", u8 version (1), u8 dtype (1 = f32 LE, 2 = f64 LE), u32 ndim,
u32 dims[ndim], then the raw little-endian payload in C order.
"""
from __future__ import annotations

import struct

import numpy as np

MAGIC = b"PIFT"
VERSION = 1
DTYPES = {1: np.dtype("<f4"), 2: np.dtype("<f8")}


class TensorFileError(ValueError):
    pass


def encode(array, dtype="f8"):
    a = np.asarray(array)
    code = 1 if np.dtype(dtype).itemsize == 4 else 2
    head = MAGIC + struct.pack("<BBI", VERSION, code, a.ndim) + struct.pack(f"<{a.ndim}I", *a.shape)
    return head + np.ascontiguousarray(a, dtype=DTYPES[code]).tobytes()


def decode(buf, name="<buffer>"):
    if len(buf) < 10 or buf[:4] != MAGIC:
        raise TensorFileError(f"{name}: not a tensor file")
    version, code, ndim = struct.unpack_from("<BBI", buf, 4)
    if version != VERSION:
        raise TensorFileError(f"{name}: unsupported version {version}")
    if code not in DTYPES:
        raise TensorFileError(f"{name}: unknown dtype code {code}")
    off = 10 + 4 * ndim
    if len(buf) < off:
        raise TensorFileError(f"{name}: truncated header")
    dims = struct.unpack_from(f"<{ndim}I", buf, 10)
    dt = DTYPES[code]
    n = int(np.prod(dims, dtype=np.int64))
    if len(buf) - off != n * dt.itemsize:
        raise TensorFileError(f"{name}: payload is {len(buf) - off} bytes, expected {n * dt.itemsize}")
    return np.frombuffer(buf, dtype=dt, offset=off, count=n).reshape(dims).astype(np.float64)


def write_tensor(path, array, dtype="f8"):
    with open(path, "wb") as fh:
        fh.write(encode(array, dtype))


def read_tensor(path):
    with open(path, "rb") as fh:
        return decode(fh.read(), str(path))
