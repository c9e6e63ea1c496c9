"""Binary tensor files.

Layout: ``b"STPT"``, version byte ``0x01``, uint8 order N, N little-endian
uint32 dims, then prod(dims) little-endian float64 values in row-major order.
"""

from __future__ import annotations

import struct
from math import prod

import numpy as np

MAGIC = b"STPT"
VERSION = 1


class TensorFormatError(ValueError):
    pass


def dumps(T):
    arr = np.ascontiguousarray(T, dtype="<f8")
    if arr.ndim < 1 or arr.ndim > 255:
        raise TensorFormatError(f"cannot store a tensor of order {arr.ndim}")
    header = MAGIC + struct.pack("<BB", VERSION, arr.ndim)
    header += struct.pack(f"<{arr.ndim}I", *arr.shape)
    return header + arr.tobytes(order="C")


def loads(buf):
    buf = bytes(buf)
    if len(buf) < 6 or buf[:4] != MAGIC:
        raise TensorFormatError("bad magic bytes, not an STPT tensor file")
    version, order = struct.unpack_from("<BB", buf, 4)
    if version != VERSION:
        raise TensorFormatError(f"unsupported version {version}")
    if order < 1:
        raise TensorFormatError("tensor order must be at least 1")
    off = 6 + 4 * order
    if len(buf) < off:
        raise TensorFormatError("truncated header")
    dims = struct.unpack_from(f"<{order}I", buf, 6)
    n = prod(dims)
    if len(buf) != off + 8 * n:
        raise TensorFormatError(
            f"payload holds {len(buf) - off} bytes, dims {dims} need {8 * n}"
        )
    data = np.frombuffer(buf, dtype="<f8", count=n, offset=off)
    return data.astype(np.float64).reshape(dims)


def save(path, T):
    with open(path, "wb") as fh:
        fh.write(dumps(T))


def load(path):
    with open(path, "rb") as fh:
        return loads(fh.read())
