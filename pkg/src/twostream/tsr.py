"""TSR1 binary tensor files.

Layout: ``b"TSR1"``, u32 LE rank, rank x u32 LE extents, u8 dtype tag
(0 = f64 LE, 1 = u8), then the row-major payload.
"""

from __future__ import annotations

import os
import struct

import numpy as np

MAGIC = b"TSR1"
_TAGS = {0: np.dtype("<f8"), 1: np.dtype("u1")}


class TSRFormatError(ValueError):
    pass


def encode(arr: np.ndarray) -> bytes:
    arr = np.asarray(arr)
    if arr.dtype == np.uint8:
        tag, data = 1, arr
    elif arr.dtype.kind in "fiub":
        tag, data = 0, arr.astype("<f8")
    else:
        raise TypeError(f"cannot store dtype {arr.dtype} as TSR1")
    if any(d < 1 for d in arr.shape):
        raise TSRFormatError(f"TSR1 extents must be positive, got {arr.shape}")
    head = MAGIC + struct.pack(f"<I{arr.ndim}I", arr.ndim, *arr.shape) + bytes([tag])
    return head + np.ascontiguousarray(data).tobytes()


def decode(buf: bytes) -> np.ndarray:
    if buf[:4] != MAGIC:
        raise TSRFormatError("bad magic, not a TSR1 file")
    if len(buf) < 8:
        raise TSRFormatError("truncated TSR1 header")
    (rank,) = struct.unpack_from("<I", buf, 4)
    off = 8 + 4 * rank
    if len(buf) < off + 1:
        raise TSRFormatError("truncated TSR1 header")
    shape = struct.unpack_from(f"<{rank}I", buf, 8)
    tag = buf[off]
    if tag not in _TAGS:
        raise TSRFormatError(f"unknown TSR1 dtype tag {tag}")
    dtype = _TAGS[tag]
    count = int(np.prod(shape, dtype=np.int64))
    payload = buf[off + 1 :]
    if len(payload) != count * dtype.itemsize:
        raise TSRFormatError(
            f"payload is {len(payload)} bytes, expected {count * dtype.itemsize} for shape {shape}"
        )
    arr = np.frombuffer(payload, dtype=dtype).reshape(shape)
    return arr.astype(np.float64) if tag == 0 else arr.copy()


def save(path: str | os.PathLike, arr: np.ndarray) -> None:
    with open(path, "wb") as fh:
        fh.write(encode(arr))


def load(path: str | os.PathLike) -> np.ndarray:
    with open(path, "rb") as fh:
        return decode(fh.read())
