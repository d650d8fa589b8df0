"""Binary tensor files.

``GTEN1`` holds one tensor::

    b"GTEN1\\0" | u8 order r | r x u64 dims | prod(dims) x f64 values

``GTDS1`` holds ``n`` tensors sharing one shape::

    b"GTDS1\\0" | u64 n | u8 order r | r x u64 dims | n x prod(dims) x f64

All integers and floats are little-endian and values are stored in vec
(first-index-fastest) order.
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

TENSOR_MAGIC = b"GTEN1\0"
DATASET_MAGIC = b"GTDS1\0"


class FormatError(ValueError):
    pass


def _dims_bytes(dims):
    if len(dims) > 255:
        raise FormatError("tensor order above 255 is not representable")
    return struct.pack("<B", len(dims)) + struct.pack(f"<{len(dims)}Q", *dims)


def encode_tensor(t) -> bytes:
    t = np.atleast_1d(np.asarray(t, dtype="<f8"))
    return TENSOR_MAGIC + _dims_bytes(t.shape) + t.tobytes(order="F")


def encode_dataset(x) -> bytes:
    """Encode an ``(n, p_1, ..., p_r)`` array of stacked observations."""
    x = np.asarray(x, dtype="<f8")
    if x.ndim < 2:
        raise FormatError("a dataset needs a leading observation axis and order >= 1")
    n, dims = x.shape[0], x.shape[1:]
    body = b"".join(np.asfortranarray(x[i]).tobytes(order="F") for i in range(n))
    return DATASET_MAGIC + struct.pack("<Q", n) + _dims_bytes(dims) + body


def _read_dims(buf, offset):
    (r,) = struct.unpack_from("<B", buf, offset)
    dims = struct.unpack_from(f"<{r}Q", buf, offset + 1)
    return tuple(int(d) for d in dims), offset + 1 + 8 * r


def decode_tensor(buf: bytes) -> np.ndarray:
    if buf[:6] != TENSOR_MAGIC:
        raise FormatError("not a GTEN1 tensor file")
    dims, off = _read_dims(buf, 6)
    size = int(np.prod(dims))
    if len(buf) != off + 8 * size:
        raise FormatError(f"GTEN1 payload has {len(buf) - off} bytes, expected {8 * size}")
    return np.frombuffer(buf, dtype="<f8", offset=off).reshape(dims, order="F").astype(float)


def decode_dataset(buf: bytes) -> np.ndarray:
    if buf[:6] != DATASET_MAGIC:
        raise FormatError("not a GTDS1 dataset file")
    (n,) = struct.unpack_from("<Q", buf, 6)
    dims, off = _read_dims(buf, 14)
    size = int(np.prod(dims))
    if len(buf) != off + 8 * size * n:
        raise FormatError(f"GTDS1 payload has {len(buf) - off} bytes, expected {8 * size * n}")
    flat = np.frombuffer(buf, dtype="<f8", offset=off).reshape(n, size)
    return np.stack([row.reshape(dims, order="F") for row in flat]).astype(float) if n else \
        np.zeros((0,) + dims)


def save_tensor(path, t):
    Path(path).write_bytes(encode_tensor(t))


def load_tensor(path):
    return decode_tensor(Path(path).read_bytes())


def save_dataset(path, x):
    Path(path).write_bytes(encode_dataset(x))


def load_dataset(path):
    return decode_dataset(Path(path).read_bytes())
