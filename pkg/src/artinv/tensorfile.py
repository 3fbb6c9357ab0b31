"""Single-tensor binary file format used for features and trajectories.

Layout (little-endian): 4-byte magic "AITF", u16 version, u8 dtype code,
u8 rank, u64 * rank shape, then the row-major payload.
"""

from __future__ import annotations

import struct

import numpy as np

MAGIC = b"AITF"
VERSION = 1

_DTYPE_CODES = {1: "<f4", 2: "<f8", 3: "<i2", 4: "<i4", 5: "<i8"}
_CODE_FOR = {np.dtype(v): k for k, v in _DTYPE_CODES.items()}


class TensorFileError(IOError):
    pass


def write_tensor(path, array):
    arr = np.ascontiguousarray(array)
    key = arr.dtype.newbyteorder("<")
    if key not in _CODE_FOR:
        raise TensorFileError(f"unsupported dtype {arr.dtype}")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<H", VERSION))
        fh.write(struct.pack("<B", _CODE_FOR[key]))
        fh.write(struct.pack("<B", arr.ndim))
        fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        fh.write(arr.astype(key).tobytes())


def read_tensor(path):
    with open(path, "rb") as fh:
        if fh.read(4) != MAGIC:
            raise TensorFileError(f"{path}: not a tensor file (bad magic)")
        (version,) = struct.unpack("<H", fh.read(2))
        if version != VERSION:
            raise TensorFileError(f"{path}: unsupported version {version}")
        (code,) = struct.unpack("<B", fh.read(1))
        if code not in _DTYPE_CODES:
            raise TensorFileError(f"{path}: unknown dtype code {code}")
        (ndim,) = struct.unpack("<B", fh.read(1))
        shape = struct.unpack(f"<{ndim}Q", fh.read(8 * ndim)) if ndim else ()
        dtype = np.dtype(_DTYPE_CODES[code])
        n = int(np.prod(shape)) if ndim else 1
        payload = fh.read(n * dtype.itemsize)
        if len(payload) != n * dtype.itemsize:
            raise TensorFileError(f"{path}: payload length does not match shape")
        return np.frombuffer(payload, dtype=dtype).reshape(shape).copy()
