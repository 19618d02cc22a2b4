"""CTR1 binary tensor container.

Layout: magic bytes ``CTR1``, one dtype byte (1 = float32, 2 = float64),
one rank byte, ``rank`` little-endian uint32 dims, then the row-major
little-endian payload.  Round-trips are bit-exact for both dtypes.
"""

from __future__ import annotations

import struct
from typing import BinaryIO

import numpy as np

MAGIC = b"CTR1"

_DTYPE_CODES = {np.dtype("<f4"): 1, np.dtype("<f8"): 2}
_CODE_DTYPES = {1: np.dtype("<f4"), 2: np.dtype("<f8")}


class TensorFormatError(IOError):
    """The byte stream is not a valid CTR1 record."""


def write_tensor_stream(stream: BinaryIO, array: np.ndarray) -> None:
    """Append one CTR1 record to an open binary stream."""
    array = np.asarray(array)
    dtype = np.dtype("<f4") if array.dtype == np.float32 else np.dtype("<f8")
    code = _DTYPE_CODES[dtype]
    data = np.ascontiguousarray(array, dtype=dtype)
    if data.ndim > 255:
        raise TensorFormatError(f"rank {data.ndim} exceeds the 1-byte rank field")
    stream.write(MAGIC)
    stream.write(struct.pack("<BB", code, data.ndim))
    stream.write(struct.pack(f"<{data.ndim}I", *data.shape))
    stream.write(data.tobytes(order="C"))


def read_tensor_stream(stream: BinaryIO) -> np.ndarray:
    """Read one CTR1 record from an open binary stream."""
    magic = stream.read(4)
    if magic != MAGIC:
        raise TensorFormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
    header = stream.read(2)
    if len(header) != 2:
        raise TensorFormatError("truncated header")
    code, rank = struct.unpack("<BB", header)
    if code not in _CODE_DTYPES:
        raise TensorFormatError(f"unknown dtype code {code}")
    dim_bytes = stream.read(4 * rank)
    if len(dim_bytes) != 4 * rank:
        raise TensorFormatError("truncated dims")
    shape = struct.unpack(f"<{rank}I", dim_bytes)
    dtype = _CODE_DTYPES[code]
    count = int(np.prod(shape, dtype=np.int64)) if rank else 1
    payload = stream.read(count * dtype.itemsize)
    if len(payload) != count * dtype.itemsize:
        raise TensorFormatError(
            f"truncated payload: expected {count * dtype.itemsize} bytes, "
            f"got {len(payload)}"
        )
    return np.frombuffer(payload, dtype=dtype).reshape(shape).copy()


def write_tensor(path, array: np.ndarray, single_precision: bool = False) -> None:
    """Write one tensor to *path*.

    Storage is float64 unless the array is already float32 or
    *single_precision* is set; single precision is a file-size option only.
    """
    array = np.asarray(array)
    if single_precision:
        array = array.astype(np.float32)
    with open(path, "wb") as stream:
        write_tensor_stream(stream, array)


def read_tensor(path) -> np.ndarray:
    """Read the single tensor stored at *path*."""
    with open(path, "rb") as stream:
        array = read_tensor_stream(stream)
        trailing = stream.read(1)
    if trailing:
        raise TensorFormatError(f"{path}: trailing bytes after tensor record")
    return array
