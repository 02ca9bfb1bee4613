"""Bit-exact binary tensor files.

Layout, all little-endian:

    bytes 0..3   magic "LRT1"
    byte  4      dtype code: 0=f32, 1=f64, 2=i8, 3=i32
    byte  5      ndim (0, 1 or 2 in practice)
    next         ndim x u64 dims
    rest         payload, row-major

A write followed by a read followed by a write reproduces the file byte
for byte.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import TensorFileError
from .linalg import Matrix, as_matrix

MAGIC = b"LRT1"

_CODE_TO_DTYPE = {
    0: np.dtype("<f4"),
    1: np.dtype("<f8"),
    2: np.dtype("i1"),
    3: np.dtype("<i4"),
}


def _dtype_code(dtype: np.dtype) -> int:
    kindsize = (dtype.kind, dtype.itemsize)
    table = {("f", 4): 0, ("f", 8): 1, ("i", 1): 2, ("i", 4): 3}
    if kindsize not in table:
        raise TensorFileError(f"unsupported dtype {dtype}")
    return table[kindsize]


def write_tensor(path, array: np.ndarray) -> None:
    arr = np.asarray(array)
    if arr.ndim > 0 and not arr.flags.c_contiguous:
        arr = np.ascontiguousarray(arr)
    code = _dtype_code(arr.dtype)
    if arr.ndim > 255:
        raise TensorFileError("too many dimensions")
    header = MAGIC + struct.pack("<BB", code, arr.ndim)
    header += struct.pack(f"<{arr.ndim}Q", *arr.shape)
    payload = arr.astype(_CODE_TO_DTYPE[code], copy=False).tobytes(order="C")
    Path(path).write_bytes(header + payload)


def read_tensor(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < 6 or raw[:4] != MAGIC:
        raise TensorFileError(f"{path}: not a tensor file (bad magic)")
    code, ndim = struct.unpack_from("<BB", raw, 4)
    if code not in _CODE_TO_DTYPE:
        raise TensorFileError(f"{path}: unknown dtype code {code}")
    offset = 6
    if len(raw) < offset + 8 * ndim:
        raise TensorFileError(f"{path}: truncated header")
    dims = struct.unpack_from(f"<{ndim}Q", raw, offset)
    offset += 8 * ndim
    dtype = _CODE_TO_DTYPE[code]
    count = 1
    for d in dims:
        count *= d
    expected = count * dtype.itemsize
    if len(raw) - offset != expected:
        raise TensorFileError(
            f"{path}: payload has {len(raw) - offset} bytes, expected {expected}"
        )
    arr = np.frombuffer(raw, dtype=dtype, count=count, offset=offset)
    # astype copies, which also makes the buffer writable and contiguous
    # (ascontiguousarray would promote 0-d tensors to 1-d).
    return arr.reshape(dims).astype(dtype.newbyteorder("="))


def read_matrix(path) -> Matrix:
    """Read a tensor file as a finite float64 matrix."""
    arr = read_tensor(path)
    if arr.ndim != 2:
        raise TensorFileError(f"{path}: expected a 2-d tensor, got ndim={arr.ndim}")
    try:
        return as_matrix(arr)
    except ValueError as exc:
        raise TensorFileError(f"{path}: {exc}") from exc
