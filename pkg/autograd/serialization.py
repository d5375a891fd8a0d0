"""
Portable tensor binary format (.epct).

Layout:
    magic   4 bytes  b"EPCT"
    version u32      little-endian, currently 1
    rank    u32
    dims    u64[rank]
    payload f64[prod(dims)] little-endian, row-major

Used by checkpoints, split manifests and the oracle fixtures.
"""

import hashlib
import logging
import os
import struct
from typing import Union

import numpy as np

from autograd.tensor import Tensor
from errors import DataError, MissingFileError

logger = logging.getLogger(__name__)

MAGIC = b"EPCT"
VERSION = 1
_HEADER = struct.Struct("<4sII")


def encode_tensor(value: Union[Tensor, np.ndarray]) -> bytes:
    array = value.data if isinstance(value, Tensor) else np.asarray(value, dtype=np.float64)
    header = _HEADER.pack(MAGIC, VERSION, array.ndim)
    dims = struct.pack(f"<{array.ndim}Q", *array.shape)
    payload = np.ascontiguousarray(array, dtype="<f8").tobytes()
    return header + dims + payload


def decode_tensor(blob: bytes, source: str = "<bytes>") -> np.ndarray:
    if len(blob) < _HEADER.size:
        raise DataError(f"{source}: truncated tensor header")
    magic, version, rank = _HEADER.unpack_from(blob, 0)
    if magic != MAGIC:
        raise DataError(f"{source}: bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise DataError(f"{source}: unsupported tensor format version {version}")
    offset = _HEADER.size
    dims = struct.unpack_from(f"<{rank}Q", blob, offset)
    offset += 8 * rank
    count = int(np.prod(dims)) if rank else 1
    expected = offset + 8 * count
    if len(blob) != expected:
        raise DataError(f"{source}: payload is {len(blob) - offset} bytes, expected {8 * count}")
    return np.frombuffer(blob, dtype="<f8", count=count, offset=offset).astype(np.float64).reshape(dims)


def save_tensor(path: str, value: Union[Tensor, np.ndarray]) -> str:
    """Write a tensor and return the SHA-256 of the file contents."""
    blob = encode_tensor(value)
    with open(path, "wb") as f:
        f.write(blob)
    return hashlib.sha256(blob).hexdigest()


def load_tensor(path: str) -> np.ndarray:
    if not os.path.exists(path):
        raise MissingFileError(f"tensor file not found: {path}")
    with open(path, "rb") as f:
        blob = f.read()
    return decode_tensor(blob, source=path)


def file_sha256(path: str) -> str:
    with open(path, "rb") as f:
        return hashlib.sha256(f.read()).hexdigest()
