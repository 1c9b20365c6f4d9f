"""Binary tensor container (``.lsg``) used for recordings, inputs and checkpoints.

Layout::

    b"LSG1" | u8 rank | rank x u32 LE extents | row-major float64 LE data
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from seglat.errors import FormatError
from seglat.tensorcore import Tensor

MAGIC = b"LSG1"
MAX_RANK = 8
_DTYPE = np.dtype("<f8")


def encode_tensor(value: Tensor | np.ndarray) -> bytes:
    """Serialize an array to container bytes."""
    arr = value.data if isinstance(value, Tensor) else np.asarray(value, dtype=np.float64)
    if arr.ndim > MAX_RANK:
        raise FormatError(f"rank {arr.ndim} exceeds the container limit of {MAX_RANK}")
    header = MAGIC + struct.pack("<B", arr.ndim)
    header += struct.pack(f"<{arr.ndim}I", *arr.shape) if arr.ndim else b""
    return header + np.ascontiguousarray(arr, dtype=_DTYPE).tobytes(order="C")


def decode_tensor(buf: bytes) -> np.ndarray:
    """Parse container bytes; the buffer must hold exactly one tensor."""
    if len(buf) < len(MAGIC) or buf[: len(MAGIC)] != MAGIC:
        raise FormatError("bad magic: expected b'LSG1'")
    pos = len(MAGIC)
    if len(buf) < pos + 1:
        raise FormatError("truncated container: missing rank")
    (rank,) = struct.unpack_from("<B", buf, pos)
    pos += 1
    if rank > MAX_RANK:
        raise FormatError(f"rank {rank} exceeds the container limit of {MAX_RANK}")
    if len(buf) < pos + 4 * rank:
        raise FormatError(f"truncated container: extents need {4 * rank} bytes")
    shape = struct.unpack_from(f"<{rank}I", buf, pos) if rank else ()
    pos += 4 * rank
    count = int(np.prod(shape, dtype=np.int64)) if rank else 1
    expected = count * _DTYPE.itemsize
    available = len(buf) - pos
    if available < expected:
        raise FormatError(f"truncated container: data needs {expected} bytes, found {available}")
    if available > expected:
        raise FormatError(f"trailing bytes after data: {available - expected}")
    data = np.frombuffer(buf, dtype=_DTYPE, count=count, offset=pos)
    return data.astype(np.float64).reshape(shape)


def save_tensor(path: str | Path, value: Tensor | np.ndarray) -> None:
    Path(path).write_bytes(encode_tensor(value))


def load_tensor(path: str | Path) -> Tensor:
    return Tensor(decode_tensor(Path(path).read_bytes()))
