"""Named-tensor checkpoints in the same binary envelope as the embedding
store: magic ``LEAPCKPT``, u32 version, u32 tensor count, then per tensor a
length-prefixed UTF-8 name, u32 ndim, u64 dims, and f32 data
(little-endian throughout)."""

from __future__ import annotations

import struct
from typing import BinaryIO

import numpy as np

MAGIC = b"LEAPCKPT"
VERSION = 1

_HEADER = struct.Struct("<8sII")
_NAME_LEN = struct.Struct("<H")
_NDIM = struct.Struct("<I")
_DIM = struct.Struct("<Q")


class CheckpointError(ValueError):
    """Raised when a checkpoint stream violates the binary contract."""


def write_checkpoint(tensors: dict[str, np.ndarray], stream: BinaryIO) -> None:
    stream.write(_HEADER.pack(MAGIC, VERSION, len(tensors)))
    for name, value in tensors.items():
        raw_name = name.encode("utf-8")
        value = np.asarray(value)
        stream.write(_NAME_LEN.pack(len(raw_name)))
        stream.write(raw_name)
        stream.write(_NDIM.pack(value.ndim))
        for dim in value.shape:
            stream.write(_DIM.pack(dim))
        stream.write(value.astype("<f4").tobytes())


def _read_exact(stream: BinaryIO, n: int, what: str) -> bytes:
    data = stream.read(n)
    if len(data) != n:
        raise CheckpointError(f"truncated stream while reading {what}")
    return data


def read_checkpoint(stream: BinaryIO) -> dict[str, np.ndarray]:
    magic, version, count = _HEADER.unpack(_read_exact(stream, _HEADER.size, "header"))
    if magic != MAGIC:
        raise CheckpointError(f"bad magic {magic!r}")
    if version != VERSION:
        raise CheckpointError(f"unsupported version {version}")
    tensors: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = _NAME_LEN.unpack(_read_exact(stream, _NAME_LEN.size, "name length"))
        name = _read_exact(stream, name_len, "name").decode("utf-8")
        if name in tensors:
            raise CheckpointError(f"duplicate tensor name {name!r}")
        (ndim,) = _NDIM.unpack(_read_exact(stream, _NDIM.size, "ndim"))
        shape = tuple(
            _DIM.unpack(_read_exact(stream, _DIM.size, "dim"))[0] for _ in range(ndim)
        )
        size = int(np.prod(shape, dtype=np.int64)) if shape else 1
        raw = _read_exact(stream, 4 * size, f"data for {name!r}")
        tensors[name] = np.frombuffer(raw, dtype="<f4").reshape(shape).copy()
    if stream.read(1):
        raise CheckpointError("trailing data after final tensor")
    return tensors


def write_checkpoint_file(tensors: dict[str, np.ndarray], path) -> None:
    with open(path, "wb") as fh:
        write_checkpoint(tensors, fh)


def read_checkpoint_file(path) -> dict[str, np.ndarray]:
    with open(path, "rb") as fh:
        return read_checkpoint(fh)
