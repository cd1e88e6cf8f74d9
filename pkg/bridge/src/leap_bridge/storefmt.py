"""Writer for the shared binary embedding store format.

Layout (little-endian): magic ``LEAPEMB1``, u32 version=1, u32 dim,
u64 count, then count records of (u64 uid, dim x f32). Records are written
in ascending uid order. This implementation is intentionally independent
of the main package: the byte layout is the contract.
"""

from __future__ import annotations

import struct
from typing import BinaryIO

import numpy as np

MAGIC = b"LEAPEMB1"
VERSION = 1

_HEADER = struct.Struct("<8sIIQ")
_UID = struct.Struct("<Q")


def write_store(records: dict[int, np.ndarray], dim: int, stream: BinaryIO) -> None:
    stream.write(_HEADER.pack(MAGIC, VERSION, dim, len(records)))
    for uid in sorted(records):
        vector = np.asarray(records[uid], dtype="<f4")
        if vector.shape != (dim,):
            raise ValueError(f"vector for uid {uid} has shape {vector.shape}, expected ({dim},)")
        stream.write(_UID.pack(uid))
        stream.write(vector.tobytes())


def write_store_file(records: dict[int, np.ndarray], dim: int, path) -> None:
    with open(path, "wb") as fh:
        write_store(records, dim, fh)


def read_store_file(path) -> tuple[int, dict[int, np.ndarray]]:
    """Minimal reader (used for the bridge's own round-trip checks)."""
    with open(path, "rb") as fh:
        magic, version, dim, count = _HEADER.unpack(fh.read(_HEADER.size))
        if magic != MAGIC or version != VERSION:
            raise ValueError("not a supported embedding store")
        records: dict[int, np.ndarray] = {}
        for _ in range(count):
            (uid,) = _UID.unpack(fh.read(_UID.size))
            records[uid] = np.frombuffer(fh.read(4 * dim), dtype="<f4").copy()
        return dim, records
