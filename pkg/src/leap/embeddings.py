"""Per-event embedding vectors: provider contract, deterministic stand-in
encoder, and the binary store format shared with the model bridge.

Store layout (little-endian): magic ``LEAPEMB1``, u32 version=1, u32 dim,
u64 count, then count records of (u64 uid, dim x f32). The layout is a
bit-exact contract: files written by any conforming producer round-trip
through :func:`read_store`.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field
from typing import BinaryIO, Callable, Sequence

import numpy as np

from .events import Quintuple, Vocabulary
from .prompts import PromptConfig, render_simple_prompt

MAGIC = b"LEAPEMB1"
VERSION = 1

_HEADER = struct.Struct("<8sIIQ")
_UID = struct.Struct("<Q")


class StoreFormatError(ValueError):
    """Raised when an embedding store stream violates the binary contract."""


class MissingEmbeddingError(KeyError):
    def __init__(self, uid: int):
        super().__init__(f"no embedding for uid {uid}")
        self.uid = uid


class EmbeddingStore:
    """Immutable-after-build map from quintuple uid to a fixed-dim vector."""

    def __init__(self, dim: int, provenance: str = ""):
        if dim <= 0:
            raise ValueError(f"dim must be positive, got {dim}")
        self.dim = dim
        self.provenance = provenance
        self.records: dict[int, np.ndarray] = {}

    def add(self, uid: int, vector: np.ndarray) -> None:
        vector = np.asarray(vector, dtype=np.float32)
        if vector.shape != (self.dim,):
            raise ValueError(f"vector shape {vector.shape} does not match dim {self.dim}")
        if not np.isfinite(vector).all():
            raise ValueError(f"non-finite embedding for uid {uid}")
        if uid in self.records:
            raise ValueError(f"duplicate uid {uid}")
        self.records[uid] = vector

    def vector(self, uid: int) -> np.ndarray:
        try:
            return self.records[uid]
        except KeyError:
            raise MissingEmbeddingError(uid) from None

    def __len__(self) -> int:
        return len(self.records)

    def __contains__(self, uid: int) -> bool:
        return uid in self.records


def mean_pool(tokens: np.ndarray) -> np.ndarray:
    """Column-wise mean of an n x d token matrix."""
    tokens = np.asarray(tokens, dtype=np.float64)
    if tokens.ndim != 2 or tokens.shape[0] == 0:
        raise ValueError(f"expected a nonempty 2-D matrix, got shape {tokens.shape}")
    return tokens.mean(axis=0)


def hash_encoder(prompt: str, dim: int, seed: int = 0) -> np.ndarray:
    """Deterministic unit-norm stand-in for a frozen text encoder.

    The vector is drawn from a generator keyed by a hash of (prompt bytes,
    seed): identical inputs repeat exactly, distinct prompts decorrelate.
    """
    if dim <= 0:
        raise ValueError(f"dim must be positive, got {dim}")
    digest = hashlib.blake2b(
        prompt.encode("utf-8"), digest_size=32, key=seed.to_bytes(8, "little", signed=True)
    ).digest()
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(int.from_bytes(digest, "little"))))
    vec = rng.standard_normal(dim)
    norm = float(np.linalg.norm(vec))
    if norm == 0.0:  # unreachable for practical dims; keeps the contract total
        vec[0] = 1.0
        norm = 1.0
    return vec / norm


def write_store(store: EmbeddingStore, stream: BinaryIO) -> None:
    """Serialize a store; records are written in ascending uid order."""
    stream.write(_HEADER.pack(MAGIC, VERSION, store.dim, len(store.records)))
    for uid in sorted(store.records):
        stream.write(_UID.pack(uid))
        stream.write(store.records[uid].astype("<f4").tobytes())


def _read_exact(stream: BinaryIO, n: int, what: str) -> bytes:
    data = stream.read(n)
    if len(data) != n:
        raise StoreFormatError(f"truncated stream while reading {what}")
    return data


def read_store(stream: BinaryIO, provenance: str = "") -> EmbeddingStore:
    """Parse a store stream, validating every header field and record."""
    magic, version, dim, count = _HEADER.unpack(_read_exact(stream, _HEADER.size, "header"))
    if magic != MAGIC:
        raise StoreFormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise StoreFormatError(f"unsupported version {version}")
    if dim == 0:
        raise StoreFormatError("dim must be positive")
    store = EmbeddingStore(dim, provenance)
    vec_bytes = 4 * dim
    for _ in range(count):
        (uid,) = _UID.unpack(_read_exact(stream, _UID.size, "record uid"))
        raw = _read_exact(stream, vec_bytes, f"vector for uid {uid}")
        vector = np.frombuffer(raw, dtype="<f4").copy()
        if uid in store.records:
            raise StoreFormatError(f"duplicate uid {uid}")
        if not np.isfinite(vector).all():
            raise StoreFormatError(f"non-finite vector for uid {uid}")
        store.records[uid] = vector
    if stream.read(1):
        raise StoreFormatError("trailing data after final record")
    return store


def read_store_file(path, provenance: str = "") -> EmbeddingStore:
    with open(path, "rb") as fh:
        return read_store(fh, provenance or str(path))


def write_store_file(store: EmbeddingStore, path) -> None:
    with open(path, "wb") as fh:
        write_store(store, fh)


@dataclass(frozen=True)
class EmbedConfig:
    """How to embed a dataset: output dim, seed, and prompt rendering."""

    vocab: Vocabulary
    prompt: PromptConfig = field(default_factory=lambda: PromptConfig(variant="simple"))
    dim: int = 64
    seed: int = 0


def make_hash_provider(dim: int, seed: int) -> Callable[[str], np.ndarray]:
    return lambda prompt: hash_encoder(prompt, dim, seed)


def embed_all(
    data: Sequence[Quintuple],
    provider: EmbeddingStore | Callable[[str], np.ndarray],
    cfg: EmbedConfig,
) -> EmbeddingStore:
    """Embed every quintuple, either by store lookup or by rendering its
    per-event prompt through an encoder callable. Output is keyed by uid,
    so it is independent of input order."""
    if isinstance(provider, EmbeddingStore):
        out = EmbeddingStore(provider.dim, provider.provenance)
        for q in data:
            out.add(q.uid, provider.vector(q.uid))
        return out
    out = EmbeddingStore(cfg.dim, provenance=f"hash-encoder(dim={cfg.dim}, seed={cfg.seed})")
    for q in data:
        vec = np.asarray(provider(render_simple_prompt(q, cfg.vocab, cfg.prompt)), dtype=np.float64)
        if vec.shape != (cfg.dim,):
            raise ValueError(f"provider returned shape {vec.shape}, expected ({cfg.dim},)")
        out.add(q.uid, vec.astype(np.float32))
    return out
