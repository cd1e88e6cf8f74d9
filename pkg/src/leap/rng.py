"""Named random substreams derived from a single run seed.

Every consumer of randomness (init, dropout, shuffling, ...) asks for its
own named stream, so adding a consumer never perturbs the draws seen by the
others.
"""

from __future__ import annotations

import hashlib

import numpy as np


def substream(seed: int, name: str) -> np.random.Generator:
    """Return a generator keyed by (seed, name), stable across runs."""
    digest = hashlib.sha256(f"{seed}:{name}".encode("utf-8")).digest()
    entropy = int.from_bytes(digest, "little")
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))
