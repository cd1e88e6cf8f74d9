"""Synthetic datasets shared across tests.

Both builders are deterministic: the ranking fixture has a functional
object (fully determined by subject and relation), and the forecasting
fixture occurs relations periodically so labels follow the day's phase.
"""

from __future__ import annotations

from datetime import date

import numpy as np

from leap.embeddings import EmbedConfig, embed_all, make_hash_provider
from leap.events import ParsedDataset, Quintuple, Vocabulary, chronological_split
from leap.prompts import PromptConfig
from leap.rng import substream


def functional_object(subject: int, relation: int, num_entities: int) -> int:
    return (3 * subject + 7 * relation + 1) % num_entities


def ranking_dataset(
    num_entities: int = 20,
    num_relations: int = 5,
    days: int = 30,
    events_per_day: int = 8,
    seed: int = 11,
) -> ParsedDataset:
    """Events whose object is a fixed function of (subject, relation)."""
    rng = substream(seed, "synt-ranking")
    vocab = Vocabulary(
        [f"entity-{i}" for i in range(num_entities)],
        [f"relation-{i}" for i in range(num_relations)],
    )
    quintuples = []
    uid = 0
    for day in range(days):
        for _ in range(events_per_day):
            s = int(rng.integers(num_entities))
            r = int(rng.integers(num_relations))
            o = functional_object(s, r, num_entities)
            quintuples.append(Quintuple(s, r, o, day, "", uid))
            uid += 1
    return ParsedDataset(vocab, quintuples, date(2010, 1, 1))


def periodic_dataset(
    num_relations: int = 6,
    days: int = 60,
    events_per_relation: int = 2,
    num_entities: int = 8,
    seed: int = 13,
) -> ParsedDataset:
    """Relation k occurs on day d iff d % 3 == k % 3."""
    rng = substream(seed, "synt-periodic")
    vocab = Vocabulary(
        [f"actor-{i}" for i in range(num_entities)],
        [f"relation-{i}" for i in range(num_relations)],
    )
    quintuples = []
    uid = 0
    for day in range(days):
        for rel in range(num_relations):
            if day % 3 != rel % 3:
                continue
            for _ in range(events_per_relation):
                s = int(rng.integers(num_entities))
                o = int(rng.integers(num_entities))
                quintuples.append(
                    Quintuple(s, rel, o, day, f"event of kind {rel} on day {day}", uid)
                )
                uid += 1
    return ParsedDataset(vocab, quintuples, date(2010, 1, 1))


def hashed_store(parsed: ParsedDataset, dim: int = 16, seed: int = 0):
    cfg = EmbedConfig(parsed.vocab, PromptConfig(variant="simple", epoch=parsed.epoch), dim, seed)
    return embed_all(parsed.quintuples, make_hash_provider(dim, seed), cfg)


def onehot_relation_store(parsed: ParsedDataset, dim: int = 8):
    """Deterministic embeddings that expose each event's relation directly."""
    from leap.embeddings import EmbeddingStore

    assert dim >= parsed.vocab.num_relations
    store = EmbeddingStore(dim, provenance="onehot-relation")
    for q in parsed.quintuples:
        vec = np.zeros(dim, dtype=np.float32)
        vec[q.relation_id] = 1.0
        store.add(q.uid, vec)
    return store


def split_default(parsed: ParsedDataset):
    return chronological_split(parsed.quintuples)
