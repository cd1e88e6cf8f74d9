"""Deterministic prompt rendering and in-context history selection.

Two templates: the object-prediction prompt (few-shot / zero-shot / no-text
variants) that frames a query quintuple as a question with the object
blanked out, and the five-line per-event prompt used to feed single events
to a text encoder. Rendering is byte-exact; golden files pin the layout.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import date, timedelta

from .events import Quintuple, Vocabulary

MISSING_OBJECT = "⟨MISSING OBJECT ENTITY⟩"

VARIANTS = ("few_shot", "zero_shot", "no_text", "simple")

_PREAMBLE = (
    "I ask you to perform an object prediction task after I provide you with five examples. "
    "Each example is a knowledge quintuple containing two entities, a relation, a timestamp, "
    "and a brief text summary. Each knowledge quintuple is strictly formatted as "
    "(subject entity, relation, object entity, timestamp, text summary). "
    "For the object prediction task, you should predict the missing object entity "
    "based on the other four available elements."
)
_ANNOUNCEMENT = "Now I give you five examples."
_QUERY_HEADER = "Now I give you a query:"
_INSTRUCTION = (
    "Please predict the missing object entity. "
    "You are allowed to predict new object entity which you have never seen in examples. "
    "The correct object entity is:"
)


@dataclass(frozen=True)
class PromptConfig:
    """Prompt variant, shot budget, history scope, and date rendering.

    ``shots`` is forced to 0 for the zero_shot variant. ``epoch`` anchors
    day indices back to calendar dates for the timestamp slot.
    """

    variant: str = "few_shot"
    shots: int = 5
    history_scope: str = "same_subject_first"
    date_format: str = "%Y-%m-%d"
    epoch: date = date(2010, 1, 1)

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown prompt variant {self.variant!r}")
        if self.history_scope not in ("same_subject_first", "global_recent"):
            raise ValueError(f"unknown history scope {self.history_scope!r}")
        if self.shots < 0:
            raise ValueError("shots must be >= 0")
        if self.variant == "zero_shot" and self.shots != 0:
            object.__setattr__(self, "shots", 0)


@dataclass(frozen=True)
class OpQuery:
    """An object-prediction query: everything but the object.

    ``uid`` positions the query within its source dataset so same-day
    history stays strictly earlier; queries without a uid only see
    earlier days. ``true_object_id`` is absent at inference time.
    """

    subject_id: int
    relation_id: int
    day: int
    text: str
    true_object_id: int | None = None
    uid: int | None = None


def query_from_quintuple(q: Quintuple) -> OpQuery:
    return OpQuery(q.subject_id, q.relation_id, q.day, q.text, q.object_id, q.uid)


def select_history_examples(
    query: OpQuery, data: list[Quintuple], cfg: PromptConfig
) -> list[Quintuple]:
    """Pick up to ``cfg.shots`` strictly earlier events, oldest first.

    ``data`` must be sorted by (day, uid). Under same_subject_first,
    events sharing the query subject win; the remainder is padded with the
    globally most recent others. May return fewer than ``shots``.
    """
    if cfg.shots == 0:
        return []
    eligible = [
        q
        for q in data
        if q.day < query.day
        or (query.uid is not None and q.day == query.day and q.uid < query.uid)
    ]
    if cfg.history_scope == "global_recent":
        return eligible[-cfg.shots :]
    same = [q for q in eligible if q.subject_id == query.subject_id]
    picked = same[-cfg.shots :]
    missing = cfg.shots - len(picked)
    if missing > 0:
        others = [q for q in eligible if q.subject_id != query.subject_id]
        picked = picked + others[-missing:]
    picked.sort(key=lambda q: (q.day, q.uid))
    return picked


def _render_day(day: int, cfg: PromptConfig) -> str:
    return (cfg.epoch + timedelta(days=day)).strftime(cfg.date_format)


def _tuple_line(
    subject: str, relation: str, obj: str, day: int, text: str, cfg: PromptConfig
) -> str:
    parts = [subject, relation, obj, _render_day(day, cfg)]
    if cfg.variant != "no_text":
        parts.append(text)
    return "(" + ", ".join(parts) + ")"


def render_op_prompt(
    query: OpQuery, examples: list[Quintuple], cfg: PromptConfig, vocab: Vocabulary
) -> str:
    """Render the object-prediction prompt for a query plus its examples.

    zero_shot drops the example blocks and the sentence announcing them;
    no_text drops the text-summary element from every tuple. The query's
    object never appears: its slot holds the missing-object marker.
    """
    if cfg.variant not in ("few_shot", "zero_shot", "no_text"):
        raise ValueError(f"variant {cfg.variant!r} is not an object-prediction prompt")
    if len(examples) > cfg.shots:
        raise ValueError(f"{len(examples)} examples exceed the configured {cfg.shots} shots")

    header = _PREAMBLE
    if cfg.variant != "zero_shot":
        header += "\n" + _ANNOUNCEMENT
    sections = [header]
    for k, ex in enumerate(examples, start=1):
        line = _tuple_line(
            vocab.entity(ex.subject_id),
            vocab.relation(ex.relation_id),
            MISSING_OBJECT,
            ex.day,
            ex.text,
            cfg,
        )
        answer = f"The {MISSING_OBJECT} is: {vocab.entity(ex.object_id)}"
        sections.append(f"## Example {k}\n{line}\n{answer}")
    query_line = _tuple_line(
        vocab.entity(query.subject_id),
        vocab.relation(query.relation_id),
        MISSING_OBJECT,
        query.day,
        query.text,
        cfg,
    )
    sections.append(f"{_QUERY_HEADER}\n{query_line}\n{_INSTRUCTION}")
    return "\n\n".join(sections)


def render_simple_prompt(q: Quintuple, vocab: Vocabulary, cfg: PromptConfig) -> str:
    """Render one event as the five fixed Subject/Relation/Object/Timestamp/
    Text Summary lines."""
    return "\n".join(
        (
            f"Subject: {vocab.entity(q.subject_id)};",
            f"Relation: {vocab.relation(q.relation_id)};",
            f"Object: {vocab.entity(q.object_id)};",
            f"Timestamp: {_render_day(q.day, cfg)};",
            f"Text Summary: {q.text}",
        )
    )
