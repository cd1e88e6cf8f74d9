"""Quintuple event datasets: parsing, validation, chronological splitting,
and per-day graph grouping.

A quintuple is one event record (subject, relation, object, day, text
summary). Days are integer offsets from the earliest date observed in the
source file; ids index into a :class:`Vocabulary` built in first-appearance
order so that a given file always parses to the same ids.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass
from datetime import date, timedelta
from typing import BinaryIO, Iterable, Sequence


class DatasetError(ValueError):
    """Malformed dataset input; carries the 1-based source line when known."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


@dataclass(frozen=True)
class Quintuple:
    """One event: ids into the vocabulary, a day index, and a text summary."""

    subject_id: int
    relation_id: int
    object_id: int
    day: int
    text: str
    uid: int


class Vocabulary:
    """Bidirectional id<->string maps for entities and relations.

    Indices are dense and stable: ``entities[entity_id(s)] == s``.
    """

    def __init__(self, entities: Sequence[str], relations: Sequence[str]):
        self.entities = list(entities)
        self.relations = list(relations)
        self._entity_ids = {s: i for i, s in enumerate(self.entities)}
        self._relation_ids = {s: i for i, s in enumerate(self.relations)}
        if len(self._entity_ids) != len(self.entities):
            raise ValueError("duplicate entity strings")
        if len(self._relation_ids) != len(self.relations):
            raise ValueError("duplicate relation strings")

    @property
    def num_entities(self) -> int:
        return len(self.entities)

    @property
    def num_relations(self) -> int:
        return len(self.relations)

    def entity_id(self, name: str) -> int:
        return self._entity_ids[name]

    def relation_id(self, name: str) -> int:
        return self._relation_ids[name]

    def entity(self, idx: int) -> str:
        return self.entities[idx]

    def relation(self, idx: int) -> str:
        return self.relations[idx]


@dataclass(frozen=True)
class ParsedDataset:
    """Parse result: vocabulary, records in file order, and the epoch date.

    ``epoch`` is the earliest date in the source; day indices count from it,
    so rendering a day back to a calendar date needs it.
    """

    vocab: Vocabulary
    quintuples: list[Quintuple]
    epoch: date


@dataclass(frozen=True)
class DatasetSplit:
    """Chronologically disjoint train/valid/test partitions.

    ``boundary_days`` holds (last train day, last valid day): a record
    belongs to train iff day <= boundary_days[0], to valid iff
    boundary_days[0] < day <= boundary_days[1], else to test.
    """

    train: list[Quintuple]
    valid: list[Quintuple]
    test: list[Quintuple]
    boundary_days: tuple[int, int]


@dataclass(frozen=True)
class DailyGraph:
    """All edges of one day, in input order: (subject, relation, object, uid)."""

    day: int
    edges: list[tuple[int, int, int, int]]


class _VocabBuilder:
    def __init__(self):
        self._ids: dict[str, int] = {}
        self.items: list[str] = []

    def add(self, name: str) -> int:
        idx = self._ids.get(name)
        if idx is None:
            idx = len(self.items)
            self._ids[name] = idx
            self.items.append(name)
        return idx


def _parse_date(raw: str, line: int) -> date:
    try:
        return date.fromisoformat(raw.strip())
    except ValueError:
        raise DatasetError(f"unparseable date {raw!r}", line) from None


def _check_nonempty(value: str, what: str, line: int) -> str:
    if not value:
        raise DatasetError(f"empty {what} string", line)
    return value


def _records_from_tsv(lines: Iterable[str]):
    for lineno, raw in enumerate(lines, start=1):
        line = raw.rstrip("\n").rstrip("\r")
        if not line:
            continue
        fields = line.split("\t")
        if len(fields) != 5:
            raise DatasetError(f"expected 5 tab-separated fields, got {len(fields)}", lineno)
        subject, relation, obj, when, text = fields
        yield lineno, subject, relation, obj, when, text


def _records_from_jsonl(lines: Iterable[str]):
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line:
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DatasetError(f"invalid JSON ({exc.msg})", lineno) from None
        if not isinstance(record, dict):
            raise DatasetError("record is not a JSON object", lineno)
        try:
            subject = record["subject"]
            relation = record["relation"]
            obj = record["object"]
            when = record["date"]
        except KeyError as exc:
            raise DatasetError(f"missing key {exc.args[0]!r}", lineno) from None
        text = record.get("text", "")
        for name, value in (("subject", subject), ("relation", relation),
                            ("object", obj), ("date", when), ("text", text)):
            if not isinstance(value, str):
                raise DatasetError(f"{name} is not a string", lineno)
        yield lineno, subject, relation, obj, when, text


def parse_dataset(source: BinaryIO | bytes, format: str = "tsv") -> ParsedDataset:
    """Parse a TSV or JSONL event stream into vocabulary + quintuples.

    Vocabularies are built in first-appearance order, days are relative to
    the earliest date in the file, and uids are assigned 0..N-1 in file
    order. Malformed lines raise :class:`DatasetError` with the line number.
    """
    if format not in ("tsv", "jsonl"):
        raise ValueError(f"unknown format {format!r}")
    if isinstance(source, bytes):
        source = io.BytesIO(source)
    text_stream = io.TextIOWrapper(source, encoding="utf-8")
    reader = _records_from_tsv if format == "tsv" else _records_from_jsonl

    entities = _VocabBuilder()
    relations = _VocabBuilder()
    staged: list[tuple[int, int, int, date, str]] = []
    for lineno, subject, relation, obj, when, text in reader(text_stream):
        s = entities.add(_check_nonempty(subject, "subject", lineno))
        r = relations.add(_check_nonempty(relation, "relation", lineno))
        o = entities.add(_check_nonempty(obj, "object", lineno))
        staged.append((s, r, o, _parse_date(when, lineno), text))
    if not staged:
        raise DatasetError("dataset is empty")

    epoch = min(item[3] for item in staged)
    quintuples = [
        Quintuple(s, r, o, (when - epoch).days, text, uid)
        for uid, (s, r, o, when, text) in enumerate(staged)
    ]
    return ParsedDataset(Vocabulary(entities.items, relations.items), quintuples, epoch)


def day_to_date(day: int, epoch: date) -> date:
    return epoch + timedelta(days=day)


def write_tsv(data: Sequence[Quintuple], vocab: Vocabulary, epoch: date, stream: BinaryIO) -> None:
    """Serialize quintuples in uid order to the 5-column TSV format."""
    out = io.TextIOWrapper(stream, encoding="utf-8", newline="")
    for q in sorted(data, key=lambda q: q.uid):
        row = (vocab.entity(q.subject_id), vocab.relation(q.relation_id),
               vocab.entity(q.object_id), day_to_date(q.day, epoch).isoformat(), q.text)
        out.write("\t".join(row) + "\n")
    out.flush()
    out.detach()


def write_jsonl(data: Sequence[Quintuple], vocab: Vocabulary, epoch: date, stream: BinaryIO) -> None:
    """Serialize quintuples in uid order as one JSON object per line."""
    out = io.TextIOWrapper(stream, encoding="utf-8", newline="")
    for q in sorted(data, key=lambda q: q.uid):
        record = {
            "subject": vocab.entity(q.subject_id),
            "relation": vocab.relation(q.relation_id),
            "object": vocab.entity(q.object_id),
            "date": day_to_date(q.day, epoch).isoformat(),
            "text": q.text,
        }
        out.write(json.dumps(record, ensure_ascii=False) + "\n")
    out.flush()
    out.detach()


def chronological_split(
    data: Sequence[Quintuple],
    ratios: tuple[float, float, float] = (0.8, 0.1, 0.1),
    boundaries: tuple[int, int] | None = None,
) -> DatasetSplit:
    """Partition records into train/valid/test by distinct day.

    Distinct observed days are sorted ascending and cut at the cumulative
    normalized ratios (nearest-rank, so 1931 days at 0.8/0.1/0.1 give
    1545/193/193); each split keeps at least one day. Explicit
    ``boundaries`` (last train day, last valid day) override the ratios.
    """
    if not data:
        raise ValueError("cannot split an empty dataset")
    days = sorted({q.day for q in data})
    if len(days) < 3:
        raise ValueError(f"need at least 3 distinct days, got {len(days)}")

    if boundaries is None:
        if any(r <= 0 for r in ratios):
            raise ValueError("split ratios must be positive")
        total = sum(ratios)
        n = len(days)
        # round() at 9 decimals shields ceil() from float fuzz at exact cuts
        k1 = math.ceil(round(ratios[0] / total * n, 9))
        k2 = math.ceil(round((ratios[0] + ratios[1]) / total * n, 9))
        k1 = min(max(k1, 1), n - 2)
        k2 = min(max(k2, k1 + 1), n - 1)
        boundaries = (days[k1 - 1], days[k2 - 1])
    b1, b2 = boundaries
    if b1 >= b2:
        raise ValueError(f"boundary days must be increasing, got {boundaries}")

    train: list[Quintuple] = []
    valid: list[Quintuple] = []
    test: list[Quintuple] = []
    for q in data:
        if q.day <= b1:
            train.append(q)
        elif q.day <= b2:
            valid.append(q)
        else:
            test.append(q)
    if not train or not valid or not test:
        raise ValueError(f"boundaries {boundaries} leave an empty split")
    return DatasetSplit(train, valid, test, (b1, b2))


def group_by_day(data: Sequence[Quintuple]) -> list[DailyGraph]:
    """Group events into one graph per distinct day, ascending, keeping
    input order within each day."""
    by_day: dict[int, list[tuple[int, int, int, int]]] = {}
    for q in data:
        by_day.setdefault(q.day, []).append((q.subject_id, q.relation_id, q.object_id, q.uid))
    return [DailyGraph(day, by_day[day]) for day in sorted(by_day)]


@dataclass(frozen=True)
class StatsReport:
    """Dataset summary: vocabulary sizes, per-split counts, and day spans."""

    num_entities: int
    num_relations: int
    train_events: int
    valid_events: int
    test_events: int
    total_events: int
    train_days: int
    valid_days: int
    test_days: int
    first_day: int
    last_day: int
    boundary_days: tuple[int, int]

    def to_json(self) -> str:
        from dataclasses import asdict

        payload = asdict(self)
        payload["boundary_days"] = list(self.boundary_days)
        return json.dumps(payload, indent=2, sort_keys=True)


def dataset_stats(split: DatasetSplit, vocab: Vocabulary) -> StatsReport:
    all_days = [q.day for part in (split.train, split.valid, split.test) for q in part]
    return StatsReport(
        num_entities=vocab.num_entities,
        num_relations=vocab.num_relations,
        train_events=len(split.train),
        valid_events=len(split.valid),
        test_events=len(split.test),
        total_events=len(split.train) + len(split.valid) + len(split.test),
        train_days=len({q.day for q in split.train}),
        valid_days=len({q.day for q in split.valid}),
        test_days=len({q.day for q in split.test}),
        first_day=min(all_days),
        last_day=max(all_days),
        boundary_days=split.boundary_days,
    )
