"""Generative object prediction harness: render prompts into tasks, drive a
generator (remote bridge or local retrieval baseline), post-process the
answers, and score them with ROUGE.

The bridge speaks newline-delimited JSON, either over a byte stream or via
HTTP POST /generate: request {"id": uid, "prompt": str}, response
{"id": uid, "text": str}; {"op": "ping"} answers {"ok": true}.
"""

from __future__ import annotations

import json
import time
import urllib.error
import urllib.request
from dataclasses import dataclass
from typing import Callable, Sequence

from .events import Quintuple, Vocabulary
from .metrics import rouge
from .prompts import PromptConfig, query_from_quintuple, render_op_prompt, select_history_examples


@dataclass(frozen=True)
class GenerationTask:
    """One query rendered as a prompt, with the reference answer string."""

    uid: int
    prompt: str
    reference: str
    variant: str
    query_text: str


@dataclass(frozen=True)
class GenerationResult:
    uid: int
    hypothesis: str
    latency: float
    source: str
    error: str | None = None


def build_tasks(
    part: Sequence[Quintuple],
    data: Sequence[Quintuple],
    cfg: PromptConfig,
    vocab: Vocabulary,
) -> list[GenerationTask]:
    """One task per query quintuple in the part; history is drawn from
    ``data``, which must be sorted by (day, uid)."""
    tasks = []
    for q in part:
        query = query_from_quintuple(q)
        examples = select_history_examples(query, list(data), cfg)
        prompt = render_op_prompt(query, examples, cfg, vocab)
        tasks.append(
            GenerationTask(
                uid=q.uid,
                prompt=prompt,
                reference=vocab.entity(q.object_id),
                variant=cfg.variant,
                query_text=q.text,
            )
        )
    return tasks


def _unigram_overlap_f1(a: str, b: str) -> float:
    return rouge(a, b).r1


def baseline_nearest_example(
    task: GenerationTask, examples: Sequence[Quintuple], vocab: Vocabulary
) -> GenerationResult:
    """Answer with the object of the example whose text best overlaps the
    query text (unigram F1); ties go to the most recent example."""
    if not examples:
        raise ValueError("baseline needs at least one example")
    start = time.perf_counter()
    best_score = -1.0
    best = examples[0]
    for ex in examples:
        score = _unigram_overlap_f1(task.query_text, ex.text)
        if score >= best_score:
            best_score = score
            best = ex
    return GenerationResult(
        uid=task.uid,
        hypothesis=vocab.entity(best.object_id),
        latency=time.perf_counter() - start,
        source="baseline",
    )


class BaselineGenerator:
    """Adapter that re-selects each task's history and applies the
    nearest-example baseline; a pure function of the dataset and config."""

    def __init__(self, data: Sequence[Quintuple], cfg: PromptConfig, vocab: Vocabulary):
        self._by_uid = {q.uid: q for q in data}
        self._data = sorted(data, key=lambda q: (q.day, q.uid))
        self._cfg = cfg
        self._vocab = vocab

    def __call__(self, task: GenerationTask) -> GenerationResult:
        query = query_from_quintuple(self._by_uid[task.uid])
        shots = self._cfg.shots if self._cfg.shots > 0 else 5
        cfg = PromptConfig(
            variant="few_shot",
            shots=shots,
            history_scope=self._cfg.history_scope,
            date_format=self._cfg.date_format,
            epoch=self._cfg.epoch,
        )
        examples = select_history_examples(query, self._data, cfg)
        if not examples:
            return GenerationResult(task.uid, "", 0.0, "baseline", error="no history")
        return baseline_nearest_example(task, examples, self._vocab)


_ANSWER_ECHO = "The correct object entity is:"


def postprocess_answer(text: str) -> str:
    """Strip, keep the first line, and drop a leading instruction echo."""
    line = text.strip().split("\n", 1)[0]
    if line.startswith(_ANSWER_ECHO):
        line = line[len(_ANSWER_ECHO) :]
    return line.strip()


class HttpBridgeClient:
    """Talks to a generation server over HTTP POST /generate."""

    def __init__(self, address: str, timeout: float = 60.0):
        self.address = address.rstrip("/")
        self.timeout = timeout

    def _post(self, payload: dict) -> dict:
        request = urllib.request.Request(
            f"{self.address}/generate",
            data=json.dumps(payload).encode("utf-8"),
            headers={"Content-Type": "application/json"},
        )
        with urllib.request.urlopen(request, timeout=self.timeout) as response:
            return json.loads(response.read().decode("utf-8"))

    def ping(self) -> bool:
        try:
            return self._post({"op": "ping"}).get("ok") is True
        except (urllib.error.URLError, OSError, ValueError):
            return False

    def __call__(self, task: GenerationTask) -> GenerationResult:
        start = time.perf_counter()
        try:
            reply = self._post({"id": task.uid, "prompt": task.prompt})
        except (urllib.error.URLError, OSError, ValueError) as exc:
            return GenerationResult(task.uid, "", time.perf_counter() - start, "bridge", error=str(exc))
        if reply.get("id") != task.uid:
            return GenerationResult(
                task.uid, "", time.perf_counter() - start, "bridge",
                error=f"response id {reply.get('id')!r} does not match request",
            )
        if "error" in reply:
            return GenerationResult(task.uid, "", time.perf_counter() - start, "bridge", error=str(reply["error"]))
        return GenerationResult(task.uid, str(reply.get("text", "")), time.perf_counter() - start, "bridge")


class StreamBridgeClient:
    """Talks newline-delimited JSON over a pair of byte streams."""

    def __init__(self, reader, writer):
        self.reader = reader
        self.writer = writer

    def _roundtrip(self, payload: dict) -> dict:
        self.writer.write((json.dumps(payload) + "\n").encode("utf-8"))
        self.writer.flush()
        line = self.reader.readline()
        if not line:
            raise ConnectionError("bridge stream closed")
        return json.loads(line.decode("utf-8"))

    def ping(self) -> bool:
        try:
            return self._roundtrip({"op": "ping"}).get("ok") is True
        except (OSError, ValueError):
            return False

    def __call__(self, task: GenerationTask) -> GenerationResult:
        start = time.perf_counter()
        try:
            reply = self._roundtrip({"id": task.uid, "prompt": task.prompt})
        except (OSError, ValueError) as exc:
            return GenerationResult(task.uid, "", time.perf_counter() - start, "bridge", error=str(exc))
        if reply.get("id") != task.uid:
            return GenerationResult(
                task.uid, "", time.perf_counter() - start, "bridge",
                error=f"response id {reply.get('id')!r} does not match request",
            )
        if "error" in reply:
            return GenerationResult(task.uid, "", time.perf_counter() - start, "bridge", error=str(reply["error"]))
        return GenerationResult(task.uid, str(reply.get("text", "")), time.perf_counter() - start, "bridge")


def run_generation(
    tasks: Sequence[GenerationTask],
    generator: Callable[[GenerationTask], GenerationResult],
    postprocess: Callable[[str], str] = postprocess_answer,
) -> list[GenerationResult]:
    """One result per task, order preserved; failures are recorded, not raised."""
    results = []
    for task in tasks:
        raw = generator(task)
        hypothesis = "" if raw.error else postprocess(raw.hypothesis)
        results.append(
            GenerationResult(raw.uid, hypothesis, raw.latency, raw.source, raw.error)
        )
    return results


@dataclass(frozen=True)
class GenerationReport:
    rouge1: float
    rouge2: float
    rougeL: float
    tasks: int
    failures: int
    per_task: list[tuple[int, float, float, float]]


def evaluate_generation(
    results: Sequence[GenerationResult], tasks: Sequence[GenerationTask]
) -> GenerationReport:
    """Macro-averaged ROUGE-1/2/L over tasks aligned by uid; failed
    generations score zero."""
    task_by_uid = {t.uid: t for t in tasks}
    if len(task_by_uid) != len(tasks):
        raise ValueError("duplicate task uids")
    result_uids = [r.uid for r in results]
    if sorted(result_uids) != sorted(task_by_uid):
        raise ValueError("results and tasks carry different uid sets")

    per_task = []
    failures = 0
    for r in results:
        if r.error is not None:
            failures += 1
            per_task.append((r.uid, 0.0, 0.0, 0.0))
            continue
        scores = rouge(task_by_uid[r.uid].reference, r.hypothesis)
        per_task.append((r.uid, scores.r1, scores.r2, scores.rl))
    n = len(per_task)
    return GenerationReport(
        rouge1=sum(t[1] for t in per_task) / n,
        rouge2=sum(t[2] for t in per_task) / n,
        rougeL=sum(t[3] for t in per_task) / n,
        tasks=n,
        failures=failures,
        per_task=per_task,
    )
