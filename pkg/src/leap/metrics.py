"""Evaluation metrics: Hits@k, ROUGE-1/2/L, micro multilabel PRF,
perplexity, and the exact Wilcoxon signed-rank test.

All scores live in [0, 1] except perplexity; 0/0 ratios resolve to 0.
"""

from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np


@dataclass(frozen=True)
class RankedQuery:
    """A query's true entity index plus the full candidate ranking (best first)."""

    true_index: int
    ranking: Sequence[int]


@dataclass(frozen=True)
class RougeTriple:
    r1: float
    r2: float
    rl: float


def hits_at_k(queries: Sequence[RankedQuery], ks: Iterable[int] = (1, 3, 10)) -> dict[int, float]:
    """Fraction of queries whose true index ranks within the top k."""
    if not queries:
        raise ValueError("no queries to score")
    ranks = []
    for q in queries:
        try:
            ranks.append(q.ranking.index(q.true_index) + 1)
        except (ValueError, AttributeError):
            position = np.nonzero(np.asarray(q.ranking) == q.true_index)[0]
            if position.size != 1:
                raise ValueError(f"true index {q.true_index} not ranked exactly once")
            ranks.append(int(position[0]) + 1)
    return {k: sum(1 for r in ranks if r <= k) / len(ranks) for k in ks}


_TOKEN = re.compile(r"[^\W_]+", re.UNICODE)


def tokenize(text: str) -> list[str]:
    """Lowercase and split on runs of non-alphanumeric characters."""
    return _TOKEN.findall(text.lower())


def _f1(overlap: float, hyp_total: int, ref_total: int) -> float:
    precision = overlap / hyp_total if hyp_total else 0.0
    recall = overlap / ref_total if ref_total else 0.0
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def _ngram_f1(ref: list[str], hyp: list[str], n: int) -> float:
    ref_grams = Counter(tuple(ref[i : i + n]) for i in range(len(ref) - n + 1))
    hyp_grams = Counter(tuple(hyp[i : i + n]) for i in range(len(hyp) - n + 1))
    if not ref_grams:
        return 0.0
    overlap = sum(min(c, hyp_grams[g]) for g, c in ref_grams.items())
    return _f1(overlap, sum(hyp_grams.values()), sum(ref_grams.values()))


def _lcs_length(a: list[str], b: list[str]) -> int:
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, start=1):
            cur.append(prev[j - 1] + 1 if x == y else max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def rouge(reference: str, hypothesis: str) -> RougeTriple:
    """ROUGE-1/2/L F1 between two strings.

    Tokens are lowercased alphanumeric runs; a score whose reference side
    has no units (fewer than n tokens) is 0.
    """
    ref = tokenize(reference)
    hyp = tokenize(hypothesis)
    rl = _f1(_lcs_length(ref, hyp), len(hyp), len(ref)) if ref else 0.0
    return RougeTriple(
        r1=_ngram_f1(ref, hyp, 1),
        r2=_ngram_f1(ref, hyp, 2),
        rl=rl,
    )


def multilabel_prf(y_true: np.ndarray, y_pred: np.ndarray) -> tuple[float, float, float]:
    """Micro-averaged (F1, recall, precision) over a binary label matrix."""
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    if y_true.shape != y_pred.shape:
        raise ValueError(f"shape mismatch: {y_true.shape} vs {y_pred.shape}")
    for arr, name in ((y_true, "y_true"), (y_pred, "y_pred")):
        if not np.isin(arr, (0, 1)).all():
            raise ValueError(f"{name} must be binary")
    tp = int(np.sum((y_true == 1) & (y_pred == 1)))
    fp = int(np.sum((y_true == 0) & (y_pred == 1)))
    fn = int(np.sum((y_true == 1) & (y_pred == 0)))
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return f1, recall, precision


def perplexity(token_probs: Sequence[float]) -> float:
    """exp of the mean negative log probability."""
    if len(token_probs) == 0:
        raise ValueError("no token probabilities")
    for p in token_probs:
        if not 0.0 < p <= 1.0:
            raise ValueError(f"probability {p} outside (0, 1]")
    return math.exp(-sum(math.log(p) for p in token_probs) / len(token_probs))


_MAX_EXACT_N = 20


def wilcoxon_signed_rank(diffs: Sequence[float], sidedness: str = "one") -> float:
    """Exact signed-rank p-value by enumerating all sign assignments.

    Zeros are dropped; absolute differences are ranked with midrank ties.
    One-sided tests the alternative "first sample larger" (large positive
    rank sum extreme); two-sided doubles the smaller tail including the
    observed point, capped at 1. Refuses more than 20 nonzero differences,
    where exact enumeration stops being the right tool.
    """
    if sidedness not in ("one", "two"):
        raise ValueError(f"sidedness must be 'one' or 'two', got {sidedness!r}")
    nonzero = [d for d in diffs if d != 0]
    m = len(nonzero)
    if m == 0:
        raise ValueError("all differences are zero")
    if m > _MAX_EXACT_N:
        raise ValueError(f"{m} nonzero differences exceed the exact-enumeration limit of {_MAX_EXACT_N}")

    ranks = _midranks([abs(d) for d in nonzero])
    # doubling makes midranks integral so the distribution can live in a dict
    scaled = [int(round(2 * r)) for r in ranks]
    observed = sum(s for s, d in zip(scaled, nonzero) if d > 0)

    counts: dict[int, int] = {0: 1}
    for s in scaled:
        nxt: dict[int, int] = {}
        for total, c in counts.items():
            nxt[total] = nxt.get(total, 0) + c
            nxt[total + s] = nxt.get(total + s, 0) + c
        counts = nxt
    denom = float(2**m)

    upper = sum(c for total, c in counts.items() if total >= observed) / denom
    if sidedness == "one":
        return upper
    point = counts.get(observed, 0) / denom
    lower = 1.0 - upper + point
    return min(1.0, 2.0 * min(upper, lower))


def _midranks(values: Sequence[float]) -> list[float]:
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        mid = (i + j) / 2 + 1
        for k in range(i, j + 1):
            ranks[order[k]] = mid
        i = j + 1
    return ranks
