"""Self-contained ROUGE-1/2/L F1 for fine-tuning reports (kept local so
the bridge does not depend on the main package at runtime)."""

from __future__ import annotations

import re
from collections import Counter

_TOKEN = re.compile(r"[^\W_]+", re.UNICODE)


def _tokens(text: str) -> list[str]:
    return _TOKEN.findall(text.lower())


def _f1(overlap: float, hyp_total: int, ref_total: int) -> float:
    p = overlap / hyp_total if hyp_total else 0.0
    r = overlap / ref_total if ref_total else 0.0
    return 2 * p * r / (p + r) if p + r else 0.0


def _ngram_f1(ref: list[str], hyp: list[str], n: int) -> float:
    ref_g = Counter(tuple(ref[i : i + n]) for i in range(len(ref) - n + 1))
    hyp_g = Counter(tuple(hyp[i : i + n]) for i in range(len(hyp) - n + 1))
    if not ref_g:
        return 0.0
    return _f1(sum((ref_g & hyp_g).values()), sum(hyp_g.values()), sum(ref_g.values()))


def _lcs(a: list[str], b: list[str]) -> int:
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, start=1):
            cur.append(prev[j - 1] + 1 if x == y else max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def rouge_f1(reference: str, hypothesis: str) -> tuple[float, float, float]:
    """(ROUGE-1, ROUGE-2, ROUGE-L) F1 between two strings."""
    ref, hyp = _tokens(reference), _tokens(hypothesis)
    rl = _f1(_lcs(ref, hyp), len(hyp), len(ref)) if ref else 0.0
    return _ngram_f1(ref, hyp, 1), _ngram_f1(ref, hyp, 2), rl
