"""Mean-reduced losses used by the training loops."""

from __future__ import annotations

import numpy as np

from .autograd import Tensor, add, clip, log, log_softmax_rows, mul, pick, tmean

PROB_CLAMP = 1e-7


def cross_entropy_softmax(logits: Tensor, targets: np.ndarray) -> Tensor:
    """Mean negative log softmax probability of the target class per row."""
    targets = np.asarray(targets, dtype=np.intp)
    n, k = logits.data.shape
    if targets.shape != (n,):
        raise ValueError(f"expected {n} targets, got shape {targets.shape}")
    if targets.min() < 0 or targets.max() >= k:
        raise IndexError(f"target index outside [0, {k})")
    log_probs = log_softmax_rows(logits)
    picked = pick(log_probs, np.arange(n), targets)
    return mul(tmean(picked), -1.0)


def binary_cross_entropy(probs: Tensor, labels: np.ndarray) -> Tensor:
    """Mean-reduced BCE; probabilities are clamped away from {0, 1}."""
    labels = np.asarray(labels, dtype=np.float64)
    if labels.shape != probs.data.shape:
        raise ValueError(f"shape mismatch: probs {probs.data.shape}, labels {labels.shape}")
    if not np.isin(labels, (0.0, 1.0)).all():
        raise ValueError("labels must be binary")
    p = clip(probs, PROB_CLAMP, 1.0 - PROB_CLAMP)
    one_minus = add(mul(p, -1.0), Tensor(np.ones_like(p.data)))
    nll = add(mul(log(p), labels), mul(log(one_minus), 1.0 - labels))
    return mul(tmean(nll), -1.0)
