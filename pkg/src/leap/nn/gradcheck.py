"""Central finite-difference verification of analytic gradients."""

from __future__ import annotations

from typing import Callable

import numpy as np

from .autograd import Tensor, backward, zero_grad


def finite_diff_check(f: Callable[[], Tensor], params: list[Tensor], h: float = 1e-4) -> float:
    """Max relative error between analytic grads of f() and central differences.

    f must be a deterministic scalar function of the given params (run any
    dropout in eval mode). Relative error uses max(|analytic|, |numeric|,
    1e-8) as the denominator.
    """
    zero_grad(params)
    loss = f()
    backward(loss)
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]

    worst = 0.0
    for p, a in zip(params, analytic):
        flat = p.data.reshape(-1)
        a_flat = a.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            f_plus = float(f().data)
            flat[i] = orig - h
            f_minus = float(f().data)
            flat[i] = orig
            numeric = (f_plus - f_minus) / (2.0 * h)
            denom = max(abs(a_flat[i]), abs(numeric), 1e-8)
            worst = max(worst, abs(a_flat[i] - numeric) / denom)
    return worst
