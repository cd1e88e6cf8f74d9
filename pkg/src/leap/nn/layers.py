"""Trainable layers: linear, single-head self-attention, GRU cell.

Parameters are plain grad-requiring Tensors grouped in small dataclasses;
initialization draws from an explicit generator so runs are reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .autograd import Tensor, add, gather_rows, matmul, mul, sigmoid, softmax_rows, tanh, transpose


def xavier_uniform(rng: np.random.Generator, shape: tuple[int, ...]) -> np.ndarray:
    fan_in, fan_out = shape[0], shape[-1]
    bound = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


def param(rng: np.random.Generator, shape: tuple[int, ...]) -> Tensor:
    return Tensor(xavier_uniform(rng, shape), requires_grad=True)


def zeros_param(shape: tuple[int, ...]) -> Tensor:
    return Tensor(np.zeros(shape), requires_grad=True)


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """x @ w with the bias broadcast over rows."""
    out = matmul(x, w)
    if b is not None:
        out = add(out, b)
    return out


@dataclass
class AttentionParams:
    """Single-head self-attention weights (square maps, no output projection)."""

    w_q: Tensor
    w_k: Tensor
    w_v: Tensor

    @classmethod
    def init(cls, dim: int, rng: np.random.Generator) -> "AttentionParams":
        return cls(param(rng, (dim, dim)), param(rng, (dim, dim)), param(rng, (dim, dim)))

    def params(self) -> list[Tensor]:
        return [self.w_q, self.w_k, self.w_v]


def self_attention(x: Tensor, p: AttentionParams) -> Tensor:
    """softmax(QK^T / sqrt(d)) V over the rows of x; no masking."""
    dim = x.data.shape[-1]
    q = matmul(x, p.w_q)
    k = matmul(x, p.w_k)
    v = matmul(x, p.w_v)
    scores = mul(matmul(q, transpose(k)), 1.0 / math.sqrt(dim))
    return matmul(softmax_rows(scores), v)


@dataclass
class GruParams:
    """Gated recurrent cell: update gate z, reset gate r, candidate h~."""

    w_z: Tensor
    u_z: Tensor
    b_z: Tensor
    w_r: Tensor
    u_r: Tensor
    b_r: Tensor
    w_h: Tensor
    u_h: Tensor
    b_h: Tensor

    @classmethod
    def init(cls, input_dim: int, hidden_dim: int, rng: np.random.Generator) -> "GruParams":
        def w():
            return param(rng, (input_dim, hidden_dim))

        def u():
            return param(rng, (hidden_dim, hidden_dim))

        def b():
            return zeros_param((hidden_dim,))

        return cls(w(), u(), b(), w(), u(), b(), w(), u(), b())

    def params(self) -> list[Tensor]:
        return [self.w_z, self.u_z, self.b_z, self.w_r, self.u_r, self.b_r, self.w_h, self.u_h, self.b_h]


def gru_step(x: Tensor, h: Tensor, p: GruParams) -> Tensor:
    """One step over row-batched inputs: h' = (1 - z) * h + z * h~."""
    z = sigmoid(add(add(matmul(x, p.w_z), matmul(h, p.u_z)), p.b_z))
    r = sigmoid(add(add(matmul(x, p.w_r), matmul(h, p.u_r)), p.b_r))
    h_cand = tanh(add(add(matmul(x, p.w_h), matmul(mul(r, h), p.u_h)), p.b_h))
    one_minus_z = add(mul(z, -1.0), Tensor(np.ones_like(z.data)))
    return add(mul(one_minus_z, h), mul(z, h_cand))


def embedding_rows(table: Tensor, index: np.ndarray) -> Tensor:
    return gather_rows(table, index)
