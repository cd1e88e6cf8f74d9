"""Multi-event forecasting: which relations occur on a day, given only the
per-event text embeddings of the preceding window.

The window's embedding rows are projected, optionally mixed by a
single-head self-attention layer, collapsed by a mean, and mapped to
per-relation sigmoid probabilities thresholded at 0.5 (strict, so the
all-zero model predicts nothing).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .embeddings import EmbeddingStore
from .events import DatasetSplit, Quintuple
from .metrics import multilabel_prf
from .nn.autograd import Tensor, backward, concat, gather_rows, mul, reshape, sigmoid, tmean, tsum
from .nn.layers import AttentionParams, linear, param, self_attention, zeros_param
from .nn.losses import binary_cross_entropy
from .nn.optim import Adam, clip_global_norm
from .rng import substream


@dataclass
class MefConfig:
    """Hyperparameters for the forecasting head."""

    window_days: int = 7
    input_dim: int = 64
    model_dim: int = 1024
    lr: float = 5e-5
    weight_decay: float = 1e-2
    batch_days: int = 2
    grad_clip: float = 1.0
    epochs: int = 40
    patience: int = 5
    threshold: float = 0.5
    use_attention: bool = True
    per_day_mean: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.window_days < 1:
            raise ValueError("window_days must be >= 1")
        if not 0.0 < self.threshold < 1.0:
            raise ValueError("threshold must lie in (0, 1)")

    @property
    def variant(self) -> str:
        return "attention" if self.use_attention else "no_attention"


class MefModel:
    """Input projection, attention weights, and the per-relation output layer."""

    def __init__(self, num_relations: int, cfg: MefConfig, rng: np.random.Generator):
        self.num_relations = num_relations
        self.cfg = cfg
        self.in_w = param(rng, (cfg.input_dim, cfg.model_dim))
        self.in_b = zeros_param((cfg.model_dim,))
        self.attention = AttentionParams.init(cfg.model_dim, rng)
        self.out_w = param(rng, (cfg.model_dim, num_relations))
        self.out_b = zeros_param((num_relations,))

    def params(self) -> list[Tensor]:
        out = [self.in_w, self.in_b]
        if self.cfg.use_attention:
            out.extend(self.attention.params())
        out.extend([self.out_w, self.out_b])
        return out

    def named_tensors(self) -> dict[str, np.ndarray]:
        named = {
            "in.w": self.in_w.data,
            "in.b": self.in_b.data,
            "out.w": self.out_w.data,
            "out.b": self.out_b.data,
        }
        if self.cfg.use_attention:
            named["attn.w_q"] = self.attention.w_q.data
            named["attn.w_k"] = self.attention.w_k.data
            named["attn.w_v"] = self.attention.w_v.data
        return named

    def load_named(self, tensors: dict[str, np.ndarray]) -> None:
        mapping = {
            "in.w": self.in_w,
            "in.b": self.in_b,
            "out.w": self.out_w,
            "out.b": self.out_b,
            "attn.w_q": self.attention.w_q,
            "attn.w_k": self.attention.w_k,
            "attn.w_v": self.attention.w_v,
        }
        for name, value in tensors.items():
            if name not in mapping:
                raise ValueError(f"unknown tensor {name!r} in checkpoint")
            if mapping[name].data.shape != value.shape:
                raise ValueError(f"shape mismatch for {name}")
            mapping[name].data = np.asarray(value, dtype=np.float64)

    def snapshot(self) -> dict[str, np.ndarray]:
        return {name: value.copy() for name, value in self.named_tensors().items()}

    def restore(self, snap: dict[str, np.ndarray]) -> None:
        self.load_named(snap)


@dataclass(frozen=True)
class DailyEmbeddings:
    """Embedding rows for one day's events, in (day, uid) order."""

    day: int
    matrix: np.ndarray


@dataclass(frozen=True)
class LabelVector:
    """Binary relation-occurrence labels for one day."""

    day: int
    labels: np.ndarray


def daily_embeddings(data: Sequence[Quintuple], store: EmbeddingStore) -> list[DailyEmbeddings]:
    """Group stored vectors into per-day matrices, days ascending."""
    by_day: dict[int, list[Quintuple]] = {}
    for q in data:
        by_day.setdefault(q.day, []).append(q)
    out = []
    for day in sorted(by_day):
        rows = sorted(by_day[day], key=lambda q: q.uid)
        out.append(DailyEmbeddings(day, np.stack([store.vector(q.uid) for q in rows]).astype(np.float64)))
    return out


def build_labels(data: Sequence[Quintuple], num_relations: int) -> list[LabelVector]:
    """One binary vector per observed day: 1 iff the relation occurs."""
    by_day: dict[int, np.ndarray] = {}
    for q in data:
        labels = by_day.setdefault(q.day, np.zeros(num_relations, dtype=np.int8))
        labels[q.relation_id] = 1
    return [LabelVector(day, by_day[day]) for day in sorted(by_day)]


class EmptyWindowError(ValueError):
    def __init__(self, target_day: int, window_days: int):
        super().__init__(f"no events in [{target_day - window_days}, {target_day}) before day {target_day}")
        self.target_day = target_day


def build_window(
    target_day: int, daily: Sequence[DailyEmbeddings], window_days: int
) -> tuple[np.ndarray, list[int]]:
    """Stack the window's daily matrices, oldest first.

    Returns the concatenated matrix plus per-day row counts (used by the
    per-day-mean collapse variant). Raises when the window holds no events.
    """
    blocks = [d.matrix for d in daily if target_day - window_days <= d.day < target_day]
    if not blocks:
        raise EmptyWindowError(target_day, window_days)
    return np.concatenate(blocks, axis=0), [b.shape[0] for b in blocks]


def mef_forward(
    window: np.ndarray,
    model: MefModel,
    cfg: MefConfig,
    day_counts: list[int] | None = None,
) -> Tensor:
    """Per-relation occurrence probabilities for one target day."""
    if window.ndim != 2 or window.shape[1] != cfg.input_dim:
        raise ValueError(f"window shape {window.shape} does not match input_dim {cfg.input_dim}")
    h = linear(Tensor(window), model.in_w, model.in_b)
    if cfg.use_attention:
        h = self_attention(h, model.attention)
    if cfg.per_day_mean and day_counts is not None:
        day_means = []
        offset = 0
        for n in day_counts:
            day_means.append(mul(tsum(_rows(h, offset, n), axis=0), 1.0 / n))
            offset += n
        stacked = _stack_vectors(day_means, cfg.model_dim)
        pooled = tmean(stacked, axis=0)
    else:
        pooled = tmean(h, axis=0)
    logits = linear(reshape(pooled, (1, cfg.model_dim)), model.out_w, model.out_b)
    return reshape(sigmoid(logits), (model.num_relations,))


def _rows(t: Tensor, offset: int, n: int) -> Tensor:
    return gather_rows(t, np.arange(offset, offset + n))


def _stack_vectors(vectors: list[Tensor], dim: int) -> Tensor:
    return concat([reshape(v, (1, dim)) for v in vectors], axis=0)


def decisions_from_probs(probs: np.ndarray, threshold: float) -> np.ndarray:
    return (probs > threshold).astype(np.int8)


@dataclass(frozen=True)
class DayPrediction:
    day: int
    probs: np.ndarray
    decisions: np.ndarray
    labels: np.ndarray


@dataclass(frozen=True)
class MefEvalReport:
    f1: float
    recall: float
    precision: float
    predictions: list[DayPrediction]
    skipped_days: list[int]


def _target_days(part: Sequence[Quintuple]) -> list[int]:
    return sorted({q.day for q in part})


def _labels_by_day(labels: Sequence[LabelVector]) -> dict[int, np.ndarray]:
    return {lv.day: lv.labels for lv in labels}


def train_mef(
    split: DatasetSplit,
    store: EmbeddingStore,
    labels: Sequence[LabelVector],
    cfg: MefConfig,
) -> tuple[MefModel, list[dict]]:
    """Train on the training part's days (batches of ``batch_days``),
    early-stopping on validation F1; returns the best model and the log.

    The loss per day is binary cross-entropy summed over relations; batch
    rows average it. Days whose window holds no events are skipped.
    """
    label_map = _labels_by_day(labels)
    num_relations = len(labels[0].labels)
    daily = daily_embeddings(split.train + split.valid + split.test, store)
    train_days = [
        d for d in _target_days(split.train) if _window_ok(d, daily, cfg.window_days)
    ]
    if not train_days:
        raise ValueError("no training day has a nonempty history window")

    model = MefModel(num_relations, cfg, substream(cfg.seed, "mef-init"))
    optimizer = Adam(model.params(), cfg.lr, weight_decay=cfg.weight_decay)

    logs: list[dict] = []
    best_metric = -1.0
    best_snapshot = model.snapshot()
    stale = 0
    for epoch in range(1, cfg.epochs + 1):
        epoch_loss = 0.0
        batches = 0
        for start in range(0, len(train_days), cfg.batch_days):
            batch = train_days[start : start + cfg.batch_days]
            day_losses = []
            for day in batch:
                window, counts = build_window(day, daily, cfg.window_days)
                probs = mef_forward(window, model, cfg, counts)
                bce = binary_cross_entropy(probs, label_map[day].astype(np.float64))
                day_losses.append(mul(bce, float(num_relations)))
            total = day_losses[0]
            for extra in day_losses[1:]:
                total = total + extra
            loss = mul(total, 1.0 / len(day_losses))
            optimizer.zero_grad()
            backward(loss)
            clip_global_norm(model.params(), cfg.grad_clip)
            optimizer.step()
            epoch_loss += float(loss.data)
            batches += 1
        train_eval = eval_mef(model, split.train, store, labels, cfg, daily=daily)
        logs.append(
            {
                "epoch": epoch,
                "split": "train",
                "variant": cfg.variant,
                "loss": epoch_loss / batches,
                "f1": train_eval.f1,
                "recall": train_eval.recall,
                "precision": train_eval.precision,
            }
        )
        valid_eval = eval_mef(model, split.valid, store, labels, cfg, daily=daily)
        logs.append(
            {
                "epoch": epoch,
                "split": "valid",
                "variant": cfg.variant,
                "loss": _part_loss(model, _target_days(split.valid), daily, label_map, cfg),
                "f1": valid_eval.f1,
                "recall": valid_eval.recall,
                "precision": valid_eval.precision,
            }
        )
        if valid_eval.f1 > best_metric:
            best_metric = valid_eval.f1
            best_snapshot = model.snapshot()
            stale = 0
        else:
            stale += 1
            if stale >= cfg.patience:
                break
    model.restore(best_snapshot)
    return model, logs


def _window_ok(day: int, daily: Sequence[DailyEmbeddings], window_days: int) -> bool:
    return any(day - window_days <= d.day < day for d in daily)


def _part_loss(model, days, daily, label_map, cfg) -> float:
    """Mean per-day loss (BCE summed over relations) with empty windows skipped."""
    total = 0.0
    count = 0
    for day in days:
        try:
            window, counts = build_window(day, daily, cfg.window_days)
        except EmptyWindowError:
            continue
        probs = mef_forward(window, model, cfg, counts)
        bce = binary_cross_entropy(probs, label_map[day].astype(np.float64))
        total += float(bce.data) * model.num_relations
        count += 1
    return total / count if count else 0.0


def eval_mef(
    model: MefModel,
    part: Sequence[Quintuple],
    store: EmbeddingStore,
    labels: Sequence[LabelVector],
    cfg: MefConfig,
    daily: Sequence[DailyEmbeddings] | None = None,
) -> MefEvalReport:
    """Micro-averaged (F1, recall, precision) over a part's days.

    ``daily`` may be passed to reuse precomputed embeddings covering the
    full history; by default only the part's own days are available.
    """
    if daily is None:
        daily = daily_embeddings(part, store)
    label_map = _labels_by_day(labels)
    predictions: list[DayPrediction] = []
    skipped: list[int] = []
    for day in _target_days(part):
        try:
            window, counts = build_window(day, daily, cfg.window_days)
        except EmptyWindowError:
            skipped.append(day)
            continue
        probs = mef_forward(window, model, cfg, counts).data
        predictions.append(
            DayPrediction(day, probs, decisions_from_probs(probs, cfg.threshold), label_map[day])
        )
    if not predictions:
        return MefEvalReport(0.0, 0.0, 0.0, [], skipped)
    y_true = np.stack([p.labels for p in predictions])
    y_pred = np.stack([p.decisions for p in predictions])
    f1, recall, precision = multilabel_prf(y_true, y_pred)
    return MefEvalReport(f1, recall, precision, predictions, skipped)
