"""Ranking object prediction.

A relational graph convolution over the union of the last ``history_days``
daily graphs updates entity embeddings, a GRU evolves relation embeddings
day by day, and a 1-D convolutional decoder stacks [subject; relation;
projected text] to score every candidate entity, softmax-normalized.
Inverse edges (o, r~, s) are added internally so messages flow both ways;
the relation-transform table is doubled accordingly.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .embeddings import EmbeddingStore
from .events import DailyGraph, DatasetSplit, Quintuple, group_by_day
from .nn.autograd import (
    Tensor,
    backward,
    concat,
    conv1d_same,
    dropout,
    gather_rows,
    matmul,
    mul,
    relu,
    reshape,
    seg_sum,
    softmax_rows,
    transpose,
)
from .nn.layers import GruParams, gru_step, linear, param, zeros_param
from .nn.losses import cross_entropy_softmax
from .nn.optim import Adam, clip_global_norm
from .rng import substream


@dataclass
class Op1Config:
    """Hyperparameters for the ranking head.

    The query batch is always one day of events; ``history_days`` controls
    how far back the graph window reaches.
    """

    history_days: int = 7
    entity_dim: int = 200
    rgcn_layers: int = 2
    rgcn_dropout: float = 0.2
    text_dim: int = 64
    conv_kernels: int = 32
    conv_width: int = 3
    lr: float = 1e-3
    weight_decay: float = 1e-6
    epochs: int = 40
    patience: int = 5
    grad_clip: float = 1.0
    use_text: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.history_days < 1:
            raise ValueError("history_days must be >= 1")
        if self.conv_width % 2 == 0:
            raise ValueError("conv_width must be odd")
        for name in ("entity_dim", "text_dim", "conv_kernels", "rgcn_layers"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


class Op1State:
    """All trainable tensors of the ranking head."""

    def __init__(self, num_entities: int, num_relations: int, cfg: Op1Config,
                 rng: np.random.Generator):
        d = cfg.entity_dim
        self.num_entities = num_entities
        self.num_relations = num_relations
        self.cfg = cfg
        self.entity_emb = param(rng, (num_entities, d))
        self.relation_emb = param(rng, (num_relations, d))
        # one transform per relation and inverse relation, per layer
        self.rgcn_rel_w = [
            [param(rng, (d, d)) for _ in range(2 * num_relations)]
            for _ in range(cfg.rgcn_layers)
        ]
        self.rgcn_self_w = [param(rng, (d, d)) for _ in range(cfg.rgcn_layers)]
        self.gru = GruParams.init(d, d, rng)
        self.text_proj = param(rng, (cfg.text_dim, d))
        self.conv_w = param(rng, (cfg.conv_kernels, 3, cfg.conv_width))
        self.conv_b = zeros_param((cfg.conv_kernels,))
        self.fc_w = param(rng, (cfg.conv_kernels * d, d))
        self.fc_b = zeros_param((d,))

    def params(self) -> list[Tensor]:
        out = [self.entity_emb, self.relation_emb]
        for layer in self.rgcn_rel_w:
            out.extend(layer)
        out.extend(self.rgcn_self_w)
        out.extend(self.gru.params())
        out.extend([self.text_proj, self.conv_w, self.conv_b, self.fc_w, self.fc_b])
        return out

    def named_tensors(self) -> dict[str, np.ndarray]:
        named = {"entity_emb": self.entity_emb.data, "relation_emb": self.relation_emb.data}
        for li, layer in enumerate(self.rgcn_rel_w):
            for ri, w in enumerate(layer):
                named[f"rgcn.{li}.rel.{ri}"] = w.data
            named[f"rgcn.{li}.self"] = self.rgcn_self_w[li].data
        for name in ("w_z", "u_z", "b_z", "w_r", "u_r", "b_r", "w_h", "u_h", "b_h"):
            named[f"gru.{name}"] = getattr(self.gru, name).data
        named["text_proj"] = self.text_proj.data
        named["conv.w"] = self.conv_w.data
        named["conv.b"] = self.conv_b.data
        named["fc.w"] = self.fc_w.data
        named["fc.b"] = self.fc_b.data
        return named

    def load_named(self, tensors: dict[str, np.ndarray]) -> None:
        own = self.named_tensors()
        if set(own) != set(tensors):
            raise ValueError("checkpoint tensor names do not match this state")
        mapping = self._name_to_param()
        for name, value in tensors.items():
            p = mapping[name]
            if p.data.shape != value.shape:
                raise ValueError(f"shape mismatch for {name}: {p.data.shape} vs {value.shape}")
            p.data = np.asarray(value, dtype=np.float64)

    def _name_to_param(self) -> dict[str, Tensor]:
        mapping = {"entity_emb": self.entity_emb, "relation_emb": self.relation_emb}
        for li, layer in enumerate(self.rgcn_rel_w):
            for ri, w in enumerate(layer):
                mapping[f"rgcn.{li}.rel.{ri}"] = w
            mapping[f"rgcn.{li}.self"] = self.rgcn_self_w[li]
        for name in ("w_z", "u_z", "b_z", "w_r", "u_r", "b_r", "w_h", "u_h", "b_h"):
            mapping[f"gru.{name}"] = getattr(self.gru, name)
        mapping["text_proj"] = self.text_proj
        mapping["conv.w"] = self.conv_w
        mapping["conv.b"] = self.conv_b
        mapping["fc.w"] = self.fc_w
        mapping["fc.b"] = self.fc_b
        return mapping

    def snapshot(self) -> dict[str, np.ndarray]:
        return {name: value.copy() for name, value in self.named_tensors().items()}

    def restore(self, snap: dict[str, np.ndarray]) -> None:
        mapping = self._name_to_param()
        for name, value in snap.items():
            mapping[name].data = value.copy()


@dataclass(frozen=True)
class RankingOutput:
    """Per-query probabilities over all entities plus the argmax readout."""

    probs: Tensor
    predicted: np.ndarray


def history_window(daily: dict[int, DailyGraph], target_day: int, history_days: int) -> list[DailyGraph]:
    """Graphs for days [target - history_days, target), oldest first.

    Days with no events appear as empty graphs so the relation GRU still
    steps once per calendar day; days before the dataset start are skipped.
    """
    window = []
    for day in range(max(0, target_day - history_days), target_day):
        window.append(daily.get(day, DailyGraph(day, [])))
    return window


def _grouped_union_edges(graphs: Sequence[DailyGraph], num_relations: int):
    """Deduplicated union edges (with inverses) grouped by relation id."""
    edges: set[tuple[int, int, int]] = set()
    for g in graphs:
        for s, r, o, _uid in g.edges:
            edges.add((s, r, o))
            edges.add((o, r + num_relations, s))
    grouped: dict[int, tuple[list[int], list[int]]] = {}
    for s, r, o in sorted(edges):
        src, dst = grouped.setdefault(r, ([], []))
        src.append(s)
        dst.append(o)
    return grouped


def rgcn_forward(
    graphs: Sequence[DailyGraph],
    state: Op1State,
    cfg: Op1Config,
    train: bool = False,
    rng: np.random.Generator | None = None,
) -> Tensor:
    """Update entity embeddings over the union graph of the window.

    Per layer, each node receives the mean of its per-relation-transformed
    incoming messages plus a self-loop transform, then ReLU and dropout.
    """
    grouped = _grouped_union_edges(graphs, state.num_relations)
    num_entities = state.num_entities
    h = state.entity_emb
    for li in range(cfg.rgcn_layers):
        msg_parts: list[Tensor] = []
        dst_parts: list[np.ndarray] = []
        for rel in sorted(grouped):
            src, dst = grouped[rel]
            src_idx = np.asarray(src, dtype=np.intp)
            if src_idx.max() >= num_entities or np.asarray(dst).max() >= num_entities:
                raise IndexError("edge references an entity outside the vocabulary")
            msg_parts.append(matmul(gather_rows(h, src_idx), state.rgcn_rel_w[li][rel]))
            dst_parts.append(np.asarray(dst, dtype=np.intp))
        pre = matmul(h, state.rgcn_self_w[li])
        if msg_parts:
            all_dst = np.concatenate(dst_parts)
            summed = seg_sum(concat(msg_parts, axis=0), all_dst, num_entities)
            inv_degree = 1.0 / np.maximum(np.bincount(all_dst, minlength=num_entities), 1)
            pre = pre + mul(summed, inv_degree[:, None])
        h = relu(pre)
        h = dropout(h, cfg.rgcn_dropout, rng, train)
    return h


def evolve_relations(state: Op1State, graphs: Sequence[DailyGraph]) -> Tensor:
    """Step the relation GRU once per window day, oldest first.

    The input for relation r on a day is the mean entity embedding of that
    day's participants in r (subjects and objects, deduplicated), or a zero
    vector when r does not occur.
    """
    h = state.relation_emb
    num_relations = state.num_relations
    for g in graphs:
        participants: dict[int, set[int]] = {}
        for s, r, o, _uid in g.edges:
            participants.setdefault(r, set()).update((s, o))
        if participants:
            ent_ids: list[int] = []
            rel_ids: list[int] = []
            for rel in sorted(participants):
                for ent in sorted(participants[rel]):
                    ent_ids.append(ent)
                    rel_ids.append(rel)
            rel_idx = np.asarray(rel_ids, dtype=np.intp)
            sums = seg_sum(gather_rows(state.entity_emb, np.asarray(ent_ids, dtype=np.intp)),
                           rel_idx, num_relations)
            inv = 1.0 / np.maximum(np.bincount(rel_idx, minlength=num_relations), 1)
            x = mul(sums, inv[:, None])
        else:
            x = Tensor(np.zeros_like(h.data))
        h = gru_step(x, h, state.gru)
    return h


def convtranse_logits(
    subject_idx: np.ndarray,
    relation_idx: np.ndarray,
    text_vecs: np.ndarray,
    state: Op1State,
    entity_mat: Tensor,
    relation_mat: Tensor,
) -> Tensor:
    """Decoder scores against every entity for a (subject, relation) batch."""
    b = len(subject_idx)
    d = state.cfg.entity_dim
    if text_vecs.shape != (b, state.cfg.text_dim):
        raise ValueError(f"text_vecs shape {text_vecs.shape} != ({b}, {state.cfg.text_dim})")
    s_emb = gather_rows(entity_mat, np.asarray(subject_idx, dtype=np.intp))
    r_emb = gather_rows(relation_mat, np.asarray(relation_idx, dtype=np.intp))
    t_emb = matmul(Tensor(text_vecs), state.text_proj)
    image = concat(
        [reshape(s_emb, (b, 1, d)), reshape(r_emb, (b, 1, d)), reshape(t_emb, (b, 1, d))],
        axis=1,
    )
    feat = relu(conv1d_same(image, state.conv_w, state.conv_b))
    feat = linear(reshape(feat, (b, state.cfg.conv_kernels * d)), state.fc_w, state.fc_b)
    return matmul(feat, transpose(entity_mat))


def convtranse_scores(
    queries: Sequence[tuple[int, int]],
    state: Op1State,
    text_vecs: np.ndarray,
    entity_mat: Tensor | None = None,
    relation_mat: Tensor | None = None,
) -> RankingOutput:
    """Softmax-normalized candidate probabilities for (subject, relation) queries."""
    entity_mat = entity_mat if entity_mat is not None else state.entity_emb
    relation_mat = relation_mat if relation_mat is not None else state.relation_emb
    s_idx = np.asarray([s for s, _ in queries], dtype=np.intp)
    r_idx = np.asarray([r for _, r in queries], dtype=np.intp)
    logits = convtranse_logits(s_idx, r_idx, text_vecs, state, entity_mat, relation_mat)
    probs = softmax_rows(logits)
    return RankingOutput(probs=probs, predicted=probs.data.argmax(axis=1))


def _text_matrix(queries: Sequence[Quintuple], store: EmbeddingStore | None, cfg: Op1Config) -> np.ndarray:
    out = np.zeros((len(queries), cfg.text_dim))
    if not cfg.use_text or store is None:
        return out
    for i, q in enumerate(queries):
        if q.text:
            out[i] = store.vector(q.uid)
    return out


def _ranks_with_tie_rule(probs: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """1-based rank of each target, ties broken toward the lower index."""
    target_probs = probs[np.arange(len(targets)), targets]
    greater = (probs > target_probs[:, None]).sum(axis=1)
    tied_before = np.array(
        [int((probs[i, : targets[i]] == target_probs[i]).sum()) for i in range(len(targets))]
    )
    return 1 + greater + tied_before


def _forward_day(state, cfg, daily, day, queries, store, train=False, rng=None):
    window = history_window(daily, day, cfg.history_days)
    entity_mat = rgcn_forward(window, state, cfg, train=train, rng=rng)
    relation_mat = evolve_relations(state, window)
    s_idx = np.asarray([q.subject_id for q in queries], dtype=np.intp)
    r_idx = np.asarray([q.relation_id for q in queries], dtype=np.intp)
    text = _text_matrix(queries, store, cfg)
    logits = convtranse_logits(s_idx, r_idx, text, state, entity_mat, relation_mat)
    return logits


def evaluate_ranking(
    state: Op1State,
    part: Sequence[Quintuple],
    daily: dict[int, DailyGraph],
    store: EmbeddingStore | None,
    cfg: Op1Config,
) -> dict[str, float]:
    """Loss and Hits@{1,3,10} over a split part, batched one day at a time."""
    by_day: dict[int, list[Quintuple]] = {}
    for q in part:
        by_day.setdefault(q.day, []).append(q)
    total_loss = 0.0
    all_ranks: list[np.ndarray] = []
    count = 0
    for day in sorted(by_day):
        queries = by_day[day]
        logits = _forward_day(state, cfg, daily, day, queries, store)
        targets = np.asarray([q.object_id for q in queries], dtype=np.intp)
        loss = cross_entropy_softmax(logits, targets)
        total_loss += float(loss.data) * len(queries)
        probs = _softmax_np(logits.data)
        all_ranks.append(_ranks_with_tie_rule(probs, targets))
        count += len(queries)
    ranks = np.concatenate(all_ranks)
    return {
        "loss": total_loss / count,
        "hits1": float((ranks <= 1).mean()),
        "hits3": float((ranks <= 3).mean()),
        "hits10": float((ranks <= 10).mean()),
    }


def _softmax_np(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def train_op1(
    split: DatasetSplit,
    store: EmbeddingStore | None,
    cfg: Op1Config,
    vocab,
) -> tuple[Op1State, list[dict]]:
    """Train the ranking head day by day with early stopping on
    validation Hits@1; returns the best-validation state and the log."""
    if not split.train:
        raise ValueError("training split is empty")
    daily = {g.day: g for g in group_by_day(split.train + split.valid + split.test)}
    by_day: dict[int, list[Quintuple]] = {}
    for q in split.train:
        by_day.setdefault(q.day, []).append(q)
    train_days = sorted(by_day)

    state = Op1State(vocab.num_entities, vocab.num_relations, cfg, substream(cfg.seed, "op1-init"))
    optimizer = Adam(state.params(), cfg.lr, weight_decay=cfg.weight_decay)
    drop_rng = substream(cfg.seed, "op1-dropout")

    logs: list[dict] = []
    best_metric = -1.0
    best_snapshot = state.snapshot()
    stale = 0
    for epoch in range(1, cfg.epochs + 1):
        epoch_loss = 0.0
        train_ranks: list[np.ndarray] = []
        seen = 0
        for day in train_days:
            queries = by_day[day]
            logits = _forward_day(state, cfg, daily, day, queries, store, train=True, rng=drop_rng)
            targets = np.asarray([q.object_id for q in queries], dtype=np.intp)
            loss = cross_entropy_softmax(logits, targets)
            optimizer.zero_grad()
            backward(loss)
            clip_global_norm(state.params(), cfg.grad_clip)
            optimizer.step()
            epoch_loss += float(loss.data) * len(queries)
            train_ranks.append(_ranks_with_tie_rule(logits.data, targets))
            seen += len(queries)
        ranks = np.concatenate(train_ranks)
        logs.append(
            {
                "epoch": epoch,
                "split": "train",
                "loss": epoch_loss / seen,
                "hits1": float((ranks <= 1).mean()),
                "hits3": float((ranks <= 3).mean()),
                "hits10": float((ranks <= 10).mean()),
            }
        )
        valid = evaluate_ranking(state, split.valid, daily, store, cfg)
        logs.append({"epoch": epoch, "split": "valid", **valid})
        if valid["hits1"] > best_metric:
            best_metric = valid["hits1"]
            best_snapshot = state.snapshot()
            stale = 0
        else:
            stale += 1
            if stale >= cfg.patience:
                break
    state.restore(best_snapshot)
    return state, logs


def predict_topk(
    state: Op1State,
    queries: Sequence[Quintuple],
    daily: dict[int, DailyGraph],
    store: EmbeddingStore | None,
    vocab,
    k: int,
) -> tuple[list[np.ndarray], list[str]]:
    """Top-k entity ids per query (ties toward the lower index) plus the
    rank-1 entity string readout for generative evaluation."""
    cfg = state.cfg
    order: list[int] = []
    rankings: list[np.ndarray] = [None] * len(queries)  # type: ignore[list-item]
    by_day: dict[int, list[int]] = {}
    for i, q in enumerate(queries):
        by_day.setdefault(q.day, []).append(i)
    for day in sorted(by_day):
        idx = by_day[day]
        batch = [queries[i] for i in idx]
        logits = _forward_day(state, cfg, daily, day, batch, store)
        probs = _softmax_np(logits.data)
        for row, i in enumerate(idx):
            ranked = np.argsort(-probs[row], kind="stable")
            rankings[i] = ranked[:k]
        order.extend(idx)
    readouts = [vocab.entity(int(r[0])) for r in rankings]
    return rankings, readouts
