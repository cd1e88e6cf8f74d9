import numpy as np
import pytest

from leap.events import chronological_split
from leap.forecast import (
    DailyEmbeddings,
    EmptyWindowError,
    MefConfig,
    MefModel,
    build_labels,
    build_window,
    daily_embeddings,
    decisions_from_probs,
    eval_mef,
    mef_forward,
    train_mef,
)
from leap.nn.gradcheck import finite_diff_check
from leap.nn.losses import binary_cross_entropy
from leap.rng import substream

from synth import hashed_store, periodic_dataset

TOL = 1e-4


def tiny_cfg(**kw) -> MefConfig:
    base = dict(window_days=3, input_dim=4, model_dim=6, epochs=2, batch_days=2, seed=0)
    base.update(kw)
    return MefConfig(**base)


def tiny_model(num_relations=3, cfg=None) -> MefModel:
    cfg = cfg or tiny_cfg()
    return MefModel(num_relations, cfg, substream(cfg.seed, "mef-init"))


def daily_fixture():
    rng = substream(1, "mef-daily")
    return [
        DailyEmbeddings(0, rng.standard_normal((3, 4))),
        DailyEmbeddings(1, rng.standard_normal((1, 4))),
        DailyEmbeddings(3, rng.standard_normal((2, 4))),
    ]


class TestBuildWindow:
    def test_row_counting_across_gap(self):
        window, counts = build_window(4, daily_fixture(), window_days=4)
        assert window.shape == (6, 4)
        assert counts == [3, 1, 2]

    def test_single_day_window(self):
        daily = daily_fixture()
        window, counts = build_window(1, daily, window_days=1)
        assert np.array_equal(window, daily[0].matrix)
        assert counts == [3]

    def test_empty_window_raises(self):
        with pytest.raises(EmptyWindowError):
            build_window(3, daily_fixture(), window_days=1)

    def test_matches_gather_oracle(self):
        # oracle: collect rows by explicit (day, uid) sort over the source events
        parsed = periodic_dataset(days=12)
        store = hashed_store(parsed, dim=16)
        daily = daily_embeddings(parsed.quintuples, store)
        window, _ = build_window(9, daily, window_days=4)
        wanted = sorted(
            (q for q in parsed.quintuples if 5 <= q.day < 9), key=lambda q: (q.day, q.uid)
        )
        expected = np.stack([store.vector(q.uid) for q in wanted]).astype(np.float64)
        assert np.allclose(window, expected)


class TestForward:
    def test_single_row_with_attention_is_value_path(self):
        cfg = tiny_cfg()
        model = tiny_model(cfg=cfg)
        rng = substream(2, "one-row")
        row = rng.standard_normal((1, 4))
        h = row @ model.in_w.data + model.in_b.data
        pooled = h @ model.attention.w_v.data
        logits = pooled @ model.out_w.data + model.out_b.data
        expected = 1.0 / (1.0 + np.exp(-logits[0]))
        probs = mef_forward(row, model, cfg).data
        assert np.allclose(probs, expected, atol=1e-12)

    def test_single_row_without_attention(self):
        cfg = tiny_cfg(use_attention=False)
        model = tiny_model(cfg=cfg)
        rng = substream(3, "one-row-na")
        row = rng.standard_normal((1, 4))
        h = row @ model.in_w.data + model.in_b.data
        logits = h @ model.out_w.data + model.out_b.data
        expected = 1.0 / (1.0 + np.exp(-logits[0]))
        assert np.allclose(mef_forward(row, model, cfg).data, expected, atol=1e-12)

    def test_zero_output_layer_is_all_half_and_no_decisions(self):
        cfg = tiny_cfg()
        model = tiny_model(cfg=cfg)
        model.out_w.data = np.zeros_like(model.out_w.data)
        model.out_b.data = np.zeros_like(model.out_b.data)
        rng = substream(4, "zeros")
        probs = mef_forward(rng.standard_normal((5, 4)), model, cfg).data
        assert np.allclose(probs, 0.5)
        assert decisions_from_probs(probs, cfg.threshold).sum() == 0

    def test_matches_dense_oracle(self):
        cfg = tiny_cfg()
        model = tiny_model(cfg=cfg)
        rng = substream(5, "oracle")
        window = rng.standard_normal((4, 4))
        h = window @ model.in_w.data + model.in_b.data
        q = h @ model.attention.w_q.data
        k = h @ model.attention.w_k.data
        v = h @ model.attention.w_v.data
        scores = q @ k.T / np.sqrt(cfg.model_dim)
        e = np.exp(scores - scores.max(axis=1, keepdims=True))
        mixed = (e / e.sum(axis=1, keepdims=True)) @ v
        pooled = mixed.mean(axis=0)
        expected = 1.0 / (1.0 + np.exp(-(pooled @ model.out_w.data + model.out_b.data)))
        assert np.abs(mef_forward(window, model, cfg).data - expected).max() <= 1e-6

    def test_row_permutation_leaves_probs_unchanged(self):
        cfg = tiny_cfg()
        model = tiny_model(cfg=cfg)
        rng = substream(6, "perm")
        window = rng.standard_normal((7, 4))
        base = mef_forward(window, model, cfg).data
        shuffled = mef_forward(window[rng.permutation(7)], model, cfg).data
        assert np.abs(base - shuffled).max() <= 1e-9

    def test_identity_projection_reduction(self):
        # square dims, identity projection, no attention: sigmoid(z(mean(window)))
        cfg = tiny_cfg(input_dim=6, model_dim=6, use_attention=False)
        model = tiny_model(cfg=cfg)
        model.in_w.data = np.eye(6)
        model.in_b.data = np.zeros(6)
        rng = substream(7, "identity")
        window = rng.standard_normal((5, 6))
        expected = 1.0 / (
            1.0 + np.exp(-(window.mean(axis=0) @ model.out_w.data + model.out_b.data))
        )
        assert np.allclose(mef_forward(window, model, cfg).data, expected, atol=1e-12)

    def test_full_head_gradient(self):
        cfg = tiny_cfg(input_dim=4, model_dim=5)
        model = tiny_model(num_relations=3, cfg=cfg)
        rng = substream(8, "fd")
        window = rng.standard_normal((4, 4))
        labels = np.array([1.0, 0.0, 1.0])

        def loss():
            return binary_cross_entropy(mef_forward(window, model, cfg), labels)

        assert finite_diff_check(loss, model.params()) <= TOL

    def test_per_day_mean_variant(self):
        cfg = tiny_cfg(per_day_mean=True)
        model = tiny_model(cfg=cfg)
        rng = substream(9, "per-day")
        window = rng.standard_normal((5, 4))
        counts = [2, 3]
        joint = mef_forward(window, model, tiny_cfg(), counts).data
        per_day = mef_forward(window, model, cfg, counts).data
        assert per_day.shape == joint.shape
        assert not np.allclose(per_day, joint)


class TestLabels:
    def test_or_over_day_events(self):
        parsed = periodic_dataset(days=9)
        labels = build_labels(parsed.quintuples, parsed.vocab.num_relations)
        by_day = {lv.day: lv.labels for lv in labels}
        for day in range(9):
            for rel in range(parsed.vocab.num_relations):
                expected = int(day % 3 == rel % 3)
                assert by_day[day][rel] == expected
            assert by_day[day].sum() >= 1


@pytest.fixture(scope="module")
def small_training():
    parsed = periodic_dataset(days=24)
    store = hashed_store(parsed, dim=8)
    split = chronological_split(parsed.quintuples)
    labels = build_labels(parsed.quintuples, parsed.vocab.num_relations)
    cfg = MefConfig(window_days=3, input_dim=8, model_dim=12, lr=5e-3, epochs=4,
                    batch_days=2, seed=1)
    model, logs = train_mef(split, store, labels, cfg)
    return parsed, store, split, labels, cfg, model, logs


class TestTraining:
    def test_loss_decreases(self, small_training):
        *_, logs = small_training
        train_rows = [r for r in logs if r["split"] == "train"]
        assert train_rows[-1]["loss"] < train_rows[0]["loss"]

    def test_fixed_seed_identical_logs(self, small_training):
        parsed, store, split, labels, cfg, _, logs = small_training
        _, logs2 = train_mef(split, store, labels, cfg)
        assert logs == logs2

    def test_ablation_trains_and_tags_log(self, small_training):
        parsed, store, split, labels, cfg, _, _ = small_training
        from dataclasses import replace

        ablated = replace(cfg, use_attention=False)
        _, logs = train_mef(split, store, labels, ablated)
        assert all(r["variant"] == "no_attention" for r in logs)


class TestEval:
    def test_perfect_predictions(self, small_training):
        parsed, store, split, labels, cfg, model, _ = small_training
        report = eval_mef(model, split.train, store, labels, cfg)
        y_true = np.stack([p.labels for p in report.predictions])
        from leap.metrics import multilabel_prf

        assert multilabel_prf(y_true, y_true) == (1.0, 1.0, 1.0)

    def test_all_zero_predictions_score_zero(self, small_training):
        parsed, store, split, labels, cfg, _, _ = small_training
        model = tiny_model(num_relations=parsed.vocab.num_relations,
                           cfg=MefConfig(window_days=3, input_dim=8, model_dim=12, seed=9))
        model.out_w.data = np.zeros_like(model.out_w.data)
        model.out_b.data = np.full_like(model.out_b.data, -5.0)
        report = eval_mef(model, split.train, store, labels, model.cfg)
        assert (report.f1, report.recall, report.precision) == (0.0, 0.0, 0.0)

    def test_skipped_days_reported(self):
        parsed = periodic_dataset(days=6)
        store = hashed_store(parsed, dim=8)
        labels = build_labels(parsed.quintuples, parsed.vocab.num_relations)
        cfg = MefConfig(window_days=2, input_dim=8, model_dim=4, seed=0)
        model = MefModel(parsed.vocab.num_relations, cfg, substream(0, "mef-init"))
        report = eval_mef(model, parsed.quintuples, store, labels, cfg)
        # day 0 has no history at all
        assert report.skipped_days == [0]
