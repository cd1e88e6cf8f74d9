import math

import numpy as np
import pytest

from leap.nn.autograd import (
    Tensor,
    concat,
    conv1d_same,
    dropout,
    mul,
    seg_sum,
    softmax_rows,
    tsum,
)
from leap.nn.checkpoint import CheckpointError, read_checkpoint, write_checkpoint
from leap.nn.gradcheck import finite_diff_check
from leap.nn.layers import AttentionParams, GruParams, gru_step, linear, self_attention, zeros_param
from leap.nn.losses import binary_cross_entropy, cross_entropy_softmax
from leap.nn.optim import Adam, clip_global_norm
from leap.rng import substream

TOL = 1e-4


class TestLinear:
    def test_identity(self):
        x = Tensor([[1.0, 2.0], [3.0, 4.0]])
        w = Tensor(np.eye(2))
        b = Tensor(np.zeros(2))
        assert np.array_equal(linear(x, w, b).data, x.data)

    def test_hand_arithmetic(self):
        out = linear(Tensor([[1.0, 2.0]]), Tensor([[1.0, 0.0], [0.0, 1.0]]), Tensor([3.0, 4.0]))
        assert np.array_equal(out.data, [[4.0, 6.0]])

    def test_gradient(self):
        rng = substream(0, "lin")
        w = Tensor(rng.standard_normal((3, 4)), requires_grad=True)
        b = Tensor(rng.standard_normal(4), requires_grad=True)
        x = Tensor(rng.standard_normal((5, 3)), requires_grad=True)
        err = finite_diff_check(lambda: tsum(mul(linear(x, w, b), rng_weights)), [w, b, x])
        assert err <= TOL


rng_weights = substream(1, "weights").standard_normal((5, 4))


class TestSoftmax:
    def test_uniform_rows(self):
        out = softmax_rows(Tensor(np.full((2, 5), 3.0)))
        assert np.allclose(out.data, 0.2)

    def test_closed_form(self):
        out = softmax_rows(Tensor([[0.0, math.log(3.0)]]))
        assert np.allclose(out.data, [[0.25, 0.75]], atol=1e-12)

    def test_shift_invariance(self):
        rng = substream(2, "softmax")
        x = rng.standard_normal((4, 6))
        assert np.allclose(softmax_rows(Tensor(x)).data, softmax_rows(Tensor(x + 13.7)).data)

    def test_rows_sum_to_one_at_extremes(self):
        rng = substream(3, "softmax-x")
        x = rng.uniform(-50, 50, size=(100, 7))
        sums = softmax_rows(Tensor(x)).data.sum(axis=1)
        assert np.abs(sums - 1.0).max() <= 1e-6

    def test_gradient(self):
        rng = substream(4, "softmax-g")
        x = Tensor(rng.standard_normal((3, 5)), requires_grad=True)
        coeffs = rng.standard_normal((3, 5))
        err = finite_diff_check(lambda: tsum(mul(softmax_rows(x), coeffs)), [x])
        assert err <= TOL


class TestSelfAttention:
    def test_single_row_is_value_projection(self):
        rng = substream(5, "attn1")
        p = AttentionParams.init(4, rng)
        x = Tensor(rng.standard_normal((1, 4)))
        out = self_attention(x, p)
        assert np.allclose(out.data, x.data @ p.w_v.data)

    def test_identical_rows_identical_outputs(self):
        rng = substream(6, "attn2")
        p = AttentionParams.init(3, rng)
        row = rng.standard_normal(3)
        out = self_attention(Tensor(np.tile(row, (4, 1))), p).data
        assert np.allclose(out, out[0])

    def test_matches_dense_reference(self):
        # independently coded dense oracle
        rng = substream(7, "attn3")
        p = AttentionParams.init(4, rng)
        x = rng.standard_normal((3, 4))
        q, k, v = x @ p.w_q.data, x @ p.w_k.data, x @ p.w_v.data
        scores = q @ k.T / math.sqrt(4)
        e = np.exp(scores - scores.max(axis=1, keepdims=True))
        expected = (e / e.sum(axis=1, keepdims=True)) @ v
        assert np.allclose(self_attention(Tensor(x), p).data, expected, atol=1e-12)

    def test_permutation_equivariance(self):
        rng = substream(8, "attn4")
        p = AttentionParams.init(5, rng)
        x = rng.standard_normal((6, 5))
        perm = rng.permutation(6)
        out = self_attention(Tensor(x), p).data
        out_perm = self_attention(Tensor(x[perm]), p).data
        assert np.allclose(out_perm, out[perm], atol=1e-12)

    def test_gradient(self):
        rng = substream(9, "attn5")
        p = AttentionParams.init(4, rng)
        x = Tensor(rng.standard_normal((3, 4)), requires_grad=True)
        coeffs = rng.standard_normal((3, 4))
        err = finite_diff_check(
            lambda: tsum(mul(self_attention(x, p), coeffs)), p.params() + [x]
        )
        assert err <= TOL


class TestGru:
    def test_all_zero(self):
        # hand evaluation: z = r = 0.5, candidate = tanh(0) = 0, h' = 0
        p = GruParams(*[zeros_param(s) for s in [(2, 3), (3, 3), (3,)] * 3])
        out = gru_step(Tensor(np.zeros((1, 2))), Tensor(np.zeros((1, 3))), p)
        assert np.array_equal(out.data, np.zeros((1, 3)))

    def test_update_gate_forced_closed(self):
        # limit of the gate equations: huge negative z-bias freezes the state
        rng = substream(10, "gru1")
        p = GruParams.init(2, 3, rng)
        p.b_z.data = np.full(3, -40.0)
        h = rng.standard_normal((1, 3))
        out = gru_step(Tensor(rng.standard_normal((1, 2))), Tensor(h), p)
        assert np.abs(out.data - h).max() <= 1e-3

    def test_gradient(self):
        rng = substream(11, "gru2")
        p = GruParams.init(3, 4, rng)
        x = Tensor(rng.standard_normal((2, 3)), requires_grad=True)
        h = Tensor(rng.standard_normal((2, 4)), requires_grad=True)
        coeffs = rng.standard_normal((2, 4))
        err = finite_diff_check(lambda: tsum(mul(gru_step(x, h, p), coeffs)), p.params() + [x, h])
        assert err <= TOL


class TestLosses:
    def test_uniform_logits(self):
        k = 7
        loss = cross_entropy_softmax(Tensor(np.zeros((3, k))), np.array([0, 3, 6]))
        assert abs(loss.item() - math.log(k)) <= 1e-12

    def test_target_out_of_range(self):
        with pytest.raises(IndexError):
            cross_entropy_softmax(Tensor(np.zeros((2, 3))), np.array([0, 3]))

    def test_ce_matches_scalar_loop(self):
        rng = substream(12, "ce")
        logits = rng.standard_normal((6, 5))
        targets = rng.integers(0, 5, size=6)
        expected = 0.0
        for i in range(6):
            row = logits[i]
            expected += -(row[targets[i]] - math.log(np.exp(row).sum()))
        expected /= 6
        loss = cross_entropy_softmax(Tensor(logits), targets)
        assert abs(loss.item() - expected) <= 1e-9

    def test_bce_perfect_prediction_near_zero(self):
        labels = np.array([[1.0, 0.0], [0.0, 1.0]])
        loss = binary_cross_entropy(Tensor(labels), labels)
        assert loss.item() <= 1e-6 * math.log(1e7)

    def test_bce_matches_scalar_loop(self):
        rng = substream(13, "bce")
        probs = rng.uniform(0.01, 0.99, size=(4, 3))
        labels = (rng.random((4, 3)) > 0.5).astype(float)
        expected = 0.0
        for p, y in zip(probs.ravel(), labels.ravel()):
            expected += -(y * math.log(p) + (1 - y) * math.log(1 - p))
        expected /= probs.size
        loss = binary_cross_entropy(Tensor(probs), labels)
        assert abs(loss.item() - expected) <= 1e-9

    def test_ce_gradient(self):
        rng = substream(14, "ce-g")
        logits = Tensor(rng.standard_normal((4, 6)), requires_grad=True)
        targets = rng.integers(0, 6, size=4)
        err = finite_diff_check(lambda: cross_entropy_softmax(logits, targets), [logits])
        assert err <= TOL


class TestAdam:
    def test_zero_grad_no_move(self):
        p = Tensor(np.array([1.0, 2.0]), requires_grad=True)
        p.grad = np.zeros(2)
        Adam([p], lr=1e-3).step()
        assert np.array_equal(p.data, [1.0, 2.0])

    def test_first_step_closed_form(self):
        p = Tensor(np.array([5.0]), requires_grad=True)
        p.grad = np.array([1.0])
        Adam([p], lr=1e-3).step()
        assert abs((5.0 - p.data[0]) - 1e-3 / (1.0 + 1e-8)) <= 1e-15

    def test_decoupled_weight_decay(self):
        p = Tensor(np.array([2.0]), requires_grad=True)
        p.grad = np.array([0.0])
        opt = Adam([p], lr=0.1, weight_decay=0.5)
        opt.step()
        # zero grad: only the decay term moves the value
        assert abs(p.data[0] - 2.0 * (1 - 0.1 * 0.5)) <= 1e-12

    def test_twin_optimizers_stay_identical(self):
        rng = substream(15, "adam")
        a = Tensor(np.array([1.0, -1.0]), requires_grad=True)
        b = Tensor(np.array([1.0, -1.0]), requires_grad=True)
        opt_a, opt_b = Adam([a], 1e-2, weight_decay=1e-4), Adam([b], 1e-2, weight_decay=1e-4)
        for _ in range(25):
            g = rng.standard_normal(2)
            a.grad, b.grad = g.copy(), g.copy()
            opt_a.step()
            opt_b.step()
        assert np.array_equal(a.data, b.data)


class TestClip:
    def test_below_threshold_untouched(self):
        p = Tensor(np.zeros(2), requires_grad=True)
        p.grad = np.array([0.3, 0.4])
        assert clip_global_norm([p], 1.0) == 1.0
        assert np.array_equal(p.grad, [0.3, 0.4])

    def test_single_vector_scaled(self):
        p = Tensor(np.zeros(2), requires_grad=True)
        p.grad = np.array([2.0, 0.0])
        scale = clip_global_norm([p], 1.0)
        assert abs(scale - 0.5) <= 1e-12
        assert np.allclose(p.grad, [1.0, 0.0])

    def test_post_clip_norm_bounded(self):
        rng = substream(16, "clip")
        for _ in range(20):
            params = []
            for _ in range(3):
                p = Tensor(np.zeros(4), requires_grad=True)
                p.grad = rng.standard_normal(4) * rng.uniform(0, 5)
                params.append(p)
            clip_global_norm(params, 1.0)
            total = math.sqrt(sum(float(np.sum(p.grad**2)) for p in params))
            assert total <= 1.0 + 1e-9


class TestDropout:
    def test_rate_zero_identity(self):
        x = Tensor(np.ones((3, 3)))
        assert dropout(x, 0.0, None, train=True) is x

    def test_eval_mode_identity(self):
        x = Tensor(np.ones((3, 3)))
        assert dropout(x, 0.9, None, train=False) is x

    def test_train_mode_scales_survivors(self):
        rng = substream(17, "drop")
        x = Tensor(np.ones((200, 50)))
        out = dropout(x, 0.25, rng, train=True).data
        assert set(np.unique(out)) == {0.0, 1.0 / 0.75}
        assert abs(out.mean() - 1.0) < 0.05


class TestFiniteDiff:
    def test_exact_quadratic(self):
        p = Tensor(np.array([1.0, -2.0, 0.5]), requires_grad=True)
        err = finite_diff_check(lambda: tsum(mul(p, p)), [p])
        assert err <= 1e-8


class TestMiscOps:
    def test_concat_gradient(self):
        rng = substream(18, "concat")
        a = Tensor(rng.standard_normal((2, 3)), requires_grad=True)
        b = Tensor(rng.standard_normal((4, 3)), requires_grad=True)
        coeffs = rng.standard_normal((6, 3))
        err = finite_diff_check(lambda: tsum(mul(concat([a, b], axis=0), coeffs)), [a, b])
        assert err <= TOL

    def test_conv_gradient_and_clip_op(self):
        rng = substream(19, "conv")
        x = Tensor(rng.standard_normal((2, 3, 5)), requires_grad=True)
        w = Tensor(rng.standard_normal((4, 3, 3)), requires_grad=True)
        b = Tensor(rng.standard_normal(4), requires_grad=True)
        coeffs = rng.standard_normal((2, 4, 5))
        err = finite_diff_check(lambda: tsum(mul(conv1d_same(x, w, b), coeffs)), [x, w, b])
        assert err <= TOL
        with pytest.raises(ValueError, match="odd"):
            conv1d_same(x, Tensor(np.zeros((4, 3, 2))), b)

    def test_seg_sum_values(self):
        v = Tensor(np.array([[1.0, 1.0], [2.0, 2.0], [3.0, 3.0]]))
        out = seg_sum(v, np.array([1, 1, 0]), 2)
        assert np.array_equal(out.data, [[3.0, 3.0], [3.0, 3.0]])


class TestCheckpoint:
    def test_round_trip(self):
        rng = substream(20, "ckpt")
        tensors = {
            "a": rng.standard_normal((3, 4)).astype(np.float32),
            "nested.b": rng.standard_normal(7).astype(np.float32),
            "scalar": np.float32(2.5).reshape(()),
        }
        import io

        buf = io.BytesIO()
        write_checkpoint(tensors, buf)
        buf.seek(0)
        again = read_checkpoint(buf)
        assert set(again) == set(tensors)
        for name in tensors:
            assert np.array_equal(again[name], np.asarray(tensors[name]))

    def test_bad_magic(self):
        import io

        buf = io.BytesIO()
        write_checkpoint({"a": np.zeros(2, dtype=np.float32)}, buf)
        raw = bytearray(buf.getvalue())
        raw[0] ^= 0xFF
        with pytest.raises(CheckpointError, match="magic"):
            read_checkpoint(io.BytesIO(bytes(raw)))
