import itertools
from collections import Counter

import numpy as np
import pytest

from leap.metrics import (
    RankedQuery,
    hits_at_k,
    multilabel_prf,
    perplexity,
    rouge,
    tokenize,
    wilcoxon_signed_rank,
)
from leap.rng import substream


class TestHits:
    def test_truth_first_everywhere(self):
        queries = [RankedQuery(i, [i, (i + 1) % 5, (i + 2) % 5]) for i in range(3)]
        assert hits_at_k(queries, (1, 3, 10)) == {1: 1.0, 3: 1.0, 10: 1.0}

    def test_rank_enumeration(self):
        # four queries whose true id 0 sits at ranks 1, 2, 5, 12
        queries = []
        for rank in (1, 2, 5, 12):
            others = list(range(1, 20))
            ranking = others[: rank - 1] + [0] + others[rank - 1 :]
            queries.append(RankedQuery(0, ranking))
        scores = hits_at_k(queries, (1, 3, 10))
        assert scores == {1: 0.25, 3: 0.5, 10: 0.75}

    def test_monotone_in_k(self):
        rng = substream(0, "hits")
        queries = []
        for _ in range(50):
            ranking = rng.permutation(30).tolist()
            queries.append(RankedQuery(int(ranking[int(rng.integers(30))]), ranking))
        scores = hits_at_k(queries, (1, 3, 10))
        assert scores[1] <= scores[3] <= scores[10]


def oracle_rouge(ref_tokens, hyp_tokens):
    """Brute-force ROUGE: multiset n-gram intersection and O(nm) LCS table."""

    def ngrams(tokens, n):
        return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))

    def f1(overlap, hyp_count, ref_count):
        p = overlap / hyp_count if hyp_count else 0.0
        r = overlap / ref_count if ref_count else 0.0
        return 2 * p * r / (p + r) if p + r else 0.0

    def rouge_n(n):
        ref_g, hyp_g = ngrams(ref_tokens, n), ngrams(hyp_tokens, n)
        if not ref_g:
            return 0.0
        overlap = sum((ref_g & hyp_g).values())
        return f1(overlap, sum(hyp_g.values()), sum(ref_g.values()))

    table = [[0] * (len(hyp_tokens) + 1) for _ in range(len(ref_tokens) + 1)]
    for i in range(1, len(ref_tokens) + 1):
        for j in range(1, len(hyp_tokens) + 1):
            if ref_tokens[i - 1] == hyp_tokens[j - 1]:
                table[i][j] = table[i - 1][j - 1] + 1
            else:
                table[i][j] = max(table[i - 1][j], table[i][j - 1])
    lcs = table[-1][-1]
    rl = f1(lcs, len(hyp_tokens), len(ref_tokens)) if ref_tokens else 0.0
    return rouge_n(1), rouge_n(2), rl


class TestRouge:
    def test_identity(self):
        triple = rouge("police (india)", "police (india)")
        assert (triple.r1, triple.r2, triple.rl) == (1.0, 1.0, 1.0)

    def test_half_overlap(self):
        # oracle on tokens {citizen, india} vs {police, india}
        triple = rouge("citizen (india)", "police (india)")
        assert (triple.r1, triple.r2, triple.rl) == (0.5, 0.0, 0.5)

    def test_disjoint(self):
        triple = rouge("alpha beta", "gamma delta")
        assert (triple.r1, triple.r2, triple.rl) == (0.0, 0.0, 0.0)

    def test_empty_strings(self):
        for ref, hyp in (("", ""), ("", "x"), ("x", "")):
            triple = rouge(ref, hyp)
            assert (triple.r1, triple.r2, triple.rl) == (0.0, 0.0, 0.0)

    def test_tokenizer(self):
        assert tokenize("Police (India)!") == ["police", "india"]
        assert tokenize("a_b c-d") == ["a", "b", "c", "d"]

    def test_f1_swap_invariance_at_equal_lengths(self):
        rng = substream(6, "rouge-swap")
        words = [f"w{i}" for i in range(5)]
        for _ in range(200):
            n = int(rng.integers(1, 10))
            a = " ".join(words[int(i)] for i in rng.integers(0, 5, size=n))
            b = " ".join(words[int(i)] for i in rng.integers(0, 5, size=n))
            fwd, rev = rouge(a, b), rouge(b, a)
            assert (fwd.r1, fwd.r2, fwd.rl) == pytest.approx((rev.r1, rev.r2, rev.rl), abs=1e-12)

    def test_matches_bruteforce_on_random_pairs(self):
        rng = substream(1, "rouge")
        words = [f"w{i}" for i in range(6)]
        for _ in range(1000):
            ref = [words[int(i)] for i in rng.integers(0, 6, size=int(rng.integers(0, 13)))]
            hyp = [words[int(i)] for i in rng.integers(0, 6, size=int(rng.integers(0, 13)))]
            got = rouge(" ".join(ref), " ".join(hyp))
            expected = oracle_rouge(ref, hyp)
            assert (got.r1, got.r2, got.rl) == pytest.approx(expected, abs=1e-12)


class TestMultilabelPrf:
    def test_perfect(self):
        y = np.array([[1, 0], [0, 1]])
        assert multilabel_prf(y, y) == (1.0, 1.0, 1.0)

    def test_count_arithmetic(self):
        y_true = np.array([[1, 0, 1], [0, 1, 0]])
        y_pred = np.array([[1, 1, 1], [0, 0, 0]])
        f1, recall, precision = multilabel_prf(y_true, y_pred)
        assert (precision, recall, f1) == (2 / 3, 2 / 3, 2 / 3)

    def test_all_zero_predictions(self):
        y_true = np.array([[1, 0], [1, 1]])
        assert multilabel_prf(y_true, np.zeros_like(y_true)) == (0.0, 0.0, 0.0)

    def test_matches_scalar_loop_oracle(self):
        rng = substream(2, "prf")
        for _ in range(100):
            y_true = (rng.random((20, 30)) > 0.6).astype(int)
            y_pred = (rng.random((20, 30)) > 0.6).astype(int)
            tp = fp = fn = 0
            for i in range(20):
                for j in range(30):
                    if y_pred[i][j] == 1 and y_true[i][j] == 1:
                        tp += 1
                    elif y_pred[i][j] == 1:
                        fp += 1
                    elif y_true[i][j] == 1:
                        fn += 1
            precision = tp / (tp + fp) if tp + fp else 0.0
            recall = tp / (tp + fn) if tp + fn else 0.0
            f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
            assert multilabel_prf(y_true, y_pred) == pytest.approx((f1, recall, precision), abs=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            multilabel_prf(np.zeros((2, 3)), np.zeros((3, 2)))


class TestPerplexity:
    def test_certain_model(self):
        assert perplexity([1.0, 1.0, 1.0]) == 1.0

    def test_uniform(self):
        assert perplexity([1 / 50] * 7) == pytest.approx(50.0)

    def test_closed_form(self):
        assert perplexity([0.5, 0.125]) == pytest.approx(4.0)

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            perplexity([0.5, 0.0])
        with pytest.raises(ValueError):
            perplexity([1.5])
        with pytest.raises(ValueError):
            perplexity([])


def oracle_wilcoxon(diffs, sidedness):
    """Independent enumerator over all 2^m sign assignments."""
    nonzero = [d for d in diffs if d != 0]
    m = len(nonzero)
    values = sorted(abs(d) for d in nonzero)
    ranks = []
    for d in nonzero:
        matches = [i for i, v in enumerate(values) if v == abs(d)]
        ranks.append(sum(matches) / len(matches) + 1)
    observed = sum(r for r, d in zip(ranks, nonzero) if d > 0)
    ge = eq = 0
    for signs in itertools.product((0, 1), repeat=m):
        w = sum(r for r, s in zip(ranks, signs) if s)
        if w >= observed - 1e-12:
            ge += 1
        if abs(w - observed) <= 1e-12:
            eq += 1
    upper = ge / 2**m
    if sidedness == "one":
        return upper
    lower = 1 - upper + eq / 2**m
    return min(1.0, 2 * min(upper, lower))


class TestWilcoxon:
    def test_fifteen_positive_differences(self):
        diffs = list(range(1, 16))
        one = wilcoxon_signed_rank(diffs, "one")
        two = wilcoxon_signed_rank(diffs, "two")
        assert one == pytest.approx(2**-15)
        assert two == pytest.approx(2 * 2**-15)
        # one significant figure: 3e-5 and 6e-5
        assert f"{one:.0e}" == "3e-05"
        assert f"{two:.0e}" == "6e-05"

    def test_two_positive_differences(self):
        assert wilcoxon_signed_rank([1.0, 2.0], "one") == pytest.approx(0.25)

    def test_all_zero_rejected(self):
        with pytest.raises(ValueError, match="zero"):
            wilcoxon_signed_rank([0.0, 0.0], "one")

    def test_enumeration_limit(self):
        with pytest.raises(ValueError, match="exceed"):
            wilcoxon_signed_rank(list(range(1, 23)), "one")

    def test_bad_sidedness(self):
        with pytest.raises(ValueError):
            wilcoxon_signed_rank([1.0], "three")

    def test_matches_independent_enumerator(self):
        rng = substream(3, "wilcoxon")
        for _ in range(60):
            m = int(rng.integers(1, 9))
            diffs = [float(d) for d in np.round(rng.standard_normal(m) * 3, 1)]
            if all(d == 0 for d in diffs):
                diffs[0] = 1.0
            for side in ("one", "two"):
                got = wilcoxon_signed_rank(diffs, side)
                assert got == pytest.approx(oracle_wilcoxon(diffs, side), abs=1e-12)
                assert 0.0 < got <= 1.0

    def test_matches_scipy_exact_two_sided(self):
        scipy_stats = pytest.importorskip("scipy.stats")
        rng = substream(4, "wilcoxon-scipy")
        for _ in range(20):
            # unique magnitudes keep scipy's exact path comparable
            mags = rng.choice(np.arange(1, 40), size=10, replace=False).astype(float)
            signs = rng.choice([-1.0, 1.0], size=10)
            diffs = (mags * signs).tolist()
            ours = wilcoxon_signed_rank(diffs, "two")
            ref = scipy_stats.wilcoxon(diffs, alternative="two-sided", method="exact").pvalue
            assert ours == pytest.approx(ref, rel=1e-10)

    def test_one_sided_matches_scipy_greater(self):
        scipy_stats = pytest.importorskip("scipy.stats")
        rng = substream(5, "wilcoxon-scipy-1")
        mags = rng.choice(np.arange(1, 30), size=8, replace=False).astype(float)
        signs = rng.choice([-1.0, 1.0], size=8)
        diffs = (mags * signs).tolist()
        ours = wilcoxon_signed_rank(diffs, "one")
        ref = scipy_stats.wilcoxon(diffs, alternative="greater", method="exact").pvalue
        assert ours == pytest.approx(ref, rel=1e-10)
