import numpy as np
import pytest

from blurrank import evaluation, imaging
from blurrank.data import canonical_pair
from blurrank.errors import InvalidArgument, UndefinedMetric


def brute_force_ranks(values):
    """n^2 fractional rank assignment: count-below plus tie averaging."""
    v = np.asarray(values, dtype=np.float64)
    out = np.empty(v.size)
    for i in range(v.size):
        less = np.sum(v < v[i])
        ties = np.sum(v == v[i])
        out[i] = less + (ties + 1) / 2.0
    return out


def shortcut_srocc(pred, gt):
    """Classic no-ties formula 1 - 6*sum(d^2)/(n(n^2-1))."""
    rp = brute_force_ranks(pred)
    rg = brute_force_ranks(gt)
    n = len(pred)
    d = rp - rg
    return 1.0 - 6.0 * np.sum(d**2) / (n * (n**2 - 1))


class TestFractionalRanks:
    def test_sorted_distinct(self):
        np.testing.assert_array_equal(evaluation.fractional_ranks([10, 20, 30]), [1, 2, 3])

    def test_tie_averaging(self):
        np.testing.assert_array_equal(evaluation.fractional_ranks([5, 5, 9]), [1.5, 1.5, 3])

    def test_matches_brute_force(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            v = rng.integers(0, 8, size=20).astype(float)  # integer values force ties
            np.testing.assert_array_equal(evaluation.fractional_ranks(v), brute_force_ranks(v))

    def test_rank_sum_invariant(self):
        rng = np.random.default_rng(1)
        for n in (1, 2, 7, 30):
            v = rng.integers(0, 4, size=n).astype(float)
            assert evaluation.fractional_ranks(v).sum() == pytest.approx(n * (n + 1) / 2)

    def test_nonfinite_raises(self):
        with pytest.raises(InvalidArgument):
            evaluation.fractional_ranks([1.0, np.nan])


class TestSrocc:
    def test_perfect_agreement(self):
        assert evaluation.srocc([0.1, 0.4, 0.5, 0.9], [1, 2, 3, 4]) == pytest.approx(1.0)

    def test_perfect_disagreement(self):
        assert evaluation.srocc([0.9, 0.5, 0.4, 0.1], [1, 2, 3, 4]) == pytest.approx(-1.0)

    def test_hand_example(self):
        # pred ranks [1,3,2,4] vs gt [1,2,3,4]: 1 - 6*2/60 = 0.8
        assert evaluation.srocc([1, 3, 2, 4], [1, 2, 3, 4]) == pytest.approx(0.8)

    def test_agrees_with_shortcut_formula_when_no_ties(self):
        rng = np.random.default_rng(2)
        for _ in range(200):
            n = int(rng.integers(2, 50))
            pred = rng.permutation(n).astype(float)
            gt = rng.permutation(n).astype(float)
            assert abs(evaluation.srocc(pred, gt) - shortcut_srocc(pred, gt)) <= 1e-12

    def test_symmetry_and_monotone_invariance(self):
        rng = np.random.default_rng(3)
        pred = rng.random(30)
        gt = rng.random(30)
        s = evaluation.srocc(pred, gt)
        assert evaluation.srocc(gt, pred) == pytest.approx(s, abs=1e-12)
        assert evaluation.srocc(np.exp(3 * pred), gt**3 + gt) == pytest.approx(s, abs=1e-12)

    def test_undefined_cases(self):
        with pytest.raises(UndefinedMetric):
            evaluation.srocc([1.0], [2.0])
        with pytest.raises(UndefinedMetric):
            evaluation.srocc([1.0, 2.0], [3.0, 3.0])


class TestPairwiseAccuracy:
    def _pairs(self):
        # delta=-1: id1 blurrier, so id1 must score lower
        return [
            canonical_pair("a", "b", -1),
            canonical_pair("b", "c", -1),
            canonical_pair("a", "c", -1),
            canonical_pair("c", "d", -1),
        ]

    def test_all_correct(self):
        scores = {"a": 0.1, "b": 0.2, "c": 0.3, "d": 0.4}
        assert evaluation.pairwise_accuracy(scores, self._pairs()) == 1.0

    def test_all_tied_gives_half(self):
        scores = {k: 0.5 for k in "abcd"}
        assert evaluation.pairwise_accuracy(scores, self._pairs()) == 0.5

    def test_three_of_four(self):
        scores = {"a": 0.1, "b": 0.2, "c": 0.3, "d": 0.25}
        assert evaluation.pairwise_accuracy(scores, self._pairs()) == 0.75

    def test_missing_score_names_id(self):
        with pytest.raises(InvalidArgument, match="'d'"):
            evaluation.pairwise_accuracy({"a": 0.1, "b": 0.2, "c": 0.3}, self._pairs())

    def test_perfect_pairs_imply_perfect_srocc_on_total_order(self):
        # exhaustive pair set over n=10: accuracy 1 forces srocc 1
        rng = np.random.default_rng(4)
        sigma = rng.random(10) * 3
        ids = [f"i{k}" for k in range(10)]
        scores = {i: -s for i, s in zip(ids, sigma)}  # higher = sharper
        pairs = []
        for i in range(10):
            for j in range(i + 1, 10):
                delta = -1 if sigma[i] > sigma[j] else 1
                pairs.append(canonical_pair(ids[i], ids[j], delta))
        assert evaluation.pairwise_accuracy(scores, pairs) == 1.0
        assert evaluation.srocc([scores[i] for i in ids], [-s for s in sigma]) == pytest.approx(1.0)
