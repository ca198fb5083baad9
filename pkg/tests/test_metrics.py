import math
import statistics
from itertools import permutations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from alrank.metrics import (
    GainFn,
    UndefinedCorrelation,
    best_dcg_at_k,
    bucket_distribution,
    dcg_at_k,
    evaluate_query,
    label_distribution,
    pearson,
    r01_at_k,
    rank_by_scores,
)

from conftest import make_group


def hand_dcg(labels, k, gain="exponential"):
    total = 0.0
    for i, lab in enumerate(labels[:k]):
        g = 2**lab - 1 if gain == "exponential" else lab
        total += g / math.log2(i + 2)
    return total


class TestDCG:
    def test_top1(self):
        assert dcg_at_k([4], 1) == 15.0

    def test_four_levels(self):
        expected = 15 + 7 / math.log2(3) + 3 / 2 + 1 / math.log2(5)
        assert dcg_at_k([4, 3, 2, 1], 4) == pytest.approx(expected, abs=1e-12)
        assert dcg_at_k([4, 3, 2, 1], 4) == pytest.approx(21.3472, abs=1e-4)

    def test_zero_labels(self):
        assert dcg_at_k([0, 0, 0], 4) == 0.0

    def test_linear_gain(self):
        assert dcg_at_k([4, 2], 2, GainFn.LINEAR) == pytest.approx(4 + 2 / math.log2(3))

    def test_k_rejected(self):
        with pytest.raises(ValueError):
            dcg_at_k([1], 0)

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.integers(0, 4), min_size=1, max_size=12), st.integers(1, 12), st.sampled_from(list(GainFn)))
    def test_against_hand_formula(self, labels, k, gain):
        assert dcg_at_k(labels, k, gain) == pytest.approx(hand_dcg(labels, k, gain.value), rel=1e-12)


class TestBestDCG:
    def test_two_labels(self):
        assert best_dcg_at_k([1, 4], 2) == pytest.approx(15 + 1 / math.log2(3), abs=1e-12)
        assert best_dcg_at_k([1, 4], 2) == pytest.approx(15.6309, abs=1e-4)

    def test_single_label(self):
        assert best_dcg_at_k([3], 4) == dcg_at_k([3], 4)

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.integers(0, 4), min_size=1, max_size=6), st.integers(1, 6))
    def test_brute_force_max(self, labels, k):
        best = max(dcg_at_k(list(p), k) for p in permutations(labels))
        assert best_dcg_at_k(labels, k) == best
        rng = np.random.default_rng(len(labels))
        assert best_dcg_at_k(rng.permutation(labels), k) == best_dcg_at_k(labels, k)


class TestR01:
    def test_examples(self):
        assert r01_at_k([0, 2, 1, 3], 4) == 0.5
        assert r01_at_k([2, 3, 4, 2, 0], 4) == 0.0
        assert r01_at_k([0, 0], 4) == 0.5


class TestPearson:
    def test_perfect(self):
        x = [0.1, 0.5, 2.0, 3.3]
        assert pearson(x, [2 * v + 1 for v in x]) == pytest.approx(1.0, abs=1e-15)
        assert pearson(x, [-v for v in x]) == pytest.approx(-1.0, abs=1e-15)

    def test_constant_undefined(self):
        with pytest.raises(UndefinedCorrelation):
            pearson([1, 1, 1], [1, 2, 3])

    @settings(max_examples=100, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.integers(3, 40))
    def test_matches_stdlib(self, seed, n):
        rng = np.random.default_rng(seed)
        x, y = rng.normal(size=n), rng.normal(size=n)
        assert pearson(x, y) == pytest.approx(statistics.correlation(list(x), list(y)), abs=1e-12)


class TestDistributions:
    def test_uniform_buckets(self):
        groups = [make_group(i, [0, 1], bucket=i % 10) for i in range(100)]
        assert bucket_distribution(groups).tolist() == [10] * 10

    def test_empty(self):
        assert bucket_distribution([]).tolist() == [0] * 10

    def test_label_cell(self):
        table = label_distribution([make_group(1, [2, 2], bucket=0)])
        assert table[0, 2] == 2
        assert table.sum() == 2


def test_rank_by_scores_stable():
    assert rank_by_scores([1.0, 3.0, 1.0, 2.0]).tolist() == [1, 3, 0, 2]


def test_evaluate_query():
    rep = evaluate_query([0.1, 0.9, 0.5], [0, 4, 2], k=2)
    assert rep.dcg_k == pytest.approx(15 + 3 / math.log2(3))
    assert rep.dcg_k == rep.best_dcg_k
    assert rep.r01 == 0.0


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(0, 4), min_size=2, max_size=10), st.data())
def test_swap_monotonicity(labels, data):
    i = data.draw(st.integers(0, len(labels) - 2))
    j = data.draw(st.integers(i + 1, len(labels) - 1))
    if labels[j] <= labels[i]:
        return
    swapped = list(labels)
    swapped[i], swapped[j] = swapped[j], swapped[i]
    k = data.draw(st.integers(1, len(labels)))
    assert dcg_at_k(swapped, k) >= dcg_at_k(labels, k)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(0, 4), min_size=1, max_size=10), st.integers(1, 10))
def test_r01_bounds(labels, k):
    r = r01_at_k(labels, k)
    assert 0.0 <= r <= 1.0
    if all(lab >= 2 for lab in labels[:k]):
        assert r == 0.0


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.01, 100.0), st.floats(-100.0, 100.0))
def test_pearson_affine_invariance(seed, a, b):
    rng = np.random.default_rng(seed)
    x, y = rng.normal(size=20), rng.normal(size=20)
    assert pearson(a * x + b, y) == pytest.approx(pearson(x, y), abs=1e-12)
