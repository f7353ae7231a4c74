import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gcnse import metrics
from gcnse.metrics import UndefinedMetricError


# naive references: loops over pairs and counts, no vectorisation


def naive_accuracy(pred, truth, mask):
    return sum(pred[i] == truth[i] for i in mask) / len(mask)


def naive_f1(pred, truth, mask, c):
    scores = []
    for k in range(c):
        tp = sum(1 for i in mask if pred[i] == k and truth[i] == k)
        fp = sum(1 for i in mask if pred[i] == k and truth[i] != k)
        fn = sum(1 for i in mask if pred[i] != k and truth[i] == k)
        p = tp / (tp + fp) if tp + fp else 0.0
        r = tp / (tp + fn) if tp + fn else 0.0
        scores.append(2 * p * r / (p + r) if p + r else 0.0)
    return sum(scores) / c


def naive_binary_auc(scores, positive):
    pos = [s for s, y in zip(scores, positive) if y]
    neg = [s for s, y in zip(scores, positive) if not y]
    wins = sum(1.0 if a > b else 0.5 if a == b else 0.0 for a in pos for b in neg)
    return wins / (len(pos) * len(neg))


def naive_macro_auc(probs, truth, mask, c):
    vals = []
    for k in range(c):
        y = [truth[i] == k for i in mask]
        if 0 < sum(y) < len(y):
            vals.append(naive_binary_auc([probs[i][k] for i in mask], y))
    return sum(vals) / len(vals)


def naive_pearson(x, y):
    n = len(x)
    mx, my = sum(x) / n, sum(y) / n
    sxy = sum((a - mx) * (b - my) for a, b in zip(x, y))
    sxx = sum((a - mx) ** 2 for a in x)
    syy = sum((b - my) ** 2 for b in y)
    return sxy / math.sqrt(sxx * syy)


def naive_ranks(x):
    order = sorted(range(len(x)), key=lambda i: x[i])
    ranks = [0.0] * len(x)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and x[order[j + 1]] == x[order[i]]:
            j += 1
        for k in range(i, j + 1):
            ranks[order[k]] = (i + j) / 2 + 1
        i = j + 1
    return ranks


def _instance(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(6, 30))
    c = int(rng.integers(2, 5))
    truth = rng.integers(0, c, n)
    truth[:c] = np.arange(c)  # every class present
    pred = rng.integers(0, c, n)
    # coarse scores so that ties actually happen
    probs = rng.integers(0, 5, (n, c)).astype(float) / 4
    mask = np.sort(rng.choice(n, size=int(rng.integers(c + 1, n + 1)), replace=False))
    mask = np.union1d(mask, np.arange(c))
    return pred, truth, probs, mask, c


class TestOracleEquivalence:
    @pytest.mark.parametrize("seed", range(100))
    def test_classification_metrics(self, seed):
        pred, truth, probs, mask, c = _instance(seed)
        assert metrics.accuracy(pred, truth, mask) == pytest.approx(naive_accuracy(pred, truth, mask), abs=1e-12)
        assert metrics.macro_f1(pred, truth, mask, c) == pytest.approx(naive_f1(pred, truth, mask, c), abs=1e-12)
        assert metrics.macro_auc(probs, truth, mask) == pytest.approx(naive_macro_auc(probs, truth, mask, c), abs=1e-12)
        assert metrics.micro_f1(pred, truth, mask, c) == pytest.approx(metrics.accuracy(pred, truth, mask), abs=1e-12)

    @pytest.mark.parametrize("seed", range(100))
    def test_correlations(self, seed):
        rng = np.random.default_rng(1000 + seed)
        n = int(rng.integers(3, 15))
        x = rng.integers(0, 6, n).astype(float)
        y = x * rng.normal() + rng.integers(0, 6, n)
        if np.ptp(x) == 0 or np.ptp(y) == 0:
            x[0], y[0] = x[0] + 1, y[0] + 2
        assert metrics.pearson(x, y) == pytest.approx(naive_pearson(list(x), list(y)), abs=1e-12)
        rx, ry = naive_ranks(list(x)), naive_ranks(list(y))
        assert metrics.spearman(x, y) == pytest.approx(naive_pearson(rx, ry), abs=1e-12)


class TestAccuracy:
    def test_examples(self):
        assert metrics.accuracy([1, 2, 3], [1, 2, 3], [0, 1, 2]) == 1.0
        assert metrics.accuracy([0, 0], [1, 1], [0, 1]) == 0.0
        truth = np.zeros(10, int)
        pred = np.array([0] * 7 + [1] * 3)
        assert metrics.accuracy(pred, truth, np.arange(10)) == pytest.approx(0.7)

    def test_empty_mask(self):
        with pytest.raises(UndefinedMetricError):
            metrics.accuracy([0], [0], [])


class TestAuc:
    def test_perfect_and_reversed(self):
        assert metrics.macro_auc(np.array([[0.9], [0.1]]), np.array([1, 0])) == 1.0
        assert metrics.macro_auc(np.array([[0.1], [0.9]]), np.array([1, 0])) == 0.0

    def test_all_tied(self):
        probs = np.full((6, 3), 1 / 3)
        assert metrics.macro_auc(probs, np.array([0, 1, 2, 0, 1, 2])) == 0.5

    def test_single_class_is_undefined(self):
        with pytest.raises(UndefinedMetricError):
            metrics.macro_auc(np.random.rand(4, 2), np.zeros(4, int))

    @given(st.integers(0, 2**31))
    def test_monotone_transform_invariance(self, seed):
        rng = np.random.default_rng(seed)
        truth = np.array([0, 1, 2] + list(rng.integers(0, 3, 9)))
        probs = rng.random((12, 3))
        base = metrics.macro_auc(probs, truth)
        assert metrics.macro_auc(np.exp(3 * probs) - 7, truth) == pytest.approx(base, abs=1e-12)


class TestF1:
    def test_perfect(self):
        assert metrics.macro_f1([0, 1, 2], [0, 1, 2]) == 1.0

    def test_all_one_class(self):
        assert metrics.macro_f1([0, 0, 0, 0], [0, 0, 1, 1], num_classes=2) == pytest.approx(1 / 3)
        np.testing.assert_allclose(metrics.per_class_f1([0, 0, 0, 0], [0, 0, 1, 1], num_classes=2), [2 / 3, 0])

    def test_empty_mask(self):
        with pytest.raises(UndefinedMetricError):
            metrics.macro_f1([0], [0], [])


class TestCorrelation:
    def test_affine(self):
        x = np.array([1.0, 4.0, 2.0, 8.0])
        assert metrics.pearson(x, 3 * x - 2) == pytest.approx(1.0)

    def test_monotone_nonlinear(self):
        x = np.arange(1.0, 8.0)
        assert metrics.spearman(x, x**3) == pytest.approx(1.0)
        assert metrics.pearson(x, x**3) < 1.0

    def test_hand_ranks(self):
        assert metrics.spearman([1, 2, 3], [2, 1, 3]) == pytest.approx(0.5)

    @pytest.mark.parametrize("fn", [metrics.pearson, metrics.spearman])
    def test_constant_input(self, fn):
        with pytest.raises(UndefinedMetricError):
            fn([1, 1, 1], [1, 2, 3])

    @pytest.mark.parametrize("fn", [metrics.pearson, metrics.spearman])
    def test_too_short(self, fn):
        with pytest.raises(UndefinedMetricError):
            fn([1, 2], [2, 1])

    @given(st.integers(0, 2**31), st.floats(0.1, 10), st.floats(-5, 5))
    def test_symmetry_and_affine_invariance(self, seed, a, b):
        rng = np.random.default_rng(seed)
        x, y = rng.normal(size=8), rng.normal(size=8)
        for fn in (metrics.pearson, metrics.spearman):
            assert fn(x, y) == pytest.approx(fn(y, x), abs=1e-12)
            assert fn(a * x + b, y) == pytest.approx(fn(x, y), abs=1e-9)


def test_evaluate_report_ranges():
    rng = np.random.default_rng(0)
    probs = rng.dirichlet(np.ones(4), size=40)
    truth = rng.integers(0, 4, 40)
    rep = metrics.evaluate(probs, truth, np.arange(40))
    d = rep.to_dict()
    for key in ("acc", "auc", "f1"):
        assert 0.0 <= d[key] <= 1.0
    assert len(d["per_class"]["f1"]) == 4


def test_evaluate_single_class_mask_falls_back():
    rep = metrics.evaluate(np.array([[0.7, 0.3], [0.6, 0.4]]), np.array([0, 0]), np.array([0, 1]))
    assert rep.auc == 0.5 and rep.accuracy == 1.0


def test_brute_force_pairs_cover_all_orderings():
    # exhaustive tiny case: every ranking of 4 scores with 2 positives
    for perm in itertools.permutations(range(4)):
        scores = np.array(perm, dtype=float)
        y = np.array([True, True, False, False])
        assert metrics._binary_auc(scores, y) == pytest.approx(naive_binary_auc(scores, y))
