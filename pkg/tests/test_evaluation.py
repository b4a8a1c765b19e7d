import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dbcs.core import Rng
from dbcs.evaluation import (LabeledDataset, accuracy, class_report, knn_predict,
                             macro_accuracy, nmse, sens_spec, split, split_indices)
from dbcs.exceptions import DimensionMismatchError


def confusion_oracle(pred, truth, n_classes):
    C = [[0] * n_classes for _ in range(n_classes)]
    for p, t in zip(pred, truth):
        C[t][p] += 1
    return C


def oracle_sens_spec(C, c):
    n = len(C)
    tp = C[c][c]
    fn = sum(C[c][j] for j in range(n)) - tp
    fp = sum(C[i][c] for i in range(n)) - tp
    tn = sum(C[i][j] for i in range(n) for j in range(n)) - tp - fn - fp
    sens = tp / (tp + fn) if tp + fn else math.nan
    spec = tn / (tn + fp) if tn + fp else math.nan
    return sens, spec


def same(a, b):
    return (math.isnan(a) and math.isnan(b)) or a == b


# -- nearest neighbour ---------------------------------------------------------

def test_knn_exact_match():
    train = LabeledDataset(np.array([[0.0, 5.0, 9.0], [1.0, 2.0, 3.0]]), [2, 0, 1])
    assert knn_predict(train, np.array([[5.0], [2.0]])).tolist() == [0]


def test_knn_geometry():
    train = LabeledDataset(np.array([[0.0, 10.0], [0.0, 10.0]]), [0, 1])
    assert knn_predict(train, np.array([[1.0], [1.0]]), k=1).tolist() == [0]


def test_knn_three_way_tie_majority():
    # three training points at distance 1 from the origin
    train = LabeledDataset(np.array([[1.0, -1.0, 0.0], [0.0, 0.0, 1.0]]), [0, 1, 1])
    assert knn_predict(train, np.zeros((2, 1)), k=3).tolist() == [1]


def test_knn_distance_tie_lower_index():
    train = LabeledDataset(np.array([[1.0, -1.0]]), [1, 0])
    assert knn_predict(train, np.zeros((1, 1)), k=1).tolist() == [1]


def test_knn_vote_tie_lower_class():
    train = LabeledDataset(np.array([[1.0, 2.0]]), [3, 2])
    assert knn_predict(train, np.zeros((1, 1)), k=2).tolist() == [2]


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_knn_reproduces_training_labels(seed):
    r = np.random.default_rng(seed)
    F = r.standard_normal((int(r.integers(1, 6)), int(r.integers(1, 60))))
    labels = r.integers(0, 4, F.shape[1])
    train = LabeledDataset(F, labels)
    assert knn_predict(train, F, chunk=7).tolist() == labels.tolist()


def test_knn_matches_brute_force():
    r = np.random.default_rng(3)
    train = LabeledDataset(r.integers(0, 3, (2, 40)).astype(float), r.integers(0, 3, 40))
    test = r.integers(0, 3, (2, 25)).astype(float)
    for k in (1, 3, 5):
        got = knn_predict(train, test, k=k, chunk=4)
        for j in range(test.shape[1]):
            d = [sum((test[i, j] - train.features[i, t]) ** 2 for i in range(2))
                 for t in range(40)]
            order = sorted(range(40), key=lambda t: (d[t], t))[:k]
            votes = [0, 0, 0]
            for t in order:
                votes[train.labels[t]] += 1
            assert got[j] == votes.index(max(votes))


def test_knn_errors():
    train = LabeledDataset(np.ones((2, 3)), [0, 1, 0])
    with pytest.raises(DimensionMismatchError):
        knn_predict(train, np.ones((3, 1)))
    with pytest.raises(ValueError):
        knn_predict(train, np.ones((2, 1)), k=4)
    with pytest.raises(ValueError):
        knn_predict(LabeledDataset(np.ones((2, 0)), []), np.ones((2, 1)))


def test_dataset_validation():
    with pytest.raises(DimensionMismatchError):
        LabeledDataset(np.ones((2, 3)), [0, 1])
    with pytest.raises(ValueError):
        LabeledDataset(np.ones((2, 2)), [0, -1])


# -- metrics ----------------------------------------------------------------------

def test_accuracy_examples():
    assert accuracy([0, 1, 2], [0, 1, 2]) == 1.0
    assert accuracy([1, 2, 0], [0, 1, 2]) == 0.0
    assert accuracy([0, 1, 1, 3], [0, 1, 2, 3]) == 0.75
    with pytest.raises(DimensionMismatchError):
        accuracy([0, 1], [0])


def test_sens_spec_examples():
    truth = [0, 1, 2, 0, 1, 2]
    for c in range(3):
        assert sens_spec(truth, truth, c) == (1.0, 1.0)
    assert sens_spec([1, 1, 2, 1, 1, 2], truth, 0) == (0.0, 1.0)
    c, x = 1, 0
    assert sens_spec([c, x, x, c], [c, c, x, x], c) == (0.5, 0.5)


def test_sens_spec_absent_class_is_nan():
    sens, spec = sens_spec([0, 1], [0, 1], 5)
    assert math.isnan(sens) and spec == 1.0


@pytest.mark.parametrize("seed", range(100))
def test_metrics_match_confusion_oracle(seed):
    r = np.random.default_rng(seed)
    C = int(r.integers(2, 6))
    n = int(r.integers(1, 50))
    pred, truth = r.integers(0, C, n).tolist(), r.integers(0, C, n).tolist()
    conf = confusion_oracle(pred, truth, C)
    assert accuracy(pred, truth) == sum(conf[i][i] for i in range(C)) / n
    for c in range(C):
        got, want = sens_spec(pred, truth, c), oracle_sens_spec(conf, c)
        assert same(got[0], want[0]) and same(got[1], want[1])


def test_macro_equals_overall_on_balanced_set():
    truth = np.repeat([0, 1, 2], 4)
    pred = truth.copy()
    pred[[0, 5, 6, 11]] = [1, 0, 2, 1]
    assert macro_accuracy(pred, truth) == pytest.approx(accuracy(pred, truth), abs=1e-15)


def test_macro_differs_on_imbalanced_set():
    truth = np.array([0] * 8 + [1] * 2)
    pred = np.zeros(10, dtype=int)
    assert accuracy(pred, truth) == 0.8
    assert macro_accuracy(pred, truth) == 0.5


def test_class_report_layout():
    rep = class_report([0, 1, 1], [0, 1, 0], n_classes=3)
    assert rep["accuracy"] == pytest.approx(2 / 3)
    assert [p["class"] for p in rep["per_class"]] == [0, 1, 2]
    assert math.isnan(rep["per_class"][2]["sensitivity"])


def test_nmse_examples():
    X = np.random.default_rng(0).standard_normal((4, 5))
    assert nmse(X, X) == 0.0
    assert nmse(X, np.zeros_like(X)) == 1.0
    assert nmse(X, 2 * X) == pytest.approx(1.0, rel=1e-15)
    with pytest.raises(ValueError):
        nmse(np.zeros((2, 2)), np.ones((2, 2)))
    with pytest.raises(DimensionMismatchError):
        nmse(X, X[:, :2])


# -- splitting ---------------------------------------------------------------------

def test_split_half():
    labels = np.repeat([0, 1, 2], 10)
    tr, te = split_indices(labels, 0.5, Rng(0))
    assert np.bincount(labels[tr]).tolist() == [5, 5, 5]
    assert np.bincount(labels[te]).tolist() == [5, 5, 5]


def test_split_tenth_uses_ceiling():
    labels = np.repeat([0, 1], 100)
    tr, _ = split_indices(labels, 0.1, Rng(0))
    assert np.bincount(labels[tr]).tolist() == [10, 10]
    tr, _ = split_indices(np.repeat([0, 1], 15), 0.1, Rng(0))
    assert len(tr) == 4      # ceil(1.5) per class


def test_split_keeps_a_test_sample():
    tr, te = split_indices(np.array([0, 0, 1, 1]), 0.9, Rng(0))
    assert len(tr) == 2 and len(te) == 2


def test_split_deterministic_and_seed_sensitive():
    labels = np.repeat([0, 1, 2], 20)
    a = split_indices(labels, 0.3, Rng(5))
    b = split_indices(labels, 0.3, Rng(5))
    c = split_indices(labels, 0.3, Rng(6))
    assert all(np.array_equal(x, y) for x, y in zip(a, b))
    assert not np.array_equal(a[0], c[0])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(2, 30), min_size=1, max_size=5),
       st.floats(0.01, 0.99), st.integers(0, 2**32 - 1))
def test_split_partitions_each_class(counts, frac, seed):
    labels = np.repeat(np.arange(len(counts)), counts)
    tr, te = split_indices(labels, frac, Rng(seed))
    assert np.intersect1d(tr, te).size == 0
    assert np.array_equal(np.sort(np.concatenate([tr, te])), np.arange(labels.size))
    for c, n in enumerate(counts):
        n_tr = int(np.sum(labels[tr] == c))
        assert n_tr == min(n - 1, math.ceil(round(frac * n, 9)))
        assert n_tr + int(np.sum(labels[te] == c)) == n


def test_split_errors():
    with pytest.raises(ValueError):
        split_indices([0, 0, 1], 0.5, Rng(0))
    with pytest.raises(ValueError):
        split_indices([0, 0], 1.0, Rng(0))


def test_split_dataset():
    ds = LabeledDataset(np.arange(12.0).reshape(1, 12), np.repeat([0, 1], 6))
    tr, te = split(ds, 0.5, Rng(1))
    assert tr.n_samples == 6 and te.n_samples == 6
    np.testing.assert_array_equal(tr.features[0] % 1, 0)
