"""Nearest-neighbour classification and evaluation metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import as_matrix, as_rng
from .exceptions import DimensionMismatchError


@dataclass
class LabeledDataset:
    """Features (``d x N``, samples in columns) with integer labels."""

    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.features = as_matrix(self.features, "features")
        self.labels = np.asarray(self.labels, dtype=np.int64).ravel()
        if self.labels.size != self.features.shape[1]:
            raise DimensionMismatchError(
                f"{self.labels.size} labels for {self.features.shape[1]} samples")
        if self.labels.size and self.labels.min() < 0:
            raise ValueError("labels must be nonnegative class indices")

    @property
    def n_samples(self):
        return self.labels.size

    def subset(self, idx):
        return LabeledDataset(self.features[:, idx], self.labels[idx])


def knn_predict(train, test_features, k=1, chunk=256):
    """Majority label among the ``k`` Euclidean nearest training columns.

    Distance ties go to the lower training index, vote ties to the lower
    class index.
    """
    test = as_matrix(test_features, "test_features")
    if train.n_samples == 0:
        raise ValueError("empty training set")
    if test.shape[0] != train.features.shape[0]:
        raise DimensionMismatchError(
            f"test features have dimension {test.shape[0]}, "
            f"training features {train.features.shape[0]}")
    if not 1 <= k <= train.n_samples:
        raise ValueError(f"k must lie in [1, {train.n_samples}], got {k}")
    n_classes = int(train.labels.max()) + 1
    Xtr = train.features.T
    pred = np.empty(test.shape[1], dtype=np.int64)
    for start in range(0, test.shape[1], chunk):
        block = test[:, start:start + chunk].T
        # exact differences, not the |a|^2 + |b|^2 - 2ab expansion, so
        # equal distances compare equal
        d = ((block[:, None, :] - Xtr[None, :, :]) ** 2).sum(axis=2)
        nearest = np.argsort(d, axis=1, kind="stable")[:, :k]
        for i, row in enumerate(nearest):
            votes = np.bincount(train.labels[row], minlength=n_classes)
            pred[start + i] = int(np.argmax(votes))
    return pred


def _check_pair(pred, truth):
    pred = np.asarray(pred).ravel()
    truth = np.asarray(truth).ravel()
    if pred.shape != truth.shape:
        raise DimensionMismatchError(f"length mismatch: {pred.size} vs {truth.size}")
    return pred, truth


def accuracy(pred, truth):
    """Fraction of exact matches."""
    pred, truth = _check_pair(pred, truth)
    if truth.size == 0:
        raise ValueError("empty label vectors")
    return float(np.count_nonzero(pred == truth)) / truth.size


def macro_accuracy(pred, truth):
    """Mean over the classes present in ``truth`` of the per-class recall."""
    pred, truth = _check_pair(pred, truth)
    recalls = [np.mean(pred[truth == c] == c) for c in np.unique(truth)]
    return float(np.mean(recalls))


def sens_spec(pred, truth, c):
    """One-vs-rest ``(sensitivity, specificity)`` for class ``c``.

    A ratio with an empty denominator (``c`` absent from ``truth`` for the
    sensitivity, every sample of class ``c`` for the specificity) is
    ``nan``.
    """
    pred, truth = _check_pair(pred, truth)
    pos = truth == c
    hit = pred == c
    tp = np.count_nonzero(pos & hit)
    fn = np.count_nonzero(pos & ~hit)
    tn = np.count_nonzero(~pos & ~hit)
    fp = np.count_nonzero(~pos & hit)
    sens = tp / (tp + fn) if tp + fn else math.nan
    spec = tn / (tn + fp) if tn + fp else math.nan
    return sens, spec


def nmse(X_true, X_hat):
    """``||X_true - X_hat||_F^2 / ||X_true||_F^2``."""
    X_true = as_matrix(X_true, "X_true")
    X_hat = as_matrix(X_hat, "X_hat")
    if X_true.shape != X_hat.shape:
        raise DimensionMismatchError(f"shape mismatch {X_true.shape} vs {X_hat.shape}")
    denom = float(np.vdot(X_true, X_true))
    if denom == 0.0:
        raise ValueError("X_true is zero; NMSE undefined")
    diff = X_true - X_hat
    return float(np.vdot(diff, diff)) / denom


def split_indices(labels, train_fraction, rng):
    """Stratified split; returns sorted ``(train_idx, test_idx)``.

    Each class contributes ``ceil(train_fraction * count)`` training
    samples, capped at ``count - 1`` so every class also appears in the
    test set.
    """
    if not 0 < train_fraction < 1:
        raise ValueError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    labels = np.asarray(labels).ravel()
    rng = as_rng(rng)
    train, test = [], []
    for c in np.unique(labels):
        members = np.flatnonzero(labels == c)
        if members.size < 2:
            raise ValueError(f"class {c} has fewer than 2 samples")
        members = members[rng.permutation(members.size)]
        n_train = min(members.size - 1, math.ceil(round(train_fraction * members.size, 9)))
        train.append(members[:n_train])
        test.append(members[n_train:])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(test))


def split(dataset, train_fraction, rng):
    """Stratified random split of a :class:`LabeledDataset`."""
    tr, te = split_indices(dataset.labels, train_fraction, rng)
    return dataset.subset(tr), dataset.subset(te)


def class_report(pred, truth, n_classes=None):
    """Per-class sensitivity/specificity plus overall and macro accuracy."""
    pred, truth = _check_pair(pred, truth)
    if n_classes is None:
        n_classes = int(max(pred.max(initial=0), truth.max(initial=0))) + 1
    per_class = []
    for c in range(n_classes):
        sens, spec = sens_spec(pred, truth, c)
        per_class.append({"class": c, "sensitivity": sens, "specificity": spec})
    return {
        "accuracy": accuracy(pred, truth),
        "macro_accuracy": macro_accuracy(pred, truth),
        "per_class": per_class,
    }
