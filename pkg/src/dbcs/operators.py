"""Measurement operators ``Y = A X`` with exact adjoints.

Four acquisition kinds are supported:

``dense_gaussian``
    i.i.d. normal ``m x n`` matrix scaled by ``1/sqrt(m)``.
``sparse_binary``
    Bernoulli(density) 0/1 entries, each row scaled to unit norm.  All-zero
    rows are redrawn.
``row_subsample``
    keeps ``m`` of the ``n`` coordinates (a 0/1 selection matrix).
``identity``
    ``A = I``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import Rng, as_matrix, mat_write
from .exceptions import DimensionMismatchError

KINDS = ("dense_gaussian", "sparse_binary", "row_subsample", "identity")

#: Default measurement ratio m/n used throughout the experiments.
DEFAULT_RATIO = 0.25


def measurements_for_ratio(n, ratio=DEFAULT_RATIO):
    """``ceil(ratio * n)``, clipped to ``[1, n]``."""
    if not 0 < ratio <= 1:
        raise ValueError(f"ratio must lie in (0, 1], got {ratio}")
    # guard against ratio*n landing a hair above an integer
    return min(n, max(1, math.ceil(round(ratio * n, 9))))


@dataclass(frozen=True, eq=False)
class MeasurementOperator:
    """A realized sensing operator.  Build with :func:`build_operator`."""

    kind: str
    m: int
    n: int
    seed: int = 0
    density: float | None = None
    kept_rows: tuple | None = None
    matrix: np.ndarray | None = field(default=None, repr=False)

    @property
    def shape(self):
        return (self.m, self.n)

    def apply(self, X):
        """Return ``A X`` for ``X`` of shape ``(n, N)``."""
        X = as_matrix(X, "X", finite=False)
        if X.shape[0] != self.n:
            raise DimensionMismatchError(
                f"operator expects {self.n} rows, got {X.shape[0]}")
        if self.kind == "identity":
            return X.copy()
        if self.kind == "row_subsample":
            return X[list(self.kept_rows), :].copy()
        return self.matrix @ X

    def adjoint(self, Y):
        """Return ``A^T Y`` for ``Y`` of shape ``(m, N)``."""
        Y = as_matrix(Y, "Y", finite=False)
        if Y.shape[0] != self.m:
            raise DimensionMismatchError(
                f"adjoint expects {self.m} rows, got {Y.shape[0]}")
        if self.kind == "identity":
            return Y.copy()
        if self.kind == "row_subsample":
            out = np.zeros((self.n, Y.shape[1]))
            out[list(self.kept_rows), :] = Y
            return out
        return self.matrix.T @ Y

    def to_dense(self):
        """Materialize ``A`` as an ``m x n`` array."""
        if self.matrix is not None:
            return self.matrix.copy()
        return self.apply(np.eye(self.n))

    def to_dict(self):
        """JSON-friendly descriptor; :func:`operator_from_dict` inverts it."""
        d = {"kind": self.kind, "m": self.m, "n": self.n, "seed": self.seed}
        if self.kind == "sparse_binary":
            d["density"] = self.density
        if self.kind == "row_subsample":
            d["kept_rows"] = list(self.kept_rows)
        return d

    def export(self, path):
        """Write the dense realization to a DBCS1 file for auditing."""
        mat_write(self.to_dense(), path)


def build_operator(kind, m, n, seed=0, density=None, kept_rows=None):
    """Deterministically construct a :class:`MeasurementOperator`.

    Parameters
    ----------
    kind : {'dense_gaussian', 'sparse_binary', 'row_subsample', 'identity'}
    m, n : int
        Output and input dimensions, ``1 <= m <= n``.
    seed : int
        Seed for the random realization.
    density : float, optional
        Probability of a one in ``sparse_binary`` (default 0.5).
    kept_rows : sequence of int, optional
        Explicit coordinates for ``row_subsample``; drawn from ``seed`` when
        omitted.
    """
    if kind not in KINDS:
        raise ValueError(f"unknown operator kind {kind!r}; expected one of {KINDS}")
    m, n = int(m), int(n)
    if n < 1 or m < 1:
        raise ValueError(f"dimensions must be positive, got m={m}, n={n}")
    if m > n:
        raise ValueError(f"m={m} exceeds n={n}")
    rng = Rng(seed)

    if kind == "identity":
        if m != n:
            raise ValueError(f"identity operator needs m == n, got m={m}, n={n}")
        return MeasurementOperator(kind, m, n, seed)

    if kind == "dense_gaussian":
        A = rng.normal((m, n)) / np.sqrt(m)
        return MeasurementOperator(kind, m, n, seed, matrix=A)

    if kind == "sparse_binary":
        density = 0.5 if density is None else float(density)
        if not 0 < density <= 1:
            raise ValueError(f"density must lie in (0, 1], got {density}")
        A = np.empty((m, n))
        for i in range(m):
            row = (rng.uniform(n) < density).astype(np.float64)
            while not row.any():
                row = (rng.uniform(n) < density).astype(np.float64)
            A[i] = row / np.sqrt(row.sum())
        return MeasurementOperator(kind, m, n, seed, density=density, matrix=A)

    # row_subsample
    if kept_rows is None:
        rows = np.sort(rng.permutation(n)[:m])
    else:
        rows = np.asarray(kept_rows, dtype=np.int64)
        if rows.ndim != 1:
            raise ValueError("kept_rows must be one-dimensional")
        if len(set(rows.tolist())) != rows.size:
            raise ValueError("kept_rows contains duplicates")
        if rows.size and (rows.min() < 0 or rows.max() >= n):
            raise ValueError(f"kept_rows out of range 0..{n - 1}")
        if rows.size != m:
            raise ValueError(f"len(kept_rows)={rows.size} does not match m={m}")
        rows = np.sort(rows)
    return MeasurementOperator(kind, m, n, seed, kept_rows=tuple(int(r) for r in rows))


def operator_from_dict(d):
    return build_operator(d["kind"], d["m"], d["n"], d.get("seed", 0),
                          density=d.get("density"), kept_rows=d.get("kept_rows"))


def apply(op, X):
    return op.apply(X)


def adjoint(op, Y):
    return op.adjoint(Y)
