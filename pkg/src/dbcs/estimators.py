"""scikit-learn compatible wrappers.

These follow the scikit-learn convention of one sample per *row*; the
functional API elsewhere in the package stores samples in columns.  The
estimators transpose at the boundary.

Unlike most scikit-learn estimators, ``random_state=None`` means seed 0, not
fresh entropy: every fit is reproducible unless a seed is chosen explicitly.

Example
-------
>>> from sklearn.pipeline import make_pipeline
>>> sampler = CompressiveSampler(ratio=0.25, random_state=1).fit(X)   # doctest: +SKIP
>>> dbcs = DeepBlindCompressedSensing(operator=sampler, layer_sizes=(32, 16))
>>> codes = dbcs.fit_transform(sampler.transform(X))                  # doctest: +SKIP
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .core import Rng, as_rng, chain_product
from .evaluation import LabeledDataset, knn_predict
from .exceptions import DimensionMismatchError
from .model import TrainOptions, bcs_fit, dbcs_fit, default_lambda, dl_fit, encode, initial_lambda
from .operators import MeasurementOperator, build_operator, measurements_for_ratio
from .solvers import LinearMap, SolverOptions, ista


def _seed(random_state):
    if random_state is None:
        return Rng(0)
    return as_rng(random_state)


def _check_n_features(est, X):
    if X.shape[1] != est.n_features_in_:
        raise DimensionMismatchError(
            f"X has {X.shape[1]} features, but {type(est).__name__} was fitted "
            f"with {est.n_features_in_}")


class CompressiveSampler(TransformerMixin, BaseEstimator):
    """Simulated acquisition ``x -> A x`` as a transformer.

    Parameters
    ----------
    kind : str, default='dense_gaussian'
        One of ``dense_gaussian``, ``sparse_binary``, ``row_subsample``,
        ``identity``.
    ratio : float, default=0.25
        Measurement ratio ``m / n``; ignored when ``n_measurements`` is set.
    n_measurements : int, optional
    density : float, default=0.5
        Only for ``sparse_binary``.
    kept_rows : sequence of int, optional
        Only for ``row_subsample``.
    random_state : int, optional

    Attributes
    ----------
    operator_ : MeasurementOperator
    """

    def __init__(self, kind="dense_gaussian", ratio=0.25, n_measurements=None,
                 density=0.5, kept_rows=None, random_state=None):
        self.kind = kind
        self.ratio = ratio
        self.n_measurements = n_measurements
        self.density = density
        self.kept_rows = kept_rows
        self.random_state = random_state

    def fit(self, X, y=None):
        X = check_array(X)
        n = X.shape[1]
        self.n_features_in_ = n
        if self.kind == "identity":
            m = n
        elif self.kept_rows is not None:
            m = len(self.kept_rows)
        elif self.n_measurements is not None:
            m = self.n_measurements
        else:
            m = measurements_for_ratio(n, self.ratio)
        seed = 0 if self.random_state is None else int(self.random_state)
        self.operator_ = build_operator(self.kind, m, n, seed, density=self.density,
                                        kept_rows=self.kept_rows)
        return self

    def transform(self, X):
        check_is_fitted(self, "operator_")
        X = check_array(X)
        _check_n_features(self, X)
        return self.operator_.apply(X.T).T


def _resolve_operator(operator, n_features):
    if operator is None:
        return build_operator("identity", n_features, n_features)
    if isinstance(operator, CompressiveSampler):
        check_is_fitted(operator, "operator_")
        operator = operator.operator_
    if not isinstance(operator, MeasurementOperator):
        raise TypeError("operator must be a MeasurementOperator or a fitted CompressiveSampler")
    if operator.m != n_features:
        raise DimensionMismatchError(
            f"measurements have {n_features} features, operator produces {operator.m}")
    return operator


class _SparseModelMixin:
    """Shared solver parameters, encoding and reconstruction."""

    def _train_options(self):
        ista_opts = SolverOptions(self.ista_max_iter, self.tol, self.safety)
        cg_opts = SolverOptions(self.cg_max_iter, self.tol, self.safety)
        return TrainOptions(ista_opts, cg_opts, self.sweep_tol)

    def transform(self, X):
        """Sparse codes for new samples with the dictionaries held fixed."""
        check_is_fitted(self, "dictionaries_")
        X = check_array(X)
        _check_n_features(self, X)
        Z = encode(self.operator_, self.dictionaries_, X.T, self.lambda_,
                   self._train_options().ista)
        return Z.T

    def inverse_transform(self, codes):
        """Signals ``D_1 ... D_M z`` for codes given one per row."""
        check_is_fitted(self, "dictionaries_")
        codes = check_array(codes)
        return (chain_product(list(self.dictionaries_)) @ codes.T).T

    @property
    def components_(self):
        """Effective dictionary ``(D_1 ... D_M)^T``, one atom per row."""
        check_is_fitted(self, "dictionaries_")
        return chain_product(list(self.dictionaries_)).T

    def reconstruct(self):
        """Signal-domain reconstruction of the training samples."""
        check_is_fitted(self, "dictionaries_")
        return self.inverse_transform(self.code_)

    def fit_transform(self, X, y=None):
        """Fit and return the codes learned for the training samples."""
        return self.fit(X, y).code_


class DeepBlindCompressedSensing(_SparseModelMixin, TransformerMixin, BaseEstimator):
    """Multi-layer dictionaries and sparse codes learned from measurements.

    Parameters
    ----------
    operator : MeasurementOperator or CompressiveSampler, optional
        Sensing operator that produced the measurements; identity if omitted.
    layer_sizes : tuple of int, default=(48, 32)
        Atom counts ``(k1, ..., kM)``; the signal dimension comes from the
        operator.
    lam : float, optional
        l1 weight; data-scaled default when omitted.
    n_sweeps : int, default=20
    ista_max_iter, cg_max_iter : int
        Inner iteration caps.
    tol : float, default=1e-6
        Inner solver tolerance.
    sweep_tol : float, default=1e-6
        Relative objective change that ends training early.
    safety : float, default=0.95
        ISTA step safety factor.
    random_state : int, optional

    Attributes
    ----------
    dictionaries_ : list of ndarray
    code_ : ndarray of shape (n_samples, k_M)
    lambda_ : float
    objective_trace_ : list of float
    model_ : DbcsModel
    """

    def __init__(self, operator=None, layer_sizes=(48, 32), lam=None, n_sweeps=20,
                 ista_max_iter=100, cg_max_iter=50, tol=1e-6, sweep_tol=1e-6,
                 safety=0.95, random_state=None):
        self.operator = operator
        self.layer_sizes = layer_sizes
        self.lam = lam
        self.n_sweeps = n_sweeps
        self.ista_max_iter = ista_max_iter
        self.cg_max_iter = cg_max_iter
        self.tol = tol
        self.sweep_tol = sweep_tol
        self.safety = safety
        self.random_state = random_state

    def fit(self, X, y=None):
        """Fit on measurements ``X`` of shape (n_samples, m)."""
        X = check_array(X)
        self.n_features_in_ = X.shape[1]
        self.operator_ = _resolve_operator(self.operator, X.shape[1])
        sizes = [self.operator_.n] + [int(k) for k in self.layer_sizes]
        model = dbcs_fit(X.T, self.operator_, sizes, self.lam, self.n_sweeps,
                         self._train_options(), _seed(self.random_state))
        self.model_ = model
        self.dictionaries_ = model.dictionaries
        self.code_ = model.codes.T
        self.lambda_ = model.lam
        self.objective_trace_ = list(model.objective_trace)
        self.n_iter_ = len(model.objective_trace) - 1
        return self


class BlindCompressedSensing(_SparseModelMixin, TransformerMixin, BaseEstimator):
    """Single dictionary learned from measurements with a Frobenius penalty.

    Minimizes ``||Y - A D Z||_F^2 + lam ||Z||_1 + mu ||D||_F^2``.
    """

    def __init__(self, operator=None, n_components=32, lam=None, mu=0.1, n_sweeps=20,
                 ista_max_iter=100, cg_max_iter=50, tol=1e-6, sweep_tol=1e-6,
                 safety=0.95, random_state=None):
        self.operator = operator
        self.n_components = n_components
        self.lam = lam
        self.mu = mu
        self.n_sweeps = n_sweeps
        self.ista_max_iter = ista_max_iter
        self.cg_max_iter = cg_max_iter
        self.tol = tol
        self.sweep_tol = sweep_tol
        self.safety = safety
        self.random_state = random_state

    def fit(self, X, y=None):
        X = check_array(X)
        self.n_features_in_ = X.shape[1]
        self.operator_ = _resolve_operator(self.operator, X.shape[1])
        rng = _seed(self.random_state)
        D, Z, trace = bcs_fit(X.T, self.operator_, self.n_components, self.lam, self.mu,
                              self.n_sweeps, self._train_options(), rng)
        self.dictionaries_ = [D]
        self.code_ = Z.T
        self.lambda_ = self.lam if self.lam is not None else initial_lambda(
            X.T, self.operator_, [self.operator_.n, self.n_components], rng)
        self.objective_trace_ = list(trace)
        self.n_iter_ = len(trace) - 1
        return self


class SparseDictionaryLearning(_SparseModelMixin, TransformerMixin, BaseEstimator):
    """Unit-norm dictionary learned on fully sampled signals."""

    def __init__(self, n_components=32, lam=None, n_sweeps=20, ista_max_iter=100,
                 cg_max_iter=50, tol=1e-6, sweep_tol=1e-6, safety=0.95, random_state=None):
        self.n_components = n_components
        self.lam = lam
        self.n_sweeps = n_sweeps
        self.ista_max_iter = ista_max_iter
        self.cg_max_iter = cg_max_iter
        self.tol = tol
        self.sweep_tol = sweep_tol
        self.safety = safety
        self.random_state = random_state

    def fit(self, X, y=None):
        X = check_array(X)
        self.n_features_in_ = X.shape[1]
        self.operator_ = build_operator("identity", X.shape[1], X.shape[1])
        rng = _seed(self.random_state)
        D, Z, trace = dl_fit(X.T, self.n_components, self.lam, self.n_sweeps,
                             self._train_options(), rng)
        self.dictionaries_ = [D]
        self.code_ = Z.T
        self.lambda_ = self.lam if self.lam is not None else initial_lambda(
            X.T, self.operator_, [X.shape[1], self.n_components], rng)
        self.objective_trace_ = list(trace)
        self.n_iter_ = len(trace) - 1
        return self


class SparseRecovery(_SparseModelMixin, TransformerMixin, BaseEstimator):
    """Plain l1 recovery with a fixed dictionary (identity by default).

    ``fit`` only fixes lambda (data-scaled when not given) and solves for
    the training codes; nothing is learned.
    """

    def __init__(self, operator=None, dictionary=None, lam=None, ista_max_iter=100,
                 tol=1e-6, safety=0.95):
        self.operator = operator
        self.dictionary = dictionary
        self.lam = lam
        self.ista_max_iter = ista_max_iter
        self.tol = tol
        self.safety = safety

    # no dictionary update and no sweeps
    cg_max_iter = 1
    sweep_tol = 0.0

    def fit(self, X, y=None):
        X = check_array(X)
        self.n_features_in_ = X.shape[1]
        self.operator_ = _resolve_operator(self.operator, X.shape[1])
        n = self.operator_.n
        D = np.eye(n) if self.dictionary is None else check_array(self.dictionary)
        if D.shape[0] != n:
            raise DimensionMismatchError(f"dictionary has {D.shape[0]} rows, signals have {n}")
        self.dictionaries_ = [D]
        G = self.operator_.apply(D)
        self.lambda_ = default_lambda(G, X.T) if self.lam is None else float(self.lam)
        Z, trace = ista(LinearMap.from_matrix(G), X.T, self.lambda_, None,
                        self._train_options().ista)
        self.code_ = Z.T
        self.objective_trace_ = list(trace)
        return self


class NearestNeighbourClassifier(ClassifierMixin, BaseEstimator):
    """k-nearest-neighbour vote with deterministic tie-breaking.

    Distance ties go to the earlier training sample, vote ties to the
    smaller label.
    """

    def __init__(self, n_neighbors=1):
        self.n_neighbors = n_neighbors

    def fit(self, X, y):
        X = check_array(X)
        y = np.asarray(y).ravel()
        if y.size != X.shape[0]:
            raise DimensionMismatchError(f"{y.size} labels for {X.shape[0]} samples")
        self.classes_, encoded = np.unique(y, return_inverse=True)
        self.n_features_in_ = X.shape[1]
        self.train_ = LabeledDataset(X.T, encoded)
        return self

    def predict(self, X):
        check_is_fitted(self, "train_")
        X = check_array(X)
        _check_n_features(self, X)
        return self.classes_[knn_predict(self.train_, X.T, self.n_neighbors)]
