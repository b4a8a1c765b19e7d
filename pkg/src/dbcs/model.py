"""Deep blind compressed sensing: training, reconstruction and encoding.

The model expresses signals as ``X = D_1 D_2 ... D_M Z`` and is learned
from compressive measurements ``Y = A X`` by minimizing::

    ||Y - A D_1 ... D_M Z||_F^2 + lam ||Z||_1

with unit-norm dictionary columns.  Training alternates over the blocks
``D_1, ..., D_M, Z``: each dictionary is a sandwiched least-squares problem
solved by conjugate gradient, the code is a lasso problem solved by ISTA.

Shallow baselines live here as well: :func:`bcs_fit` (single layer with a
Frobenius penalty on ``D`` instead of normalization) and :func:`dl_fit`
(single layer, ``A = I``).
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .core import (as_matrix, as_rng, chain_product, ensure_dir, gaussian_matrix,
                   mat_read, mat_write, normalize_columns)
from .exceptions import DimensionMismatchError, NonFiniteObjectiveError
from .operators import MeasurementOperator, build_operator
from .solvers import (CG_DEFAULTS, ISTA_DEFAULTS, LinearMap, SolverOptions, ista,
                      sandwich_lsq, spectral_norm_estimate)

#: Default lambda is this fraction of ``max |G^T Y|`` at initialization.
LAMBDA_FRACTION = 0.1

# backtracking factors tried for a dictionary update before it is rejected
_BACKTRACK = tuple(0.5 ** i for i in range(11))


@dataclass(frozen=True)
class TrainOptions:
    """Solver settings for one training run."""

    ista: SolverOptions = ISTA_DEFAULTS
    cg: SolverOptions = CG_DEFAULTS
    sweep_tol: float = 1e-6

    def to_dict(self):
        return {
            "ista": vars(self.ista).copy(),
            "cg": vars(self.cg).copy(),
            "sweep_tol": self.sweep_tol,
        }


@dataclass
class DbcsModel:
    """Fitted dictionaries, codes and training history.

    ``objective_trace[0]`` is the objective at initialization; each later
    entry is recorded after one completed sweep.
    """

    dictionaries: list
    codes: np.ndarray
    lam: float
    sizes: list
    objective_trace: list
    seed: int = 0
    config: dict = field(default_factory=dict)

    @property
    def n_layers(self):
        return len(self.dictionaries)

    def save(self, directory):
        """Write ``D1.mat ... DM.mat``, ``Z.mat`` and ``manifest.json``."""
        ensure_dir(directory)
        for i, D in enumerate(self.dictionaries, start=1):
            mat_write(D, os.path.join(directory, f"D{i}.mat"))
        mat_write(self.codes, os.path.join(directory, "Z.mat"))
        manifest = {
            "format": "DBCS1",
            "layer_sizes": list(self.sizes),
            "lambda": self.lam,
            "seed": self.seed,
            "objective_trace": list(self.objective_trace),
            "config": self.config,
        }
        with open(os.path.join(directory, "manifest.json"), "w") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, directory):
        with open(os.path.join(directory, "manifest.json")) as fh:
            manifest = json.load(fh)
        sizes = manifest["layer_sizes"]
        dicts = [mat_read(os.path.join(directory, f"D{i}.mat"))
                 for i in range(1, len(sizes))]
        Z = mat_read(os.path.join(directory, "Z.mat"))
        return cls(dicts, Z, manifest["lambda"], sizes, manifest["objective_trace"],
                   manifest.get("seed", 0), manifest.get("config", {}))


def objective(dicts, Z, Y, A, lam, ridge=0.0):
    """``||Y - A D_1...D_M Z||_F^2 + lam ||Z||_1 (+ ridge sum ||D_i||_F^2)``.

    ``A`` may be a :class:`MeasurementOperator`, a dense array, or ``None``
    for the identity.
    """
    Z = as_matrix(Z, "Z")
    Y = as_matrix(Y, "Y")
    X = chain_product(list(dicts) + [Z])
    if isinstance(A, MeasurementOperator):
        AX = A.apply(X)
    elif A is None:
        AX = X
    else:
        A = as_matrix(A, "A")
        if A.shape[1] != X.shape[0]:
            raise DimensionMismatchError(f"A{A.shape} cannot act on {X.shape[0]} rows")
        AX = A @ X
    if AX.shape != Y.shape:
        raise DimensionMismatchError(f"model produces {AX.shape}, Y is {Y.shape}")
    r = Y - AX
    value = float(np.vdot(r, r) + lam * np.abs(Z).sum())
    if ridge:
        value += ridge * sum(float(np.vdot(D, D)) for D in dicts)
    return value


def normalize_with_compensation(dicts, Z, rng, start=0):
    """Normalize dictionary columns, pushing scale into the downstream factor.

    Layers are processed in order from ``start``.  The column norms of
    ``D_i`` multiply the rows of ``D_{i+1}`` (or of ``Z`` for the last layer),
    so the product ``D_1 ... D_M Z`` is unchanged up to rounding.  Dead
    atoms are re-drawn and their downstream rows zeroed.
    """
    dicts = list(dicts)
    Z = Z.copy()
    for i in range(start, len(dicts)):
        dicts[i], scales = normalize_columns(dicts[i], rng)
        if i + 1 < len(dicts):
            dicts[i + 1] = dicts[i + 1] * scales[:, None]
        else:
            Z *= scales[:, None]
    return dicts, Z


def reconstruct(model):
    """Signals ``D_1 ... D_M Z`` for a fitted model."""
    return chain_product(list(model.dictionaries) + [model.codes])


def default_lambda(G, Y):
    """``LAMBDA_FRACTION * max |G^T Y|``."""
    return float(LAMBDA_FRACTION * np.abs(G.T @ Y).max())


def initial_dictionaries(sizes, rng):
    """Gaussian dictionaries with unit-norm columns, one per layer."""
    rng = as_rng(rng)
    return [normalize_columns(gaussian_matrix(sizes[i], sizes[i + 1], rng), rng)[0]
            for i in range(len(sizes) - 1)]


def initial_lambda(Y, A, sizes, rng):
    """Default lambda a trainer seeded with ``rng`` would pick for ``Y``."""
    dicts = initial_dictionaries(sizes, as_rng(rng).spawn(0))
    return default_lambda(A.apply(chain_product(dicts)), as_matrix(Y, "Y"))


def _validate_fit_inputs(Y, A, sizes):
    Y = as_matrix(Y, "Y")
    if Y.size == 0 or Y.shape[1] == 0:
        raise ValueError("Y is empty")
    sizes = [int(s) for s in sizes]
    if len(sizes) < 2 or min(sizes) < 1:
        raise ValueError(f"layer sizes must be [n, k1, ..., kM] with M >= 1, got {sizes}")
    if A.n != sizes[0]:
        raise DimensionMismatchError(f"sizes[0]={sizes[0]} but operator has n={A.n}")
    if Y.shape[0] != A.m:
        raise DimensionMismatchError(f"Y has {Y.shape[0]} rows, operator produces {A.m}")
    return Y, sizes


def _alternate(Y, A, sizes, lam, sweeps, opts, rng, normalize=True, ridge=0.0):
    """Shared alternating-minimization loop behind every trainer."""
    if sweeps < 1:
        raise ValueError("sweeps must be >= 1")
    if ridge and normalize:
        raise ValueError("ridge penalty and column normalization are exclusive")
    rng = as_rng(rng)
    init_rng, atom_rng = rng.spawn(0), rng.spawn(1)
    M = len(sizes) - 1
    N = Y.shape[1]

    dicts = initial_dictionaries(sizes, init_rng)
    Z = np.zeros((sizes[-1], N))

    if lam is None:
        lam = default_lambda(A.apply(chain_product(dicts)), Y)
    lam = float(lam)
    if lam < 0:
        raise ValueError("lambda must be nonnegative")

    def total(ds, z):
        value = objective(ds, z, Y, A, lam, ridge)
        if not np.isfinite(value):
            raise NonFiniteObjectiveError("non-finite training objective")
        return value

    F = total(dicts, Z)
    trace = [F]
    for sweep in range(sweeps):
        # the first sweep starts from Z = 0, where the data term ignores the
        # dictionaries and a ridge penalty alone would collapse them to zero
        for j in range(0 if sweep == 0 else M):
            L = A.apply(chain_product(dicts[:j], sizes[0]))
            R = chain_product(dicts[j + 1:] + [Z])
            D_ls = sandwich_lsq(L, R, Y, dicts[j], opts.cg, ridge=ridge)
            if not normalize:
                dicts[j] = D_ls
                F = total(dicts, Z)
                continue
            # a least-squares step followed by renormalization can raise the
            # l1 term; back off toward the current (feasible) point if so
            D_old = dicts[j]
            for t in _BACKTRACK:
                cand = list(dicts)
                cand[j] = D_ls if t == 1.0 else D_old + t * (D_ls - D_old)
                cand, Z_c = normalize_with_compensation(cand, Z, atom_rng, start=j)
                F_c = total(cand, Z_c)
                if F_c <= F:
                    dicts, Z, F = cand, Z_c, F_c
                    break

        G = A.apply(chain_product(dicts))
        Z, _ = ista(LinearMap.from_matrix(G), Y, lam, Z, opts.ista)
        if normalize:
            dicts, Z = normalize_with_compensation(dicts, Z, atom_rng)
        F_prev, F = F, total(dicts, Z)
        trace.append(F)
        if abs(F_prev - F) <= opts.sweep_tol * max(F_prev, np.finfo(float).tiny):
            break
    return dicts, Z, lam, trace


def dbcs_fit(Y, A, sizes, lam=None, sweeps=20, opts=None, rng=None):
    """Learn ``D_1 ... D_M`` and ``Z`` from measurements ``Y = A X``.

    Parameters
    ----------
    Y : ndarray, shape (m, N)
        Measurements, one sample per column.
    A : MeasurementOperator
    sizes : list of int
        ``[n, k1, ..., kM]``; ``D_i`` has shape ``sizes[i-1] x sizes[i]``.
    lam : float, optional
        l1 weight; defaults to ``0.1 * max |G^T Y|`` at initialization where
        ``G = A D_1 ... D_M``.
    sweeps : int
        Maximum number of alternating sweeps.
    opts : TrainOptions, optional
    rng : Rng or int, optional
        Drives dictionary initialization and dead-atom replacement.

    Returns
    -------
    DbcsModel
    """
    Y, sizes = _validate_fit_inputs(Y, A, sizes)
    opts = opts or TrainOptions()
    rng = as_rng(rng)
    dicts, Z, lam, trace = _alternate(Y, A, sizes, lam, sweeps, opts, rng)
    config = {"method": "dbcs", "sweeps": sweeps, "options": opts.to_dict(),
              "operator": A.to_dict()}
    return DbcsModel(dicts, Z, lam, sizes, trace, rng.seed, config)


def encode(A, dicts, Y_new, lam, opts=ISTA_DEFAULTS):
    """Codes for new measurements with the dictionaries held fixed.

    Every column is solved by its own ISTA run started from zero, so the
    result for a column does not depend on which other columns are
    encoded alongside it.
    """
    Y_new = as_matrix(Y_new, "Y_new")
    if Y_new.shape[0] != A.m:
        raise DimensionMismatchError(f"Y_new has {Y_new.shape[0]} rows, operator produces {A.m}")
    G = A.apply(chain_product(list(dicts)))
    linmap = LinearMap.from_matrix(G)
    sigma = spectral_norm_estimate(linmap, None, opts.power_iters)
    lipschitz = 2.0 * sigma * sigma
    Z = np.zeros((G.shape[1], Y_new.shape[1]))
    for j in range(Y_new.shape[1]):
        Z[:, j:j + 1], _ = ista(linmap, Y_new[:, j:j + 1], lam, None, opts,
                                lipschitz=lipschitz)
    return Z


def bcs_fit(Y, A, k, lam=None, mu=0.0, sweeps=20, opts=None, rng=None):
    """Shallow blind compressed sensing with a Frobenius penalty on ``D``.

    Minimizes ``||Y - A D Z||_F^2 + lam ||Z||_1 + mu ||D||_F^2``; the
    dictionary is *not* normalized during training.

    Returns
    -------
    D : ndarray, shape (n, k)
    Z : ndarray, shape (k, N)
    trace : list of float
    """
    sizes = [A.n, int(k)]
    Y, sizes = _validate_fit_inputs(Y, A, sizes)
    if mu < 0:
        raise ValueError("mu must be nonnegative")
    dicts, Z, _, trace = _alternate(Y, A, sizes, lam, sweeps, opts or TrainOptions(),
                                    rng, normalize=False, ridge=float(mu))
    return dicts[0], Z, trace


def dl_fit(X, k, lam=None, sweeps=20, opts=None, rng=None, normalize=True):
    """Single-layer sparse dictionary learning on fully sampled signals.

    Identical to :func:`dbcs_fit` with an identity operator and one layer.
    ``normalize=False`` drops the unit-norm step (used to compare against
    :func:`bcs_fit` with ``mu = 0``).
    """
    X = as_matrix(X, "X")
    A = build_operator("identity", X.shape[0], X.shape[0])
    if normalize:
        model = dbcs_fit(X, A, [X.shape[0], k], lam, sweeps, opts, rng)
        return model.dictionaries[0], model.codes, model.objective_trace
    X, sizes = _validate_fit_inputs(X, A, [X.shape[0], k])
    dicts, Z, _, trace = _alternate(X, A, sizes, lam, sweeps, opts or TrainOptions(),
                                    rng, normalize=False)
    return dicts[0], Z, trace
