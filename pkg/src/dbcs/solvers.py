"""Iterative kernels: soft thresholding, power iteration, ISTA and CG.

All objectives use the un-halved data term ``||Y - G Z||_F^2``, so the
smooth gradient is ``2 G^T (G Z - Y)`` and its Lipschitz constant is
``2 sigma_max(G)^2``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .core import Rng, as_matrix
from .exceptions import DimensionMismatchError, NonFiniteObjectiveError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SolverOptions:
    """Iteration controls for :func:`ista` and :func:`sandwich_lsq`.

    ``tol`` is a relative-change threshold on the objective for ISTA and a
    relative residual threshold for CG.  ``safety`` shrinks the ISTA step
    below ``1 / L`` with ``L = 2 sigma^2``.
    """

    max_iters: int = 100
    tol: float = 1e-6
    safety: float = 0.95
    power_iters: int = 50

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.tol < 0:
            raise ValueError("tol must be >= 0")
        if not 0 < self.safety <= 1:
            raise ValueError("safety must lie in (0, 1]")
        if self.power_iters < 1:
            raise ValueError("power_iters must be >= 1")


ISTA_DEFAULTS = SolverOptions(max_iters=100)
CG_DEFAULTS = SolverOptions(max_iters=50)


class LinearMap:
    """A linear action on matrices given by forward/adjoint callables.

    ``forward`` maps ``(in_dim, N)`` arrays to ``(out_dim, N)`` arrays and
    ``adjoint`` goes back.
    """

    def __init__(self, forward, adjoint, in_dim, out_dim):
        self.forward = forward
        self.adjoint = adjoint
        self.in_dim = int(in_dim)
        self.out_dim = int(out_dim)

    @classmethod
    def from_matrix(cls, M):
        M = as_matrix(M, "M")
        Mt = np.ascontiguousarray(M.T)
        return cls(lambda x: M @ x, lambda y: Mt @ y, M.shape[1], M.shape[0])

    @classmethod
    def from_operator(cls, op, dictionary=None):
        """``A`` or the composite ``A D`` without materializing ``A D``."""
        if dictionary is None:
            return cls(op.apply, op.adjoint, op.n, op.m)
        D = as_matrix(dictionary, "dictionary")
        if D.shape[0] != op.n:
            raise DimensionMismatchError(
                f"dictionary has {D.shape[0]} rows, operator expects {op.n}")
        Dt = np.ascontiguousarray(D.T)
        return cls(lambda z: op.apply(D @ z), lambda y: Dt @ op.adjoint(y),
                   D.shape[1], op.m)

    def __repr__(self):
        return f"LinearMap({self.out_dim}x{self.in_dim})"


def soft_threshold(x, tau):
    """Elementwise ``sign(x) * max(|x| - tau, 0)``."""
    if np.any(np.asarray(tau) < 0):
        raise ValueError("threshold must be nonnegative")
    x = np.asarray(x, dtype=np.float64)
    out = np.sign(x) * np.maximum(np.abs(x) - tau, 0.0)
    return out if out.ndim else float(out)


def spectral_norm_estimate(linmap, rng=None, iters=50):
    """Largest singular value of ``linmap`` by power iteration on ``A^T A``."""
    if iters < 1:
        raise ValueError("iters must be >= 1")
    rng = Rng(0) if rng is None else rng
    x = rng.normal((linmap.in_dim, 1))
    x /= np.linalg.norm(x)
    for _ in range(iters):
        y = linmap.adjoint(linmap.forward(x))
        nrm = np.linalg.norm(y)
        if nrm == 0.0:
            return 0.0
        x = y / nrm
    return float(np.linalg.norm(linmap.forward(x)))


def _lasso_objective(linmap, Y, Z, lam):
    r = linmap.forward(Z) - Y
    return float(np.vdot(r, r) + lam * np.abs(Z).sum())


def ista(linmap, Y, lam, Z0=None, opts=ISTA_DEFAULTS, lipschitz=None, rng=None):
    """Minimize ``||Y - G Z||_F^2 + lam ||Z||_1`` by proximal gradient.

    Parameters
    ----------
    linmap : LinearMap
        The operator ``G``.
    Y : ndarray, shape (out_dim, N)
    lam : float
        Nonnegative l1 weight.
    Z0 : ndarray, shape (in_dim, N), optional
        Warm start; zeros when omitted.
    opts : SolverOptions
    lipschitz : float, optional
        Precomputed ``2 sigma_max(G)^2``; estimated by power iteration when
        omitted.

    Returns
    -------
    Z : ndarray
    trace : list of float
        Objective at ``Z0`` followed by one value per iteration; never
        increases.

    Notes
    -----
    The step is ``safety / L``.  Power iteration can underestimate
    ``sigma_max``; if a step ever raises the objective it is discarded and
    ``L`` doubled, so the trace stays monotone.
    """
    Y = as_matrix(Y, "Y")
    if lam < 0:
        raise ValueError("lam must be nonnegative")
    if Y.shape[0] != linmap.out_dim:
        raise DimensionMismatchError(
            f"Y has {Y.shape[0]} rows, map produces {linmap.out_dim}")
    if Z0 is None:
        Z = np.zeros((linmap.in_dim, Y.shape[1]))
    else:
        Z = as_matrix(Z0, "Z0").copy()
        if Z.shape != (linmap.in_dim, Y.shape[1]):
            raise DimensionMismatchError(
                f"Z0 has shape {Z.shape}, expected {(linmap.in_dim, Y.shape[1])}")

    if lipschitz is None:
        sigma = spectral_norm_estimate(linmap, rng, opts.power_iters)
        lipschitz = 2.0 * sigma * sigma
    F = _lasso_objective(linmap, Y, Z, lam)
    if not np.isfinite(F):
        raise NonFiniteObjectiveError("non-finite objective at ISTA start")
    trace = [F]
    if lipschitz == 0.0:
        # G = 0: only the l1 term depends on Z
        if lam > 0:
            Z = np.zeros_like(Z)
            trace.append(_lasso_objective(linmap, Y, Z, lam))
        return Z, trace

    L = lipschitz / opts.safety
    for it in range(opts.max_iters):
        grad = 2.0 * linmap.adjoint(linmap.forward(Z) - Y)
        while True:
            Z_new = soft_threshold(Z - grad / L, lam / L)
            F_new = _lasso_objective(linmap, Y, Z_new, lam)
            if not np.isfinite(F_new):
                raise NonFiniteObjectiveError(f"non-finite objective at ISTA iteration {it}")
            if F_new <= F:
                break
            logger.debug("ISTA step raised objective; doubling L=%g", L)
            L *= 2.0
            if L > 1024.0 * lipschitz / opts.safety:
                # stalled at rounding level
                Z_new, F_new = Z, F
                break
        Z, F_prev, F = Z_new, F, F_new
        trace.append(F)
        if abs(F_prev - F) <= opts.tol * max(abs(F_prev), np.finfo(float).tiny):
            break
    return Z, trace


def sandwich_lsq(L, R, Y, D0, opts=CG_DEFAULTS, ridge=0.0):
    """Minimize ``||Y - L D R||_F^2 + ridge ||D||_F^2`` over ``D``.

    Conjugate gradient on the normal equations
    ``L^T L D R R^T + ridge D = L^T Y R^T``, warm-started at ``D0``.  Stops
    when the normal-equation residual drops to ``tol * ||L^T Y R^T||_F`` or
    after ``max_iters`` steps.  Never returns a point worse than ``D0``.
    """
    L = as_matrix(L, "L")
    R = as_matrix(R, "R")
    Y = as_matrix(Y, "Y")
    D0 = as_matrix(D0, "D0")
    p, q = L.shape
    r, s = R.shape
    if Y.shape != (p, s) or D0.shape != (q, r):
        raise DimensionMismatchError(
            f"incompatible shapes L{L.shape} D0{D0.shape} R{R.shape} Y{Y.shape}")
    if ridge < 0:
        raise ValueError("ridge must be nonnegative")

    LtL = L.T @ L
    RRt = R @ R.T
    B = L.T @ Y @ R.T

    def normal_map(D):
        out = LtL @ D @ RRt
        if ridge:
            out = out + ridge * D
        return out

    def objective(D):
        res = Y - L @ D @ R
        return float(np.vdot(res, res) + ridge * np.vdot(D, D))

    D = D0.copy()
    res = B - normal_map(D)
    rs = float(np.vdot(res, res))
    stop = opts.tol * float(np.linalg.norm(B))
    if np.sqrt(rs) <= stop:
        return D
    P = res.copy()
    for it in range(opts.max_iters):
        AP = normal_map(P)
        pAp = float(np.vdot(P, AP))
        if not pAp > 0.0:
            break
        alpha = rs / pAp
        D += alpha * P
        res -= alpha * AP
        rs_new = float(np.vdot(res, res))
        if not np.all(np.isfinite(D)):
            raise NonFiniteObjectiveError(f"non-finite CG iterate at iteration {it}")
        if np.sqrt(rs_new) <= stop or rs_new == 0.0:
            break
        P = res + (rs_new / rs) * P
        rs = rs_new

    if objective(D) > objective(D0):
        return D0.copy()
    return D
