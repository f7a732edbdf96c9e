"""Penalised least squares over the RKHS, solved with the representer theorem.

The estimate is ``beta_hat = sum_i alpha_i (T X_i)`` with
``alpha = (K + n lam I)^{-1} y`` and ``K_ij = <T X_i, X_j>``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .errors import DegenerateInput, InvalidArgument, NumericalFailure
from .functions import (
    GridFunction,
    basis_matrix,
    check_same_grid,
    inner_product,
    l2_distance,
    l2_norm,
)
from .kernels import kernel_matrix
from .simulate import CovarianceModel, CurveSet, Dataset, apply_C

log = logging.getLogger(__name__)

RESIDUAL_TOLERANCE = 1e-8


@dataclass(frozen=True)
class FitResult:
    alpha: np.ndarray = field(repr=False)
    lam: float
    beta_hat: GridFunction = field(repr=False)
    gram_cond: float
    residual: float
    solver: str = "cholesky"

    def summary(self) -> dict:
        return {"lambda": self.lam, "residual": self.residual,
                "gram_cond": self.gram_cond, "solver": self.solver,
                "n": int(self.alpha.size)}


def gram_matrix(curves: CurveSet, kernel, grid=None, kmat=None) -> np.ndarray:
    """K_ij = sum_{p,q} w_p w_q k(x_p, x_q) X_i(x_p) X_j(x_q)."""
    if grid is not None:
        check_same_grid(grid, curves.grid)
    if kmat is None:
        kmat = kernel_matrix(kernel, curves.grid)
    G = (curves.values * curves.grid.weights).T
    K = G.T @ (kmat @ G)
    return 0.5 * (K + K.T)


def _solve_spd(A: np.ndarray, y: np.ndarray):
    """Cholesky solve with least-squares fallback; returns (x, rcond, solver)."""
    try:
        factor = sla.cho_factor(A, lower=True, check_finite=True)
    except (np.linalg.LinAlgError, ValueError) as exc:
        log.warning("Cholesky failed (%s); falling back to least squares", exc)
    else:
        x = sla.cho_solve(factor, y, check_finite=False)
        anorm = np.abs(A).sum(axis=0).max()
        rcond, info = sla.lapack.dpocon(factor[0], anorm, uplo="L")
        return x, (rcond if info == 0 else np.nan), "cholesky"
    try:
        x, *_ = np.linalg.lstsq(A, y, rcond=None)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise NumericalFailure(f"least-squares fallback failed: {exc}") from exc
    return x, 1.0 / np.linalg.cond(A), "lstsq"


def fit(dataset: Dataset, kernel, lam: float, *, kmat=None) -> FitResult:
    """Representer solution of the penalised least-squares problem."""
    if not lam > 0:
        raise InvalidArgument(f"penalty must be positive, got {lam}")
    curves, y = dataset.curves, dataset.responses
    n = len(curves)
    if kmat is None:
        kmat = kernel_matrix(kernel, curves.grid)
    K = gram_matrix(curves, kernel, kmat=kmat)
    A = K + n * lam * np.eye(n)
    if not np.all(np.isfinite(A)) or not np.all(np.isfinite(y)):
        raise NumericalFailure("non-finite entries in the linear system")
    alpha, rcond, solver = _solve_spd(A, y)
    if not np.all(np.isfinite(alpha)):
        raise NumericalFailure("linear solve produced non-finite coefficients")
    residual = float(np.linalg.norm(A @ alpha - y))
    ynorm = float(np.linalg.norm(y))
    if residual > RESIDUAL_TOLERANCE * ynorm:
        raise NumericalFailure(
            f"solve residual {residual:.3e} exceeds {RESIDUAL_TOLERANCE:g} * ||y||"
        )
    grid = curves.grid
    beta = kmat @ (grid.weights * (curves.values.T @ alpha))
    cond = float(1.0 / rcond) if rcond and np.isfinite(rcond) else float("inf")
    return FitResult(alpha, float(lam), GridFunction(grid, beta), cond, residual, solver)


def reconstruct(curves: CurveSet, kernel, alpha, kmat=None) -> GridFunction:
    """sum_i alpha_i (T X_i), computed one curve at a time."""
    if kmat is None:
        kmat = kernel_matrix(kernel, curves.grid)
    w = curves.grid.weights
    total = np.zeros(curves.grid.m)
    for a_i, x_i in zip(alpha, curves.values):
        total += a_i * (kmat @ (w * x_i))
    return GridFunction(curves.grid, total)


def predict(result: FitResult, x_new: GridFunction) -> float:
    return inner_product(x_new, result.beta_hat)


def select_lambda(dataset: Dataset, kernel, lambdas, holdout: float = 0.2,
                  seed=0) -> tuple[float, dict]:
    """Grid search on a random hold-out split (heuristic, not a theory schedule).

    Returns the penalty minimising the held-out mean squared residual and the
    per-penalty scores.
    """
    n = dataset.n
    n_out = int(round(holdout * n))
    if n_out < 1 or n_out >= n:
        raise InvalidArgument("hold-out split leaves an empty side")
    perm = np.random.default_rng(seed).permutation(n)
    test, train = perm[:n_out], perm[n_out:]
    train_set = Dataset(CurveSet(dataset.grid, dataset.curves.values[train]),
                        dataset.responses[train])
    test_curves = CurveSet(dataset.grid, dataset.curves.values[test])
    kmat = kernel_matrix(kernel, dataset.grid)
    scores = {}
    for lam in lambdas:
        res = fit(train_set, kernel, float(lam), kmat=kmat)
        pred = test_curves.inner(res.beta_hat)
        scores[float(lam)] = float(np.mean((dataset.responses[test] - pred) ** 2))
    best = min(scores, key=scores.get)
    return best, scores


# ---------------------------------------------------------------------------
# Error metrics
# ---------------------------------------------------------------------------

def estimation_error(beta_hat: GridFunction, beta_ref: GridFunction) -> float:
    return l2_distance(beta_hat, beta_ref)


def direction_error(beta_hat: GridFunction, beta_ref: GridFunction) -> float:
    """Sign- and scale-free distance between the normalised functions."""
    check_same_grid(beta_hat.grid, beta_ref.grid)
    nh, nr = l2_norm(beta_hat), l2_norm(beta_ref)
    if nh == 0 or nr == 0:
        raise DegenerateInput("direction is undefined for a zero function")
    u, v = beta_hat / nh, beta_ref / nr
    return min(l2_distance(u, v), l2_distance(u, -v))


def prediction_error(beta_hat: GridFunction, beta_ref: GridFunction,
                     cov: CovarianceModel) -> float:
    """||C^(1/2) (beta_hat - beta_ref)|| for the truncated covariance."""
    check_same_grid(beta_hat.grid, beta_ref.grid)
    d = beta_hat.values - beta_ref.values
    psi = basis_matrix(cov.basis, cov.M, beta_hat.grid)
    coeffs = psi @ (beta_hat.grid.weights * d)
    return float(np.sqrt(np.sum(cov.eigenvalues * coeffs**2)))


@dataclass(frozen=True)
class SteinCheck:
    cosine_similarity: float
    ratio_estimate: float


def stein_check(dataset: Dataset, beta_ref: GridFunction,
                cov: CovarianceModel) -> SteinCheck:
    """Compare R_hat = (1/n) sum Y_i X_i with C beta_ref."""
    if dataset.n < 2:
        raise InvalidArgument("stein_check needs at least two observations")
    check_same_grid(dataset.grid, beta_ref.grid)
    r_hat = GridFunction(dataset.grid, dataset.responses @ dataset.curves.values / dataset.n)
    c_beta = apply_C(cov, beta_ref)
    cb_sq = inner_product(c_beta, c_beta)
    if not cb_sq > 0:
        raise DegenerateInput("C beta_ref vanishes; the Stein direction is undefined")
    cross = inner_product(r_hat, c_beta)
    r_norm = l2_norm(r_hat)
    if r_norm == 0:
        raise DegenerateInput("empirical cross-covariance vanishes")
    return SteinCheck(float(cross / (r_norm * np.sqrt(cb_sq))), float(cross / cb_sq))
