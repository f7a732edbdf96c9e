"""Matrix representations of T and C and the diagnostics built from them.

All operators are represented in the (orthonormal) eigenbasis of the kernel,
truncated to a working dimension M. In that basis T is diagonal; C is
diagonal only when the covariance shares the kernel's basis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgument, NumericalFailure
from .functions import (
    BasisFamily,
    _shifted_norm,
    basis_matrix,
    haar_level,
    make_grid,
)
from .kernels import as_spectral
from .simulate import CovarianceModel

NEG_EIG_TOLERANCE = 1e-10
ASYMMETRY_TOLERANCE = 1e-10
DEFAULT_DIM = 100


@dataclass(frozen=True)
class OperatorPair:
    T_mat: np.ndarray = field(repr=False)
    C_mat: np.ndarray = field(repr=False)
    reference_basis: BasisFamily
    commutative: bool = False

    @property
    def dim(self) -> int:
        return self.T_mat.shape[0]

    def commutator_norm(self) -> float:
        return float(np.linalg.norm(self.T_mat @ self.C_mat - self.C_mat @ self.T_mat, 2))


@dataclass(frozen=True)
class ThetaDiagnostics:
    norm: float
    trace: float
    d_lambda: float


@dataclass(frozen=True)
class DiagnosticsReport:
    lam: float
    N_lambda: float
    d_lambda: float
    theta_norm: float
    theta_trace: float
    xi_norm: float
    bias: float
    zeta_slope: float
    dim: int

    def as_row(self) -> dict:
        return {"lambda": self.lam, "N_lambda": self.N_lambda, "d_lambda": self.d_lambda,
                "theta_trace": self.theta_trace, "theta_norm": self.theta_norm,
                "xi_norm": self.xi_norm, "bias": self.bias}


@dataclass(frozen=True)
class AlignmentQuantities:
    eta: np.ndarray = field(repr=False)
    tau: np.ndarray = field(repr=False)
    sup_check: float
    M: int


# ---------------------------------------------------------------------------
# Cross-basis coefficients
# ---------------------------------------------------------------------------

def _sin_integral(u):
    # int_0^1 sin(u pi x) dx
    u = np.asarray(u, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = (1.0 - np.cos(np.pi * u)) / (np.pi * u)
    return np.where(u == 0, 0.0, out)


def _trig_scale(family: BasisFamily, omega):
    if family.kind == "fourier-shifted":
        return 1.0 / _shifted_norm(omega)
    return np.full(np.shape(omega), np.sqrt(2.0))


def _trig_cross(psi: BasisFamily, phi: BasisFamily, M_psi: int, M_phi: int):
    A = psi.frequency(np.arange(1, M_psi + 1))[:, None]
    B = phi.frequency(np.arange(1, M_phi + 1))[None, :]
    psi_sin = psi.kind == "sine-half-integer"
    phi_sin = phi.kind == "sine-half-integer"
    if not psi_sin and not phi_sin:
        raw = 0.5 * (np.sinc(A - B) + np.sinc(A + B))
    elif psi_sin and phi_sin:
        raw = 0.5 * (np.sinc(A - B) - np.sinc(A + B))
    elif psi_sin:
        raw = 0.5 * (_sin_integral(A + B) + _sin_integral(A - B))
    else:
        raw = 0.5 * (_sin_integral(A + B) - _sin_integral(A - B))
    return _trig_scale(psi, A) * _trig_scale(phi, B) * raw


def _haar_trig_cross(phi: BasisFamily, M_psi: int, M_phi: int):
    B = phi.frequency(np.arange(1, M_phi + 1))
    scale = _trig_scale(phi, B)
    safe_B = np.where(B == 0, 1.0, B)

    def prim(x):
        # antiderivative of the unnormalised member at x
        if phi.kind == "sine-half-integer":
            return -np.cos(np.pi * B * x) / (np.pi * safe_B)
        return np.where(B == 0, x, np.sin(np.pi * B * x) / (np.pi * safe_B))

    out = np.empty((M_psi, M_phi))
    for m in range(1, M_psi + 1):
        j, ell = haar_level(m)
        left, mid, right = (ell - 1) / 2**j, (ell - 0.5) / 2**j, ell / 2**j
        piece = 2 * prim(mid) - prim(left) - prim(right)
        out[m - 1] = 2.0 ** (j / 2) * piece * scale
    return out


def cross_coefficients(psi: BasisFamily, phi: BasisFamily, M_psi: int, M_phi: int,
                       method: str = "closed", grid=None) -> np.ndarray:
    """theta[m-1, i-1] = <psi_m, phi_i>, shape (M_psi, M_phi)."""
    if method == "quadrature":
        grid = grid or make_grid(8193)
        P = basis_matrix(psi, M_psi, grid)
        F = basis_matrix(phi, M_phi, grid)
        return (P * grid.weights) @ F.T
    if method != "closed":
        raise InvalidArgument(f"unknown method {method!r}")
    if psi == phi:
        return np.eye(M_psi, M_phi)
    if psi.kind != "haar" and phi.kind != "haar":
        return _trig_cross(psi, phi, M_psi, M_phi)
    if psi.kind == "haar":
        return _haar_trig_cross(phi, M_psi, M_phi)
    return _haar_trig_cross(psi, M_phi, M_psi).T


def theta_mi_fourier(omega: float, i: int) -> float:
    """<cos(omega pi .), cos(i pi .)> for non-integer omega (unnormalised)."""
    if float(omega).is_integer():
        raise InvalidArgument(f"omega must not be an integer, got {omega}")
    w = float(omega)
    return (np.pi * w / (np.pi**2 * w**2 - (i * np.pi) ** 2)
            * np.sin(np.pi * w) * (-1) ** int(i))


# ---------------------------------------------------------------------------
# Operator pair and matrix functions
# ---------------------------------------------------------------------------

def build_operator_pair(kernel, cov: CovarianceModel, M: int | None = None,
                        method: str = "closed") -> OperatorPair:
    kernel = as_spectral(kernel)
    if M is None:
        M = min(kernel.M, cov.M)
    if int(M) != M or M < 1:
        raise InvalidArgument(f"working dimension must be a positive integer, got {M}")
    if M > kernel.M or M > cov.M:
        raise InvalidArgument(
            f"working dimension {M} exceeds a truncation (kernel {kernel.M}, covariance {cov.M})"
        )
    M = int(M)
    T_mat = np.diag(kernel.eigenvalues[:M])
    if cov.basis == kernel.basis:
        C_mat = np.diag(cov.eigenvalues[:M])
        return OperatorPair(T_mat, C_mat, kernel.basis, commutative=True)
    theta = cross_coefficients(cov.basis, kernel.basis, cov.M, M, method=method)
    C_mat = theta.T @ (cov.eigenvalues[:, None] * theta)
    C_mat = 0.5 * (C_mat + C_mat.T)
    return OperatorPair(T_mat, C_mat, kernel.basis, commutative=False)


def _is_diagonal(A: np.ndarray) -> bool:
    return not np.any(A - np.diag(np.diag(A)))


def _clamp(evals: np.ndarray, what: str) -> np.ndarray:
    if np.any(evals < -NEG_EIG_TOLERANCE):
        raise NumericalFailure(f"{what} has eigenvalue {evals.min():.3e} < 0")
    return np.where(evals < 0, 0.0, evals)


def sym_power(A: np.ndarray, p: float) -> np.ndarray:
    """A**p for symmetric PSD A via eigendecomposition."""
    if _is_diagonal(A):
        return np.diag(_clamp(np.diag(A).copy(), "matrix") ** p)
    evals, vecs = np.linalg.eigh(0.5 * (A + A.T))
    evals = _clamp(evals, "matrix")
    out = (vecs * evals**p) @ vecs.T
    return 0.5 * (out + out.T)


def _symmetrize(A: np.ndarray, what: str) -> np.ndarray:
    scale = max(np.abs(A).max(), np.finfo(float).tiny)
    if np.abs(A - A.T).max() > ASYMMETRY_TOLERANCE * scale:
        raise NumericalFailure(f"{what} is not symmetric")
    return 0.5 * (A + A.T)


def _top_eig(A: np.ndarray) -> float:
    return float(np.linalg.eigvalsh(A)[-1])


def lambda_matrix(pair: OperatorPair) -> np.ndarray:
    """T^(1/2) C T^(1/2)."""
    root = sym_power(pair.T_mat, 0.5)
    return _symmetrize(root @ pair.C_mat @ root, "Lambda")


def lambda_eigenvalues(pair_or_matrix) -> np.ndarray:
    L = lambda_matrix(pair_or_matrix) if isinstance(pair_or_matrix, OperatorPair) else pair_or_matrix
    if _is_diagonal(L):
        return np.sort(np.diag(L))[::-1]
    return np.linalg.eigvalsh(L)[::-1]


def effective_dimension(Lambda, lam: float) -> float:
    """trace((Lambda + lam I)^-1 Lambda); accepts a matrix or its eigenvalues."""
    if not lam > 0:
        raise InvalidArgument(f"lambda must be positive, got {lam}")
    L = np.asarray(Lambda, dtype=float)
    zeta = lambda_eigenvalues(L) if L.ndim == 2 else L
    zeta = _clamp(zeta, "Lambda")
    return float(np.sum(zeta / (zeta + lam)))


def effective_dimension_tail(b: float, M: int, lam: float) -> float:
    """Upper estimate of the dropped terms sum_{i > M} i^-b / (i^-b + lam)."""
    return M ** (1.0 - b) / ((b - 1.0) * lam)


def _resolvent_CT(pair: OperatorPair, lam: float) -> np.ndarray:
    return pair.C_mat @ pair.T_mat + lam * np.eye(pair.dim)


def theta_matrix(pair: OperatorPair, alpha: float, lam: float) -> np.ndarray:
    """T^a (CT + lam)^-1 C (TC + lam)^-1 T^a."""
    if not lam > 0:
        raise InvalidArgument(f"lambda must be positive, got {lam}")
    A = _resolvent_CT(pair, lam)
    try:
        left = np.linalg.solve(A, pair.C_mat)            # (CT+l)^-1 C
        middle = np.linalg.solve(A, left.T).T            # ... (TC+l)^-1
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(f"singular resolvent: {exc}") from exc
    Ta = sym_power(pair.T_mat, alpha)
    return _symmetrize(Ta @ middle @ Ta, "Theta")


def theta_diagnostics(pair: OperatorPair, alpha: float, lam: float) -> ThetaDiagnostics:
    if not 0 < alpha <= 0.5:
        raise InvalidArgument(f"alpha must lie in (0, 1/2], got {alpha}")
    Th = theta_matrix(pair, alpha, lam)
    norm = max(_top_eig(Th), 0.0)
    trace = float(np.trace(Th))
    d = trace / norm if norm > 0 else float("nan")
    return ThetaDiagnostics(norm, trace, d)


def bias_lambda(pair: OperatorPair, beta_star_coeffs, lam: float) -> float:
    """||T (CT + lam)^-1 C beta - beta|| in the reference basis."""
    if not lam > 0:
        raise InvalidArgument(f"lambda must be positive, got {lam}")
    beta = np.zeros(pair.dim)
    coeffs = np.asarray(beta_star_coeffs, dtype=float)
    if coeffs.size > pair.dim:
        raise InvalidArgument("beta* has more coefficients than the working dimension")
    beta[: coeffs.size] = coeffs
    approx = pair.T_mat @ np.linalg.solve(_resolvent_CT(pair, lam), pair.C_mat @ beta)
    return float(np.linalg.norm(approx - beta))


def xi_norm(pair: OperatorPair, lam: float) -> float:
    """Top eigenvalue of T (Lambda + lam)^-2 T."""
    if not lam > 0:
        raise InvalidArgument(f"lambda must be positive, got {lam}")
    S = np.linalg.solve(lambda_matrix(pair) + lam * np.eye(pair.dim), pair.T_mat)
    return max(_top_eig(_symmetrize(S.T @ S, "Xi")), 0.0)


def decay_slope(values, first: int = 2, last: int | None = None) -> float:
    """Least-squares slope of log(values[i]) against log(i), 1-based i in [first, last]."""
    v = np.asarray(values, dtype=float)
    last = v.size if last is None else last
    idx = np.arange(first, last + 1)
    sel = v[first - 1:last]
    if np.any(sel <= 0):
        raise NumericalFailure("nonpositive eigenvalues in slope window")
    return float(np.polyfit(np.log(idx), np.log(sel), 1)[0])


def diagnostics(pair: OperatorPair, alpha: float, beta_star_coeffs, lambdas,
                slope_window=(2, 15)) -> list[DiagnosticsReport]:
    L = lambda_matrix(pair)
    zeta = lambda_eigenvalues(L)
    last = min(slope_window[1], pair.dim)
    slope = decay_slope(zeta, slope_window[0], last)
    out = []
    for lam in lambdas:
        th = theta_diagnostics(pair, alpha, lam)
        out.append(DiagnosticsReport(
            lam=float(lam),
            N_lambda=effective_dimension(zeta, lam),
            d_lambda=th.d_lambda,
            theta_norm=th.norm,
            theta_trace=th.trace,
            xi_norm=xi_norm(pair, lam),
            bias=bias_lambda(pair, beta_star_coeffs, lam),
            zeta_slope=slope,
            dim=pair.dim,
        ))
    return out


# ---------------------------------------------------------------------------
# Penalty schedules and rate exponents
# ---------------------------------------------------------------------------

THEOREMS = ("T2", "T3", "T4", "T6", "T7")
_EPS = 1e-12


def _need(params: dict, *names):
    missing = [n for n in names if params.get(n) is None]
    if missing:
        raise InvalidArgument(f"missing parameters: {', '.join(missing)}")
    return [float(params[n]) for n in names]


def _require(cond: bool, message: str):
    if not cond:
        raise InvalidArgument(message)


def _validated(theorem: str, params: dict):
    if theorem not in THEOREMS:
        raise InvalidArgument(f"unknown theorem {theorem!r}; expected one of {THEOREMS}")
    if theorem in ("T2", "T6"):
        t, c, a = _need(params, "t", "c", "alpha")
        _require(t > 1, f"t > 1 violated (t={t})")
        _require(c > 1, f"c > 1 violated (c={c})")
        _require(0 < a <= 0.5, f"alpha in (0, 1/2] violated (alpha={a})")
        return t, c, a
    if theorem == "T3":
        b, nu = _need(params, "b", "nu")
        _require(b > 1, f"b > 1 violated (b={b})")
        _require(0 < nu <= 1, f"nu in (0, 1] violated (nu={nu})")
        return b, nu
    if theorem == "T4":
        t, b, nu = _need(params, "t", "b", "nu")
        _require(t > 1, f"t > 1 violated (t={t})")
        _require(b > 1, f"b > 1 violated (b={b})")
        upper = 0.5 - t / (2 * b)
        _require(0 < nu <= upper + _EPS,
                 f"nu in (0, 1/2 - t/(2b)] = (0, {upper:g}] violated (nu={nu})")
        return t, b, nu
    (b,) = _need(params, "b")
    _require(b > 1, f"b > 1 violated (b={b})")
    return (b,)


def lambda_exponent(theorem: str, **params) -> float:
    """Exponent e of the penalty schedule lam = n**-e."""
    vals = _validated(theorem, params)
    if theorem in ("T2", "T6"):
        t, c, a = vals
        return (t + c) / (1 + c + 2 * t * (1 - a))
    if theorem == "T3":
        b, nu = vals
        return b / (1 + b + 2 * b * nu)
    if theorem == "T4":
        t, b, nu = vals
        return b / (t + b + 2 * b * nu)
    (b,) = vals
    return b / (1 + b)


def lambda_schedule(theorem: str, n: int, multiplier: float = 1.0, **params) -> float:
    if n < 1:
        raise InvalidArgument(f"n must be positive, got {n}")
    return float(multiplier) * float(n) ** (-lambda_exponent(theorem, **params))


def rate_exponent(theorem: str, **params) -> float:
    """Positive exponent r of the error bound n**-r."""
    vals = _validated(theorem, params)
    if theorem == "T2":
        t, c, a = vals
        return a * t / (1 + c + 2 * t * (1 - a))
    if theorem == "T6":
        t, c, a = vals
        return (2 * a * t + c) / (1 + c + 2 * t * (1 - a))
    if theorem == "T3":
        b, nu = vals
        return b * nu / (1 + b + 2 * b * nu)
    if theorem == "T4":
        t, b, nu = vals
        return (b * nu + (t - 1) / 2) / (t + b + 2 * b * nu)
    (b,) = vals
    return b / (1 + b)


def commutative_range_exponent(t: float, c: float, nu: float) -> float:
    """Estimation exponent for commuting T, C when beta* lies in R(T^1/2 Lambda^nu)."""
    return (nu * (t + c) + t / 2) / (2 * nu * (t + c) + 1 + c + t)


# ---------------------------------------------------------------------------
# Alignment quantities and lemma checks
# ---------------------------------------------------------------------------

def alignment_quantities(kernel, cov: CovarianceModel, M: int) -> AlignmentQuantities:
    kernel = as_spectral(kernel)
    if M > kernel.M or M > cov.M:
        raise InvalidArgument(
            f"M={M} exceeds a truncation (kernel {kernel.M}, covariance {cov.M})"
        )
    a = kernel.eigenvalues[:M]
    b = cov.eigenvalues[:M]
    theta = cross_coefficients(cov.basis, kernel.basis, M, M)
    eta = theta.T @ (b[:, None] * theta)
    eta = 0.5 * (eta + eta.T)
    tau = (a[:, None] * eta**2).sum(axis=0)

    pair = build_operator_pair(kernel, cov, M)
    L = lambda_matrix(pair)
    if _is_diagonal(L):
        order = np.argsort(-np.diag(L), kind="stable")
        V = np.eye(M)[:, order]
    else:
        _, V = np.linalg.eigh(L)
        V = V[:, ::-1]
    D = V.T @ (a[:, None] * V)
    sup_check = float(np.max(D**2 / np.outer(a, a)))
    return AlignmentQuantities(eta, tau, sup_check, M)


def sup_bound_lemma(alpha: float, beta: float, lam: float, imax: int = 10**6):
    """(max_i i^-alpha / (i^-beta + lam), lam^((alpha - beta) / beta))."""
    i = np.arange(1, imax + 1, dtype=float)
    lhs = float(np.max(i ** (-alpha) / (i ** (-beta) + lam)))
    return lhs, lam ** ((alpha - beta) / beta)


def sum_bound_lemma(alpha: float, beta: float, gamma: float, lam: float,
                    imax: int = 10**6):
    """Truncated sum_i i^-alpha / (i^-beta + lam)^gamma and its closed-form bound."""
    if not (beta >= alpha > 1 and gamma >= alpha / beta):
        raise InvalidArgument("need beta >= alpha > 1 and gamma >= alpha / beta")
    i = np.arange(1, imax + 1, dtype=float)
    lhs = math.fsum(i ** (-alpha) / (i ** (-beta) + lam) ** gamma)
    integral = (math.pi / alpha) / math.sin(math.pi / alpha)  # int_0^inf dy / (1 + y^alpha)
    rhs = lam ** (-(1 + beta * gamma - alpha) / beta) * 2 ** (1 - alpha / beta) * integral
    return lhs, rhs
