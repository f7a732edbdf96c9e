"""Gaussian-process covariates and single-index responses.

Curves are drawn from a truncated Karhunen-Loeve expansion
``X = sum_m sqrt(b_m) z_m psi_m`` and responses follow
``Y = g(<X, beta*>) + sigma * eps`` with standard normal ``eps``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import DependencyMissing, IncompatibleGrids, InvalidArgument
from .functions import (
    COSINE,
    HAAR,
    SINE_HALF_INTEGER,
    BasisFamily,
    Grid,
    GridFunction,
    basis_from_name,
    basis_matrix,
    check_same_grid,
    synthesize,
)

DEFAULT_COV_TRUNCATION = 50
DEFAULT_H_DECAY = 0.55


# ---------------------------------------------------------------------------
# Covariance models
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CovarianceModel:
    basis: BasisFamily
    eigenvalues: np.ndarray = field(repr=False)
    decay_exponent: float | None = None
    name: str = "custom"

    def __post_init__(self):
        b = np.array(self.eigenvalues, dtype=float).ravel()
        if b.size == 0 or np.any(b <= 0) or not np.all(np.isfinite(b)):
            raise InvalidArgument("covariance eigenvalues must be positive and finite")
        b.flags.writeable = False
        object.__setattr__(self, "eigenvalues", b)

    @property
    def M(self) -> int:
        return self.eigenvalues.size

    @property
    def trace(self) -> float:
        return float(np.sum(self.eigenvalues))

    def describe(self) -> dict:
        out = {"name": self.name, "M": self.M, **self.basis.to_dict()}
        if self.decay_exponent is not None:
            out["c"] = self.decay_exponent
        return out


def brownian_covariance(M: int = DEFAULT_COV_TRUNCATION) -> CovarianceModel:
    """Standard Brownian motion: b_m = 1 / (pi^2 (m - 1/2)^2)."""
    if int(M) != M or M < 1:
        raise InvalidArgument(f"truncation M must be a positive integer, got {M}")
    m = np.arange(1, int(M) + 1, dtype=float)
    return CovarianceModel(SINE_HALF_INTEGER, 1.0 / (np.pi**2 * (m - 0.5) ** 2),
                           2.0, "brownian")


def power_law_covariance(c: float, M: int = DEFAULT_COV_TRUNCATION,
                         basis: BasisFamily = COSINE) -> CovarianceModel:
    if not c > 1:
        raise InvalidArgument(f"decay exponent c must exceed 1 (trace class), got {c}")
    if int(M) != M or M < 1:
        raise InvalidArgument(f"truncation M must be a positive integer, got {M}")
    m = np.arange(1, int(M) + 1, dtype=float)
    return CovarianceModel(basis, m ** (-float(c)), float(c), "power_law")


def covariance_from_config(spec: dict) -> CovarianceModel:
    """Build a covariance from ``{type, c, M, a, b, basis}``."""
    kind = spec.get("type", "power_law")
    M = int(spec.get("M", DEFAULT_COV_TRUNCATION))
    c = float(spec.get("c", 2.0))
    if kind == "brownian":
        return brownian_covariance(M)
    if kind == "power_law":
        basis = basis_from_name(spec.get("basis", "cosine"),
                                spec.get("a", 1.0), spec.get("b", -0.5))
        return power_law_covariance(c, M, basis)
    if kind == "fourier_shifted":
        family = BasisFamily("fourier-shifted", float(spec.get("a", 1.0)),
                             float(spec.get("b", -0.5)))
        return power_law_covariance(c, M, family)
    if kind == "haar":
        return power_law_covariance(c, M, HAAR)
    raise InvalidArgument(f"unknown covariance type {kind!r}")


def apply_C(cov: CovarianceModel, f: GridFunction) -> GridFunction:
    """Truncated covariance operator applied spectrally."""
    psi = basis_matrix(cov.basis, cov.M, f.grid)
    coeffs = psi @ (f.grid.weights * f.values)
    return GridFunction(f.grid, (cov.eigenvalues * coeffs) @ psi)


def index_variance(cov: CovarianceModel, beta: GridFunction) -> float:
    """Var <X, beta> = sum_m b_m <beta, psi_m>^2."""
    psi = basis_matrix(cov.basis, cov.M, beta.grid)
    coeffs = psi @ (beta.grid.weights * beta.values)
    return float(np.sum(cov.eigenvalues * coeffs**2))


# ---------------------------------------------------------------------------
# Links
# ---------------------------------------------------------------------------

LINK_KINDS = ("identity", "cubic", "sine", "linear-plus-sine")


@dataclass(frozen=True)
class LinkSpec:
    kind: str

    def __post_init__(self):
        kind = self.kind.replace("_", "-")
        if kind not in LINK_KINDS:
            raise InvalidArgument(f"unknown link {self.kind!r}; expected one of {LINK_KINDS}")
        object.__setattr__(self, "kind", kind)

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        if self.kind == "identity":
            return u.copy()
        if self.kind == "cubic":
            return u**3
        if self.kind == "sine":
            return np.sin(u)
        return u + np.sin(u)

    def derivative(self, u):
        u = np.asarray(u, dtype=float)
        if self.kind == "identity":
            return np.ones_like(u)
        if self.kind == "cubic":
            return 3 * u**2
        if self.kind == "sine":
            return np.cos(u)
        return 1 + np.cos(u)

    def stein_constant(self, variance: float) -> float:
        """E[g'(Z)] for Z ~ N(0, variance)."""
        if self.kind == "identity":
            return 1.0
        if self.kind == "cubic":
            return 3.0 * variance
        if self.kind == "sine":
            return float(np.exp(-variance / 2))
        return 1.0 + float(np.exp(-variance / 2))


def stein_constant_mc(link: LinkSpec, variance: float, n: int = 10**6,
                      seed=0) -> float:
    """Monte Carlo estimate of E[g'(Z)], Z ~ N(0, variance)."""
    z = np.random.default_rng(seed).standard_normal(n) * np.sqrt(variance)
    return float(np.mean(link.derivative(z)))


# ---------------------------------------------------------------------------
# Samples
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CurveSet:
    """n curves on a shared grid, stored as an (n, m) array."""

    grid: Grid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2 or values.shape[1] != self.grid.m:
            raise IncompatibleGrids(
                f"curves of shape {values.shape} do not match {self.grid!r}"
            )

    def __len__(self):
        return self.values.shape[0]

    def __getitem__(self, i) -> GridFunction:
        return GridFunction(self.grid, self.values[i])

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    def inner(self, f: GridFunction) -> np.ndarray:
        check_same_grid(self.grid, f.grid)
        return self.values @ (self.grid.weights * f.values)

    @classmethod
    def from_functions(cls, funcs) -> CurveSet:
        funcs = list(funcs)
        if not funcs:
            raise InvalidArgument("need at least one curve")
        for f in funcs[1:]:
            check_same_grid(funcs[0].grid, f.grid)
        return cls(funcs[0].grid, np.vstack([f.values for f in funcs]))


@dataclass(frozen=True)
class Dataset:
    curves: CurveSet
    responses: np.ndarray = field(repr=False)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        y = np.asarray(self.responses, dtype=float).ravel()
        if y.size != len(self.curves):
            raise InvalidArgument(f"{len(self.curves)} curves but {y.size} responses")
        object.__setattr__(self, "responses", y)

    @property
    def n(self) -> int:
        return len(self.curves)

    @property
    def grid(self) -> Grid:
        return self.curves.grid


def sample_gp(cov: CovarianceModel, n: int, grid: Grid, seed) -> CurveSet:
    """Draw n curves from the truncated Karhunen-Loeve expansion.

    ``seed`` is anything accepted by ``numpy.random.default_rng``.
    """
    if int(n) != n or n < 1:
        raise InvalidArgument(f"n must be a positive integer, got {n}")
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((int(n), cov.M))
    psi = basis_matrix(cov.basis, cov.M, grid)
    return CurveSet(grid, (z * np.sqrt(cov.eigenvalues)) @ psi)


def generate_response(curves: CurveSet, beta_star: GridFunction, link: LinkSpec,
                      sigma: float, seed) -> np.ndarray:
    if sigma < 0:
        raise InvalidArgument(f"noise level must be nonnegative, got {sigma}")
    index = curves.inner(beta_star)
    y = link(index)
    if sigma > 0:
        y = y + sigma * np.random.default_rng(seed).standard_normal(index.size)
    return y


def varkappa(link: LinkSpec, curves: CurveSet, beta_tilde: GridFunction) -> float:
    """Sample version of E[(g(<X, b>) - <X, b>)^4]."""
    u = curves.inner(beta_tilde)
    return float(np.mean((link(u) - u) ** 4))


def simulate_dataset(cov, beta_star, link, sigma, n, grid, seed) -> Dataset:
    """Curves and responses from independent child streams of ``seed``."""
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    curve_seed, noise_seed = ss.spawn(2)
    curves = sample_gp(cov, n, grid, curve_seed)
    y = generate_response(curves, beta_star, link, sigma, noise_seed)
    meta = {"beta_star": beta_star, "link": link.kind, "sigma": float(sigma),
            "seed": ss.entropy, "covariance": cov.describe()}
    return Dataset(curves, y, meta)


# ---------------------------------------------------------------------------
# True index parameter
# ---------------------------------------------------------------------------

def default_h(size: int, decay: float = DEFAULT_H_DECAY) -> np.ndarray:
    """Unit coefficient sequence h_i proportional to i**-decay."""
    h = np.arange(1, size + 1, dtype=float) ** (-decay)
    return h / np.linalg.norm(h)


def beta_star_coefficients(kernel, cov: CovarianceModel, *, alpha=None, nu=None,
                           h=None, pair=None, decay: float = DEFAULT_H_DECAY):
    """Coefficients of beta* in the kernel basis.

    alpha-form (commutative): beta*_i = mu_i**alpha h_i, so ||T^-alpha beta*|| = ||h||.
    nu-form: beta* = T^(1/2) Lambda^nu h using the matrices of ``pair``.
    """
    if (alpha is None) == (nu is None):
        raise InvalidArgument("give exactly one of alpha or nu")
    if nu is not None:
        if pair is None:
            raise DependencyMissing("the nu-form needs an OperatorPair (build_operator_pair)")
        from .spectral import lambda_matrix, sym_power

        if h is None:
            h = default_h(pair.dim, decay)
        h = np.asarray(h, dtype=float)
        if h.size != pair.dim:
            raise InvalidArgument(f"h has {h.size} entries, pair dimension is {pair.dim}")
        lam_nu = sym_power(lambda_matrix(pair), nu)
        return sym_power(pair.T_mat, 0.5) @ (lam_nu @ h)
    if not 0 < alpha <= 0.5:
        raise InvalidArgument(f"alpha must lie in (0, 1/2], got {alpha}")
    size = min(kernel.M, cov.M) if h is None else np.asarray(h).size
    if size > kernel.M:
        raise InvalidArgument("coefficient sequence longer than kernel truncation")
    if h is None:
        h = default_h(size, decay)
    h = np.asarray(h, dtype=float)
    return kernel.eigenvalues[:size] ** alpha * h


def make_beta_star(kernel, cov: CovarianceModel, grid: Grid, **kwargs) -> GridFunction:
    """beta* on the grid; see :func:`beta_star_coefficients` for the options."""
    coeffs = beta_star_coefficients(kernel, cov, **kwargs)
    return synthesize(coeffs, kernel.basis, grid)


def range_norm(coeffs, kernel, alpha: float) -> float:
    """||T^-alpha f|| for f given by kernel-basis coefficients."""
    coeffs = np.asarray(coeffs, dtype=float)
    mu = kernel.eigenvalues[: coeffs.size]
    return float(np.sqrt(np.sum(coeffs**2 * mu ** (-2 * alpha))))


# ---------------------------------------------------------------------------
# Export
# ---------------------------------------------------------------------------

def write_curves_csv(curves: CurveSet, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x"] + [f"curve_{i}" for i in range(len(curves))])
        for j, x in enumerate(curves.grid.points):
            writer.writerow([repr(float(x))] + [repr(float(v)) for v in curves.values[:, j]])


def read_curves_csv(path) -> CurveSet:
    from .functions import make_grid

    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    grid = make_grid(data.shape[0])
    if not np.allclose(data[:, 0], grid.points, atol=1e-12):
        raise InvalidArgument(f"{path}: abscissae are not a uniform grid on [0, 1]")
    return CurveSet(grid, data[:, 1:].T.copy())


def write_responses_csv(y, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["response"])
        for v in np.asarray(y, dtype=float):
            writer.writerow([repr(float(v))])


def read_responses_csv(path) -> np.ndarray:
    return np.loadtxt(path, delimiter=",", skiprows=1, ndmin=1)
