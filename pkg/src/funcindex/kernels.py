"""Reproducing kernels of the hypothesis space.

Two kinds are supported: truncated spectral kernels
``k(x, y) = sum_i a_i phi_i(x) phi_i(y)`` over an orthonormal family, and the
closed-form periodic Sobolev kernel built from the fourth Bernoulli
polynomial.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgument, NumericalFailure
from .functions import (
    COSINE,
    BasisFamily,
    Grid,
    GridFunction,
    basis_from_name,
    basis_matrix,
    basis_values,
)

DEFAULT_TRUNCATION = 200
PSD_TOLERANCE = 1e-8


@dataclass(frozen=True)
class SpectralKernel:
    basis: BasisFamily
    eigenvalues: np.ndarray = field(repr=False)
    decay_exponent: float | None = None

    def __post_init__(self):
        a = np.array(self.eigenvalues, dtype=float).ravel()
        if a.size == 0:
            raise InvalidArgument("spectral kernel needs at least one eigenvalue")
        if np.any(a <= 0) or not np.all(np.isfinite(a)):
            raise InvalidArgument("kernel eigenvalues must be positive and finite")
        if np.any(np.diff(a) > 0):
            raise InvalidArgument("kernel eigenvalues must be non-increasing")
        a.flags.writeable = False
        object.__setattr__(self, "eigenvalues", a)

    @property
    def M(self) -> int:
        return self.eigenvalues.size


@dataclass(frozen=True)
class Bernoulli4Kernel:
    """k(x, y) = -(1/3) [B4(frac(x + y)) + B4(|x - y|)]."""

    kind: str = "bernoulli4"


def bernoulli4(u):
    u = np.asarray(u, dtype=float)
    return u**4 - 2 * u**3 + u**2 - 1.0 / 30.0


def power_law_kernel(t: float, M: int = DEFAULT_TRUNCATION,
                     basis: BasisFamily = COSINE) -> SpectralKernel:
    """Spectral kernel with eigenvalues ``i**-t``, i = 1..M."""
    if not t > 1:
        raise InvalidArgument(f"decay exponent t must exceed 1 (trace class), got {t}")
    if int(M) != M or M < 1:
        raise InvalidArgument(f"truncation M must be a positive integer, got {M}")
    i = np.arange(1, int(M) + 1, dtype=float)
    return SpectralKernel(basis, i ** (-float(t)), float(t))


def bernoulli4_spectral(M: int = DEFAULT_TRUNCATION) -> SpectralKernel:
    """Mercer expansion of the Bernoulli kernel, truncated at M terms.

    The eigenpairs are (1 / (pi k)^4, sqrt(2) cos(2 k pi x)), k >= 1.
    """
    k = np.arange(1, int(M) + 1, dtype=float)
    return SpectralKernel(BasisFamily("fourier-shifted", 2.0, 0.0),
                          1.0 / (np.pi * k) ** 4, 4.0)


def _check_domain(*coords):
    for c in coords:
        c = np.asarray(c, dtype=float)
        if np.any(c < 0) or np.any(c > 1) or not np.all(np.isfinite(c)):
            raise InvalidArgument("kernel arguments must lie in [0, 1]")


def kernel_eval(k, x, y):
    """Evaluate the kernel at scalar (or broadcastable array) arguments."""
    _check_domain(x, y)
    if isinstance(k, Bernoulli4Kernel):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        out = -(bernoulli4(np.mod(x + y, 1.0)) + bernoulli4(np.abs(x - y))) / 3.0
        return float(out) if out.ndim == 0 else out
    if isinstance(k, SpectralKernel):
        idx = np.arange(1, k.M + 1)
        if np.ndim(x) == 0 and np.ndim(y) == 0:
            fx = basis_values(k.basis, idx, [x])[:, 0]
            fy = basis_values(k.basis, idx, [y])[:, 0]
            return float(np.sum(k.eigenvalues * (fx * fy)))
        xb, yb = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
        fx = basis_values(k.basis, idx, xb.ravel())
        fy = basis_values(k.basis, idx, yb.ravel())
        return (k.eigenvalues @ (fx * fy)).reshape(xb.shape)
    raise InvalidArgument(f"unsupported kernel type {type(k).__name__}")


def kernel_matrix(k, grid: Grid) -> np.ndarray:
    """Kernel values k(x_p, x_q) on all grid pairs, exactly symmetric."""
    x = grid.points
    if isinstance(k, SpectralKernel):
        if k.basis.kind != "haar" and abs(k.basis.frequency(k.M)) > grid.m / 2:
            raise InvalidArgument(
                f"truncation M={k.M} aliases on a grid of m={grid.m} "
                "(top frequency must not exceed m/2)"
            )
        phi = basis_matrix(k.basis, k.M, grid)
        values = (phi.T * k.eigenvalues) @ phi
    elif isinstance(k, Bernoulli4Kernel):
        X, Y = np.meshgrid(x, x, indexing="ij")
        values = -(bernoulli4(np.mod(X + Y, 1.0)) + bernoulli4(np.abs(X - Y))) / 3.0
    else:
        raise InvalidArgument(f"unsupported kernel type {type(k).__name__}")
    return 0.5 * (values + values.T)


def apply_T(k, f: GridFunction, kmat: np.ndarray | None = None) -> GridFunction:
    """Integral operator (Tf)(x_j) = sum_l w_l k(x_j, x_l) f(x_l)."""
    if kmat is None:
        kmat = kernel_matrix(k, f.grid)
    return GridFunction(f.grid, kmat @ (f.grid.weights * f.values))


def mercer_decomposition(k, grid: Grid, n_eig: int | None = None):
    """Eigenpairs of the quadrature-discretised integral operator.

    Returns eigenvalues in decreasing order and the matching L2-normalised
    eigenfunctions as rows of an array of grid values.
    """
    sw = np.sqrt(grid.weights)
    sym = sw[:, None] * kernel_matrix(k, grid) * sw[None, :]
    evals, evecs = np.linalg.eigh(sym)
    order = np.argsort(evals)[::-1]
    evals, evecs = evals[order], evecs[:, order]
    if evals[-1] < -PSD_TOLERANCE * max(evals[0], 0.0):
        raise NumericalFailure(
            f"kernel matrix is not PSD: smallest eigenvalue {evals[-1]:.3e}"
        )
    funcs = (evecs / sw[:, None]).T
    if n_eig is not None:
        evals, funcs = evals[:n_eig], funcs[:n_eig]
    return evals, funcs


def kernel_from_config(spec: dict):
    """Build a kernel from ``{type, t, M, basis}``."""
    kind = spec.get("type", "power_law")
    M = int(spec.get("M", DEFAULT_TRUNCATION))
    if kind == "power_law":
        basis = basis_from_name(spec.get("basis", "cosine"),
                                spec.get("a", 1.0), spec.get("b", -0.5))
        return power_law_kernel(float(spec.get("t", 4.0)), M, basis)
    if kind == "bernoulli4":
        return Bernoulli4Kernel()
    if kind == "bernoulli4_spectral":
        return bernoulli4_spectral(M)
    raise InvalidArgument(f"unknown kernel type {kind!r}")


def as_spectral(k, M: int = 100) -> SpectralKernel:
    """Spectral form of a kernel (the Bernoulli kernel via its Mercer series)."""
    if isinstance(k, SpectralKernel):
        return k
    if isinstance(k, Bernoulli4Kernel):
        return bernoulli4_spectral(M)
    raise InvalidArgument(f"no spectral form for {type(k).__name__}")
