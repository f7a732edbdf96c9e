"""Functions on [0, 1] sampled on a uniform grid.

Everything downstream (curves, index functions, eigenfunctions) is carried
as values on a common uniform grid, and L2 geometry is computed with the
composite trapezoid rule.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from .errors import IncompatibleGrids, InvalidArgument

DEFAULT_GRID_SIZE = 512


@dataclass(frozen=True, eq=False)
class Grid:
    """Uniform grid on [0, 1] with trapezoid quadrature weights."""

    points: np.ndarray
    weights: np.ndarray

    @property
    def m(self) -> int:
        return self.points.shape[0]

    def __eq__(self, other):
        if not isinstance(other, Grid):
            return NotImplemented
        return self is other or self.m == other.m

    def __hash__(self):
        return hash(("Grid", self.m))

    def __repr__(self):
        return f"Grid(m={self.m})"


@lru_cache(maxsize=32)
def make_grid(m: int = DEFAULT_GRID_SIZE) -> Grid:
    """Return the uniform grid with ``m`` points and trapezoid weights.

    >>> make_grid(3).weights.tolist()
    [0.25, 0.5, 0.25]
    """
    if int(m) != m or m < 3:
        raise InvalidArgument(f"grid needs m >= 3 points, got {m!r}")
    m = int(m)
    points = np.linspace(0.0, 1.0, m)
    weights = np.full(m, 1.0 / (m - 1))
    weights[0] = weights[-1] = 0.5 / (m - 1)
    points.flags.writeable = False
    weights.flags.writeable = False
    return Grid(points, weights)


def check_same_grid(a: Grid, b: Grid) -> None:
    if a != b:
        raise IncompatibleGrids(f"grid mismatch: {a!r} vs {b!r}")


@dataclass(frozen=True)
class GridFunction:
    """A real function on [0, 1] stored by its values on ``grid``."""

    grid: Grid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.shape != (self.grid.m,):
            raise InvalidArgument(
                f"expected {self.grid.m} values, got shape {values.shape}"
            )
        if not np.all(np.isfinite(values)):
            raise InvalidArgument("GridFunction values must be finite")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    @classmethod
    def from_callable(cls, grid: Grid, func) -> GridFunction:
        return cls(grid, func(grid.points))

    @classmethod
    def zeros(cls, grid: Grid) -> GridFunction:
        return cls(grid, np.zeros(grid.m))

    def _other_values(self, other):
        if isinstance(other, GridFunction):
            check_same_grid(self.grid, other.grid)
            return other.values
        return other

    def __add__(self, other):
        return GridFunction(self.grid, self.values + self._other_values(other))

    __radd__ = __add__

    def __sub__(self, other):
        return GridFunction(self.grid, self.values - self._other_values(other))

    def __rsub__(self, other):
        return GridFunction(self.grid, self._other_values(other) - self.values)

    def __mul__(self, scalar):
        if isinstance(scalar, GridFunction):
            return NotImplemented
        return GridFunction(self.grid, self.values * float(scalar))

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return GridFunction(self.grid, self.values / float(scalar))

    def __neg__(self):
        return GridFunction(self.grid, -self.values)

    def norm(self) -> float:
        return l2_norm(self)

    def to_csv(self, path) -> None:
        write_csv(self, path)


def inner_product(f: GridFunction, g: GridFunction) -> float:
    """Trapezoid approximation of the L2 inner product on [0, 1]."""
    check_same_grid(f.grid, g.grid)
    return float(np.dot(f.grid.weights * f.values, g.values))


def l2_norm(f: GridFunction) -> float:
    return float(np.sqrt(max(np.dot(f.grid.weights * f.values, f.values), 0.0)))


def l2_distance(f: GridFunction, g: GridFunction) -> float:
    check_same_grid(f.grid, g.grid)
    diff = f.values - g.values
    return float(np.sqrt(max(np.dot(f.grid.weights * diff, diff), 0.0)))


# ---------------------------------------------------------------------------
# Basis families
# ---------------------------------------------------------------------------

BASIS_KINDS = ("cosine", "sine-half-integer", "haar", "fourier-shifted")


@dataclass(frozen=True)
class BasisFamily:
    """A named family of L2-normalised functions indexed from 1.

    ``cosine``             sqrt(2) cos(i pi x)
    ``sine-half-integer``  sqrt(2) sin((i - 1/2) pi x)
    ``haar``               Haar wavelets, index ``2**j + l - 1``
    ``fourier-shifted``    cos(w_i pi x) / ||cos(w_i pi .)||, w_i = a*i + b

    The fourier-shifted family is orthonormal only for special (a, b), e.g.
    the default half-integer frequencies or integer-valued frequencies.
    """

    kind: str
    a: float = 1.0
    b: float = -0.5

    def __post_init__(self):
        if self.kind not in BASIS_KINDS:
            raise InvalidArgument(
                f"unknown basis kind {self.kind!r}; expected one of {BASIS_KINDS}"
            )

    def frequency(self, index):
        """Angular frequency in units of pi (trigonometric families only)."""
        index = np.asarray(index, dtype=float)
        if self.kind == "cosine":
            return index
        if self.kind == "sine-half-integer":
            return index - 0.5
        if self.kind == "fourier-shifted":
            return self.a * index + self.b
        raise InvalidArgument("Haar members have no single frequency")

    def to_dict(self) -> dict:
        if self.kind == "fourier-shifted":
            return {"kind": self.kind, "a": self.a, "b": self.b}
        return {"kind": self.kind}


COSINE = BasisFamily("cosine")
SINE_HALF_INTEGER = BasisFamily("sine-half-integer")
HAAR = BasisFamily("haar")


def basis_from_name(name: str, a: float = 1.0, b: float = -0.5) -> BasisFamily:
    aliases = {"sine": "sine-half-integer", "fourier_shifted": "fourier-shifted",
               "sine_half_integer": "sine-half-integer"}
    kind = aliases.get(name, name)
    if kind == "fourier-shifted":
        return BasisFamily(kind, float(a), float(b))
    return BasisFamily(kind)


def haar_level(index: int) -> tuple[int, int]:
    """Split a Haar index into (level j, position l) with index = 2**j + l - 1."""
    j = int(index).bit_length() - 1
    return j, int(index) + 1 - 2**j


def _haar_values(index: int, x: np.ndarray) -> np.ndarray:
    # half-open pieces [left, mid) and [mid, right); x = 1 closes the last piece
    j, ell = haar_level(index)
    scale = 2.0 ** (j / 2)
    left, mid, right = (ell - 1) / 2**j, (ell - 0.5) / 2**j, ell / 2**j
    out = np.zeros_like(x, dtype=float)
    out[(x >= left) & (x < mid)] = scale
    upper = (x <= right) if ell == 2**j else (x < right)
    out[(x >= mid) & upper] = -scale
    return out


def _shifted_norm(omega: np.ndarray) -> np.ndarray:
    # exact L2 norm of cos(omega pi x) on [0, 1]
    omega = np.asarray(omega, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        sq = 0.5 + np.sin(2 * np.pi * omega) / (4 * np.pi * omega)
    sq = np.where(omega == 0, 1.0, sq)
    return np.sqrt(sq)


def basis_values(family: BasisFamily, indices, x) -> np.ndarray:
    """Evaluate members ``indices`` at points ``x``; shape (len(indices), len(x))."""
    idx = np.atleast_1d(np.asarray(indices))
    if np.any(idx < 1):
        raise InvalidArgument("basis indices start at 1")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if family.kind == "haar":
        return np.array([_haar_values(int(i), x) for i in idx])
    omega = family.frequency(idx)
    arg = np.pi * np.outer(omega, x)
    if family.kind == "cosine":
        return np.sqrt(2.0) * np.cos(arg)
    if family.kind == "sine-half-integer":
        return np.sqrt(2.0) * np.sin(arg)
    return np.cos(arg) / _shifted_norm(omega)[:, None]


def basis_eval(family: BasisFamily, index: int, grid: Grid) -> GridFunction:
    if int(index) != index or index < 1:
        raise InvalidArgument(f"basis index must be a positive integer, got {index!r}")
    return GridFunction(grid, basis_values(family, [int(index)], grid.points)[0])


def basis_matrix(family: BasisFamily, M: int, grid: Grid) -> np.ndarray:
    """Rows are members 1..M evaluated on ``grid``."""
    return basis_values(family, np.arange(1, M + 1), grid.points)


def coefficients(f: GridFunction, family: BasisFamily, M: int) -> np.ndarray:
    """Quadrature inner products of ``f`` with members 1..M."""
    return basis_matrix(family, M, f.grid) @ (f.grid.weights * f.values)


def synthesize(coeffs, family: BasisFamily, grid: Grid) -> GridFunction:
    coeffs = np.asarray(coeffs, dtype=float)
    return GridFunction(grid, coeffs @ basis_matrix(family, coeffs.size, grid))


# ---------------------------------------------------------------------------
# CSV I/O
# ---------------------------------------------------------------------------

def write_csv(f: GridFunction, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "value"])
        for x, v in zip(f.grid.points, f.values):
            writer.writerow([repr(float(x)), repr(float(v))])


def read_csv(path) -> GridFunction:
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["x", "value"]:
            raise InvalidArgument(f"{path}: expected header 'x,value', got {header}")
        rows = [(float(x), float(v)) for x, v in reader]
    xs = np.array([r[0] for r in rows])
    grid = make_grid(len(rows))
    if not np.allclose(xs, grid.points, atol=1e-12):
        raise InvalidArgument(f"{path}: abscissae are not a uniform grid on [0, 1]")
    return GridFunction(grid, [r[1] for r in rows])
