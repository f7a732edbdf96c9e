"""Penalised RKHS estimation of the index function in functional linear and
single-index models, with simulation, spectral diagnostics and rate experiments."""

__version__ = "0.1.0"

from .errors import (
    DegenerateInput,
    DependencyMissing,
    FuncIndexError,
    IncompatibleGrids,
    InvalidArgument,
    NumericalFailure,
)
from .estimator import FitResult, direction_error, estimation_error, fit, prediction_error
from .functions import BasisFamily, Grid, GridFunction, make_grid
from .kernels import Bernoulli4Kernel, SpectralKernel, power_law_kernel
from .simulate import CovarianceModel, Dataset, LinkSpec, simulate_dataset

__all__ = [
    "BasisFamily", "Bernoulli4Kernel", "CovarianceModel", "Dataset", "DegenerateInput",
    "DependencyMissing", "FitResult", "FuncIndexError", "Grid", "GridFunction",
    "IncompatibleGrids", "InvalidArgument", "LinkSpec", "NumericalFailure",
    "SpectralKernel", "direction_error", "estimation_error", "fit", "make_grid",
    "power_law_kernel", "prediction_error", "simulate_dataset",
]
