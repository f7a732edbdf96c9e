"""Monte Carlo rate experiments: configuration, execution, slope fits, output.

The protocol (replicate count, sample-size grid, tolerances) is a harness
choice rather than something fixed by the theory, and every report says so.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .errors import DegenerateInput, InvalidArgument, NumericalFailure
from .estimator import direction_error, estimation_error, fit, prediction_error
from .functions import make_grid
from .kernels import as_spectral, kernel_from_config, kernel_matrix
from .simulate import (
    Dataset,
    LinkSpec,
    covariance_from_config,
    index_variance,
    make_beta_star,
    simulate_dataset,
)
from .spectral import THEOREMS, build_operator_pair, lambda_schedule, rate_exponent

log = logging.getLogger(__name__)

METRICS = ("estimation", "direction", "prediction", "prediction_squared")
DEFAULT_TOLERANCE = {"estimation": 0.10, "direction": 0.10,
                     "prediction": 0.12, "prediction_squared": 0.12}
DEFAULT_N_GRID = (128, 256, 512, 1024, 2048, 4096)
FAILURE_THRESHOLD = 0.05
BOOTSTRAP_SAMPLES = 200
PROTOCOL_NOTE = ("replicates, n_grid and tolerance are harness choices "
                 "(no Monte Carlo protocol is prescribed by the theory)")


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything that determines a rate experiment. All fields have defaults."""

    name: str = "experiment"
    kernel: dict = field(default_factory=lambda: {"type": "power_law", "t": 4.0, "M": 100})
    covariance: dict = field(default_factory=lambda: {"type": "power_law", "c": 2.0, "M": 50})
    link: str = "identity"
    sigma: float = 0.5
    beta: dict = field(default_factory=lambda: {"alpha": 0.5, "decay": 0.55})
    n_grid: tuple = DEFAULT_N_GRID
    replicates: int = 50
    theorem: str = "T2"
    theorem_params: dict = field(default_factory=dict)
    lambda_multiplier: float = 1.0
    lambda_fixed: float | None = None
    grid_m: int = 512
    master_seed: int = 0
    metric: str = "estimation"
    tolerance: float | None = None
    response_scale: float = 1.0
    workers: int = 1

    def __post_init__(self):
        n_grid = tuple(int(n) for n in self.n_grid)
        object.__setattr__(self, "n_grid", n_grid)
        if len(n_grid) < 4:
            raise InvalidArgument(f"n_grid needs at least 4 sample sizes, got {len(n_grid)}")
        if any(b <= a for a, b in zip(n_grid, n_grid[1:])) or n_grid[0] < 2:
            raise InvalidArgument(f"n_grid must be strictly increasing integers >= 2: {n_grid}")
        if int(self.replicates) != self.replicates or self.replicates < 1:
            raise InvalidArgument(f"replicates must be a positive integer, got {self.replicates}")
        if self.sigma < 0:
            raise InvalidArgument(f"sigma must be nonnegative, got {self.sigma}")
        if self.metric not in METRICS:
            raise InvalidArgument(f"metric must be one of {METRICS}, got {self.metric!r}")
        if self.theorem not in THEOREMS:
            raise InvalidArgument(f"theorem must be one of {THEOREMS}, got {self.theorem!r}")
        if self.lambda_fixed is not None and not self.lambda_fixed > 0:
            raise InvalidArgument(f"lambda_fixed must be positive, got {self.lambda_fixed}")
        if not self.lambda_multiplier > 0:
            raise InvalidArgument("lambda_multiplier must be positive")
        if self.response_scale == 0 or not math.isfinite(self.response_scale):
            raise InvalidArgument("response_scale must be finite and nonzero")
        if int(self.master_seed) != self.master_seed or self.master_seed < 0:
            raise InvalidArgument("master_seed must be a nonnegative integer")
        if int(self.workers) != self.workers or self.workers < 1:
            raise InvalidArgument("workers must be a positive integer")
        if ("alpha" in self.beta) == ("nu" in self.beta):
            raise InvalidArgument("beta spec needs exactly one of 'alpha' or 'nu'")
        LinkSpec(self.link)
        # fail early on out-of-range theorem parameters
        rate_exponent(self.theorem, **self.resolved_params())

    @classmethod
    def from_dict(cls, data: dict) -> ExperimentConfig:
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise InvalidArgument(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_file(cls, path) -> ExperimentConfig:
        path = Path(path)
        try:
            data = yaml.safe_load(path.read_text())
        except OSError as exc:
            raise InvalidArgument(f"{path}: cannot read config ({exc})") from exc
        except yaml.YAMLError as exc:
            raise InvalidArgument(f"{path}: malformed config ({exc})") from exc
        if not isinstance(data, dict):
            raise InvalidArgument(f"{path}: config must be a mapping")
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["n_grid"] = list(self.n_grid)
        return out

    def resolved_params(self) -> dict:
        """Theorem parameters: explicit overrides, else derived from the specs."""
        params = {}
        kind = self.kernel.get("type", "power_law")
        if kind == "power_law":
            params["t"] = float(self.kernel.get("t", 4.0))
        elif kind.startswith("bernoulli4"):
            params["t"] = 4.0
        if self.covariance.get("type", "power_law") == "brownian":
            params["c"] = 2.0
        else:
            params["c"] = float(self.covariance.get("c", 2.0))
        if "alpha" in self.beta:
            params["alpha"] = float(self.beta["alpha"])
        if "nu" in self.beta:
            params["nu"] = float(self.beta["nu"])
        if "t" in params and _same_basis(self.kernel, self.covariance):
            params["b"] = params["t"] + params["c"]
        params.update({k: float(v) for k, v in self.theorem_params.items()})
        return params

    def penalty(self, n: int) -> float:
        if self.lambda_fixed is not None:
            return float(self.lambda_fixed)
        return lambda_schedule(self.theorem, n, self.lambda_multiplier,
                               **self.resolved_params())


def _same_basis(kernel: dict, cov: dict) -> bool:
    ktype, ctype = kernel.get("type", "power_law"), cov.get("type", "power_law")
    if ktype != "power_law" or ctype != "power_law":
        return False
    return kernel.get("basis", "cosine") == cov.get("basis", "cosine")


def build_beta_star(config: ExperimentConfig, kernel, cov, grid):
    """beta* on ``grid`` from the config's beta section."""
    spectral = as_spectral(kernel, int(config.kernel.get("M", 100)))
    kw = {"decay": float(config.beta.get("decay", 0.55))}
    if "alpha" in config.beta:
        kw["alpha"] = float(config.beta["alpha"])
    else:
        kw["nu"] = float(config.beta["nu"])
        kw["pair"] = build_operator_pair(spectral, cov)
    beta = make_beta_star(spectral, cov, grid, **kw)
    if config.beta.get("unit_variance", False):
        beta = beta / math.sqrt(index_variance(cov, beta))
    return beta


def load_config(path) -> ExperimentConfig:
    return ExperimentConfig.from_file(path)


# ---------------------------------------------------------------------------
# Execution
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CellRecord:
    n: int
    replicate: int
    lam: float
    value: float | None
    error: str | None = None
    direction: float | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


class _Context:
    """Objects shared by all cells of one experiment."""

    def __init__(self, config: ExperimentConfig):
        self.config = config
        self.grid = make_grid(config.grid_m)
        self.kernel = kernel_from_config(config.kernel)
        self.cov = covariance_from_config(config.covariance)
        self.link = LinkSpec(config.link)
        beta = build_beta_star(config, self.kernel, self.cov, self.grid)
        self.beta_star = beta
        if self.link.kind == "identity":
            self.stein = 1.0
            self.reference_label = "beta_star"
        else:
            self.stein = self.link.stein_constant(index_variance(self.cov, beta))
            self.reference_label = "stein_scaled_beta_star (closed form)"
        self.reference = beta * (self.stein * config.response_scale)
        self.kmat = kernel_matrix(self.kernel, self.grid)

    def metric(self, beta_hat) -> float:
        kind = self.config.metric
        if kind == "estimation":
            return estimation_error(beta_hat, self.reference)
        if kind == "direction":
            return direction_error(beta_hat, self.reference)
        value = prediction_error(beta_hat, self.reference, self.cov)
        return value**2 if kind == "prediction_squared" else value

    def run_cell(self, n: int, replicate: int) -> CellRecord:
        cfg = self.config
        lam = cfg.penalty(n)
        seed = np.random.SeedSequence([cfg.master_seed, n, replicate])
        try:
            ds = simulate_dataset(self.cov, self.beta_star, self.link, cfg.sigma,
                                  n, self.grid, seed)
            if cfg.response_scale != 1.0:
                ds = Dataset(ds.curves, ds.responses * cfg.response_scale, ds.meta)
            result = fit(ds, self.kernel, lam, kmat=self.kmat)
            value = self.metric(result.beta_hat)
            direction = None
            if self.link.kind == "identity" and cfg.metric != "direction":
                direction = direction_error(result.beta_hat, self.reference)
        except (NumericalFailure, DegenerateInput) as exc:
            log.warning("cell n=%d replicate=%d failed: %s", n, replicate, exc)
            return CellRecord(n, replicate, lam, None, f"{type(exc).__name__}: {exc}")
        return CellRecord(n, replicate, lam, float(value), None, direction)


_WORKER_CONTEXT: dict = {}


def _worker_cell(args):
    config_json, n, replicate = args
    ctx = _WORKER_CONTEXT.get(config_json)
    if ctx is None:
        ctx = _Context(ExperimentConfig.from_dict(json.loads(config_json)))
        _WORKER_CONTEXT.clear()
        _WORKER_CONTEXT[config_json] = ctx
    return ctx.run_cell(n, replicate)


@dataclass
class RateReport:
    config: dict
    records: list
    n_values: list
    medians: list
    fitted_slope: float
    intercept: float
    r_squared: float
    theoretical_exponent: float
    slope_ci: tuple
    tolerance: float
    verdict: str
    failures: list = field(default_factory=list)
    reference: str = "beta_star"
    notes: str = PROTOCOL_NOTE

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"

    def direction_slope(self) -> float | None:
        """Slope of the median direction error, recorded alongside identity-link runs."""
        meds = []
        for n in self.n_values:
            vals = [r.direction for r in self.records if r.n == n and r.ok]
            if not vals or any(v is None or v <= 0 for v in vals):
                return None
            meds.append(float(np.median(vals)))
        return fit_slope(zip(self.n_values, meds))[0] if len(meds) >= 2 else None

    def summary(self) -> dict:
        return {
            "name": self.config.get("name"),
            "theorem": self.config.get("theorem"),
            "metric": self.config.get("metric"),
            "fitted_slope": self.fitted_slope,
            "intercept": self.intercept,
            "r_squared": self.r_squared,
            "theoretical_exponent": self.theoretical_exponent,
            "target_slope": -self.theoretical_exponent,
            "slope_ci": list(self.slope_ci),
            "tolerance": self.tolerance,
            "verdict": self.verdict,
            "failed_cells": len(self.failures),
            "total_cells": len(self.records),
            "direction_slope": self.direction_slope(),
            "reference": self.reference,
            "notes": self.notes,
            "config": self.config,
        }


def fit_slope(points) -> tuple[float, float, float]:
    """OLS of log(error) on log(n); returns (slope, intercept, r_squared)."""
    pts = np.asarray(list(points), dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 2:
        raise InvalidArgument("fit_slope needs a sequence of at least two (n, error) pairs")
    n, err = pts[:, 0], pts[:, 1]
    if np.any(n <= 0) or np.any(err <= 0) or not np.all(np.isfinite(pts)):
        raise InvalidArgument("sample sizes and errors must be positive and finite")
    x, y = np.log(n), np.log(err)
    xc = x - x.mean()
    sxx = float(xc @ xc)
    if sxx == 0:
        raise InvalidArgument("need at least two distinct sample sizes")
    slope = float(xc @ (y - y.mean())) / sxx
    intercept = float(y.mean() - slope * x.mean())
    resid = y - (intercept + slope * x)
    sst = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - float(resid @ resid) / sst if sst > 0 else 1.0
    return slope, intercept, r2


def _bootstrap_ci(values_by_n: dict, master_seed: int, level: float = 0.95):
    ns = sorted(values_by_n)
    rng = np.random.default_rng([master_seed, 0xB007])
    slopes = []
    for _ in range(BOOTSTRAP_SAMPLES):
        meds = []
        for n in ns:
            v = values_by_n[n]
            meds.append(np.median(v[rng.integers(0, v.size, v.size)]))
        slopes.append(fit_slope(zip(ns, meds))[0])
    lo, hi = np.quantile(slopes, [(1 - level) / 2, (1 + level) / 2])
    return float(lo), float(hi)


def run_rate_experiment(config: ExperimentConfig, workers: int | None = None) -> RateReport:
    """Run every (n, replicate) cell, aggregate medians and fit the slope."""
    workers = config.workers if workers is None else int(workers)
    cells = [(n, r) for n in config.n_grid for r in range(config.replicates)]
    ctx = _Context(config)
    if workers > 1:
        payload = json.dumps(config.to_dict(), sort_keys=True)
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_worker_cell, [(payload, n, r) for n, r in cells],
                                    chunksize=max(1, len(cells) // (4 * workers))))
    else:
        records = [ctx.run_cell(n, r) for n, r in cells]
    records.sort(key=lambda rec: (rec.n, rec.replicate))

    failures = [rec for rec in records if not rec.ok]
    values_by_n = {}
    for n in config.n_grid:
        vals = np.array([rec.value for rec in records if rec.n == n and rec.ok])
        if vals.size:
            values_by_n[n] = vals
    exponent = rate_exponent(config.theorem, **config.resolved_params())
    tolerance = config.tolerance if config.tolerance is not None \
        else DEFAULT_TOLERANCE[config.metric]

    too_many = len(failures) > FAILURE_THRESHOLD * len(records)
    if len(values_by_n) < 2 or any(np.any(v <= 0) for v in values_by_n.values()):
        nan = float("nan")
        return RateReport(config.to_dict(), records, sorted(values_by_n),
                          [float(np.median(v)) for _, v in sorted(values_by_n.items())],
                          nan, nan, nan, exponent, (nan, nan), tolerance, "fail",
                          failures, ctx.reference_label)
    ns = sorted(values_by_n)
    medians = [float(np.median(values_by_n[n])) for n in ns]
    slope, intercept, r2 = fit_slope(zip(ns, medians))
    ci = _bootstrap_ci(values_by_n, config.master_seed)
    ok = abs(slope + exponent) <= tolerance and not too_many
    if too_many:
        log.error("%d of %d cells failed (threshold %.0f%%)",
                  len(failures), len(records), 100 * FAILURE_THRESHOLD)
    return RateReport(config.to_dict(), records, ns, medians, slope, intercept, r2,
                      exponent, ci, tolerance, "pass" if ok else "fail",
                      failures, ctx.reference_label)


# ---------------------------------------------------------------------------
# Output
# ---------------------------------------------------------------------------

def _fmt(x) -> str:
    return "" if x is None else repr(float(x))


def emit_report(report: RateReport, path) -> dict:
    """Write raw.csv, summary.csv, plot.csv and summary.json into directory ``path``."""
    if not report.records or not report.n_values:
        raise InvalidArgument("report has no completed replicates")
    out = Path(path)
    metric = report.config.get("metric", "")
    files = {name: out / name for name in ("raw.csv", "summary.csv", "plot.csv",
                                           "summary.json")}
    try:
        out.mkdir(parents=True, exist_ok=True)
        with open(files["raw.csv"], "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["n", "replicate", "lambda", "metric", "value"])
            for rec in report.records:
                if rec.ok:
                    w.writerow([rec.n, rec.replicate, _fmt(rec.lam), metric, _fmt(rec.value)])
        with open(files["summary.csv"], "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["n", "median", "q25", "q75"])
            for n, med in zip(report.n_values, report.medians):
                vals = [r.value for r in report.records if r.n == n and r.ok]
                q25, q75 = np.quantile(vals, [0.25, 0.75])
                w.writerow([n, _fmt(med), _fmt(q25), _fmt(q75)])
        with open(files["plot.csv"], "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["log_n", "log_median", "fitted", "theoretical"])
            logn = np.log(report.n_values)
            logm = np.log(report.medians)
            # theoretical line drawn through the centroid of the data
            anchor = logm.mean() + report.theoretical_exponent * logn.mean()
            for x, y in zip(logn, logm):
                w.writerow([_fmt(x), _fmt(y),
                            _fmt(report.intercept + report.fitted_slope * x),
                            _fmt(anchor - report.theoretical_exponent * x)])
        files["summary.json"].write_text(json.dumps(report.summary(), indent=2,
                                                    sort_keys=True, default=str))
    except OSError as exc:
        raise OSError(f"cannot write report to {out}: {exc}") from exc
    return files
