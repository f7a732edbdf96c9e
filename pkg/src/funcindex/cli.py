"""Command-line entry point: ``funcindex <subcommand> ...``.

Exit status is 0 on success or a passing verdict, 1 on a failing verdict and
2 on any error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import FuncIndexError
from .estimator import fit, stein_check
from .functions import make_grid, write_csv
from .harness import (
    ExperimentConfig,
    build_beta_star,
    emit_report,
    run_rate_experiment,
)
from .kernels import as_spectral, kernel_from_config
from .simulate import (
    Dataset,
    LinkSpec,
    beta_star_coefficients,
    covariance_from_config,
    index_variance,
    read_curves_csv,
    read_responses_csv,
    simulate_dataset,
    write_curves_csv,
    write_responses_csv,
)
from .spectral import DEFAULT_DIM, build_operator_pair, diagnostics

EXIT_PASS, EXIT_FAIL, EXIT_ERROR = 0, 1, 2


def _config(args) -> ExperimentConfig:
    return ExperimentConfig.from_file(args.config) if args.config else ExperimentConfig()


def cmd_simulate(args) -> int:
    cfg = _config(args)
    grid = make_grid(cfg.grid_m)
    kernel = kernel_from_config(cfg.kernel)
    cov = covariance_from_config(cfg.covariance)
    beta = build_beta_star(cfg, kernel, cov, grid)
    seed = cfg.master_seed if args.seed is None else args.seed
    ds = simulate_dataset(cov, beta, LinkSpec(cfg.link), cfg.sigma, args.n, grid, seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_curves_csv(ds.curves, out / "curves.csv")
    write_responses_csv(ds.responses, out / "responses.csv")
    write_csv(beta, out / "beta_star.csv")
    print(json.dumps({"n": ds.n, "grid_m": grid.m, "out": str(out)}))
    return EXIT_PASS


def cmd_fit(args) -> int:
    cfg = _config(args)
    curves = read_curves_csv(args.curves)
    ds = Dataset(curves, read_responses_csv(args.responses))
    kernel = kernel_from_config(cfg.kernel)
    result = fit(ds, kernel, args.lam)
    write_csv(result.beta_hat, args.out)
    print(json.dumps(result.summary()))
    return EXIT_PASS


def cmd_rates(args) -> int:
    cfg = _config(args)
    report = run_rate_experiment(cfg, workers=args.workers)
    if args.out:
        emit_report(report, args.out)
    print(json.dumps({k: v for k, v in report.summary().items() if k != "config"},
                     indent=2, default=str))
    return EXIT_PASS if report.passed else EXIT_FAIL


def cmd_diagnostics(args) -> int:
    cfg = _config(args)
    kernel = as_spectral(kernel_from_config(cfg.kernel), args.M)
    cov = covariance_from_config(cfg.covariance)
    M = min(args.M, kernel.M, cov.M)
    pair = build_operator_pair(kernel, cov, M)
    alpha = float(cfg.beta.get("alpha", 0.5))
    coeffs = beta_star_coefficients(kernel, cov, alpha=alpha,
                                    decay=float(cfg.beta.get("decay", 0.55)))[:M]
    lambdas = np.logspace(np.log10(args.lambda_min), np.log10(args.lambda_max), args.num)
    rows = diagnostics(pair, alpha, coeffs, lambdas)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    columns = ["lambda", "N_lambda", "d_lambda", "theta_trace", "theta_norm",
               "xi_norm", "bias"]
    with open(out / "diagnostics.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: repr(v) for k, v in row.as_row().items()})
    summary = {"zeta_slope": rows[0].zeta_slope if rows else None, "dim": M,
               "commutative": pair.commutative,
               "commutator_norm": pair.commutator_norm(),
               "note": "sums and suprema are truncated at dim"}
    (out / "summary.json").write_text(json.dumps(summary, indent=2))
    print(json.dumps(summary))
    return EXIT_PASS


def cmd_stein_check(args) -> int:
    cfg = _config(args)
    grid = make_grid(cfg.grid_m)
    kernel = kernel_from_config(cfg.kernel)
    cov = covariance_from_config(cfg.covariance)
    beta = build_beta_star(cfg, kernel, cov, grid)
    link = LinkSpec(cfg.link)
    ds = simulate_dataset(cov, beta, link, cfg.sigma, args.n, grid, cfg.master_seed)
    check = stein_check(ds, beta, cov)
    print(json.dumps({
        "cosine_similarity": check.cosine_similarity,
        "ratio_estimate": check.ratio_estimate,
        "stein_constant": link.stein_constant(index_variance(cov, beta)),
        "n": args.n,
    }))
    return EXIT_PASS


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="funcindex", description="Functional index estimation toolkit.")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="draw curves and responses")
    p.add_argument("--config")
    p.add_argument("--n", type=int, default=200)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="fit the penalised estimator to CSV data")
    p.add_argument("--config", help="config whose kernel section is used")
    p.add_argument("--curves", required=True)
    p.add_argument("--responses", required=True)
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    p.add_argument("--out", required=True, help="CSV path for the estimate")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("rates", help="run a Monte Carlo rate experiment")
    p.add_argument("--config")
    p.add_argument("--out", help="directory for raw/summary/plot files")
    p.add_argument("--workers", type=int)
    p.set_defaults(func=cmd_rates)

    p = sub.add_parser("diagnostics", help="spectral sweep over a lambda grid")
    p.add_argument("--config")
    p.add_argument("--M", type=int, default=DEFAULT_DIM)
    p.add_argument("--lambda-min", type=float, default=1e-6)
    p.add_argument("--lambda-max", type=float, default=1e-1)
    p.add_argument("--num", type=int, default=11)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_diagnostics)

    p = sub.add_parser("stein-check", help="compare (1/n) sum Y X with C beta*")
    p.add_argument("--config")
    p.add_argument("--n", type=int, default=10000)
    p.set_defaults(func=cmd_stein_check)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (FuncIndexError, OSError, ValueError) as exc:
        print(f"funcindex: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
