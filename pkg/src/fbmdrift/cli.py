"""Command-line entry point.

Subcommands:
  simulate  sample decomposition paths, write per-replica CSVs (few
            replicas) or a node-wise summary CSV (many replicas)
  operator  assemble the wealth covariance operator, write it as CSV
  optimize  solve the mean-variance program for one past realization
  verify    run the verification suite, emit a JSON report and a table

Configuration comes from a JSON file plus flag overrides; flags win.
Every output carries the seed and the SHA-256 of the effective
configuration. Exit codes: 0 success, 1 configuration error, 2 numeric
failure, 3 verification failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .config import ConfigError, RunConfig
from .decomposition import simulate_decomposition
from .driver import sample_driver
from .fracops import build_gamma_operator
from .optimizer import SolverError, drift_rhs, solve_optimal
from .verify import _MC_CHUNK, _Workspace, _entropy, _mc_blocks, run_suite

__all__ = ["main", "entry", "build_parser"]

_MAX_PATH_FILES = 16


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _provenance_lines(config: RunConfig) -> list[str]:
    return [f"# seed={config.seed}", f"# config_sha256={config.sha256()}"]


def _write_effective_config(config: RunConfig) -> None:
    path = os.path.join(config.output_dir, "effective_config.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(config.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_path_csv(path, config, filename, tail_relative):
    """One row per future node after the origin: time,w,r,dr,increment.

    dr rows carry the node values; the per-cell evaluation points used
    by the optimizer are emitted by the summary writer instead.
    """
    out = os.path.join(config.output_dir, filename)
    with open(out, "w", encoding="utf-8", newline="") as fh:
        for line in _provenance_lines(config):
            fh.write(line + "\n")
        fh.write(f"# tail_relative={_fmt(tail_relative)}\n")
        fh.write("time,w,r,dr,increment\n")
        for i in range(1, path.times.size):
            fh.write(
                ",".join(
                    _fmt(v)
                    for v in (
                        path.times[i], path.w[i], path.r[i], path.dr[i],
                        path.increment[i],
                    )
                )
                + "\n"
            )


def cmd_simulate(config: RunConfig) -> int:
    ws = _Workspace(config)
    config = ws.config
    os.makedirs(config.output_dir, exist_ok=True)
    _write_effective_config(config)
    if config.replicas <= _MAX_PATH_FILES:
        for rep in range(config.replicas):
            child = int(
                np.random.SeedSequence([config.seed, 0x51A7E, rep]).generate_state(
                    1, np.uint64
                )[0]
            )
            path = simulate_decomposition(sample_driver(ws.grid, child), ws.params)
            _write_path_csv(path, config, f"path_r{rep:04d}.csv", path.tail_relative)
        print(f"wrote {config.replicas} path file(s) to {config.output_dir}")
        return 0

    # large ensembles: stream node-wise moments instead of files per path
    wts = ws.weights
    dim = ws.dim
    n_nodes = ws.grid.n_future + 1
    Vr = np.zeros((n_nodes, dim))
    Vr[:, : ws.n_source] = wts.refined_to_source(wts.Wr)
    Vdr = np.zeros((n_nodes, dim))
    Vdr[:, : ws.n_source] = wts.refined_to_source(wts.Wdr)
    Vw = np.zeros((n_nodes, dim))
    Vw[:, ws.n_source:] = wts.Wf * np.sqrt(ws.grid.dt_future)
    sums = np.zeros((3, n_nodes))
    sqs = np.zeros((3, n_nodes))
    inc_sum = np.zeros(n_nodes)
    inc_sq = np.zeros(n_nodes)
    for z in _mc_blocks(_entropy(config.seed, "simulate-summary"), config.replicas, dim):
        for row, V in enumerate((Vw, Vr, Vdr)):
            x = z @ V.T
            sums[row] += x.sum(axis=0)
            sqs[row] += (x * x).sum(axis=0)
        inc = z @ (Vw + Vr).T
        inc_sum += inc.sum(axis=0)
        inc_sq += (inc * inc).sum(axis=0)
    n = config.replicas
    means = sums / n
    variances = sqs / n - means**2
    inc_mean = inc_sum / n
    inc_var = inc_sq / n - inc_mean**2
    out = os.path.join(config.output_dir, "summary.csv")
    with open(out, "w", encoding="utf-8", newline="") as fh:
        for line in _provenance_lines(config):
            fh.write(line + "\n")
        fh.write(f"# replicas={n}\n")
        fh.write(
            "time,mean_w,var_w,mean_r,var_r,mean_dr,var_dr,"
            "mean_increment,var_increment\n"
        )
        for i in range(1, n_nodes):
            row = (
                ws.grid.future_nodes[i],
                means[0, i], variances[0, i],
                means[1, i], variances[1, i],
                means[2, i], variances[2, i],
                inc_mean[i], inc_var[i],
            )
            fh.write(",".join(_fmt(v) for v in row) + "\n")
    print(f"wrote ensemble summary over {n} replicas to {out}")
    return 0


def cmd_operator(config: RunConfig) -> int:
    ws = _Workspace(config)
    config = ws.config
    os.makedirs(config.output_dir, exist_ok=True)
    _write_effective_config(config)
    op = ws.operator
    out = os.path.join(config.output_dir, "gamma_matrix.csv")
    with open(out, "w", encoding="utf-8", newline="") as fh:
        for line in _provenance_lines(config):
            fh.write(line + "\n")
        fh.write(f"# n_future={config.n_future} sigma={_fmt(config.sigma)}\n")
        for row in op.matrix:
            fh.write(",".join(_fmt(v) for v in row) + "\n")
    evals = np.linalg.eigvalsh(op.matrix)
    meta = {
        "n_future": config.n_future,
        "sigma": config.sigma,
        "min_eigenvalue": float(evals[0]),
        "max_eigenvalue": float(evals[-1]),
        "seed": config.seed,
        "config_sha256": config.sha256(),
    }
    with open(os.path.join(config.output_dir, "gamma_meta.json"), "w",
              encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"wrote {config.n_future}x{config.n_future} operator to {out}")
    return 0


def cmd_optimize(config: RunConfig) -> int:
    ws = _Workspace(config)
    config = ws.config
    os.makedirs(config.output_dir, exist_ok=True)
    _write_effective_config(config)
    driver = sample_driver(ws.grid, config.seed)
    path = simulate_decomposition(driver, ws.params)
    rhs = drift_rhs(path, ws.market)
    result = solve_optimal(ws.operator, rhs, ws.market)

    strat = os.path.join(config.output_dir, "strategy.csv")
    with open(strat, "w", encoding="utf-8", newline="") as fh:
        for line in _provenance_lines(config):
            fh.write(line + "\n")
        fh.write("time,gamma\n")
        for t, gval in zip(ws.grid.future_nodes[:-1], result.gamma_hat.values):
            fh.write(f"{_fmt(t)},{_fmt(gval)}\n")

    payload = {
        "gamma_hat": [float(v) for v in result.gamma_hat.values],
        "objective": result.objective_value,
        "residual": (
            result.residual_norm / result.rhs_norm if result.rhs_norm > 0 else 0.0
        ),
        "e0_xt": result.conditional_mean,
        "var0_xt": result.conditional_variance,
        "penalty": result.penalty,
        "seed": config.seed,
        "config_sha256": config.sha256(),
    }
    with open(os.path.join(config.output_dir, "result.json"), "w",
              encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(
        f"objective {result.objective_value:.6g}, "
        f"E0 X(T) {result.conditional_mean:.6g}, "
        f"Var0 X(T) {result.conditional_variance:.6g}"
    )
    return 0


def cmd_verify(config: RunConfig, threads: int) -> int:
    ws = _Workspace(config)
    config = ws.config
    os.makedirs(config.output_dir, exist_ok=True)
    _write_effective_config(config)
    reports = run_suite(config, threads=threads)
    payload = [r.to_dict() for r in reports]
    with open(os.path.join(config.output_dir, "report.json"), "w",
              encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    header = f"{'check':<26} {'theoretical':>13} {'estimate':>13} {'std_err':>10} {'z':>7}  result"
    print(header)
    print("-" * len(header))
    for r in reports:
        print(
            f"{r.check_id:<26} {r.theoretical:>13.6g} {r.estimate:>13.6g} "
            f"{r.std_error:>10.3g} {r.z_score:>+7.2f}  "
            f"{'pass' if r.passed else 'FAIL'}"
        )
    failures = [r.check_id for r in reports if not r.passed]
    if failures:
        print(f"{len(failures)} check(s) failed: {', '.join(failures)}")
        return 3
    print(f"all {len(reports)} checks passed")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fbmdrift",
        description=(
            "Simulate the noise/smooth split of persistent fractional "
            "Brownian increments, build the wealth covariance operator, "
            "optimize preselected strategies, and verify the closed forms."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, desc in (
        ("simulate", "sample decomposition paths"),
        ("operator", "assemble and export the covariance operator"),
        ("optimize", "solve the mean-variance program for one past draw"),
        ("verify", "run the verification suite"),
    ):
        p = sub.add_parser(name, help=desc)
        p.add_argument("--config", metavar="PATH", help="JSON configuration file")
        p.add_argument("--seed", type=int, metavar="N")
        p.add_argument("--replicas", type=int, metavar="N")
        p.add_argument("--threads", type=int, default=1, metavar="N",
                       help="worker threads (verify only; results identical "
                            "for any value)")
        p.add_argument("--output", metavar="DIR", help="output directory")
        p.add_argument("--hurst", type=float, metavar="H")
        p.add_argument("--horizon", type=float, metavar="T")
        p.add_argument("--lambda", dest="lam", type=float, metavar="X",
                       help="risk aversion")
        p.add_argument("--penalty-k", dest="penalty_k", type=float, metavar="X")
        p.add_argument("--mu", type=float, metavar="X")
        p.add_argument("--sigma", type=float, metavar="X")
    return parser


_FLAG_TO_KEY = {
    "seed": "seed",
    "replicas": "replicas",
    "output": "output_dir",
    "hurst": "H",
    "horizon": "T",
    "lam": "lambda",
    "penalty_k": "k",
    "mu": "mu",
    "sigma": "sigma",
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {
        key: getattr(args, attr)
        for attr, key in _FLAG_TO_KEY.items()
        if getattr(args, attr, None) is not None
    }
    try:
        config = RunConfig.load(args.config, overrides)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1
    try:
        if args.command == "simulate":
            return cmd_simulate(config)
        if args.command == "operator":
            return cmd_operator(config)
        if args.command == "optimize":
            return cmd_optimize(config)
        if args.command == "verify":
            return cmd_verify(config, max(1, args.threads))
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1
    except (SolverError, np.linalg.LinAlgError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 2
    raise AssertionError(f"unhandled command {args.command}")


def entry() -> None:
    sys.exit(main())
