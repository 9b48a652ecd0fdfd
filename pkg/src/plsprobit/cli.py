"""Command line: run simulations, fit models on CSV data, sample g-curves.

    plsprobit simulate --case 2 --lambda 0.2 --n 200 --reps 50 --seed 7 \
        --methods plspm,plpm,lsaep --out results.json
    plsprobit fit --data obs.csv --method plspm --covariance on --out fit.json
    plsprobit gcurve --fit fit.json --data obs.csv --grid -2:2:0.1 --out curve.csv

Exit codes: 0 on success, 1 on data/fit/harness errors, 2 on usage errors.
All commands are deterministic given their flags; JSON output is
byte-identical across reruns except for the created_at timestamp.  Output
files are written atomically (temp file + rename).  The environment
variable PLSPROBIT_WORKERS overrides the simulate worker count.
"""

from __future__ import annotations

import argparse
import datetime
import json
import os
import sys
import tempfile

import numpy as np

from .data import load_csv
from .errors import DataError, FitError, PLSProbitError
from .gmm import (
    METHOD_LSAEP,
    METHOD_PLPM,
    METHOD_PLSPM,
    FitOptions,
    fit_lsaep,
    fit_plpm,
    fit_plspm,
)
from .profile import profile_at
from .simulate import (
    ALL_METHODS,
    ScenarioConfig,
    run_replications,
    scenario_document,
)
from .spatial import SarVariance, build_knn_weights, sar_variance

WORKERS_ENV = "PLSPROBIT_WORKERS"

FORMAT_VERSION = 1


def _timestamp() -> str:
    return datetime.datetime.now(datetime.timezone.utc).isoformat()


def _atomic_write(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".plsprobit-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_json(path: str, payload: dict) -> None:
    _atomic_write(path, json.dumps(payload, indent=2) + "\n")


def _default_workers() -> int:
    env = os.environ.get(WORKERS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return 1


def _format_summary_table(summary_stats: dict) -> str:
    lines = [f"{'method':<8} {'parameter':<10} {'mean':>12} {'median':>12} {'sd':>12}"]
    for method, params in summary_stats.items():
        for name, stats in params.items():
            lines.append(
                f"{method:<8} {name:<10} "
                f"{stats['mean']:>12.4f} {stats['median']:>12.4f} {stats['sd']:>12.4f}"
            )
    return "\n".join(lines)


def _add_simulate_parser(sub):
    p = sub.add_parser("simulate", help="run a Monte Carlo scenario")
    p.add_argument("--case", type=int, required=True, choices=(1, 2))
    p.add_argument("--lambda", dest="lam", type=float, required=True,
                   help="true SAR coefficient, in (-0.95, 0.95)")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--reps", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--methods", default="plspm,plpm,lsaep",
                   help="comma list from {plspm,plpm,lsaep}")
    p.add_argument("--k-neighbors", type=int, default=6)
    p.add_argument("--grid-side", type=int, default=60)
    p.add_argument("--workers", type=int, default=None,
                   help=f"worker processes (default 1; env {WORKERS_ENV} overrides)")
    p.add_argument("--out", required=True)


def _add_fit_parser(sub):
    p = sub.add_parser("fit", help="fit one model to a CSV data file")
    p.add_argument("--data", required=True)
    p.add_argument("--method", required=True, choices=ALL_METHODS)
    p.add_argument("--k-neighbors", type=int, default=6)
    p.add_argument("--bandwidth", default="auto",
                   help="'auto' (cross-validated) or a positive number")
    p.add_argument("--covariance", choices=("on", "off"), default="off")
    p.add_argument("--out", required=True)


def _add_gcurve_parser(sub):
    p = sub.add_parser("gcurve", help="sample the fitted smooth component on a grid")
    p.add_argument("--fit", required=True, help="fit JSON written by the fit command")
    p.add_argument("--data", required=True, help="the CSV the fit was computed from")
    p.add_argument("--grid", required=True, help="LO:HI:STEP, inclusive endpoints")
    p.add_argument("--out", required=True)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="plsprobit",
        description="Partially linear spatial probit estimation and simulation",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    _add_simulate_parser(sub)
    _add_fit_parser(sub)
    _add_gcurve_parser(sub)
    return parser


def _cmd_simulate(parser, args) -> int:
    if not abs(args.lam) < 0.95:
        parser.error(f"--lambda must lie in (-0.95, 0.95), got {args.lam}")
    methods = tuple(m.strip() for m in args.methods.split(",") if m.strip())
    unknown = set(methods) - set(ALL_METHODS)
    if unknown or not methods:
        parser.error(f"--methods must be a comma list from {ALL_METHODS}")
    try:
        cfg = ScenarioConfig(
            case=args.case,
            lambda_true=args.lam,
            n=args.n,
            reps=args.reps,
            k_neighbors=args.k_neighbors,
            grid_side=args.grid_side,
            seed=args.seed,
        )
    except PLSProbitError as exc:
        parser.error(str(exc))
    workers = args.workers if args.workers is not None else _default_workers()
    try:
        records, summary = run_replications(cfg, methods, workers=workers)
    except PLSProbitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    doc = scenario_document(cfg, methods, records, summary)
    doc["created_at"] = _timestamp()
    _write_json(args.out, doc)
    print(_format_summary_table(summary.stats))
    return 0


def _fit_document(args, fit, data, bandwidth) -> dict:
    doc = {
        "format_version": FORMAT_VERSION,
        "method": fit.method,
        "n": data.n,
        "p": data.p,
        "k_neighbors": args.k_neighbors,
        "row_normalized": True,
        "bandwidth": bandwidth,
        "theta": {"beta": [float(b) for b in fit.beta]},
        "q_min": float(fit.q_min),
        "converged": bool(fit.converged),
        "lambda_at_boundary": bool(fit.lambda_at_boundary),
        "g_hat_at_sample": [float(v) for v in fit.g_hat_at_sample],
        "optimizer_trace": fit.optimizer_trace,
    }
    if fit.lam is not None:
        doc["theta"]["lambda"] = float(fit.lam)
    if fit.g_linear is not None:
        doc["g_linear"] = [float(v) for v in fit.g_linear]
    if fit.covariance is not None:
        doc["covariance"] = [[float(c) for c in row] for row in fit.covariance]
    elif fit.covariance_note is not None:
        doc["covariance_note"] = fit.covariance_note
    return doc


def _cmd_fit(parser, args) -> int:
    if args.bandwidth != "auto":
        try:
            bandwidth = float(args.bandwidth)
        except ValueError:
            parser.error("--bandwidth must be 'auto' or a number")
        if not bandwidth > 0:
            parser.error("--bandwidth must be positive")
    else:
        bandwidth = None
    try:
        data = load_csv(args.data)
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    opts = FitOptions(bandwidth=bandwidth, covariance=(args.covariance == "on"))
    try:
        if args.method == METHOD_PLSPM:
            W = build_knn_weights(data.coords, args.k_neighbors)
            fit = fit_plspm(data, W, opts)
        elif args.method == METHOD_PLPM:
            fit = fit_plpm(data, opts)
        else:
            W = build_knn_weights(data.coords, args.k_neighbors)
            fit = fit_lsaep(data, W, opts)
    except FitError as exc:
        doc = {
            "format_version": FORMAT_VERSION,
            "method": args.method,
            "error": str(exc),
            "optimizer_trace": getattr(exc, "trace", []),
            "created_at": _timestamp(),
        }
        _write_json(args.out, doc)
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except PLSProbitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    doc = _fit_document(args, fit, data, fit.bandwidth)
    doc["created_at"] = _timestamp()
    _write_json(args.out, doc)
    print(f"{fit.method}: q_min={fit.q_min:.6g} converged={fit.converged}")
    return 0


def _parse_grid(parser, spec: str) -> np.ndarray:
    parts = spec.split(":")
    if len(parts) != 3:
        parser.error("--grid must look like LO:HI:STEP")
    try:
        lo, hi, step = (float(t) for t in parts)
    except ValueError:
        parser.error("--grid must contain numbers")
    if not step > 0 or hi < lo:
        parser.error("--grid needs HI >= LO and STEP > 0")
    count = int(np.floor((hi - lo) / step + 1e-9)) + 1
    return lo + step * np.arange(count)


def _cmd_gcurve(parser, args) -> int:
    grid = _parse_grid(parser, args.grid)
    try:
        with open(args.fit, "r", encoding="utf-8") as fh:
            fitdoc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: cannot read fit file: {exc}", file=sys.stderr)
        return 1
    try:
        data = load_csv(args.data)
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    try:
        method = fitdoc["method"]
        beta = np.asarray(fitdoc["theta"]["beta"], dtype=float)
        lam = float(fitdoc["theta"].get("lambda", 0.0))
    except (KeyError, TypeError) as exc:
        print(f"error: fit file lacks required fields: {exc}", file=sys.stderr)
        return 1

    z_lo, z_hi = float(data.z.min()), float(data.z.max())
    inside = (grid >= z_lo) & (grid <= z_hi)
    values = np.full(grid.shape, np.nan)

    try:
        if method == METHOD_LSAEP:
            gamma = fitdoc["g_linear"]
            values[inside] = gamma[0] + gamma[1] * grid[inside]
        else:
            bandwidth = float(fitdoc["bandwidth"])
            if method == METHOD_PLSPM:
                W = build_knn_weights(data.coords, int(fitdoc.get("k_neighbors", 6)))
                sv = sar_variance(W, lam)
            else:
                lam = 0.0
                sv = SarVariance.identity(data.n)
            if inside.any():
                batch = profile_at(beta, lam, grid[inside], data, sv, bandwidth)
                values[inside] = batch.eta
    except (PLSProbitError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    lines = ["z,g_hat"]
    for zq, gq in zip(grid, values):
        cell = "" if np.isnan(gq) else repr(float(gq))
        lines.append(f"{zq!r},{cell}")
    _atomic_write(args.out, "\n".join(lines) + "\n")
    return 0


def _normalize_argv(argv):
    """Join ``--grid -2:2:0.1`` into the equals form argparse can take."""
    if argv is None:
        argv = sys.argv[1:]
    out = []
    i = 0
    while i < len(argv):
        if argv[i] == "--grid" and i + 1 < len(argv):
            out.append(f"--grid={argv[i + 1]}")
            i += 2
        else:
            out.append(argv[i])
            i += 1
    return out


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(_normalize_argv(argv))
    if args.command == "simulate":
        return _cmd_simulate(parser, args)
    if args.command == "fit":
        return _cmd_fit(parser, args)
    return _cmd_gcurve(parser, args)


if __name__ == "__main__":
    sys.exit(main())
