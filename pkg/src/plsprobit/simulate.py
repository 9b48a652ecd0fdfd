"""Data-generating processes and the replication harness.

Two scenarios, both with beta = (-1, 1), locations drawn without replacement
from a regular grid (default 60 x 60), and W built from the k = 6 nearest
neighbours and row-normalized:

    Case 1: x1 ~ Bernoulli(0.7), x2 ~ U[-2, 2],
            z = sum of 48 iid U[-0.25, 0.25] (variance exactly 1),
            g(t) = t + 2 cos(0.5 pi t)
    Case 2: x1, x2, z ~ N(0, 1), g(t) = 1 + 0.5 t

The latent response is y* = x b + g(z) + u with u = (I - lam W)^{-1} eps,
eps iid N(0,1), and y = 1{y* > 0}.

Every replication draws locations, covariates and errors from a stream
seeded by (seed, rep_index), so replication r is bitwise reproducible
regardless of how many workers run and in what order.  Failed fits are
recorded and excluded from summaries (never retried: retrying would bias
summaries toward easy draws); more than 20% failures for a method aborts
the run, since that signals an implementation defect rather than bad luck.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from .data import Dataset
from .errors import ConfigurationError, HarnessError, PLSProbitError
from .gmm import (
    METHOD_LSAEP,
    METHOD_PLPM,
    METHOD_PLSPM,
    FitOptions,
    FitResult,
    fit_lsaep,
    fit_plpm,
    fit_plspm,
)
from .kernels import select_bandwidth
from .spatial import WeightMatrix, build_knn_weights, simulate_sar_errors

TRUE_BETA = (-1.0, 1.0)

ALL_METHODS = (METHOD_PLSPM, METHOD_PLPM, METHOD_LSAEP)

# Abort threshold for per-method fit failures.
MAX_FAILURE_SHARE = 0.2


@dataclass(frozen=True)
class ScenarioConfig:
    """One simulation scenario: case, spatial strength, size, replication count."""

    case: int
    lambda_true: float
    n: int = 200
    reps: int = 200
    k_neighbors: int = 6
    grid_side: int = 60
    seed: int = 0

    def __post_init__(self):
        if self.case not in (1, 2):
            raise ConfigurationError(f"case must be 1 or 2, got {self.case}")
        if not abs(self.lambda_true) < 0.95:
            raise ConfigurationError(
                f"lambda_true must lie in (-0.95, 0.95), got {self.lambda_true}"
            )
        if self.n < 1 or self.n > self.grid_side**2:
            raise ConfigurationError(
                f"n must satisfy 1 <= n <= grid_side^2 = {self.grid_side ** 2}"
            )
        if self.reps < 1:
            raise ConfigurationError("reps must be >= 1")
        if self.k_neighbors >= self.n:
            raise ConfigurationError("k_neighbors must be smaller than n")
        if self.seed < 0:
            raise ConfigurationError("seed must be a nonnegative integer")


def smooth_component(case: int, t):
    """The scenario's smooth function g."""
    t = np.asarray(t, dtype=float)
    if case == 1:
        out = t + 2.0 * np.cos(0.5 * np.pi * t)
    else:
        out = 1.0 + 0.5 * t
    return float(out) if np.ndim(out) == 0 else out


def generate_scenario(cfg: ScenarioConfig, rep_index: int) -> tuple[Dataset, WeightMatrix]:
    """Draw one replication's dataset and weight matrix.

    Deterministic in (cfg.seed, rep_index); locations and W are redrawn per
    replication.
    """
    if rep_index < 0:
        raise ConfigurationError("rep_index must be nonnegative")
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, rep_index]))

    cells = rng.choice(cfg.grid_side**2, size=cfg.n, replace=False)
    coords = np.column_stack(divmod(cells, cfg.grid_side)).astype(float)
    W = build_knn_weights(coords, cfg.k_neighbors, row_normalize=True)

    if cfg.case == 1:
        x1 = rng.binomial(1, 0.7, cfg.n).astype(float)
        x2 = rng.uniform(-2.0, 2.0, cfg.n)
        z = rng.uniform(-0.25, 0.25, (cfg.n, 48)).sum(axis=1)
    else:
        x1 = rng.standard_normal(cfg.n)
        x2 = rng.standard_normal(cfg.n)
        z = rng.standard_normal(cfg.n)
    x = np.column_stack([x1, x2])

    u = simulate_sar_errors(W, cfg.lambda_true, rng)
    latent = x @ np.asarray(TRUE_BETA) + smooth_component(cfg.case, z) + u
    y = (latent > 0.0).astype(float)
    return Dataset(y=y, x=x, z=z, coords=coords), W


def parameter_names(method: str, p: int = 2) -> list[str]:
    names = [f"beta{j}" for j in range(1, p + 1)]
    if method != METHOD_PLPM:
        names.append("lambda")
    return names


def _estimates_record(fit: FitResult) -> dict:
    rec = {
        "params": {f"beta{j + 1}": float(b) for j, b in enumerate(fit.beta)},
        "q_min": float(fit.q_min),
        "converged": bool(fit.converged),
    }
    if fit.lam is not None:
        rec["params"]["lambda"] = float(fit.lam)
    if fit.g_linear is not None:
        rec["g_linear"] = [float(v) for v in fit.g_linear]
    return rec


def replicate_once(cfg: ScenarioConfig, rep_index: int, methods: tuple) -> dict:
    """Generate replication ``rep_index`` and fit every requested method.

    Returns {"rep": r, "fits": {method: record-or-error}}.  Methods never
    interact: each fit sees the same generated data, and a failure of one
    does not alter another.
    """
    data, W = generate_scenario(cfg, rep_index)
    fits: dict = {}
    bandwidth = None
    for method in methods:
        try:
            if method in (METHOD_PLSPM, METHOD_PLPM) and bandwidth is None:
                bandwidth = select_bandwidth(data)
            opts = FitOptions(bandwidth=bandwidth)
            if method == METHOD_PLSPM:
                fit = fit_plspm(data, W, opts)
            elif method == METHOD_PLPM:
                fit = fit_plpm(data, opts)
            elif method == METHOD_LSAEP:
                fit = fit_lsaep(data, W, FitOptions())
            else:
                raise ConfigurationError(f"unknown method {method!r}")
            fits[method] = _estimates_record(fit)
        except (PLSProbitError, np.linalg.LinAlgError) as exc:
            fits[method] = {"error": f"{type(exc).__name__}: {exc}"}
    return {"rep": rep_index, "fits": fits}


def summarize(estimates, names=None) -> dict:
    """Columnwise mean / median / sample SD of a stack of estimate vectors.

    Median uses the midpoint convention on even counts; SD uses the n-1
    denominator and is 0 for a single replication.  Raises ``ValueError``
    on empty input.
    """
    arr = np.asarray(estimates, dtype=float)
    if arr.size == 0:
        raise ValueError("summarize needs at least one estimate vector")
    if arr.ndim == 1:
        arr = arr[:, None]
    if names is None:
        names = [f"param{j + 1}" for j in range(arr.shape[1])]
    if len(names) != arr.shape[1]:
        raise ValueError("one name per column is required")
    out = {}
    for j, name in enumerate(names):
        col = np.sort(arr[:, j])  # value order makes reductions permutation-proof
        sd = float(np.std(col, ddof=1)) if col.shape[0] > 1 else 0.0
        out[name] = {
            "mean": float(np.mean(col)),
            "median": float(np.median(col)),
            "sd": sd,
        }
    return out


@dataclass
class ReplicationSummary:
    """Per-method, per-parameter summary plus failure accounting."""

    stats: dict
    failure_count: dict
    completed: dict
    reps: int


def _worker(args):
    cfg, rep_index, methods = args
    return replicate_once(cfg, rep_index, methods)


def run_replications(
    cfg: ScenarioConfig,
    methods=ALL_METHODS,
    workers: int | None = None,
) -> tuple[list, ReplicationSummary]:
    """Run the scenario's replications and summarize the estimates.

    Returns (records, summary) where records is the per-replication list in
    replication order.  ``workers`` > 1 distributes replications over
    processes; results are identical to a serial run because each
    replication owns a stream derived from (seed, rep_index).

    Raises ``HarnessError`` when any method fails on more than 20% of
    replications.
    """
    methods = tuple(methods)
    unknown = set(methods) - set(ALL_METHODS)
    if unknown:
        raise ConfigurationError(f"unknown methods: {sorted(unknown)}")
    if not methods:
        raise ConfigurationError("at least one method is required")

    jobs = [(cfg, r, methods) for r in range(cfg.reps)]
    if workers is not None and workers > 1 and cfg.reps > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_worker, jobs, chunksize=1))
    else:
        records = [_worker(job) for job in jobs]
    records.sort(key=lambda rec: rec["rep"])

    stats: dict = {}
    failure_count: dict = {}
    completed: dict = {}
    for method in methods:
        good = [
            rec["fits"][method]["params"]
            for rec in records
            if "error" not in rec["fits"][method]
        ]
        failures = cfg.reps - len(good)
        failure_count[method] = failures
        completed[method] = len(good)
        if failures > MAX_FAILURE_SHARE * cfg.reps:
            raise HarnessError(
                f"method {method} failed {failures}/{cfg.reps} replications; "
                "this signals an implementation defect"
            )
        names = parameter_names(method)
        if good:
            arr = np.asarray([[g[name] for name in names] for g in good])
            stats[method] = summarize(arr, names)
        else:
            stats[method] = {}
    summary = ReplicationSummary(
        stats=stats, failure_count=failure_count, completed=completed, reps=cfg.reps
    )
    return records, summary


def scenario_document(cfg: ScenarioConfig, methods, records, summary: ReplicationSummary) -> dict:
    """JSON-ready results document: config echo, records, summary block."""
    return {
        "format_version": 1,
        "config": {**asdict(cfg), "methods": list(methods)},
        "replications": records,
        "summary": summary.stats,
        "failure_count": summary.failure_count,
        "completed": summary.completed,
    }
