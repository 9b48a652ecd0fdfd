"""GMM estimation of the parametric components.

The moment vector stacks instrument-weighted generalized residuals

    S(theta) = n^{-1} xi' U~,     U~_i = Lambda(G_i)(y_i - Phi(G_i)),
    G_i = (x_i' beta + g_hat_theta(Z_i)) / v_i(lam),

with instruments equal to the total derivative of the latent index in the
parameters, including the profile path:

    xi_i = ( (x_i + dg/dbeta(Z_i)) / v_i ,
             -(v_i'/v_i^2)(x_i' beta + g_hat(Z_i)) + dg/dlam(Z_i) / v_i ).

The criterion is Q = S' M S with M the identity (q = p + 1), minimized by
Nelder-Mead restricted to the parameter box by reflection, from multiple
starts.

With M = I these instruments make S the exact gradient of the profile
pseudo-log-likelihood L(theta) = n^{-1} sum_i [y_i log Phi(G_i) +
(1-y_i) log(1-Phi(G_i))], so zeroing the moments finds stationary points
of L and the GMM estimator coincides with a pseudo-maximum profile
likelihood estimator.  That equivalence matters because the system is
degenerate at lam = 0: the lam instrument column vanishes identically
(v' = 0 and dg/dlam = 0), its moment is 0 = 0, and an exact root with lam
pinned at zero exists for every dataset, where the fit collapses onto the
spatially-ignorant estimator.  Smallest-criterion selection alone would
land there for any data.  Selection therefore treats per-start optima that
zero the moments as stationary-point candidates and picks the one with the
highest pseudo-likelihood; only when no start zeroes the moments does the
smallest criterion value decide.  The same lam = 0 degeneracy is why the
covariance sandwich refuses lam-hat pinned at zero.

Three fits share this machinery:

    fit_plspm   the full estimator (profile + spatial error scale)
    fit_plpm    same profile but v = 1, v' = 0 and no lam (q = p)
    fit_lsaep   linear-index spatial-error probit: g replaced by
                gamma0 + gamma1 z estimated jointly, no profiling

The covariance sandwich follows the moment-based recipe

    Omega = B2^{-1} D' B1 D B2^{-1},  B1 = n S S',  B2 = D' D,

with D = dS/dtheta computed by central finite differences (the profile is
re-solved at every perturbation).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy import optimize

from .data import Dataset
from .errors import (
    ConfigurationError,
    CovarianceSingularError,
    DataError,
    FitError,
    NumericalError,
    PLSProbitError,
)
from .kernels import adjusted_probit_scores, ols_without_intercept, select_bandwidth
from .links import _cdf_sides, _link_parts
from .profile import (
    ProfileBatch,
    ProfileSolver,
    ScoringConfig,
    kernel_weight_matrix,
)
from .spatial import SarVariance, WeightMatrix, sar_variance

LAMBDA_BOUND = 0.95
# |lam-hat| at or beyond this is reported as pinned to the box edge.
LAMBDA_BOUNDARY_FLAG = 0.949
# Condition ceiling for the covariance bread matrix.
B2_CONDITION_LIMIT = 1e10
# |lam-hat| below this makes the sandwich structurally singular.
LAMBDA_SINGULAR_TOL = 1e-6

# Criterion values at or below this count as exact roots of the moment
# system (the GMM here is exactly identified, so honest optima are ~0).
ROOT_Q_TOL = 1e-6
# Finite stand-in for failed criterion evaluations (keeps the simplex sane).
FAILED_EVAL = 1e10

METHOD_PLSPM = "plspm"
METHOD_PLPM = "plpm"
METHOD_LSAEP = "lsaep"


@dataclass(frozen=True)
class Theta:
    """Parametric components: slope vector and SAR coefficient."""

    beta: np.ndarray
    lam: float

    def __post_init__(self):
        beta = np.atleast_1d(np.asarray(self.beta, dtype=float))
        if beta.ndim != 1 or not np.all(np.isfinite(beta)):
            raise ConfigurationError("beta must be a finite vector")
        lam = float(self.lam)
        if not np.isfinite(lam) or abs(lam) > LAMBDA_BOUND:
            raise ConfigurationError(
                f"lambda must lie in [-{LAMBDA_BOUND}, {LAMBDA_BOUND}], got {lam}"
            )
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "lam", lam)

    @property
    def p(self) -> int:
        return self.beta.shape[0]

    def as_vector(self) -> np.ndarray:
        return np.r_[self.beta, self.lam]


class MomentValue(NamedTuple):
    """Moment vector s and criterion value ||s||^2."""

    s: np.ndarray
    q_value: float


@dataclass
class FitOptions:
    """Knobs for the outer optimization; defaults fit the desk scale."""

    bandwidth: float | None = None
    covariance: bool = False
    scoring: ScoringConfig = field(default_factory=ScoringConfig)
    beta_bound: float = 25.0
    lambda_bound: float = LAMBDA_BOUND
    multistart_lambdas: tuple = (0.0, 0.4, -0.4, 0.8, -0.8)
    nm_maxiter: int = 400
    nm_maxfev: int = 600
    nm_xatol: float = 1e-3
    nm_fatol: float = 1e-9
    covariance_step: float = 1e-4


@dataclass
class FitResult:
    """Outcome of one fit: estimates, criterion, profile and diagnostics.

    ``lam`` is None for the PLPM fit (no active spatial parameter) and
    ``g_linear`` carries (gamma0, gamma1) for the LSAEP fit only.
    """

    method: str
    beta: np.ndarray
    lam: float | None
    q_min: float
    g_hat_at_sample: np.ndarray
    bandwidth: float | None
    converged: bool
    lambda_at_boundary: bool = False
    g_linear: tuple | None = None
    covariance: np.ndarray | None = None
    covariance_note: str | None = None
    optimizer_trace: list = field(default_factory=list)


def reflect_into_box(x, lo, hi) -> np.ndarray:
    """Fold coordinates into [lo, hi] by triangular reflection.

    In-box coordinates pass through bitwise unchanged.
    """
    x = np.asarray(x, dtype=float)
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    width = hi - lo
    t = np.mod(x - lo, 2.0 * width)
    t = np.where(t > width, 2.0 * width - t, t)
    return np.where((x >= lo) & (x <= hi), x, lo + t)


def _generalized_residuals(g: np.ndarray, y: np.ndarray) -> np.ndarray:
    _, cdf, _, lamw, _ = _link_parts(g)
    return lamw * (y - cdf)


def _instrument_matrix(x, xb, profile: ProfileBatch, sv: SarVariance) -> np.ndarray:
    v = sv.v
    n, p = x.shape
    xi = np.empty((n, p + 1))
    xi[:, :p] = (x + profile.grad_beta) / v[:, None]
    xi[:, p] = -(sv.v_prime / (v * v)) * (xb + profile.eta) + profile.grad_lambda / v
    return xi


def instruments(
    theta: Theta, profile: ProfileBatch, data: Dataset, sv: SarVariance
) -> np.ndarray:
    """(n, p+1) instrument matrix; the last column is the lam instrument.

    Identically zero in the last column at lam = 0.
    """
    if len(profile) != data.n:
        raise DataError(
            f"profile has {len(profile)} points, expected one per observation ({data.n})"
        )
    if profile.grad_beta.shape[1] != data.p:
        raise DataError("profile gradient width does not match the covariates")
    return _instrument_matrix(data.x, data.x @ theta.beta, profile, sv)


def _plspm_moments(beta, lam, data, sv, solver, cfg, eta0=None):
    """(s, q, profile) for the full estimator at fixed parameters."""
    profile = solver.solve(beta, sv, cfg, eta0=eta0)
    xb = data.x @ beta
    g = (xb + profile.eta) / sv.v
    resid = _generalized_residuals(g, data.y)
    xi = _instrument_matrix(data.x, xb, profile, sv)
    s = xi.T @ resid / data.n
    q = float(s @ s)
    if not np.isfinite(q):
        raise NumericalError("criterion value is not finite")
    return s, q, profile


def _plpm_moments(beta, data, solver, cfg, eta0=None):
    """(s, q, profile) for the spatially-ignorant fit: v = 1, no lam column."""
    sv = SarVariance.identity(data.n)
    profile = solver.solve(beta, sv, cfg, eta0=eta0)
    g = data.x @ beta + profile.eta
    resid = _generalized_residuals(g, data.y)
    xi = data.x + profile.grad_beta
    s = xi.T @ resid / data.n
    q = float(s @ s)
    if not np.isfinite(q):
        raise NumericalError("criterion value is not finite")
    return s, q, profile


def _lsaep_moments(beta, gamma, lam, data, sv):
    """(s, q) for the linear-index spatial probit (no profiling)."""
    idx = data.x @ beta + gamma[0] + gamma[1] * data.z
    v = sv.v
    g = idx / v
    resid = _generalized_residuals(g, data.y)
    q_dim = data.p + 3
    xi = np.empty((data.n, q_dim))
    xi[:, : data.p] = data.x / v[:, None]
    xi[:, data.p] = 1.0 / v
    xi[:, data.p + 1] = data.z / v
    xi[:, data.p + 2] = -(sv.v_prime / (v * v)) * idx
    s = xi.T @ resid / data.n
    q = float(s @ s)
    if not np.isfinite(q):
        raise NumericalError("criterion value is not finite")
    return s, q


def moment_vector(
    theta: Theta,
    data: Dataset,
    W: WeightMatrix,
    b: float,
    cfg: ScoringConfig | None = None,
) -> MomentValue:
    """Moment vector and criterion for the full estimator at ``theta``.

    Solves the SAR scale profile and the kernel profile at every sample
    point.  Deterministic in (data, W, b, theta).
    """
    sv = sar_variance(W, theta.lam)
    solver = ProfileSolver(data.x, data.y, kernel_weight_matrix(data.z, data.z, b))
    s, q, _ = _plspm_moments(theta.beta, theta.lam, data, sv, solver, cfg)
    return MomentValue(s=s, q_value=q)


def plpm_moment_vector(
    beta, data: Dataset, b: float, cfg: ScoringConfig | None = None
) -> MomentValue:
    """Moment vector of the spatially-ignorant fit (q = p components)."""
    beta = np.asarray(beta, dtype=float)
    solver = ProfileSolver(data.x, data.y, kernel_weight_matrix(data.z, data.z, b))
    s, q, _ = _plpm_moments(beta, data, solver, cfg)
    return MomentValue(s=s, q_value=q)


def _beta_start(data: Dataset) -> np.ndarray:
    c = adjusted_probit_scores(data.y)
    coef, _ = ols_without_intercept(c, data.x)
    return coef


def _trial_scoring(cfg: ScoringConfig) -> ScoringConfig:
    """Slightly looser inner tolerance for optimizer trial evaluations.

    The criterion moves by O(eta error) which is far below the simplex
    tolerances; the fitted profile itself is re-solved at full tolerance.
    """
    return ScoringConfig(max_iter=cfg.max_iter, tol=max(cfg.tol, 1e-8), damping=cfg.damping)


def _run_nelder_mead(objective, x0, lo, hi, opts: FitOptions):
    res = optimize.minimize(
        objective,
        x0,
        method="Nelder-Mead",
        options={
            "maxiter": opts.nm_maxiter,
            "maxfev": opts.nm_maxfev,
            "xatol": opts.nm_xatol,
            "fatol": opts.nm_fatol,
        },
    )
    x = reflect_into_box(res.x, lo, hi)
    return x, float(res.fun), res


def _multistart_minimize(objective_raw, starts, lo, hi, opts):
    """Minimize over the box from several starts.

    ``objective_raw`` maps an in-box vector to the criterion; evaluation
    failures count as a large finite penalty so the simplex backs away from
    bad regions.  Returns (candidates, trace) with one (x, fun, success)
    candidate and one trace entry per start.
    """

    def objective(vec):
        folded = reflect_into_box(vec, lo, hi)
        try:
            return objective_raw(folded)
        except (PLSProbitError, np.linalg.LinAlgError):
            return FAILED_EVAL

    candidates = []
    trace = []
    for x0 in starts:
        x, fun, res = _run_nelder_mead(objective, np.asarray(x0, dtype=float), lo, hi, opts)
        ok = np.isfinite(fun) and fun < FAILED_EVAL
        trace.append(
            {
                "start": [float(t) for t in x0],
                "x": [float(t) for t in x],
                "q": fun if ok else None,
                "nit": int(res.nit),
                "nfev": int(res.nfev),
                "success": bool(res.success),
            }
        )
        if ok:
            candidates.append((x, fun, bool(res.success)))
    if not candidates:
        err = FitError("no optimizer start produced a finite criterion value")
        err.trace = trace
        raise err
    return candidates, trace


def _pseudo_loglik(g, y) -> float:
    """Mean probit log-likelihood at latent indices g (clamped tails)."""
    lo, hi = _cdf_sides(np.asarray(g, dtype=float))
    return float(np.mean(y * np.log(lo) + (1.0 - y) * np.log(hi)))


def _select_root(scored):
    """Pick the estimate among per-start results.

    ``scored`` holds dicts with keys q and loglik.  Starts that zeroed the
    moments are stationary points of the profile pseudo-likelihood; the one
    with the highest pseudo-likelihood wins (see module doc).  When no
    start found a root, the smallest criterion value decides.
    """
    roots = [c for c in scored if c["q"] <= ROOT_Q_TOL]
    if roots:
        return max(roots, key=lambda c: c["loglik"])
    return min(scored, key=lambda c: c["q"])


def fit_plspm(data: Dataset, W: WeightMatrix, options: FitOptions | None = None) -> FitResult:
    """Fit the partially linear spatial probit by profiled GMM.

    Selects the bandwidth unless one is supplied, then minimizes ||S||^2
    over (beta, lam) by box-reflected Nelder-Mead from multiple starts
    (lam in {0, +/-0.4, +/-0.8} around a least-squares probit-scale start
    for beta).  Per-start optima that are exact roots of the moment system
    with a non-vacuous lam moment are preferred over the degenerate lam = 0
    root; see the module docstring.  A lam-hat within 0.001 of the box edge
    is flagged, not fatal.
    """
    opts = options or FitOptions()
    b = opts.bandwidth if opts.bandwidth is not None else select_bandwidth(data)
    solver = ProfileSolver(data.x, data.y, kernel_weight_matrix(data.z, data.z, b))
    beta0 = _beta_start(data)
    p = data.p
    lo = np.r_[np.full(p, -opts.beta_bound), -opts.lambda_bound]
    hi = np.r_[np.full(p, opts.beta_bound), opts.lambda_bound]
    trial_cfg = _trial_scoring(opts.scoring)

    warm = {"eta": None}

    def objective(vec):
        beta, lam = vec[:p], float(vec[p])
        sv = sar_variance(W, lam)
        _, q, profile = _plspm_moments(
            beta, lam, data, sv, solver, trial_cfg, eta0=warm["eta"]
        )
        warm["eta"] = profile.eta
        return q

    # The probit-scale start is calibrated for unit error scale; at a start
    # with lam0 != 0 the index must stretch by the mean error scale or the
    # simplex lands far outside the criterion valley.
    starts = [
        np.r_[beta0 * float(np.mean(sar_variance(W, lam0).v)), lam0]
        for lam0 in opts.multistart_lambdas
    ]
    candidates, trace = _multistart_minimize(objective, starts, lo, hi, opts)

    scored = []
    for (x, _, success), entry in zip(candidates, (t for t in trace if t["q"] is not None)):
        beta, lam = x[:p], float(x[p])
        sv = sar_variance(W, lam)
        _, q, profile = _plspm_moments(beta, lam, data, sv, solver, opts.scoring)
        loglik = _pseudo_loglik((data.x @ beta + profile.eta) / sv.v, data.y)
        entry["q_refined"] = q
        entry["loglik"] = loglik
        scored.append(
            {"x": x, "q": q, "loglik": loglik, "success": success, "profile": profile}
        )

    chosen = _select_root(scored)
    beta_hat, lam_hat = chosen["x"][:p], float(chosen["x"][p])
    fit = FitResult(
        method=METHOD_PLSPM,
        beta=beta_hat,
        lam=lam_hat,
        q_min=chosen["q"],
        g_hat_at_sample=chosen["profile"].eta,
        bandwidth=b,
        converged=chosen["success"],
        lambda_at_boundary=abs(lam_hat) >= LAMBDA_BOUNDARY_FLAG,
        optimizer_trace=trace,
    )
    if opts.covariance:
        _attach_covariance(fit, data, W, b, opts)
    return fit


def fit_plpm(data: Dataset, options: FitOptions | None = None) -> FitResult:
    """Fit the partially linear probit that ignores spatial dependence.

    Identical machinery with v = 1, v' = 0, lam fixed at zero and absent
    from the result, and the instrument matrix reduced to q = p columns.
    """
    opts = options or FitOptions()
    b = opts.bandwidth if opts.bandwidth is not None else select_bandwidth(data)
    solver = ProfileSolver(data.x, data.y, kernel_weight_matrix(data.z, data.z, b))
    beta0 = _beta_start(data)
    p = data.p
    lo = np.full(p, -opts.beta_bound)
    hi = np.full(p, opts.beta_bound)
    trial_cfg = _trial_scoring(opts.scoring)

    warm = {"eta": None}

    def objective(vec):
        _, q, profile = _plpm_moments(vec, data, solver, trial_cfg, eta0=warm["eta"])
        warm["eta"] = profile.eta
        return q

    candidates, trace = _multistart_minimize(objective, [beta0], lo, hi, opts)
    x_hat, _, success = min(candidates, key=lambda c: c[1])
    _, q_min, profile = _plpm_moments(x_hat, data, solver, opts.scoring)
    fit = FitResult(
        method=METHOD_PLPM,
        beta=x_hat,
        lam=None,
        q_min=q_min,
        g_hat_at_sample=profile.eta,
        bandwidth=b,
        converged=success,
        optimizer_trace=trace,
    )
    if opts.covariance:
        _attach_covariance(fit, data, None, b, opts)
    return fit


def fit_lsaep(data: Dataset, W: WeightMatrix, options: FitOptions | None = None) -> FitResult:
    """Fit the fully linear spatial-error probit baseline.

    The smooth component is replaced by gamma0 + gamma1 z estimated jointly
    with (beta, lam); instruments are the analytic index derivatives, no
    profiling is involved, and no bandwidth is needed.
    """
    opts = options or FitOptions()
    p = data.p
    c = adjusted_probit_scores(data.y)
    design = np.column_stack([data.x, np.ones(data.n), data.z])
    coef, _ = ols_without_intercept(c, design)
    lo = np.r_[np.full(p + 2, -opts.beta_bound), -opts.lambda_bound]
    hi = np.r_[np.full(p + 2, opts.beta_bound), opts.lambda_bound]

    def objective(vec):
        beta, gamma, lam = vec[:p], vec[p : p + 2], float(vec[p + 2])
        sv = sar_variance(W, lam)
        _, q = _lsaep_moments(beta, gamma, lam, data, sv)
        return q

    starts = [
        np.r_[coef * float(np.mean(sar_variance(W, lam0).v)), lam0]
        for lam0 in opts.multistart_lambdas
    ]
    candidates, trace = _multistart_minimize(objective, starts, lo, hi, opts)

    scored = []
    for (x, _, success), entry in zip(candidates, (t for t in trace if t["q"] is not None)):
        beta, gamma, lam = x[:p], x[p : p + 2], float(x[p + 2])
        sv = sar_variance(W, lam)
        _, q = _lsaep_moments(beta, gamma, lam, data, sv)
        idx = data.x @ beta + gamma[0] + gamma[1] * data.z
        loglik = _pseudo_loglik(idx / sv.v, data.y)
        entry["q_refined"] = q
        entry["loglik"] = loglik
        scored.append({"x": x, "q": q, "loglik": loglik, "success": success})

    chosen = _select_root(scored)
    x_hat = chosen["x"]
    beta_hat = x_hat[:p]
    gamma_hat = (float(x_hat[p]), float(x_hat[p + 1]))
    lam_hat = float(x_hat[p + 2])
    fit = FitResult(
        method=METHOD_LSAEP,
        beta=beta_hat,
        lam=lam_hat,
        q_min=chosen["q"],
        g_hat_at_sample=gamma_hat[0] + gamma_hat[1] * data.z,
        bandwidth=None,
        converged=chosen["success"],
        lambda_at_boundary=abs(lam_hat) >= LAMBDA_BOUNDARY_FLAG,
        g_linear=gamma_hat,
        optimizer_trace=trace,
    )
    if opts.covariance:
        _attach_covariance(fit, data, W, None, opts)
    return fit


def _moment_closure(fit: FitResult, data: Dataset, W: WeightMatrix | None, b: float | None,
                    cfg: ScoringConfig | None):
    """Map the active parameter vector of a fit to its moment vector."""
    if fit.method == METHOD_PLSPM:
        if W is None or b is None:
            raise DataError("plspm covariance needs the weight matrix and bandwidth")
        solver = ProfileSolver(data.x, data.y, kernel_weight_matrix(data.z, data.z, b))

        def s_of(vec):
            beta, lam = vec[: data.p], float(vec[data.p])
            sv = sar_variance(W, lam)
            s, _, _ = _plspm_moments(beta, lam, data, sv, solver, cfg)
            return s

        return np.r_[fit.beta, fit.lam], s_of
    if fit.method == METHOD_PLPM:
        if b is None:
            raise DataError("plpm covariance needs the bandwidth")
        solver = ProfileSolver(data.x, data.y, kernel_weight_matrix(data.z, data.z, b))

        def s_of(vec):
            s, _, _ = _plpm_moments(vec, data, solver, cfg)
            return s

        return np.asarray(fit.beta, dtype=float).copy(), s_of
    if fit.method == METHOD_LSAEP:
        if W is None:
            raise DataError("lsaep covariance needs the weight matrix")

        def s_of(vec):
            beta, gamma, lam = vec[: data.p], vec[data.p : data.p + 2], float(vec[data.p + 2])
            sv = sar_variance(W, lam)
            s, _ = _lsaep_moments(beta, gamma, lam, data, sv)
            return s

        return np.r_[fit.beta, fit.g_linear[0], fit.g_linear[1], fit.lam], s_of
    raise ConfigurationError(f"unknown method {fit.method!r}")


def covariance_estimate(
    fit: FitResult,
    data: Dataset,
    W: WeightMatrix | None,
    b: float | None,
    cfg: ScoringConfig | None = None,
    step: float = 1e-4,
) -> np.ndarray:
    """Moment-sandwich covariance at the fitted parameters.

    dS/dtheta is computed by central finite differences (the profile is
    re-solved at every perturbation), B1 = n S S', B2 = (dS/dtheta)'(dS/dtheta),
    and the returned matrix is the symmetrized B2^{-1} D' B1 D B2^{-1}.

    Raises ``CovarianceSingularError`` when lam-hat is (numerically) zero -
    the lam instrument column vanishes there, making B2 structurally
    singular - or when B2's condition number exceeds 1e10.
    """
    if fit.method in (METHOD_PLSPM, METHOD_LSAEP) and abs(fit.lam) < LAMBDA_SINGULAR_TOL:
        raise CovarianceSingularError(
            "covariance is unavailable at lam-hat = 0: the lam moment derivative "
            "vanishes and B2 is singular"
        )
    center, s_of = _moment_closure(fit, data, W, b, cfg)
    s0 = s_of(center)
    k = center.shape[0]
    d = np.empty((s0.shape[0], k))
    for j in range(k):
        h = step * max(1.0, abs(center[j]))
        up = center.copy()
        dn = center.copy()
        up[j] += h
        dn[j] -= h
        d[:, j] = (s_of(up) - s_of(dn)) / (2.0 * h)
    b1 = data.n * np.outer(s0, s0)
    b2 = d.T @ d
    cond = np.linalg.cond(b2)
    if not np.isfinite(cond) or cond > B2_CONDITION_LIMIT:
        raise CovarianceSingularError(
            f"moment-derivative matrix is near-singular (condition {cond:.3g})"
        )
    b2_inv = np.linalg.inv(b2)
    omega = b2_inv @ d.T @ b1 @ d @ b2_inv
    return 0.5 * (omega + omega.T)


def _attach_covariance(fit: FitResult, data, W, b, opts: FitOptions) -> None:
    try:
        fit.covariance = covariance_estimate(
            fit, data, W, b, cfg=opts.scoring, step=opts.covariance_step
        )
    except CovarianceSingularError as exc:
        fit.covariance = None
        fit.covariance_note = str(exc)
