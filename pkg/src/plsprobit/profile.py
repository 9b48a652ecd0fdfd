"""Kernel-weighted profiling of the nonparametric component.

For fixed parameters (beta, lam) and a query point z the profiled value
g_hat(z) is the root in eta of the kernel-weighted probit score

    psi(eta) = sum_i v_i^{-1} Lambda(G_i) (y_i - Phi(G_i)) K((z - Z_i)/b),
    G_i = (x_i' beta + eta) / v_i,

found by damped Fisher scoring with the (positive) information

    Psi(eta) = sum_i v_i^{-2} Lambda(G_i) phi(G_i) K((z - Z_i)/b),

update eta <- eta + damping * psi / Psi.  The second-order correction term
of the exact expected derivative depends on the unknown true parameters and
is negligible near them, so it is dropped from Psi.  Damping halves while a
step increases |psi| (the probit score is strictly decreasing in eta, so a
step in the direction of psi always admits an improving length).

The starting value solves the score linearized at rough latent responses
C_i = Phi^{-1}(0.9 y_i + 0.1 (1 - y_i)):

    eta_0 = sum_i v_i^{-1} L_i [C_i - v_i^{-1} x_i' beta] K_i
            / sum_i v_i^{-2} L_i K_i,          L_i = Lambda(C_i) phi(C_i).

Gradients of g_hat in the parameters come from the implicit function theorem
applied to psi(g_hat(z); beta, lam) = 0, with D_i = delta_weight(y_i, G_i):

    dg/dbeta = - sum_i v_i^{-2} D_i x_i K_i / sum_i v_i^{-2} D_i K_i
    dg/dlam  = [ sum_i v_i^{-3} v_i' D_i (x_i' beta + eta) K_i
                 + sum_i v_i^{-2} v_i' Lambda_i (y_i - Phi_i) K_i ]
               / sum_i v_i^{-2} D_i K_i

Both vanish termwise at lam = 0 where v' = 0; dg/dlam = 0 there exactly.

Queries are vectorized: solving at m points against n observations works on
(m, n) arrays, and distinct queries never interact.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import Dataset
from .errors import (
    DataError,
    DegenerateInformationError,
    DivergenceError,
    OutOfSupportError,
)
from .kernels import WEIGHT_FLOOR, adjusted_probit_scores, gaussian_kernel
from .links import _link_parts, _score_parts
from .spatial import SarVariance

# Walk-off guard: |eta| beyond this is treated as separation.
ETA_DIVERGENCE_LIMIT = 1e6
# Scoring denominators below this have underflowed.
INFO_FLOOR = 1e-300
# Cap on a single scoring update, in latent-index units.  Near-empty kernel
# windows make the information tiny and the raw step enormous; an uncapped
# step can jump into the far tail where score and information both
# underflow to zero and the iteration would falsely settle there.
STEP_CAP = 4.0
_MAX_HALVINGS = 40


@dataclass(frozen=True)
class ScoringConfig:
    """Fisher-scoring controls: step tolerance on |eta update|, iteration
    cap, and the initial damping factor (halved on score increase)."""

    max_iter: int = 50
    tol: float = 1e-9
    damping: float = 1.0

    def __post_init__(self):
        if self.max_iter < 1:
            raise DataError("max_iter must be >= 1")
        if not self.tol > 0:
            raise DataError("tol must be positive")
        if not 0.0 < self.damping <= 1.0:
            raise DataError("damping must be in (0, 1]")


@dataclass(frozen=True)
class ProfileFit:
    """Profiled value and parameter gradients at one query point."""

    eta: float
    grad_beta: np.ndarray
    grad_lambda: float
    iterations: int
    converged: bool
    effective_weight_mass: float


@dataclass(frozen=True)
class ProfileBatch:
    """Vectorized profile solution at m query points."""

    eta: np.ndarray = field(repr=False)
    grad_beta: np.ndarray = field(repr=False)  # (m, p)
    grad_lambda: np.ndarray = field(repr=False)
    iterations: np.ndarray = field(repr=False)
    converged: np.ndarray = field(repr=False)
    weight_mass: np.ndarray = field(repr=False)

    def __len__(self) -> int:
        return self.eta.shape[0]

    def point(self, i: int) -> ProfileFit:
        return ProfileFit(
            eta=float(self.eta[i]),
            grad_beta=self.grad_beta[i].copy(),
            grad_lambda=float(self.grad_lambda[i]),
            iterations=int(self.iterations[i]),
            converged=bool(self.converged[i]),
            effective_weight_mass=float(self.weight_mass[i]),
        )


def kernel_weight_matrix(queries, z, b: float) -> np.ndarray:
    """(m, n) Gaussian weights K((query_j - z_i)/b)."""
    q = np.atleast_1d(np.asarray(queries, dtype=float))
    return gaussian_kernel((q[:, None] - np.asarray(z, dtype=float)[None, :]) / b)


try:
    from ._fast import gradient_sums_fused, score_info_fused
except ImportError:  # numba unavailable: the numpy paths below take over
    gradient_sums_fused = None
    score_info_fused = None


def _score_info(xbv, y, inv_v, inv_v2, eta, w):
    """psi and the positive information Psi at each query (vectorized).

    ``xbv`` is the index offset x'beta / v and ``inv_v``/``inv_v2`` are the
    reciprocal error scales; the 1/v factors fold into the reductions so the
    weight matrix is consumed as-is.
    """
    if score_info_fused is not None:
        return score_info_fused(xbv, y, inv_v, inv_v2, eta, w)
    g = np.multiply.outer(eta, inv_v)
    g += xbv[None, :]
    phi, lo, lam = _score_parts(g)
    psi = np.einsum("ij,ij,j->i", w, lam * (y[None, :] - lo), inv_v)
    info = np.einsum("ij,ij,j->i", w, lam * phi, inv_v2)
    return psi, info


def _check_beta(theta_beta, p):
    beta = np.asarray(theta_beta, dtype=float).ravel()
    if beta.shape[0] != p:
        raise DataError(f"beta has length {beta.shape[0]}, expected {p}")
    return beta


class ProfileSolver:
    """Scoring solver bound to one (data, kernel-weight) configuration.

    The kernel weights, their support checks and the latent-score start
    ingredients do not depend on the parameters, so fit loops construct one
    solver and call :meth:`solve` per criterion evaluation.

    Raises on construction:
        OutOfSupportError   if some query row carries no kernel mass
        DivergenceError     if the weighted responses at some query are all
                            equal (separation: the score has no root)
    """

    def __init__(self, x: np.ndarray, y: np.ndarray, weights: np.ndarray):
        self.x = np.asarray(x, dtype=float)
        self.y = np.asarray(y, dtype=float)
        self.weights = np.asarray(weights, dtype=float)

        mass = self.weights.sum(axis=1)
        if np.any(~(mass > WEIGHT_FLOOR)):
            idx = int(np.argmin(mass))
            raise OutOfSupportError(f"no kernel mass at query index {idx}")
        self.mass = mass

        positive = self.weights > WEIGHT_FLOOR
        any_one = np.any(positive & (self.y[None, :] == 1.0), axis=1)
        any_zero = np.any(positive & (self.y[None, :] == 0.0), axis=1)
        separated = ~(any_one & any_zero)
        if np.any(separated):
            idx = int(np.argmax(separated))
            raise DivergenceError(
                f"responses with kernel weight at query index {idx} are one-sided; "
                "the profiled score has no root",
                index=idx,
            )

        c = adjusted_probit_scores(self.y)
        phi_c, _, _, lam_c, _ = _link_parts(c)
        self._c = c
        self._lp = lam_c * phi_c

    def solve(
        self,
        beta,
        sv: SarVariance,
        cfg: ScoringConfig | None = None,
        eta0: np.ndarray | None = None,
    ) -> ProfileBatch:
        """Damped Fisher scoring at every query row; see the module doc.

        ``eta0`` optionally overrides the closed-form start (the score root
        is unique, so the converged values do not depend on it; fit loops
        pass the previous evaluation's solution to save iterations).

        Raises ``DivergenceError`` when an iterate walks past |eta| = 1e6 and
        ``DegenerateInformationError`` when the information underflows.
        """
        cfg = cfg or ScoringConfig()
        x, y, weights = self.x, self.y, self.weights
        beta = np.asarray(beta, dtype=float)
        xb = x @ beta
        v = sv.v
        m = weights.shape[0]

        inv_v = 1.0 / v
        inv_v2 = inv_v * inv_v
        xbv = xb * inv_v

        if eta0 is not None and eta0.shape == (m,) and np.all(np.isfinite(eta0)):
            eta = eta0.astype(float, copy=True)
        else:
            # Closed-form start from the adjusted latent scores.
            num = weights @ (self._lp * (self._c - xbv) * inv_v)
            den = weights @ (self._lp * inv_v2)
            if np.any(den < INFO_FLOOR):
                raise DegenerateInformationError("information underflow at the starting value")
            eta = num / den

        converged = np.zeros(m, dtype=bool)
        iterations = np.zeros(m, dtype=int)
        psi, info = _score_info(xbv, y, inv_v, inv_v2, eta, weights)
        if np.any(info < INFO_FLOOR):
            raise DegenerateInformationError("information underflow during scoring")

        # Only unconverged rows are recomputed; most queries settle early.
        # Rows whose every damped trial is rejected stall and stop iterating.
        act = np.arange(m)
        for _ in range(cfg.max_iter):
            step = psi[act] / info[act]
            done = np.abs(step) <= cfg.tol
            converged[act[done]] = True
            act = act[~done]
            if act.size == 0:
                break
            step = np.clip(step[~done], -STEP_CAP, STEP_CAP)
            iterations[act] += 1

            w_a = weights[act]
            base = np.abs(psi[act])
            damp = np.full(act.size, cfg.damping)
            trial = eta[act] + damp * step
            psi_t, info_t = _score_info(xbv, y, inv_v, inv_v2, trial, w_a)
            for _ in range(_MAX_HALVINGS):
                # A trial is rejected when the score worsens or the
                # information dies (false root in the underflow tail).
                worse = (np.abs(psi_t) > base) | (info_t < INFO_FLOOR)
                if not worse.any():
                    break
                damp[worse] *= 0.5
                trial = eta[act] + damp * step
                psi_t, info_t = _score_info(xbv, y, inv_v, inv_v2, trial, w_a)
            accept = (np.abs(psi_t) <= base) & (info_t >= INFO_FLOOR)

            moved = act[accept]
            eta[moved] = trial[accept]
            psi[moved] = psi_t[accept]
            info[moved] = info_t[accept]
            act = moved  # rejected rows stall with their last iterate
            if np.any(np.abs(eta[moved]) > ETA_DIVERGENCE_LIMIT):
                idx = int(moved[np.argmax(np.abs(eta[moved]))])
                raise DivergenceError(
                    f"profiled value diverged at query index {idx} (separation)", index=idx
                )
            if act.size == 0:
                break
        else:
            # Final tolerance check for points that converged on the last update.
            if act.size:
                step = psi[act] / info[act]
                converged[act[np.abs(step) <= cfg.tol]] = True

        grad_beta, grad_lambda = _profile_gradients(x, y, beta, sv, weights, eta)
        return ProfileBatch(
            eta=eta,
            grad_beta=grad_beta,
            grad_lambda=grad_lambda,
            iterations=iterations,
            converged=converged,
            weight_mass=self.mass,
        )


def solve_profile_weighted(
    x: np.ndarray,
    y: np.ndarray,
    beta: np.ndarray,
    sv: SarVariance,
    weights: np.ndarray,
    cfg: ScoringConfig | None = None,
) -> ProfileBatch:
    """One-shot convenience wrapper around :class:`ProfileSolver`."""
    return ProfileSolver(x, y, weights).solve(beta, sv, cfg)


def _profile_gradients(x, y, beta, sv, weights, eta):
    """Implicit-function gradients of the profiled value (see module doc)."""
    v = sv.v
    vp = sv.v_prime
    xb = x @ beta

    if gradient_sums_fused is not None:
        inv_v = 1.0 / v
        den, gb_num, t1, t2 = gradient_sums_fused(
            x, y, xb * inv_v, inv_v, inv_v * inv_v, vp, eta, weights
        )
        if np.any(np.abs(den) < INFO_FLOOR):
            raise DegenerateInformationError("gradient denominator underflow")
        return -gb_num / den[:, None], (t1 + t2) / den

    g = (xb[None, :] + eta[:, None]) / v[None, :]
    phi, lo, _, lam, lam_prime = _link_parts(g)
    ydiff = y[None, :] - lo
    delta = lam_prime * ydiff
    delta -= lam * phi

    wd = weights * delta
    wd /= (v * v)[None, :]
    den = wd.sum(axis=1)
    if np.any(np.abs(den) < INFO_FLOOR):
        raise DegenerateInformationError("gradient denominator underflow")
    grad_beta = -(wd @ x) / den[:, None]

    if np.any(vp != 0.0):
        # (xb + eta) = g v turns w D (xb+eta) vp / v^3 into wd g vp.
        term1 = np.einsum("ij,ij,j->i", wd, g, vp)
        term2 = np.einsum("ij,ij,j->i", weights * lam, ydiff, vp / (v * v))
        grad_lambda = (term1 + term2) / den
    else:
        grad_lambda = np.zeros(eta.shape[0])
    return grad_beta, grad_lambda


def profile_at(
    theta_beta,
    lam: float,
    queries,
    data: Dataset,
    sv: SarVariance,
    b: float,
    cfg: ScoringConfig | None = None,
) -> ProfileBatch:
    """Profile g_hat and its parameter gradients at the given query points."""
    beta = _check_beta(theta_beta, data.p)
    if float(lam) != sv.lam:
        raise DataError(f"sar profile was computed at lam={sv.lam}, queried at {lam}")
    weights = kernel_weight_matrix(queries, data.z, b)
    return solve_profile_weighted(data.x, data.y, beta, sv, weights, cfg)


def score_psi(eta: float, theta, z: float, data: Dataset, sv: SarVariance, b: float) -> float:
    """Kernel-weighted probit score at one query point."""
    beta = _check_beta(theta.beta, data.p)
    w = kernel_weight_matrix([z], data.z, b)
    if not np.any(w > WEIGHT_FLOOR):
        raise OutOfSupportError(f"no kernel mass at query {z}")
    inv_v = 1.0 / sv.v
    psi, _ = _score_info(
        (data.x @ beta) * inv_v, data.y, inv_v, inv_v * inv_v, np.array([float(eta)]), w
    )
    return float(psi[0])


def fisher_info(eta: float, theta, z: float, data: Dataset, sv: SarVariance, b: float) -> float:
    """Positive scoring information at one query point.

    Sign convention: the scoring update is eta + psi / fisher_info.
    """
    beta = _check_beta(theta.beta, data.p)
    w = kernel_weight_matrix([z], data.z, b)
    if not np.any(w > WEIGHT_FLOOR):
        raise OutOfSupportError(f"no kernel mass at query {z}")
    inv_v = 1.0 / sv.v
    _, info = _score_info(
        (data.x @ beta) * inv_v, data.y, inv_v, inv_v * inv_v, np.array([float(eta)]), w
    )
    if info[0] < INFO_FLOOR:
        raise DegenerateInformationError(f"information underflow at query {z}")
    return float(info[0])


def initial_eta(theta, z: float, data: Dataset, sv: SarVariance, b: float) -> float:
    """Closed-form scoring start built from the adjusted latent scores."""
    beta = _check_beta(theta.beta, data.p)
    w = kernel_weight_matrix([z], data.z, b)[0]
    if not np.any(w > WEIGHT_FLOOR):
        raise OutOfSupportError(f"no kernel mass at query {z}")
    v = sv.v
    xb = data.x @ beta
    c = adjusted_probit_scores(data.y)
    phi_c, _, _, lam_c, _ = _link_parts(c)
    lp = lam_c * phi_c
    num = float(w @ (lp * (c - xb / v) / v))
    den = float(w @ (lp / (v * v)))
    if den < INFO_FLOOR:
        raise DegenerateInformationError(f"information underflow at query {z}")
    return num / den


def solve_g_hat(
    theta,
    z: float,
    data: Dataset,
    sv: SarVariance,
    b: float,
    cfg: ScoringConfig | None = None,
) -> ProfileFit:
    """Solve the profiled score at one query point; see module docstring.

    Returns the last iterate with ``converged=False`` when the iteration cap
    is reached; raises ``DivergenceError`` on separation.
    """
    batch = profile_at(theta.beta, theta.lam, [z], data, sv, b, cfg)
    return batch.point(0)
