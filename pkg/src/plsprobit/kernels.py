"""Gaussian kernel smoothing and the two-step bandwidth heuristic.

The bandwidth is not chosen by cross-validating the full profiled likelihood
(too expensive); instead:

1. map responses to rough latent scores C_i = Phi^{-1}(0.9 y_i + 0.1 (1-y_i)),
2. regress C on X without intercept, keep residuals R_i,
3. pick the bandwidth minimizing the leave-one-out CV error of the
   Nadaraya-Watson regression of R on Z over a 30-point logarithmic grid
   spanning [0.05, 3] * sigma_Z.

R inherits the smoothness of the nonparametric component, so its optimal
bandwidth is a good proxy.  Ties on the CV curve resolve to the largest
candidate (oversmoothing is the conservative direction).
"""

from __future__ import annotations

import numpy as np
from scipy import special

from .data import Dataset
from .errors import DataError, OutOfSupportError

GRID_SIZE = 30
GRID_SPAN = (0.05, 3.0)

# Kernel weights below this are considered vanished.
WEIGHT_FLOOR = 1e-300


def gaussian_kernel(t):
    """Standard normal density; accepts scalars or arrays."""
    arr = np.asarray(t, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError("kernel argument must be finite")
    out = np.exp(-0.5 * arr * arr) / np.sqrt(2.0 * np.pi)
    return float(out) if np.ndim(t) == 0 else out


def nadaraya_watson(query: float, zs, rs, b: float) -> float:
    """Kernel-weighted mean of rs at ``query``: sum r K / sum K.

    Raises ``OutOfSupportError`` when every weight is below 1e-300.
    """
    zs = np.asarray(zs, dtype=float)
    rs = np.asarray(rs, dtype=float)
    if zs.shape != rs.shape or zs.ndim != 1 or zs.size == 0:
        raise DataError("zs and rs must be equal-length nonempty vectors")
    if not b > 0:
        raise DataError("bandwidth must be positive")
    w = gaussian_kernel((query - zs) / b)
    if not np.any(w > WEIGHT_FLOOR):
        raise OutOfSupportError(f"no kernel mass at query {query}")
    return float(w @ rs / w.sum())


def adjusted_probit_scores(y) -> np.ndarray:
    """C_i = Phi^{-1}(0.9 y_i + 0.1 (1 - y_i)), i.e. +/- Phi^{-1}(0.9)."""
    y = np.asarray(y, dtype=float)
    return special.ndtri(0.9 * y + 0.1 * (1.0 - y))


def ols_without_intercept(c, x):
    """Least squares of c on x with no intercept: (coef, residuals).

    Raises ``DataError`` when x is rank-deficient.
    """
    c = np.asarray(c, dtype=float)
    x = np.asarray(x, dtype=float)
    coef, _, rank, _ = np.linalg.lstsq(x, c, rcond=None)
    if rank < x.shape[1]:
        raise DataError("covariate matrix is rank-deficient")
    return coef, c - x @ coef


def _loo_cv_score(resid: np.ndarray, z: np.ndarray, b: float) -> float:
    """Leave-one-out CV error of the NW regression of resid on z."""
    t = (z[:, None] - z[None, :]) / b
    k = np.exp(-0.5 * t * t)  # 1/sqrt(2 pi) cancels in the ratio
    np.fill_diagonal(k, 0.0)
    denom = k.sum(axis=1)
    if np.any(denom <= 0.0):
        return np.inf
    pred = (k @ resid) / denom
    err = resid - pred
    return float(err @ err)


def bandwidth_grid(z) -> np.ndarray:
    """Logarithmic candidate grid spanning [0.05, 3] * sigma_Z."""
    sigma = float(np.std(np.asarray(z, dtype=float), ddof=1))
    if not np.isfinite(sigma) or sigma <= 0.0:
        raise DataError("smoothing covariate has zero variance")
    return np.geomspace(GRID_SPAN[0] * sigma, GRID_SPAN[1] * sigma, GRID_SIZE)


def select_bandwidth_for_residuals(resid, z) -> float:
    """LOO-CV bandwidth for the NW regression of ``resid`` on ``z``.

    Scans the candidate grid in ascending order and keeps ties at the
    largest bandwidth.
    """
    resid = np.asarray(resid, dtype=float)
    z = np.asarray(z, dtype=float)
    grid = bandwidth_grid(z)
    best_b = None
    best_score = np.inf
    for b in grid:  # ascending: <= keeps the largest of exact ties
        score = _loo_cv_score(resid, z, float(b))
        if score <= best_score:
            best_score = score
            best_b = float(b)
    if best_b is None or not np.isfinite(best_score):
        # Flat-at-infinity curves mean every candidate starves: oversmooth.
        best_b = float(grid[-1])
    return best_b


def select_bandwidth(data: Dataset) -> float:
    """Two-step bandwidth choice described in the module docstring.

    Deterministic in the dataset.  Raises ``DataError`` on rank-deficient
    covariates or a degenerate smoothing covariate.
    """
    c = adjusted_probit_scores(data.y)
    _, resid = ols_without_intercept(c, data.x)
    return select_bandwidth_for_residuals(resid, data.z)
