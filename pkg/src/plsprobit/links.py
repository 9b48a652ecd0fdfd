"""Standard-normal link quantities for the heteroscedastic probit score.

Everything downstream (profiling, moments, instruments) is built from four
functions of the latent index t:

    phi(t)      standard normal density
    Phi(t)      standard normal CDF
    Lambda(t)   phi / (Phi (1 - Phi)), the probit score weight
    Lambda'(t)  its derivative, in the subtraction-free closed form
                (1/Phi) [r (r - t)] - phi^2 / (Phi^2 (1 - Phi)),  r = phi/(1-Phi)

Both CDF tails are evaluated through the complementary error function
(``scipy.special.ndtr`` at +t and -t), never by subtracting from 1, and are
clamped to [1e-12, 1 - 1e-12] before any ratio is formed.  The clamp is a
numerical guard for extreme indices, not a modelling choice: Lambda stays
finite (no overflow, no NaN) for any finite input, in particular on |t| <= 37.

All functions accept scalars or ndarrays and are pure and thread-safe.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special

CDF_CLAMP = 1e-12

_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


@dataclass(frozen=True)
class LinkBundle:
    """Link values at one latent index (or elementwise over an array).

    Attributes
    ----------
    phi : normal density, >= 0
    Phi : normal CDF clamped to (1e-12, 1 - 1e-12)
    lam : Lambda = phi / (Phi (1 - Phi)), > 0
    lam_prime : Lambda', odd in the index
    """

    phi: float | np.ndarray
    Phi: float | np.ndarray
    lam: float | np.ndarray
    lam_prime: float | np.ndarray


def _checked(g):
    arr = np.asarray(g, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError("latent index must be finite")
    return arr


def _cdf_sides(g):
    """Clamped (Phi, 1 - Phi) with the small tail computed directly.

    One ndtr evaluation at -|g| gives the small side at full precision; the
    large side is 1 minus it, which stays inside the clamp automatically
    once the small side is floored.  Symmetry of the pair in g -> -g is
    exact by construction.
    """
    small = special.ndtr(-np.abs(g))
    small = np.maximum(small, CDF_CLAMP)
    large = 1.0 - small
    nonneg = g >= 0
    lo = np.where(nonneg, large, small)
    hi = np.where(nonneg, small, large)
    return lo, hi


def _score_parts(g):
    """(phi, Phi, lam) only - the per-iteration scoring needs no lam_prime.

    lam uses the symmetric product small*(1-small) directly, so only Phi
    itself needs the side selection.
    """
    t = np.abs(g)
    phi = _INV_SQRT_2PI * np.exp(-0.5 * t * t)
    small = special.ndtr(-t)
    small = np.maximum(small, CDF_CLAMP)
    lam = phi / (small * (1.0 - small))
    lo = np.where(g >= 0, 1.0 - small, small)
    return phi, lo, lam


def _link_parts(g):
    """Return (phi, Phi, one_minus_Phi, lam, lam_prime) as arrays, clamped."""
    g = np.asarray(g, dtype=float)
    phi = _INV_SQRT_2PI * np.exp(-0.5 * g * g)
    lo, hi = _cdf_sides(g)
    lam = phi / (lo * hi)
    r = phi / hi
    lam_prime = r * (r - g) / lo - phi * phi / (lo * lo * hi)
    return phi, lo, hi, lam, lam_prime


def link_bundle(g) -> LinkBundle:
    """Evaluate phi, Phi, Lambda and Lambda' at the latent index ``g``.

    Raises ``ValueError`` if ``g`` is not finite.
    """
    arr = _checked(g)
    phi, lo, _, lam, lam_prime = _link_parts(arr)
    if np.ndim(g) == 0:
        return LinkBundle(float(phi), float(lo), float(lam), float(lam_prime))
    return LinkBundle(phi, lo, lam, lam_prime)


def _checked_binary(y):
    arr = np.asarray(y, dtype=float)
    if not np.all((arr == 0.0) | (arr == 1.0)):
        raise ValueError("responses must be 0 or 1")
    return arr


def generalized_residual(y, g):
    """E(U | Y=y) for a probit: Lambda(g) (y - Phi(g)).

    Equals phi(g)(y - Phi(g)) / [Phi(g)(1 - Phi(g))]; its sign is the sign
    of y - Phi(g), and it is exactly mean-zero over y ~ Bernoulli(Phi(g)).
    """
    yv = _checked_binary(y)
    arr = _checked(g)
    _, lo, _, lam, _ = _link_parts(arr)
    out = lam * (yv - lo)
    if np.ndim(out) == 0:
        return float(out)
    return out


def delta_weight(y, g):
    """Derivative of the generalized residual in the index:

    Lambda'(g)(y - Phi(g)) - Lambda(g) phi(g).

    Strictly negative for finite indices (probit log-concavity); appears as
    the denominator weight of every profile-gradient formula.
    """
    yv = _checked_binary(y)
    arr = _checked(g)
    phi, lo, _, lam, lam_prime = _link_parts(arr)
    out = lam_prime * (yv - lo) - lam * phi
    if np.ndim(out) == 0:
        return float(out)
    return out
