"""Fused numba kernels for the scoring hot path.

These mirror the closed forms in :mod:`plsprobit.links` exactly (clamped
complementary-error-function tails, probit score weight and its derivative);
profile.py falls back to the numpy implementations when numba is absent, so
any edit here must be mirrored there.
"""

import math

import numpy as np
from numba import njit

_INV_SQRT_2PI = 0.3989422804014327
_INV_SQRT_2 = 0.7071067811865476
_CLAMP = 1e-12


@njit(cache=True)
def score_info_fused(xbv, y, inv_v, inv_v2, eta, w):
    """Kernel-weighted probit score and information at each query row."""
    k = eta.shape[0]
    n = xbv.shape[0]
    psi = np.empty(k)
    info = np.empty(k)
    for i in range(k):
        e = eta[i]
        ps = 0.0
        nf = 0.0
        for j in range(n):
            g = e * inv_v[j] + xbv[j]
            t = abs(g)
            phi = _INV_SQRT_2PI * math.exp(-0.5 * t * t)
            small = 0.5 * math.erfc(t * _INV_SQRT_2)
            if small < _CLAMP:
                small = _CLAMP
            lam = phi / (small * (1.0 - small))
            lo = 1.0 - small if g >= 0.0 else small
            wij = w[i, j]
            ps += wij * lam * (y[j] - lo) * inv_v[j]
            nf += wij * lam * phi * inv_v2[j]
        psi[i] = ps
        info[i] = nf
    return psi, info


@njit(cache=True)
def gradient_sums_fused(x, y, xbv, inv_v, inv_v2, vp, eta, w):
    """Accumulators of the profile-gradient formulas at each query row.

    Returns (den, gb_num, t1, t2) with

        den    = sum_j w D_j / v_j^2
        gb_num = sum_j w D_j x_j / v_j^2          (k, p)
        t1     = sum_j w D_j G_j v'_j / v_j^2
        t2     = sum_j w Lam_j (y_j - Phi_j) v'_j / v_j^2

    where D is the delta weight Lam'(G)(y - Phi) - Lam(G) phi(G).
    """
    k = eta.shape[0]
    n = xbv.shape[0]
    p = x.shape[1]
    den = np.zeros(k)
    gb_num = np.zeros((k, p))
    t1 = np.zeros(k)
    t2 = np.zeros(k)
    for i in range(k):
        e = eta[i]
        for j in range(n):
            g = e * inv_v[j] + xbv[j]
            t = abs(g)
            phi = _INV_SQRT_2PI * math.exp(-0.5 * t * t)
            small = 0.5 * math.erfc(t * _INV_SQRT_2)
            if small < _CLAMP:
                small = _CLAMP
            if g >= 0.0:
                lo = 1.0 - small
                hi = small
            else:
                lo = small
                hi = 1.0 - small
            lam = phi / (lo * hi)
            r = phi / hi
            lam_prime = r * (r - g) / lo - phi * phi / (lo * lo * hi)
            ydiff = y[j] - lo
            delta = lam_prime * ydiff - lam * phi
            wd = w[i, j] * delta * inv_v2[j]
            den[i] += wd
            for c in range(p):
                gb_num[i, c] += wd * x[j, c]
            t1[i] += wd * g * vp[j]
            t2[i] += w[i, j] * lam * ydiff * vp[j] * inv_v2[j]
    return den, gb_num, t1, t2
