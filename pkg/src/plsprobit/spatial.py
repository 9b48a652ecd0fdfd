"""Spatial weight matrices and the SAR error scale profile.

The disturbance follows U = lam * W U + eps with eps iid N(0,1), so
U = (I - lam W)^{-1} eps and

    V(lam)   = (I - lam W)^{-1} (I - lam W)^{-T}
    v_i(lam) = sqrt(V(lam)_{ii})            per-observation error scale
    v_i'(lam)= [(I - lam W)^{-1} W V(lam)]_{ii} / v_i(lam)

The derivative form follows from d/dlam V = S^{-1} W V + V W^T S^{-T} with
S = I - lam W, whose diagonal is twice the symmetric part used above; it is
validated against finite differences in the test suite.

W is built from k nearest neighbours (Euclidean distance, ties broken by the
smaller index) and row-normalized by default, which keeps I - lam W
well-conditioned on |lam| <= 0.95.  Matrices are dense-factorized: intended
scale is n up to a few thousand.  A per-row sparse solve is the escape hatch
if that ever changes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from .errors import ConfigurationError, DataError, NumericalError

# Condition-number ceiling for I - lam W before sar_variance refuses.
CONDITION_LIMIT = 1e12


@dataclass(frozen=True)
class WeightMatrix:
    """Sparse n x n nonnegative spatial weights with a zero diagonal."""

    matrix: sparse.csr_matrix
    row_normalized: bool = False
    k: int | None = None

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()


@dataclass(frozen=True)
class SarVariance:
    """Diagonal error-scale profile v(lam) and its lam-derivative."""

    lam: float
    v: np.ndarray = field(repr=False)
    v_prime: np.ndarray = field(repr=False)

    @classmethod
    def identity(cls, n: int) -> "SarVariance":
        """The lam = 0 profile: unit scales, zero derivatives (exact)."""
        return cls(0.0, np.ones(n), np.zeros(n))


def build_knn_weights(coords, k: int, row_normalize: bool = True) -> WeightMatrix:
    """k-nearest-neighbour weight matrix from planar coordinates.

    Parameters
    ----------
    coords : (n, 2) array of planar positions, pairwise distinct
    k : neighbours per row, 0 < k < n
    row_normalize : entries 1/k instead of 1

    Distance ties are broken by the smaller index.  Raises
    ``ConfigurationError`` if k >= n and ``DataError`` on duplicate points.
    """
    pts = np.asarray(coords, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise DataError("coordinates must be an (n, 2) array")
    if not np.all(np.isfinite(pts)):
        raise DataError("coordinates must be finite")
    n = pts.shape[0]
    if k < 1 or k >= n:
        raise ConfigurationError(f"k_neighbors must satisfy 1 <= k < n, got k={k}, n={n}")

    diff = pts[:, None, :] - pts[None, :, :]
    dist2 = np.einsum("ijk,ijk->ij", diff, diff)
    off_diag = ~np.eye(n, dtype=bool)
    if np.any(dist2[off_diag] == 0.0):
        i, j = np.argwhere((dist2 == 0.0) & off_diag)[0]
        raise DataError(f"duplicate coordinates at rows {i} and {j}")

    np.fill_diagonal(dist2, np.inf)
    # Stable sort keeps the original (index) order among equal distances.
    neighbours = np.argsort(dist2, axis=1, kind="stable")[:, :k]

    rows = np.repeat(np.arange(n), k)
    cols = neighbours.ravel()
    value = 1.0 / k if row_normalize else 1.0
    w = sparse.csr_matrix(
        (np.full(n * k, value), (rows, cols)), shape=(n, n)
    )
    return WeightMatrix(matrix=w, row_normalized=row_normalize, k=k)


def _inverse_of_system(W: WeightMatrix, lam: float) -> np.ndarray:
    """(I - lam W)^{-1} as a dense array, with a condition guard."""
    n = W.n
    a = np.eye(n) - lam * W.toarray()
    try:
        a_inv = np.linalg.inv(a)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"I - lam*W is singular at lam={lam}") from exc
    cond = np.linalg.norm(a, 1) * np.linalg.norm(a_inv, 1)
    if not np.isfinite(cond) or cond > CONDITION_LIMIT:
        raise NumericalError(
            f"I - lam*W is near-singular at lam={lam} (condition estimate {cond:.3g})"
        )
    return a_inv


def sar_variance(W: WeightMatrix, lam: float) -> SarVariance:
    """Error scales v_i(lam) and derivatives v_i'(lam) for the SAR process.

    Raises ``NumericalError`` when I - lam W is singular or its condition
    estimate exceeds 1e12.  At lam = 0 the exact identity profile is
    returned (v = 1, v' = 0).
    """
    lam = float(lam)
    if lam == 0.0:
        return SarVariance.identity(W.n)
    a_inv = _inverse_of_system(W, lam)
    big_v = a_inv @ a_inv.T
    v = np.sqrt(np.diag(big_v))
    # diag(A^{-1} W V) without forming the full triple product.
    wv = W.matrix @ big_v
    diag_swv = np.einsum("ij,ji->i", a_inv, wv)
    return SarVariance(lam, v, diag_swv / v)


def simulate_sar_errors(W: WeightMatrix, lam: float, rng: np.random.Generator) -> np.ndarray:
    """Draw U = (I - lam W)^{-1} eps with eps iid standard normal from rng."""
    eps = rng.standard_normal(W.n)
    lam = float(lam)
    if lam == 0.0:
        return eps
    n = W.n
    a = np.eye(n) - lam * W.toarray()
    try:
        u = np.linalg.solve(a, eps)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"I - lam*W is singular at lam={lam}") from exc
    if not np.all(np.isfinite(u)):
        raise NumericalError(f"SAR transform produced non-finite values at lam={lam}")
    return u


def save_weights(W: WeightMatrix, path) -> None:
    """Write W as coordinate-list text: one ``i j w`` line per nonzero (0-based)."""
    coo = W.matrix.tocoo()
    with open(path, "w", encoding="ascii") as fh:
        for i, j, w in zip(coo.row, coo.col, coo.data):
            fh.write(f"{int(i)} {int(j)} {float(w)!r}\n")


def load_weights(path, n: int | None = None) -> WeightMatrix:
    """Read a coordinate-list text file written by :func:`save_weights`.

    ``n`` defaults to one more than the largest index seen.  Rows are marked
    row-normalized when every nonempty row sums to 1 within 1e-9.
    """
    rows, cols, vals = [], [], []
    with open(path, "r", encoding="ascii") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 3:
                raise DataError(f"weight file line {lineno}: expected 'i j w'")
            try:
                i, j, w = int(parts[0]), int(parts[1]), float(parts[2])
            except ValueError as exc:
                raise DataError(f"weight file line {lineno}: {exc}") from exc
            if i == j:
                raise DataError(f"weight file line {lineno}: diagonal entry not allowed")
            if w < 0:
                raise DataError(f"weight file line {lineno}: negative weight")
            rows.append(i)
            cols.append(j)
            vals.append(w)
    if not rows:
        raise DataError("weight file holds no entries")
    size = n if n is not None else max(max(rows), max(cols)) + 1
    w = sparse.csr_matrix((vals, (rows, cols)), shape=(size, size))
    sums = np.asarray(w.sum(axis=1)).ravel()
    nonempty = sums != 0.0
    normalized = bool(np.all(np.abs(sums[nonempty] - 1.0) <= 1e-9)) if nonempty.any() else False
    return WeightMatrix(matrix=w, row_normalized=normalized)
