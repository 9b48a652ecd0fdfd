"""Dataset container and the CSV schema used by the command line.

CSV layout: a header row ``y,x1,...,xp,z,sx,sy`` followed by numeric rows.
``y`` must be exactly 0 or 1, no cell may be missing, and at least 20 rows
are required.  Row numbers in error messages count data rows from 1 (the
header excluded).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError


@dataclass(frozen=True)
class Dataset:
    """n observations of a binary response with covariates and locations.

    Attributes
    ----------
    y : (n,) floats in {0, 1}
    x : (n, p) covariate matrix (no intercept column)
    z : (n,) scalar smoothing covariate
    coords : (n, 2) planar positions
    """

    y: np.ndarray = field(repr=False)
    x: np.ndarray = field(repr=False)
    z: np.ndarray = field(repr=False)
    coords: np.ndarray = field(repr=False)

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float)
        x = np.asarray(self.x, dtype=float)
        z = np.asarray(self.z, dtype=float)
        coords = np.asarray(self.coords, dtype=float)
        if x.ndim != 2:
            raise DataError("x must be a 2-d array")
        n = y.shape[0]
        if x.shape[0] != n or z.shape[0] != n or coords.shape[0] != n:
            raise DataError("y, x, z and coords must have matching lengths")
        if coords.ndim != 2 or coords.shape[1] != 2:
            raise DataError("coords must be an (n, 2) array")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(z)) and np.all(np.isfinite(coords))):
            raise DataError("covariates and coordinates must be finite")
        if not np.all((y == 0.0) | (y == 1.0)):
            raise DataError("y must contain only 0 and 1")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "coords", coords)

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def p(self) -> int:
        return self.x.shape[1]


MIN_ROWS = 20


def _expected_header(p: int) -> list[str]:
    return ["y"] + [f"x{j}" for j in range(1, p + 1)] + ["z", "sx", "sy"]


def load_csv(path) -> Dataset:
    """Read a data file, enforcing the schema above.

    Raises ``DataError`` with the offending data-row number on bad cells.
    """
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError("empty data file") from None
        header = [h.strip() for h in header]
        p = len(header) - 4
        if p < 1 or header != _expected_header(p):
            raise DataError(
                "header must be y,x1,...,xp,z,sx,sy; got " + ",".join(header)
            )
        rows = []
        for rownum, row in enumerate(reader, start=1):
            if len(row) != len(header):
                raise DataError(f"data error: row {rownum}: expected {len(header)} cells")
            cells = []
            for name, cell in zip(header, row):
                text = cell.strip()
                if not text:
                    raise DataError(f"data error: row {rownum}: missing value for {name}")
                try:
                    cells.append(float(text))
                except ValueError:
                    raise DataError(
                        f"data error: row {rownum}: non-numeric value for {name}"
                    ) from None
            if cells[0] not in (0.0, 1.0):
                raise DataError(f"data error: row {rownum}: y must be 0 or 1")
            if not all(np.isfinite(c) for c in cells):
                raise DataError(f"data error: row {rownum}: non-finite value")
            rows.append(cells)
    if len(rows) < MIN_ROWS:
        raise DataError(f"need at least {MIN_ROWS} rows, got {len(rows)}")
    arr = np.asarray(rows, dtype=float)
    return Dataset(
        y=arr[:, 0],
        x=arr[:, 1 : 1 + p],
        z=arr[:, 1 + p],
        coords=arr[:, 2 + p : 4 + p],
    )


def write_csv(data: Dataset, path) -> None:
    """Write a Dataset in the CSV schema (full float precision)."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_expected_header(data.p))
        for i in range(data.n):
            writer.writerow(
                [repr(float(data.y[i]))]
                + [repr(float(v)) for v in data.x[i]]
                + [repr(float(data.z[i])), repr(float(data.coords[i, 0])), repr(float(data.coords[i, 1]))]
            )
