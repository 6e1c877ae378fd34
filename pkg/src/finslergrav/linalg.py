"""Small dense linear algebra over Taylor series entries."""

from __future__ import annotations

from .taylor import DegenerateMetricError, TSeries


def _as_value(x):
    return x.value if isinstance(x, TSeries) else float(x)


def mat_inv_series(M):
    """Invert a square matrix whose entries are TSeries (or floats).

    Gaussian elimination with partial pivoting on the constant parts; series
    division propagates exact derivative information through the inverse.
    """
    n = len(M)
    a = [list(row) for row in M]
    inv = [[1.0 if i == j else 0.0 for j in range(n)] for i in range(n)]
    for col in range(n):
        piv, best = col, abs(_as_value(a[col][col]))
        for r in range(col + 1, n):
            mag = abs(_as_value(a[r][col]))
            if mag > best:
                piv, best = r, mag
        if best == 0.0:
            raise DegenerateMetricError("singular matrix in series inversion", 0.0)
        if piv != col:
            a[col], a[piv] = a[piv], a[col]
            inv[col], inv[piv] = inv[piv], inv[col]
        d = a[col][col]
        for j in range(n):
            if not (isinstance(a[col][j], float) and a[col][j] == 0.0):
                a[col][j] = a[col][j] / d
            if not (isinstance(inv[col][j], float) and inv[col][j] == 0.0):
                inv[col][j] = inv[col][j] / d
        for r in range(n):
            if r == col:
                continue
            f = a[r][col]
            if isinstance(f, float) and f == 0.0:
                continue
            for j in range(n):
                a[r][j] = a[r][j] - f * a[col][j]
                inv[r][j] = inv[r][j] - f * inv[col][j]
    return inv


def det_series_value(M) -> float:
    """Determinant of the constant parts (plain float arithmetic)."""
    n = len(M)
    a = [[_as_value(x) for x in row] for row in M]
    det = 1.0
    for col in range(n):
        piv, best = col, abs(a[col][col])
        for r in range(col + 1, n):
            if abs(a[r][col]) > best:
                piv, best = r, abs(a[r][col])
        if best == 0.0:
            return 0.0
        if piv != col:
            a[col], a[piv] = a[piv], a[col]
            det = -det
        det *= a[col][col]
        for r in range(col + 1, n):
            f = a[r][col] / a[col][col]
            for j in range(col, n):
                a[r][j] -= f * a[col][j]
    return det
