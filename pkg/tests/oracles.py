"""Independent numerical oracles used to cross-check the engine.

Everything here is deliberately dumb and derivative-free of the package's
jet machinery: Richardson-extrapolated central differences, and a
finite-difference route to Christoffel symbols / curvature of coordinate
metrics.
"""

from __future__ import annotations

import numpy as np


def central_diff(fn, point, var, h=1e-3):
    p1 = list(point)
    p2 = list(point)
    p1[var] += h
    p2[var] -= h
    return (fn(tuple(p1)) - fn(tuple(p2))) / (2.0 * h)


def richardson_diff(fn, point, var, h=1e-2, levels=2):
    """First derivative, central differences with Richardson extrapolation."""
    table = [central_diff(fn, point, var, h / 2 ** k) for k in range(levels + 1)]
    fac = 4.0
    while len(table) > 1:
        table = [(fac * b - a) / (fac - 1.0) for a, b in zip(table, table[1:])]
        fac *= 4.0
    return table[0]


def richardson_diff2(fn, point, var1, var2, h=1e-2, levels=2):
    """Second derivative via nested Richardson first derivatives."""
    def inner(pt):
        return richardson_diff(fn, pt, var2, h, levels)
    table = [central_diff(inner, point, var1, h / 2 ** k) for k in range(levels + 1)]
    fac = 4.0
    while len(table) > 1:
        table = [(fac * b - a) / (fac - 1.0) for a, b in zip(table, table[1:])]
        fac *= 4.0
    return table[0]


def fd_gradient(fn, point, h=1e-2):
    return np.array([richardson_diff(fn, point, i, h) for i in range(len(point))])


def christoffel_fd(metric_fn, point, h=1e-4):
    """Christoffel symbols of a coordinate metric from central differences.

    `metric_fn(point) -> (d, d) array`; returns gamma[l, m, n].
    """
    point = tuple(point)
    d = len(point)
    g = np.asarray(metric_fn(point), dtype=float)
    ginv = np.linalg.inv(g)
    dg = np.zeros((d, d, d))  # dg[k, i, j] = d g_ij / d x^k
    for k in range(d):
        p1 = list(point)
        p2 = list(point)
        p1[k] += h
        p2[k] -= h
        dg[k] = (np.asarray(metric_fn(tuple(p1)), dtype=float)
                 - np.asarray(metric_fn(tuple(p2)), dtype=float)) / (2.0 * h)
    gamma = np.zeros((d, d, d))
    for l in range(d):
        for m in range(d):
            for n in range(d):
                acc = 0.0
                for k in range(d):
                    acc += ginv[l, k] * (dg[m, n, k] + dg[n, m, k] - dg[k, m, n])
                gamma[l, m, n] = 0.5 * acc
    return gamma


def riemann_fd(metric_fn, point, h=1e-3):
    """R^l_smn by differencing finite-difference Christoffels."""
    point = tuple(point)
    d = len(point)
    gamma = christoffel_fd(metric_fn, point, h=1e-5)
    dgamma = np.zeros((d, d, d, d))  # dgamma[k][l][m][n] = d_k gamma^l_mn
    for k in range(d):
        p1 = list(point)
        p2 = list(point)
        p1[k] += h
        p2[k] -= h
        dgamma[k] = (christoffel_fd(metric_fn, tuple(p1), h=1e-5)
                     - christoffel_fd(metric_fn, tuple(p2), h=1e-5)) / (2.0 * h)
    riem = np.zeros((d, d, d, d))
    for l in range(d):
        for s in range(d):
            for m in range(d):
                for n in range(d):
                    val = dgamma[m, l, n, s] - dgamma[n, l, m, s]
                    for lam in range(d):
                        val += (gamma[l, m, lam] * gamma[lam, n, s]
                                - gamma[l, n, lam] * gamma[lam, m, s])
                    riem[l, s, m, n] = val
    return riem


def ricci_fd(metric_fn, point, h=1e-3):
    riem = riemann_fd(metric_fn, point, h)
    return np.einsum("lsln->sn", riem)
