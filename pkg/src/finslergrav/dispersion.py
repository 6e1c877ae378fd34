"""Bridge between modified frequency relations and generating functions.

A symmetric coefficient table deforms the quadratic light-propagation
element; this module evaluates the deformed frequency formula, builds the
matching generating function on the 4+4 bundle, and verifies that null-cone
root finding on the quadratic element and the displayed frequency formula
agree to second order in the deformation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .fields import FuncField
from .finsler import GeneratingFunction
from .taylor import DomainBox, ShapeError

SPATIAL = 3


class SingularFormError(ArithmeticError):
    """Deformed formula evaluated on the zero set of the quadratic form."""


class DeformationTooLargeError(ValueError):
    """Coefficient table pushes the deformed element out of positivity."""


def _canonical(idx) -> tuple:
    return tuple(sorted(int(i) for i in idx))


def _multiplicity(key: tuple) -> int:
    counts = {}
    for i in key:
        counts[i] = counts.get(i, 0) + 1
    out = math.factorial(len(key))
    for c in counts.values():
        out //= math.factorial(c)
    return out


@dataclass
class DispersionSpec:
    """Deformation data: order r, constant spatial metric, symmetric table, light speed.

    The table maps canonically sorted index tuples (spatial indices 0..2) to
    coefficients; contraction multiplicities are supplied automatically.
    `rank` defaults to 2r, the homogeneity-preserving pairing (the 1/r factor
    is the binomial exponent of the r-th root of the deformed power); other
    ranks give the non-homogeneous composites used for medium matching.
    """

    r: int = 1
    ghat: np.ndarray = field(default_factory=lambda: np.eye(SPATIAL))
    q: dict = field(default_factory=dict)
    c: float = 1.0
    rank: int | None = None

    def __post_init__(self):
        if self.r < 1:
            raise ShapeError("deformation order must be a positive integer")
        if self.rank is None:
            self.rank = 2 * self.r
        self.ghat = np.asarray(self.ghat, dtype=float)
        if self.ghat.shape != (SPATIAL, SPATIAL):
            raise ShapeError("spatial metric must be 3x3")
        if abs(float(np.linalg.det(self.ghat))) < 1e-14:
            raise ShapeError("spatial metric must be invertible")
        canon = {}
        for key, val in self.q.items():
            ck = _canonical(key)
            if len(ck) != self.rank or any(not 0 <= i < SPATIAL for i in ck):
                raise ShapeError(f"coefficient index {key} invalid for rank {self.rank}")
            canon[ck] = canon.get(ck, 0.0) + float(val)
        self.q = canon

    def scaled(self, factor: float) -> "DispersionSpec":
        return DispersionSpec(self.r, self.ghat,
                              {k: v * factor for k, v in self.q.items()}, self.c,
                              self.rank)

    def q_norm(self) -> float:
        return max((abs(v) for v in self.q.values()), default=0.0)

    def quadratic_form(self, k) -> float:
        k = np.asarray(k, dtype=float)
        return float(k @ self.ghat @ k)

    def q_contract(self, k):
        """Full symmetric contraction of the table with 2r copies of k."""
        total = 0.0
        for key, val in self.q.items():
            term = val * _multiplicity(key)
            for i in key:
                term = term * k[i]
            total = total + term
        return total


@dataclass(frozen=True)
class PhononSpec:
    """Quadratic-plus-quartic effective medium relation."""

    c_s: float = 1.0
    m0: float = 1.0
    hbar_const: float = 1.0

    def __post_init__(self):
        if self.c_s <= 0 or self.m0 <= 0 or self.hbar_const <= 0:
            raise ShapeError("medium parameters must be positive")


def phonon_omega_squared(k, spec: PhononSpec) -> float:
    """Two-term truncation: quadratic sound term plus the quartic correction."""
    k2 = float(np.dot(k, k))
    quartic = (spec.hbar_const / (2.0 * spec.m0 * spec.c_s)) ** 2
    return spec.c_s ** 2 * k2 + spec.c_s ** 2 * quartic * k2 * k2


def finsler_omega_squared(k, spec: DispersionSpec) -> float:
    """The deformed frequency formula, exactly as displayed (squared form factor).

    The correction ratio is scale invariant in k; the prefactor matches the
    null-cone root only on unit-normalized wave vectors.
    """
    G = spec.quadratic_form(k)
    Q = spec.q_contract(k)
    if G == 0.0:
        if Q != 0.0 or spec.q:
            raise SingularFormError("quadratic form vanishes with a nonzero table")
        return 0.0
    return spec.c ** 2 * G ** 2 * (1.0 - Q / (spec.r * G ** (2 * spec.r)))


def isotropic_q(lam: float) -> dict:
    """Fully symmetric rank-4 isotropic table contracting to lam * |k|^4."""
    q = {}
    for i in range(SPATIAL):
        q[(i, i, i, i)] = lam
        for j in range(i + 1, SPATIAL):
            q[(i, i, j, j)] = lam / 3.0
    return q


def phonon_matching_spec(phonon: PhononSpec) -> DispersionSpec:
    """Isotropic rank-four table whose null-cone relation reproduces the medium form.

    The pairing is the non-homogeneous order-one composite (rank four with a
    single power of the quadratic form), the only way a quartic wave-number
    correction can appear; the velocity-branch root then satisfies
    omega^2 = c_s^2 k^2 (1 + lam k^2) exactly.
    """
    lam = (phonon.hbar_const / (2.0 * phonon.m0 * phonon.c_s)) ** 2
    return DispersionSpec(r=1, ghat=np.eye(SPATIAL), q=isotropic_q(lam), c=phonon.c_s,
                          rank=4)


def generating_from_q(spec: DispersionSpec, base_metric=None,
                      probes=None) -> GeneratingFunction:
    """Quadratic element deformed by the coefficient table, as a generating function.

    Coordinates are (x1..x4, y1..y4) with y1 the time fiber; the spatial
    block may be position dependent (a callable of x returning a 3x3 array)
    or default to the spec's constant metric.  Probe points guard against
    deformations large enough to break positivity of the bracket.
    """
    r = spec.r
    const_g = spec.ghat if base_metric is None else None
    q_items = [(key, val * _multiplicity(key)) for key, val in spec.q.items()]

    def F2(*u):
        x = u[:4]
        ys = u[5:]  # spatial fiber components
        if const_g is not None:
            g = const_g
        else:
            g = base_metric(x)  # entries may be numbers or series
        S = None
        for i in range(SPATIAL):
            for j in range(SPATIAL):
                gij = g[i][j]
                if gij == 0.0:
                    continue
                term = ys[i] * ys[j] * gij
                S = term if S is None else S + term
        Q = None
        for key, val in q_items:
            term = val
            for i in key:
                term = term * ys[i]
            Q = term if Q is None else Q + term
        bracket = 1.0 if Q is None else 1.0 + Q / (r * S ** r)
        return -(u[4] * u[4]) + S * bracket

    domain = DomainBox.cube(8, 1e6, fiber_indices=(5, 6, 7), null_eps=1e-10)
    gen = GeneratingFunction(4, FuncField(8, F2, depends=(0, 1, 2, 3, 4, 5, 6, 7)),
                             domain=domain)
    if probes is not None:
        for k in probes:
            G = spec.quadratic_form(k)
            if G <= 0.0:
                continue
            val = 1.0 + spec.q_contract(k) / (r * G ** r)
            if val <= 0.0:
                raise DeformationTooLargeError(
                    f"deformation bracket {val:g} non-positive at probe {tuple(k)}")
    return gen


def null_root(gen: GeneratingFunction, k, bracket_guess: float,
              rel_tol: float = 1e-12, max_iter: int = 200) -> float:
    """Positive time-fiber root of the squared element along a spatial direction.

    Bracketed bisection refined by secant steps; the bracket is seeded by the
    undeformed value.
    """
    x0 = (0.0, 0.0, 0.0, 0.0)

    def F2_at(t):
        return gen.F2(*(x0 + (t, k[0], k[1], k[2])))

    lo, hi = 0.5 * bracket_guess, 1.5 * bracket_guess
    flo, fhi = F2_at(lo), F2_at(hi)
    grow = 0
    while flo * fhi > 0.0:
        lo *= 0.5
        hi *= 2.0
        flo, fhi = F2_at(lo), F2_at(hi)
        grow += 1
        if grow > 60:
            raise ArithmeticError("failed to bracket the null root")
    a, b, fa, fb = lo, hi, flo, fhi
    for _ in range(max_iter):
        if fb != fa:
            t = b - fb * (b - a) / (fb - fa)  # secant proposal
        else:
            t = 0.5 * (a + b)
        if not (a < t < b):
            t = 0.5 * (a + b)
        ft = F2_at(t)
        if fa * ft <= 0.0:
            b, fb = t, ft
        else:
            a, fa = t, ft
        if (b - a) <= rel_tol * max(1.0, abs(b)):
            break
    else:
        raise ArithmeticError("null-root iteration did not converge")
    return 0.5 * (a + b)


@dataclass
class RoundtripReport:
    max_rel_discrepancy: float
    per_probe: list


def roundtrip_check(spec: DispersionSpec, probes) -> RoundtripReport:
    """Compare the null-cone root against the displayed frequency formula.

    Probes are normalized to unit quadratic form (the only normalization at
    which the two scale conventions coincide); the root converts to a
    frequency through the ray-phase relation omega = c * G / t_root.
    """
    gen = generating_from_q(spec)
    rows = []
    worst = 0.0
    for k in probes:
        k = np.asarray(k, dtype=float)
        G0 = spec.quadratic_form(k)
        if G0 <= 0.0:
            raise SingularFormError("probe on or inside the null set of the spatial form")
        k = k / math.sqrt(G0)
        G = spec.quadratic_form(k)
        t = null_root(gen, k, math.sqrt(G))
        omega_root = spec.c * G / t
        omega_disp = math.sqrt(finsler_omega_squared(k, spec))
        rel = abs(omega_root - omega_disp) / abs(omega_disp)
        rows.append((tuple(k), omega_root, omega_disp, rel))
        worst = max(worst, rel)
    return RoundtripReport(worst, rows)


def discrepancy_scaling(base_spec: DispersionSpec, probes, factors) -> tuple:
    """Log-log slope of the roundtrip discrepancy against the table scale."""
    xs, ys = [], []
    for fac in factors:
        rep = roundtrip_check(base_spec.scaled(fac / max(base_spec.q_norm(), 1e-300)), probes)
        xs.append(math.log(fac))
        ys.append(math.log(max(rep.max_rel_discrepancy, 1e-300)))
    n = len(xs)
    xbar = sum(xs) / n
    ybar = sum(ys) / n
    slope = sum((x - xbar) * (y - ybar) for x, y in zip(xs, ys)) / \
        sum((x - xbar) ** 2 for x in xs)
    return slope, list(zip(factors, [math.exp(y) for y in ys]))