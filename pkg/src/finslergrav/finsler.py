"""Metric structures on the tangent bundle.

From a degree-one homogeneous generating function (or directly supplied
metric blocks) this module builds the fiber Hessian metric, the geodesic
semispray, the canonical nonlinear connection, the lifted total-space metric
with adapted frames, and the anholonomy data of those frames.

Coordinates are u = (x^1..x^n, y^1..y^n); horizontal indices run 0..n-1 and
fiber (vertical) indices n..2n-1 in argument order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .fields import DerivField, Field, JetSpace
from .linalg import det_series_value, mat_inv_series
from .taylor import (DegenerateMetricError, DomainBox, ShapeError, TSeries)

HESSIAN_DET_THRESHOLD = 1e-10


class SymmetricFieldMatrix:
    """Symmetric matrix of scalar fields; only the upper triangle is stored."""

    def __init__(self, n: int, entries: dict):
        self.n = n
        self.entries = {}
        for (i, j), f in entries.items():
            if not (0 <= i < n and 0 <= j < n):
                raise ShapeError(f"index ({i},{j}) outside a {n}x{n} matrix")
            self.entries[(min(i, j), max(i, j))] = f
        arities = {f.arity for f in self.entries.values()}
        if len(arities) > 1:
            raise ShapeError("all entries must share arity")
        self.arity = arities.pop() if arities else 2 * n

    @classmethod
    def diagonal(cls, fields) -> "SymmetricFieldMatrix":
        return cls(len(fields), {(i, i): f for i, f in enumerate(fields)})

    def field(self, i: int, j: int) -> Field | None:
        return self.entries.get((min(i, j), max(i, j)))

    def eval_series(self, args, order: int, space: JetSpace | None = None):
        zero = None
        out = [[None] * self.n for _ in range(self.n)]
        for i in range(self.n):
            for j in range(i, self.n):
                f = self.field(i, j)
                if f is None:
                    if zero is None:
                        nv = space.nvars if space is not None else len(args)
                        zero = TSeries(nv, order, {})
                    s = zero
                else:
                    s = f.eval_jet(args, order, space)
                out[i][j] = s
                out[j][i] = s
        return out

    def eval_matrix(self, point) -> np.ndarray:
        s = self.eval_series(tuple(point), 0)
        return np.array([[s[i][j].value for j in range(self.n)] for i in range(self.n)])


@dataclass
class MetricBlocks:
    """Horizontal and vertical metric blocks with the fiber scale factor.

    The assembled total metric carries `l_p**2` on the vertical block, so the
    two blocks can share dimensions when coordinates do not.
    """

    g: SymmetricFieldMatrix
    h: SymmetricFieldMatrix
    l_p: float = 1.0
    signature: str = ""

    def __post_init__(self):
        if self.g.n != self.h.n:
            raise ShapeError("horizontal and vertical blocks must share dimension")

    @property
    def n(self) -> int:
        return self.g.n


class NConnectionField:
    """Coefficients N_i^a of a nonlinear connection as a matrix of fields."""

    def __init__(self, n: int, entries):
        self.n = n
        if len(entries) != n or any(len(row) != n for row in entries):
            raise ShapeError("nonlinear connection coefficients must form an n x n grid")
        self.entries = [list(row) for row in entries]

    @classmethod
    def zero(cls, n: int) -> "NConnectionField":
        return cls(n, [[None] * n for _ in range(n)])

    def field(self, i: int, a: int) -> Field | None:
        return self.entries[i][a]

    def eval_series(self, args, order: int, space: JetSpace | None = None):
        zero = None
        out = [[None] * self.n for _ in range(self.n)]
        for i in range(self.n):
            for a in range(self.n):
                f = self.entries[i][a]
                if f is None:
                    if zero is None:
                        nv = space.nvars if space is not None else len(args)
                        zero = TSeries(nv, order, {})
                    out[i][a] = zero
                else:
                    out[i][a] = f.eval_jet(args, order, space)
        return out

    def eval_matrix(self, point) -> np.ndarray:
        s = self.eval_series(tuple(point), 0)
        return np.array([[s[i][a].value for a in range(self.n)] for i in range(self.n)])


@dataclass
class SasakiData:
    """Complete geometric state on the bundle: blocks, connection, domain."""

    blocks: MetricBlocks
    nconn: NConnectionField
    domain: DomainBox | None = None

    def __post_init__(self):
        if self.blocks.n != self.nconn.n:
            raise ShapeError("metric blocks and nonlinear connection disagree in dimension")

    @property
    def n(self) -> int:
        return self.blocks.n


# -- generating functions -----------------------------------------------------


class GeneratingFunction:
    """Degree-one homogeneous generating function, stored through its square.

    The square L = F^2 is the object every construction differentiates; F
    itself is recovered as a sign-preserving square root for diagnostics.
    """

    def __init__(self, base_dim: int, F2: Field, homogeneity_tolerance: float = 1e-9,
                 hessian_threshold: float = HESSIAN_DET_THRESHOLD,
                 domain: DomainBox | None = None):
        if not (2 <= base_dim <= 4):
            raise ShapeError(f"base dimension {base_dim} outside 2..4")
        if F2.arity != 2 * base_dim:
            raise ShapeError("generating function square must live on 2n coordinates")
        self.n = base_dim
        self.F2 = F2
        self.homogeneity_tolerance = homogeneity_tolerance
        self.hessian_threshold = hessian_threshold
        self.domain = domain if domain is not None else DomainBox.cube(
            2 * base_dim, 50.0, fiber_indices=tuple(range(base_dim, 2 * base_dim)))

    def F_value(self, point) -> float:
        v = self.F2(*point)
        return math.copysign(math.sqrt(abs(v)), v)

    def scale_fiber(self, point, beta: float):
        n = self.n
        return tuple(point[:n]) + tuple(beta * point[n + a] for a in range(n))


class HessianMetricField(Field):
    """Entry (i, j) of the fiber Hessian metric of a generating function."""

    def __init__(self, gen: GeneratingFunction, i: int, j: int):
        n = gen.n
        self.arity = 2 * n
        self.gen = gen
        self._inner = DerivField(DerivField(gen.F2, n + i), n + j)
        self.depends = gen.F2.depends

    def _eval(self, args, order, space):
        return self._inner.eval_jet(args, order, space) * 0.5


def hessian_blocks(gen: GeneratingFunction) -> SymmetricFieldMatrix:
    n = gen.n
    return SymmetricFieldMatrix(
        n, {(i, j): HessianMetricField(gen, i, j) for i in range(n) for j in range(i, n)})


def hessian_metric(gen: GeneratingFunction, point) -> np.ndarray:
    """Fiber Hessian of the squared generating function; raises when degenerate."""
    gen.domain.check(tuple(point))
    n = gen.n
    series = gen.F2.eval_jet(tuple(point), 2)
    H = np.zeros((n, n))
    for i in range(n):
        for j in range(i, n):
            key = [0] * (2 * n)
            key[n + i] += 1
            key[n + j] += 1
            H[i, j] = H[j, i] = 0.5 * series.partial(tuple(key))
    det = float(np.linalg.det(H))
    scale = max(1.0, float(np.max(np.abs(H)))) ** n
    if abs(det) < gen.hessian_threshold * scale:
        raise DegenerateMetricError(
            f"fiber Hessian degenerate at {tuple(point)} (det={det:g})", det)
    return H


@dataclass
class HomogeneityReport:
    max_deviation: float
    tolerance: float
    passed: bool
    samples: int


def check_homogeneity(gen: GeneratingFunction, points, betas=(0.5, 1.0, 2.0, 10.0)) -> HomogeneityReport:
    """Sampled check of F(x, beta*y) = beta * F(x, y) for positive beta.

    Only positive scalings are sampled; the absolute-value variant for
    negative beta is a different convention and is deliberately not asserted.
    """
    worst = 0.0
    count = 0
    for p in points:
        base = gen.F_value(p)
        for beta in betas:
            scaled = gen.F_value(gen.scale_fiber(p, beta))
            dev = abs(scaled - beta * base) / (abs(beta * base) + 1e-30)
            worst = max(worst, dev)
            count += 1
    return HomogeneityReport(worst, gen.homogeneity_tolerance,
                             worst <= gen.homogeneity_tolerance, count)


class SemisprayField(Field):
    """Component G^k of the geodesic semispray of a generating function."""

    def __init__(self, gen: GeneratingFunction, k: int):
        self.gen = gen
        self.k = k
        self.arity = 2 * gen.n
        self.depends = tuple(range(self.arity))

    def _eval(self, args, order, space):
        n = self.gen.n
        nv = 2 * n
        # All directions are needed internally (fiber Hessian, mixed partials),
        # so evaluate privately at full activity and project at the end.
        L = self.gen.F2.eval_jet(args, order + 2, JetSpace.identity(nv))
        hess = [[None] * n for _ in range(n)]
        for i in range(n):
            for j in range(i, n):
                s = L.deriv(n + i).deriv(n + j) * 0.5
                hess[i][j] = s
                hess[j][i] = s
        det = det_series_value(hess)
        scale = max(1.0, max(abs(hess[i][j].value) for i in range(n) for j in range(n))) ** n
        if abs(det) < self.gen.hessian_threshold * scale:
            raise DegenerateMetricError(
                f"fiber Hessian degenerate at {tuple(args)} (det={det:g})", det)
        ginv = mat_inv_series(hess)
        terms = []
        for j in range(n):
            t = -L.deriv(j).truncate(order)
            dLyj = L.deriv(n + j)
            for i in range(n):
                yi = TSeries.variable(n + i, float(args[n + i]), nv, order)
                t = t + yi * dLyj.deriv(i).truncate(order)
            terms.append(t)
        Gk = TSeries(nv, order, {})
        for j in range(n):
            Gk = Gk + ginv[self.k][j].truncate(order) * terms[j]
        Gk = Gk * 0.25
        return Gk.project(space.varmap, space.nvars)


def semispray(gen: GeneratingFunction, point) -> np.ndarray:
    """Semispray vector G^k at a point."""
    gen.domain.check(tuple(point))
    return np.array([SemisprayField(gen, k)(*point) for k in range(gen.n)])


def canonical_nconnection(gen: GeneratingFunction) -> NConnectionField:
    """Canonical nonlinear connection: fiber derivatives of the semispray."""
    n = gen.n
    entries = [[DerivField(SemisprayField(gen, a), n + j) for a in range(n)]
               for j in range(n)]
    return NConnectionField(n, entries)


def sasaki_lift(blocks: MetricBlocks | SymmetricFieldMatrix, nconn: NConnectionField,
                l_p: float = 1.0, domain: DomainBox | None = None) -> SasakiData:
    """Total-space metric data: h-block, scaled v-block and adapted coframe legs.

    Lifting a bare symmetric matrix reuses it for both blocks (the pure
    generating-function lift); explicit MetricBlocks pass through with the
    supplied scale.
    """
    if isinstance(blocks, SymmetricFieldMatrix):
        blocks = MetricBlocks(blocks, blocks, l_p)
    else:
        blocks = MetricBlocks(blocks.g, blocks.h, l_p, blocks.signature)
    if domain is None:
        domain = DomainBox.cube(2 * blocks.n, 50.0,
                                fiber_indices=tuple(range(blocks.n, 2 * blocks.n)))
    return SasakiData(blocks, nconn, domain)


def lift_generating_function(gen: GeneratingFunction, l_p: float = 1.0) -> SasakiData:
    blocks = hessian_blocks(gen)
    return sasaki_lift(blocks, canonical_nconnection(gen), l_p, domain=gen.domain)


def assemble_coordinate_metric(data: SasakiData, point) -> np.ndarray:
    """Total metric in the coordinate cobasis.

    Expanding the adapted coframe legs gives the quadratic connection terms in
    the horizontal block, connection-vertical mixing blocks, and the scaled
    vertical block in the lower-right corner.
    """
    n = data.n
    point = tuple(point)
    g = data.blocks.g.eval_matrix(point)
    h = data.blocks.h.eval_matrix(point) * data.blocks.l_p ** 2
    N = data.nconn.eval_matrix(point)
    G = np.zeros((2 * n, 2 * n))
    G[:n, :n] = g + N @ h @ N.T
    G[:n, n:] = N @ h
    G[n:, :n] = (N @ h).T
    G[n:, n:] = h
    return G


def recover_sasaki(matrix: np.ndarray, n: int, l_p: float = 1.0):
    """Invert the coordinate assembly back into (g, h, N) point values."""
    M = np.asarray(matrix, dtype=float)
    if M.shape != (2 * n, 2 * n):
        raise ShapeError(f"expected a {2*n}x{2*n} matrix")
    h_scaled = M[n:, n:]
    N = M[:n, n:] @ np.linalg.inv(h_scaled)
    g = M[:n, :n] - N @ h_scaled @ N.T
    return g, h_scaled / l_p ** 2, N


# -- anholonomy ----------------------------------------------------------------


@dataclass
class AnholonomyData:
    """Frame anholonomy: W[i][a][b] = d N_i^b / d y^a and the curvature Omega^a_ij."""

    w_mixed: np.ndarray
    omega: np.ndarray

    def table(self) -> dict:
        """Sparse commutator table over frame indices (alpha, beta) -> {gamma: value}."""
        n = self.w_mixed.shape[0]
        out: dict = {}

        def put(al, be, ga, val):
            if val != 0.0:
                out.setdefault((al, be), {})[ga] = val

        for i in range(n):
            for a in range(n):
                for b in range(n):
                    val = self.w_mixed[i, a, b]
                    put(i, n + a, n + b, val)
                    put(n + a, i, n + b, -val)
        for a in range(n):
            for i in range(n):
                for j in range(n):
                    # [e_j, e_i] = Omega^a_ij e_a
                    put(j, i, n + a, self.omega[a, i, j])
        return out


def nconnection_curvature(nconn: NConnectionField, point) -> np.ndarray:
    """Curvature Omega^a_ij of the nonlinear connection (adapted-derivative curl)."""
    n = nconn.n
    point = tuple(point)
    Ns = nconn.eval_series(point, 1)
    Nval = np.array([[Ns[i][a].value for a in range(n)] for i in range(n)])

    def e_deriv(series, i):
        # adapted derivative e_i = d/dx^i - N_i^b d/dy^b acting on a jet
        key = [0] * (2 * n)
        key[i] = 1
        total = series.partial(tuple(key))
        for b in range(n):
            key = [0] * (2 * n)
            key[n + b] = 1
            total -= Nval[i, b] * series.partial(tuple(key))
        return total

    omega = np.zeros((n, n, n))
    for a in range(n):
        for i in range(n):
            for j in range(i + 1, n):
                val = e_deriv(Ns[j][a], i) - e_deriv(Ns[i][a], j)
                omega[a, i, j] = val
                omega[a, j, i] = -val
    return omega


def anholonomy_coefficients(nconn: NConnectionField, point) -> AnholonomyData:
    """Nonzero frame commutators of the adapted frame at a point."""
    n = nconn.n
    point = tuple(point)
    Ns = nconn.eval_series(point, 1)
    w = np.zeros((n, n, n))
    for i in range(n):
        for b in range(n):
            for a in range(n):
                key = [0] * (2 * n)
                key[n + a] = 1
                w[i, a, b] = Ns[i][b].partial(tuple(key))
    return AnholonomyData(w, nconnection_curvature(nconn, point))
