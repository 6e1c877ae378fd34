"""Adapted linear connection, torsion, curvature and field-equation residuals.

The metric connection used here preserves the horizontal/vertical splitting
and is metric compatible on each block by construction.  Its coefficient
families are the block Koszul formulas evaluated through adapted derivatives;
the horizontal transport of vertical indices reuses the horizontal
coefficients (index identification a = i + n), while the vertical transport
of horizontal indices uses the half fiber-derivative of the horizontal block
(the Cartan-tensor form).  For Hessian metrics the two prescriptions agree;
for split-block data the latter is the one under which the decoupled
field-equation system of the solution generator closes exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fields import Field
from .finsler import SasakiData, SymmetricFieldMatrix
from .linalg import mat_inv_series
from .taylor import DegenerateMetricError, ShapeError, TSeries


# -- source specification -----------------------------------------------------


def _eval_maybe_field(f, point):
    if f is None:
        return 0.0
    if isinstance(f, Field):
        return f(*point)
    return float(f)


@dataclass
class SourceSpec:
    """Diagonal stress sources for the adapted field equations.

    Modes: "cosmological-constant" (single constant), "split-lambdas"
    (per-sector effective constants, possibly fields), "brane-profile"
    (entries supplied directly per sector as fields of the full point).
    Sector slots pair coordinates: (x1,x2), (y3,y4), (y5,y6), (y7,y8).
    """

    mode: str = "cosmological-constant"
    lam: float = 0.0
    h_lambda: object = None
    v_lambda: object = None
    l5: object = None
    l7: object = None
    upsilon_entries: tuple | None = None

    @classmethod
    def vacuum(cls) -> "SourceSpec":
        return cls(mode="cosmological-constant", lam=0.0)

    @classmethod
    def from_upsilon(cls, entries) -> "SourceSpec":
        """Build from per-sector source values (mixed-index diagonal)."""
        return cls(mode="brane-profile", upsilon_entries=tuple(entries))

    def lambdas_from_upsilon(self, point) -> tuple:
        """Sector constants as complementary sums of the source entries."""
        if self.upsilon_entries is None:
            raise ShapeError("no per-sector source entries available")
        vals = [_eval_maybe_field(e, point) for e in self.upsilon_entries]
        total = sum(vals)
        return tuple(total - v for v in vals)

    def sector_lambdas(self, point, shells: int) -> tuple:
        if self.mode == "cosmological-constant":
            return tuple([self.lam] * (shells + 1))
        if self.mode == "split-lambdas":
            fields = [self.h_lambda, self.v_lambda, self.l5, self.l7][: shells + 1]
            return tuple(_eval_maybe_field(f, point) for f in fields)
        raise ShapeError(f"mode {self.mode!r} does not carry sector constants")

    def mixed_diagonal(self, point, dim: int) -> np.ndarray:
        """Mixed-index diagonal of the source at a point, length `dim`.

        For sector constants the source entry of one sector is the sum of the
        complementary sector constants (the exact inversion of the
        trace-reversed field equations for pairwise-equal diagonals).
        """
        if dim % 2 != 0:
            raise ShapeError("total dimension must be even")
        sectors = dim // 2
        if self.mode == "brane-profile":
            if self.upsilon_entries is None or len(self.upsilon_entries) != sectors:
                raise ShapeError(f"need {sectors} per-sector source entries")
            vals = [_eval_maybe_field(e, point) for e in self.upsilon_entries]
        else:
            lams = self.sector_lambdas(point, sectors - 1)
            if len(lams) != sectors:
                raise ShapeError(f"need {sectors} sector constants, got {len(lams)}")
            total = sum(lams)
            vals = [total - lam for lam in lams]
        out = np.zeros(dim)
        for s, v in enumerate(vals):
            out[2 * s] = out[2 * s + 1] = v
        return out


# -- pointwise geometry pipeline -----------------------------------------------


def _values(arr):
    return np.vectorize(lambda s: s.value if isinstance(s, TSeries) else float(s))(arr)


@dataclass
class TorsionComponents:
    """The three nonzero torsion families of the adapted connection."""

    hv: np.ndarray      # T^i_jc            (horizontal up, mixed lower pair)
    vv_h: np.ndarray    # T^a_ij = Omega^a_ij / 2
    mixed: np.ndarray   # T^a_bi = d_b N_i^a - L^a_bi

    def max_abs(self) -> float:
        return max(float(np.max(np.abs(self.hv))),
                   float(np.max(np.abs(self.vv_h))),
                   float(np.max(np.abs(self.mixed))))


@dataclass
class CurvatureComponents:
    """Adapted curvature families R (hh planes), P (mixed planes), S (vv planes)."""

    r_h: np.ndarray     # R^i_hjk
    p_v: np.ndarray     # P^c_bka  (vertical transported pair)
    p_h: np.ndarray     # P^i_jka  (horizontal transported pair)
    s_v: np.ndarray     # S^a_bcd

    def max_abs(self) -> float:
        return max(float(np.max(np.abs(self.r_h))), float(np.max(np.abs(self.p_v))),
                   float(np.max(np.abs(self.p_h))), float(np.max(np.abs(self.s_v))))


@dataclass
class RicciData:
    hh: np.ndarray
    hv: np.ndarray
    vh: np.ndarray
    vv: np.ndarray
    hscalar: float
    vscalar: float

    @property
    def total_scalar(self) -> float:
        return self.hscalar + self.vscalar


class PointGeometry:
    """Evaluates the full adapted pipeline of a SasakiData instance at a point."""

    def __init__(self, data: SasakiData, point):
        self.data = data
        self.n = data.n
        self.point = tuple(float(p) for p in point)
        if data.domain is not None:
            data.domain.check(self.point)
        n = self.n
        self.g = data.blocks.g.eval_series(self.point, 2)
        self.h = data.blocks.h.eval_series(self.point, 2)
        self.N = data.nconn.eval_series(self.point, 1)
        self.v_scale = data.blocks.l_p ** 2
        if self.v_scale == 0.0:
            raise DegenerateMetricError(
                "vertical block scale vanishes; total metric is degenerate", 0.0)
        self._ginv1 = mat_inv_series([[self.g[i][j].truncate(1) for j in range(n)]
                                      for i in range(n)])
        self._hinv1 = mat_inv_series([[self.h[i][j].truncate(1) for j in range(n)]
                                      for i in range(n)])
        self._lh = None
        self._cv = None
        self._ch = None

    # adapted derivative of a series: e_k = d_k - N_k^b d_b, e_(n+c) = d_(n+c)
    def e(self, series: TSeries, alpha: int) -> TSeries:
        n = self.n
        if alpha >= n:
            return series.deriv(n + (alpha - n))
        out = series.deriv(alpha)
        for b in range(n):
            Nf = self.N[alpha][b]
            if Nf.c:
                out = out - Nf.truncate(out.order) * series.deriv(n + b)
        return out

    # -- connection coefficient families -------------------------------------

    @property
    def L_h(self):
        """L^i_jk as order-1 series, indexed [i][j][k]."""
        if self._lh is None:
            n = self.n
            eg = [[[self.e(self.g[j][h], k) for k in range(n)] for h in range(n)]
                  for j in range(n)]
            L = [[[None] * n for _ in range(n)] for _ in range(n)]
            for i in range(n):
                for j in range(n):
                    for k in range(n):
                        acc = TSeries(2 * n, 1, {})
                        for h in range(n):
                            acc = acc + self._ginv1[i][h] * (
                                eg[j][h][k] + eg[k][h][j] - eg[j][k][h])
                        L[i][j][k] = acc * 0.5
            self._lh = L
        return self._lh

    @property
    def C_v(self):
        """C^a_bc as order-1 series, indexed [a][b][c]."""
        if self._cv is None:
            n = self.n
            dh = [[[self.h[b][e].deriv(n + c) for c in range(n)] for e in range(n)]
                  for b in range(n)]
            C = [[[None] * n for _ in range(n)] for _ in range(n)]
            for a in range(n):
                for b in range(n):
                    for c in range(n):
                        acc = TSeries(2 * n, 1, {})
                        for e in range(n):
                            acc = acc + self._hinv1[a][e] * (
                                dh[e][c][b] + dh[e][b][c] - dh[b][c][e])
                        C[a][b][c] = acc * 0.5
            self._cv = C
        return self._cv

    @property
    def C_h(self):
        """C^i_jc (vertical transport of horizontal indices), order-1 series.

        Half the fiber derivative of the horizontal block; identical to the
        index-identified C^a_bc whenever the blocks come from one Hessian.
        """
        if self._ch is None:
            n = self.n
            C = [[[None] * n for _ in range(n)] for _ in range(n)]
            for i in range(n):
                for j in range(n):
                    for c in range(n):
                        acc = TSeries(2 * n, 1, {})
                        for k in range(n):
                            acc = acc + self._ginv1[i][k] * self.g[j][k].deriv(n + c)
                        C[i][j][c] = acc * 0.5
            self._ch = C
        return self._ch

    def connection_values(self):
        n = self.n
        L = np.array([[[self.L_h[i][j][k].value for k in range(n)] for j in range(n)]
                      for i in range(n)])
        C = np.array([[[self.C_v[a][b][c].value for c in range(n)] for b in range(n)]
                      for a in range(n)])
        return L, C

    # -- anholonomy -----------------------------------------------------------

    def omega(self) -> np.ndarray:
        n = self.n
        om = np.zeros((n, n, n))
        for a in range(n):
            for i in range(n):
                for j in range(i + 1, n):
                    val = (self.e(self.N[j][a], i) - self.e(self.N[i][a], j)).value
                    om[a, i, j] = val
                    om[a, j, i] = -val
        return om

    def torsion(self) -> TorsionComponents:
        n = self.n
        hv = np.array([[[self.C_h[i][j][c].value for c in range(n)]
                        for j in range(n)] for i in range(n)])
        om = self.omega()
        mixed = np.zeros((n, n, n))
        for a in range(n):
            for b in range(n):
                for i in range(n):
                    mixed[a, b, i] = (self.N[i][a].deriv(n + b).value
                                      - self.L_h[a][b][i].value)
        return TorsionComponents(hv, 0.5 * om, mixed)

    # -- curvature -------------------------------------------------------------

    def curvature(self) -> CurvatureComponents:
        n = self.n
        L, Ch, Cv = self.L_h, self.C_h, self.C_v
        om = self.omega()
        t_mixed = self.torsion().mixed

        Lv = np.array([[[L[i][j][k].value for k in range(n)] for j in range(n)]
                       for i in range(n)])
        Chv = np.array([[[Ch[i][j][c].value for c in range(n)] for j in range(n)]
                        for i in range(n)])
        Cvv = np.array([[[Cv[a][b][c].value for c in range(n)] for b in range(n)]
                        for a in range(n)])

        r_h = np.zeros((n, n, n, n))
        for i in range(n):
            for hh in range(n):
                for j in range(n):
                    for k in range(j + 1, n):
                        val = (self.e(L[i][hh][j], k) - self.e(L[i][hh][k], j)).value
                        for m in range(n):
                            val += Lv[m, hh, j] * Lv[i, m, k] - Lv[m, hh, k] * Lv[i, m, j]
                        for a in range(n):
                            val -= Chv[i, hh, a] * om[a, k, j]
                        r_h[i, hh, j, k] = val
                        r_h[i, hh, k, j] = -val

        s_v = np.zeros((n, n, n, n))
        for a in range(n):
            for b in range(n):
                for c in range(n):
                    for d in range(c + 1, n):
                        val = (Cv[a][b][c].deriv(n + d) - Cv[a][b][d].deriv(n + c)).value
                        for e_ in range(n):
                            val += Cvv[e_, b, c] * Cvv[a, e_, d] - Cvv[e_, b, d] * Cvv[a, e_, c]
                        s_v[a, b, c, d] = val
                        s_v[a, b, d, c] = -val

        # horizontal covariant derivative of the two C families (values)
        def dk_Cv(c, b, a, k):
            val = self.e(Cv[c][b][a], k).value
            for d in range(n):
                val += (Lv[c, d, k] * Cvv[d, b, a] - Lv[d, b, k] * Cvv[c, d, a]
                        - Lv[d, a, k] * Cvv[c, b, d])
            return val

        def dk_Ch(i, j, a, k):
            val = self.e(Ch[i][j][a], k).value
            for m in range(n):
                val += Lv[i, m, k] * Chv[m, j, a] - Lv[m, j, k] * Chv[i, m, a]
            for d in range(n):
                val -= Lv[d, a, k] * Chv[i, j, d]
            return val

        p_v = np.zeros((n, n, n, n))
        for c in range(n):
            for b in range(n):
                for k in range(n):
                    for a in range(n):
                        val = L[c][b][k].deriv(n + a).value - dk_Cv(c, b, a, k)
                        for d in range(n):
                            val += Cvv[c, b, d] * t_mixed[d, a, k]
                        p_v[c, b, k, a] = val

        p_h = np.zeros((n, n, n, n))
        for i in range(n):
            for j in range(n):
                for k in range(n):
                    for a in range(n):
                        val = L[i][j][k].deriv(n + a).value - dk_Ch(i, j, a, k)
                        for d in range(n):
                            val += Chv[i, j, d] * t_mixed[d, a, k]
                        p_h[i, j, k, a] = val

        return CurvatureComponents(r_h, p_v, p_h, s_v)

    # -- contractions ------------------------------------------------------------

    def ricci(self, curv: CurvatureComponents | None = None) -> RicciData:
        n = self.n
        if curv is None:
            curv = self.curvature()
        hh = np.einsum("khjk->hj", curv.r_h)
        vv = np.einsum("cabc->ab", curv.s_v)
        vh = np.einsum("abka->bk", curv.p_v)
        hv = -np.einsum("jkja->ka", curv.p_h)
        gval = _values(np.array(self.g, dtype=object))
        hval = _values(np.array(self.h, dtype=object))
        ginv = np.linalg.inv(gval)
        hinv = np.linalg.inv(hval) / self.v_scale
        hscalar = float(np.einsum("ij,ij->", ginv, hh))
        vscalar = float(np.einsum("ab,ab->", hinv, vv))
        return RicciData(hh, hv, vh, vv, hscalar, vscalar)

    def frame_metric(self) -> np.ndarray:
        n = self.n
        G = np.zeros((2 * n, 2 * n))
        G[:n, :n] = _values(np.array(self.g, dtype=object))
        G[n:, n:] = _values(np.array(self.h, dtype=object)) * self.v_scale
        return G

    def einstein(self, ricci: RicciData | None = None) -> np.ndarray:
        n = self.n
        if ricci is None:
            ricci = self.ricci()
        G = self.frame_metric()
        E = np.zeros((2 * n, 2 * n))
        E[:n, :n] = ricci.hh
        E[:n, n:] = ricci.hv
        E[n:, :n] = ricci.vh
        E[n:, n:] = ricci.vv
        return E - 0.5 * G * ricci.total_scalar

    # -- frame Levi-Civita connection and distortion -----------------------------

    def anholonomy_table(self) -> np.ndarray:
        """W[alpha][beta][gamma] with [e_alpha, e_beta] = W^gamma e_gamma."""
        n = self.n
        W = np.zeros((2 * n, 2 * n, 2 * n))
        om = self.omega()
        dN = np.zeros((n, n, n))
        for i in range(n):
            for a in range(n):
                for b in range(n):
                    dN[i, a, b] = self.N[i][b].deriv(n + a).value
        for i in range(n):
            for a in range(n):
                for b in range(n):
                    W[i, n + a, n + b] = dN[i, a, b]
                    W[n + a, i, n + b] = -dN[i, a, b]
        for i in range(n):
            for j in range(n):
                for a in range(n):
                    W[i, j, n + a] = -om[a, i, j]
        return W

    def frame_metric_series(self):
        n = self.n
        out = [[None] * (2 * n) for _ in range(2 * n)]
        zero = TSeries(2 * n, 2, {})
        for al in range(2 * n):
            for be in range(2 * n):
                if al < n and be < n:
                    out[al][be] = self.g[al][be]
                elif al >= n and be >= n:
                    out[al][be] = self.h[al - n][be - n] * self.v_scale
                else:
                    out[al][be] = zero
        return out

    def levi_civita_frame(self) -> np.ndarray:
        """Levi-Civita coefficients in the adapted frame, indexed [gamma][beta][alpha].

        Anholonomic Koszul formula with the frame commutation coefficients.
        """
        n2 = 2 * self.n
        gf = self.frame_metric_series()
        W = self.anholonomy_table()
        Gv = self.frame_metric()
        Ginv = np.linalg.inv(Gv)
        eg = np.zeros((n2, n2, n2))
        for al in range(n2):
            for be in range(n2):
                s = gf[al][be]
                if not s.c:
                    continue
                for ga in range(n2):
                    eg[al, be, ga] = self.e(s, ga).value
        K = np.zeros((n2, n2, n2))
        for al in range(n2):
            for be in range(n2):
                for de in range(n2):
                    val = eg[be, de, al] + eg[al, de, be] - eg[al, be, de]
                    for ep in range(n2):
                        val += (W[al, be, ep] * Gv[ep, de]
                                - W[be, de, ep] * Gv[ep, al]
                                + W[de, al, ep] * Gv[ep, be])
                    K[al, be, de] = 0.5 * val
        # K is indexed [alpha][beta][delta]; contract delta and order the output
        # as [gamma][beta][alpha] (transported index before direction)
        return np.einsum("gd,abd->gba", Ginv, K)

    def adapted_connection_frame(self) -> np.ndarray:
        """The adapted connection in the same [gamma][beta][alpha] layout."""
        n = self.n
        L, C = self.connection_values()
        Chv = np.array([[[self.C_h[i][j][c].value for c in range(n)]
                         for j in range(n)] for i in range(n)])
        out = np.zeros((2 * n, 2 * n, 2 * n))
        out[:n, :n, :n] = L
        out[n:, n:, :n] = L
        out[:n, :n, n:] = Chv
        out[n:, n:, n:] = C
        return out

    def distortion(self) -> np.ndarray:
        return self.adapted_connection_frame() - self.levi_civita_frame()


# -- module-level operations ---------------------------------------------------


def cartan_dconnection(data: SasakiData, point):
    """Connection coefficient values (L^i_jk, C^a_bc) at a point."""
    return PointGeometry(data, point).connection_values()


def metric_compatibility_residual(data: SasakiData, point,
                                  L_override=None, extras: dict | None = None) -> float:
    """Max component of the adapted covariant derivative of each metric block.

    The horizontal block is differentiated horizontally and the vertical block
    vertically (the derivatives the connection is built to kill).  Cross-block
    derivatives are reported through `extras` when a dict is supplied: they
    vanish for Hessian lifts but not for independently chosen blocks.
    """
    geo = PointGeometry(data, point)
    n = geo.n
    L = [[[geo.L_h[i][j][k].value for k in range(n)] for j in range(n)] for i in range(n)]
    if L_override is not None:
        L = L_override
    C = [[[geo.C_v[a][b][c].value for c in range(n)] for b in range(n)] for a in range(n)]
    gval = _values(np.array(geo.g, dtype=object))
    hval = _values(np.array(geo.h, dtype=object))
    worst = 0.0
    for i in range(n):
        for j in range(n):
            for k in range(n):
                r = geo.e(geo.g[i][j], k).value
                for m in range(n):
                    r -= L[m][i][k] * gval[m, j] + L[m][j][k] * gval[i, m]
                worst = max(worst, abs(r))
    for a in range(n):
        for b in range(n):
            for c in range(n):
                r = geo.h[a][b].deriv(n + c).value
                for d in range(n):
                    r -= C[d][a][c] * hval[d, b] + C[d][b][c] * hval[a, d]
                worst = max(worst, abs(r))
    if extras is not None:
        cross_g = 0.0
        for i in range(n):
            for j in range(n):
                for c in range(n):
                    r = geo.g[i][j].deriv(n + c).value
                    for m in range(n):
                        r -= (geo.C_h[m][i][c].value * gval[m, j]
                              + geo.C_h[m][j][c].value * gval[i, m])
                    cross_g = max(cross_g, abs(r))
        cross_h = 0.0
        for a in range(n):
            for b in range(n):
                for k in range(n):
                    r = geo.e(geo.h[a][b], k).value
                    for d in range(n):
                        r -= L[d][a][k] * hval[d, b] + L[d][b][k] * hval[a, d]
                    cross_h = max(cross_h, abs(r))
        extras["cross_horizontal_of_vertical"] = cross_h
        extras["cross_vertical_of_horizontal"] = cross_g
    return worst


def torsion(data: SasakiData, point) -> TorsionComponents:
    return PointGeometry(data, point).torsion()


def curvature(data: SasakiData, point) -> CurvatureComponents:
    return PointGeometry(data, point).curvature()


def ricci_and_scalar(data: SasakiData, point) -> RicciData:
    return PointGeometry(data, point).ricci()


def einstein_finsler_residual(data: SasakiData, source: SourceSpec, point) -> np.ndarray:
    """Einstein tensor of the adapted connection minus the lowered source."""
    geo = PointGeometry(data, point)
    E = geo.einstein()
    G = geo.frame_metric()
    ups = source.mixed_diagonal(point, 2 * geo.n)
    return E - G @ np.diag(ups)


def distortion(data: SasakiData, point) -> np.ndarray:
    """Difference between the adapted connection and the frame Levi-Civita one."""
    return PointGeometry(data, point).distortion()


def nonholonomic_conservation_residual(data: SasakiData, source: SourceSpec,
                                       point) -> np.ndarray:
    """Deformed conservation check: LC divergence of the source minus the
    distortion contraction; reduces to the plain divergence at zero torsion."""
    geo = PointGeometry(data, point)
    n = geo.n
    n2 = 2 * n
    point = geo.point

    gf = geo.frame_metric_series()
    Ginv_series = mat_inv_series([[gf[i][j].truncate(1) for j in range(n2)]
                                  for i in range(n2)])
    ups_fields = _source_fields(source, n2)
    ups_series = [f.eval_jet(point, 1) if isinstance(f, Field)
                  else TSeries.constant(float(f), n2, 1) for f in ups_fields]
    # contravariant source T^{ab} = Ups^a_c g^{cb} (diagonal mixed entries)
    T = [[Ginv_series[a][b] * ups_series[a] for b in range(n2)] for a in range(n2)]

    lc = geo.levi_civita_frame()
    Z = geo.distortion()

    div = np.zeros(n2)
    for be in range(n2):
        acc = 0.0
        for al in range(n2):
            acc += geo.e(T[al][be], al).value
            for ep in range(n2):
                acc += lc[al, ep, al] * T[ep][be].value
                acc += lc[be, ep, al] * T[al][ep].value
        div[be] = acc

    rhs = np.zeros(n2)
    for be in range(n2):
        acc = 0.0
        for al in range(n2):
            for ep in range(n2):
                acc -= Z[al, ep, al] * T[ep][be].value
                acc -= Z[be, ep, al] * T[al][ep].value
        rhs[be] = acc
    return div - rhs


def _source_fields(source: SourceSpec, dim: int):
    sectors = dim // 2
    if source.mode == "brane-profile":
        entries = list(source.upsilon_entries)
    else:
        # constant per-sector values; wrap as floats
        entries = None
    out = []
    for a in range(dim):
        if entries is not None:
            out.append(entries[a // 2])
        else:
            out.append(None)
    if entries is None:
        # fall back to pointwise evaluation via mixed_diagonal at the center
        raise ShapeError("conservation residual needs per-sector source fields; "
                         "use SourceSpec.from_upsilon")
    return out


# -- coordinate-frame Levi-Civita route -----------------------------------------


def coordinate_christoffel(metric: SymmetricFieldMatrix, point):
    """Christoffel symbols (order-1 series) and metric data of a coordinate metric."""
    d = metric.n
    gs = metric.eval_series(tuple(point), 2)
    ginv = mat_inv_series([[gs[i][j].truncate(1) for j in range(d)] for i in range(d)])
    Gam = [[[None] * d for _ in range(d)] for _ in range(d)]
    for l in range(d):
        for m in range(d):
            for nn in range(m, d):
                acc = TSeries(d, 1, {})
                for k in range(d):
                    acc = acc + ginv[l][k] * (gs[nn][k].deriv(m) + gs[m][k].deriv(nn)
                                              - gs[m][nn].deriv(k))
                s = acc * 0.5
                Gam[l][m][nn] = s
                Gam[l][nn][m] = s
    return gs, ginv, Gam


def coordinate_ricci(metric: SymmetricFieldMatrix, point):
    """Ricci tensor and scalar of a coordinate metric via its Christoffels."""
    d = metric.n
    gs, ginv, Gam = coordinate_christoffel(metric, point)
    Gv = np.array([[[Gam[l][m][nn].value for nn in range(d)] for m in range(d)]
                   for l in range(d)])
    ric = np.zeros((d, d))
    for s in range(d):
        for nu in range(s, d):
            val = 0.0
            for mu in range(d):
                val += Gam[mu][nu][s].deriv(mu).value - Gam[mu][mu][s].deriv(nu).value
                for lam in range(d):
                    val += (Gv[mu, mu, lam] * Gv[lam, nu, s]
                            - Gv[mu, nu, lam] * Gv[lam, mu, s])
            ric[s, nu] = ric[nu, s] = val
    ginv_val = np.array([[ginv[i][j].value for j in range(d)] for i in range(d)])
    scal = float(np.einsum("ij,ij->", ginv_val, ric))
    gval = np.array([[gs[i][j].value for j in range(d)] for i in range(d)])
    return ric, scal, gval


def levi_civita_residual(metric: SymmetricFieldMatrix, source: SourceSpec,
                         point) -> np.ndarray:
    """Torsionless Einstein residual of the full coordinate metric."""
    ric, scal, gval = coordinate_ricci(metric, point)
    E = ric - 0.5 * gval * scal
    ups = source.mixed_diagonal(point, metric.n)
    return E - gval @ np.diag(ups)


def coordinate_metric_fields(data: SasakiData) -> SymmetricFieldMatrix:
    """The assembled coordinate metric of Sasaki data as a field matrix."""
    n = data.n
    l2 = data.blocks.l_p ** 2
    entries = {}
    for i in range(2 * n):
        for j in range(i, 2 * n):
            terms = []
            if i < n and j < n:
                f = data.blocks.g.field(i, j)
                if f is not None:
                    terms.append(f)
                for a in range(n):
                    for b in range(n):
                        Na, Nb = data.nconn.field(i, a), data.nconn.field(j, b)
                        hab = data.blocks.h.field(a, b)
                        if Na is not None and Nb is not None and hab is not None:
                            terms.append(Na * Nb * hab * l2)
            elif i < n <= j:
                b = j - n
                for a in range(n):
                    Na, hab = data.nconn.field(i, a), data.blocks.h.field(a, b)
                    if Na is not None and hab is not None:
                        terms.append(Na * hab * l2)
            else:
                f = data.blocks.h.field(i - n, j - n)
                if f is not None:
                    terms.append(f * l2)
            if terms:
                acc = terms[0]
                for t in terms[1:]:
                    acc = acc + t
                entries[(i, j)] = acc
    return SymmetricFieldMatrix(2 * n, entries)
