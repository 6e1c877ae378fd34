"""Adaptive panel quadrature, generic over floats and Taylor series.

Solution construction needs integrals whose parametric derivatives must stay
consistent with the jet engine, so the integrator accepts series-valued
integrands (error is measured over all Taylor coefficients at once).  Panels
use an embedded Simpson pair without extrapolation, which keeps the realized
error tracking the requested tolerance instead of collapsing to rounding.
"""

from __future__ import annotations

import bisect

from .fields import Field, JetSpace
from .taylor import TSeries


class QuadratureError(ArithmeticError):
    """Adaptive refinement failed to reach the requested tolerance."""


def _norm(x) -> float:
    if isinstance(x, TSeries):
        return max((abs(v) for v in x.c.values()), default=0.0)
    return abs(x)


def _zero_like(x):
    if isinstance(x, TSeries):
        return TSeries(x.nvars, x.order, {})
    return 0.0


def _simpson(fa, fm, fb, h):
    return (fa + 4.0 * fm + fb) * (h / 6.0)


MAX_INTEGRAND_EVALS = 40000


def integrate(fn, a: float, b: float, tol: float = 1e-10, max_depth: int = 28,
              max_evals: int = MAX_INTEGRAND_EVALS):
    """Integral of fn over [a, b]; fn may return floats or TSeries.

    A hard evaluation budget turns near-singular integrands into a loud
    QuadratureError instead of unbounded refinement.
    """
    if a == b:
        return _zero_like(fn(a))
    sign = 1.0
    if b < a:
        a, b = b, a
        sign = -1.0
    fa, fb = fn(a), fn(b)
    m = 0.5 * (a + b)
    fm = fn(m)
    budget = [max_evals - 3]
    total = _panel(fn, a, m, b, fa, fm, fb, tol, max_depth, budget)
    return total * sign if sign < 0 else total


def _panel(fn, a, m, b, fa, fm, fb, tol, depth, budget):
    h = b - a
    coarse = _simpson(fa, fm, fb, h)
    lm, rm = 0.5 * (a + m), 0.5 * (m + b)
    budget[0] -= 2
    if budget[0] < 0:
        raise QuadratureError(
            f"evaluation budget exhausted near [{a:g}, {b:g}] "
            "(integrand likely singular on the interval)")
    flm, frm = fn(lm), fn(rm)
    left = _simpson(fa, flm, fm, m - a)
    right = _simpson(fm, frm, fb, b - m)
    fine = left + right
    err = _norm(fine - coarse) / 15.0
    # rounding floor: halving panel tolerances below float noise cannot help
    floor = 1e-16 * max(1.0, _norm(fine), _norm(fm) * (b - a))
    if err <= tol or err <= floor or depth <= 0:
        if depth <= 0 and err > max(64.0 * tol, 64.0 * floor):
            raise QuadratureError(f"panel error {err:g} above tolerance {tol:g} at max depth")
        return fine
    half = 0.5 * tol
    return (_panel(fn, a, lm, m, fa, flm, fm, half, depth - 1, budget)
            + _panel(fn, m, rm, b, fm, frm, fb, half, depth - 1, budget))


# 7-point Kronrod extension of 3-point Gauss; near-machine accuracy on smooth
# panels at a handful of evaluations, used for the nested construction integrals.
_GK_X = (0.0, 0.4342437493468025, -0.4342437493468025,
         0.7745966692414834, -0.7745966692414834,
         0.9604912687080203, -0.9604912687080203)
_GK_WK = (0.4509165386584741, 0.4013974147759622, 0.4013974147759622,
          0.2684880898683334, 0.2684880898683334,
          0.1046562260264673, 0.1046562260264673)
_GK_WG = (0.8888888888888888, 0.0, 0.0,
          0.5555555555555556, 0.5555555555555556, 0.0, 0.0)


def integrate_gk(fn, a: float, b: float, tol: float = 1e-12, max_depth: int = 18,
                 max_evals: int = MAX_INTEGRAND_EVALS):
    """Adaptive Gauss-Kronrod panels; accuracy typically far exceeds `tol`."""
    if a == b:
        return _zero_like(fn(a))
    sign = 1.0
    if b < a:
        a, b = b, a
        sign = -1.0
    budget = [max_evals]
    total = _gk_panel(fn, a, b, tol, max_depth, budget)
    return total * sign if sign < 0 else total


def _gk_panel(fn, a, b, tol, depth, budget):
    c = 0.5 * (a + b)
    h = 0.5 * (b - a)
    budget[0] -= len(_GK_X)
    if budget[0] < 0:
        raise QuadratureError(
            f"evaluation budget exhausted near [{a:g}, {b:g}] "
            "(integrand likely singular on the interval)")
    kron = None
    gauss = None
    for x, wk, wg in zip(_GK_X, _GK_WK, _GK_WG):
        v = fn(c + h * x)
        kron = v * wk if kron is None else kron + v * wk
        if wg:
            gauss = v * wg if gauss is None else gauss + v * wg
    kron = kron * h
    gauss = gauss * h
    err = _norm(kron - gauss)
    floor = 1e-15 * max(1.0, _norm(kron))
    if err <= max(tol, floor) or depth <= 0:
        if depth <= 0 and err > max(1e3 * tol, 1e3 * floor):
            raise QuadratureError(f"panel error {err:g} above tolerance {tol:g} at max depth")
        return kron
    half = 0.5 * tol
    return (_gk_panel(fn, a, c, half, depth - 1, budget)
            + _gk_panel(fn, c, b, half, depth - 1, budget))


class CumulativeIntegral:
    """t -> integral of fn from `lower` to t, with checkpoint reuse.

    Repeated evaluations (quadrature nodes of an outer integral, grid sweeps)
    extend from the nearest cached checkpoint instead of re-integrating from
    the lower limit, which keeps nested integrals near-linear in cost.

    `rule` selects the panel rule: "tracking" (embedded Simpson pair whose
    realized error follows the tolerance) or "fast" (Gauss-Kronrod panels).
    """

    def __init__(self, fn, lower: float, tol: float, rule: str = "tracking"):
        self.fn = fn
        self.lower = float(lower)
        self.tol = tol
        self.rule = rule
        self._ts = [self.lower]
        self._vals = [None]  # resolved to a typed zero on first use

    def __call__(self, t: float):
        t = float(t)
        if self._vals[0] is None:
            self._vals[0] = _zero_like(self.fn(self.lower))
        if t == self.lower:
            return self._vals[0]
        i = bisect.bisect_left(self._ts, t)
        if i < len(self._ts) and self._ts[i] == t:
            return self._vals[i]
        # nearest existing checkpoint on either side
        cands = []
        if i > 0:
            cands.append(i - 1)
        if i < len(self._ts):
            cands.append(i)
        j = min(cands, key=lambda k: abs(self._ts[k] - t))
        base_t, base_v = self._ts[j], self._vals[j]
        if self.rule == "fast":
            inc = integrate_gk(self.fn, base_t, t, self.tol)
        else:
            inc = integrate(self.fn, base_t, t, self.tol)
        val = base_v + inc
        k = bisect.bisect_left(self._ts, t)
        self._ts.insert(k, t)
        self._vals.insert(k, val)
        return val


class QuadratureField(Field):
    """Field defined as an integral of another field along one argument.

    F(u) = integral of the integrand from `lower` to u[var], the remaining
    arguments entering as parameters.  Jets are exact: derivatives along the
    integration variable come from the integrand's jet at the upper limit,
    parametric derivatives from series-valued quadrature under the integral.
    """

    def __init__(self, integrand: Field, var: int, lower: float = 0.0,
                 tol: float = 1e-10, rule: str = "tracking"):
        self.integrand = integrand
        self.var = var
        self.lower = float(lower)
        self.tol = tol
        self.rule = rule
        self.arity = integrand.arity
        self.depends = tuple(sorted(set(integrand.depends) | {var}))
        self._caches: dict = {}

    def with_tolerance(self, tol: float) -> "QuadratureField":
        return QuadratureField(self.integrand, self.var, self.lower, tol, self.rule)

    def _cumulative(self, args, order, space: JetSpace) -> CumulativeIntegral:
        frozen_map = list(space.varmap)
        frozen_map[self.var] = None
        frozen = JetSpace(space.nvars, tuple(frozen_map))
        key = (space.nvars, frozen.varmap,
               tuple(a for j, a in enumerate(args) if j != self.var))
        entry = self._caches.get(key)
        if entry is None or entry[0] < order:
            pre = args[:self.var]
            post = args[self.var + 1:]

            def fn(t, _pre=pre, _post=post, _o=order, _sp=frozen):
                return self.integrand.eval_jet(_pre + (t,) + _post, _o, _sp)

            entry = (order, CumulativeIntegral(fn, self.lower, self.tol, self.rule))
            self._caches[key] = entry
        return entry[1]

    def _eval(self, args, order, space):
        args = tuple(float(a) for a in args)
        out = self._cumulative(args, order, space)(args[self.var])
        if not isinstance(out, TSeries):
            out = TSeries.constant(out, space.nvars, order)
        # cached checkpoints may carry a higher order; keep the requested one
        from .taylor import key_degree
        out = TSeries(space.nvars, order,
                      {k: v for k, v in out.c.items() if key_degree(k) <= order})
        amb = space.varmap[self.var]
        if amb is not None and order >= 1:
            shift = 4 * amb
            unit = 1 << shift
            g = self.integrand.eval_jet(args, order - 1, space)
            for key, val in g.c.items():
                k = (key >> shift) & 0xF
                nk = key + unit
                out.c[nk] = out.c.get(nk, 0.0) + val / (k + 1)
        return out
