"""Coupled quadrature sweep for the solution-generating integrals.

One shell of the construction needs several integrals along the same
anisotropic coordinate (the reciprocal-quadrature of the diagonal pair, the
integrating-factor exponent, the weighted source integrals of the first leg
family, and the direct quadratures of the second).  Evaluating them as nested
adaptive quadratures multiplies their costs; here they advance together as a
single embedded Runge-Kutta system over series-valued state, so every
accepted step prices each integrand once.

State components are Taylor series over the non-anisotropic directions, so
parametric derivatives ride along exactly; derivatives along the anisotropic
coordinate are reattached from the defining integrands, keeping component
jets exact regardless of step error in the values.
"""

from __future__ import annotations

import bisect

from .fields import Field
from .quadrature import QuadratureError
from .taylor import TSeries

# Cash-Karp embedded pair
_CK_C = (0.0, 0.2, 0.3, 0.6, 1.0, 0.875)
_CK_A = (
    (),
    (0.2,),
    (3.0 / 40.0, 9.0 / 40.0),
    (0.3, -0.9, 1.2),
    (-11.0 / 54.0, 2.5, -70.0 / 27.0, 35.0 / 27.0),
    (1631.0 / 55296.0, 175.0 / 512.0, 575.0 / 13824.0,
     44275.0 / 110592.0, 253.0 / 4096.0),
)
_CK_B5 = (37.0 / 378.0, 0.0, 250.0 / 621.0, 125.0 / 594.0, 0.0, 512.0 / 1771.0)
_CK_B4 = (2825.0 / 27648.0, 0.0, 18575.0 / 48384.0, 13525.0 / 55296.0,
          277.0 / 14336.0, 0.25)

_MAX_STEPS = 20000


def _norm_state(state) -> float:
    worst = 0.0
    for s in state.values():
        for v in s.c.values():
            a = abs(v)
            if a > worst:
                worst = a
        # empty series contribute zero
    return worst


class ShellSweep:
    """Advances the shell integral system and serves component jets.

    `chain` is a callable (args, order, q_series) -> dict producing the
    canonical (anisotropic-direction-active) series of every integrand, given
    the accumulated reciprocal quadrature as a series; `names` orders the
    state components; component "Q" must be the reciprocal quadrature itself.
    """

    def __init__(self, names, var: int, arity: int, lower: float, tol: float,
                 rhs, order: int, key_indices=None):
        self.names = tuple(names)
        self.var = var
        self.arity = arity
        self.lower = float(lower)
        self.tol = tol
        self.rhs = rhs          # (args_at_t, state_dict, order) -> dict of frozen-series
        self.order = order      # internal series order of the state
        if key_indices is None:
            key_indices = tuple(j for j in range(arity) if j != var)
        self.key_indices = tuple(j for j in key_indices if j != var)
        self._tracks: dict = {}

    # -- state bookkeeping ----------------------------------------------------

    def _key(self, args):
        return tuple(args[j] for j in self.key_indices)

    def _zero_state(self):
        z = TSeries(self.arity, self.order, {})
        return {name: z for name in self.names}

    def state_at(self, args):
        """Advance (with caching) to the anisotropic coordinate of `args`."""
        t = float(args[self.var])
        key = self._key(args)
        track = self._tracks.get(key)
        if track is None:
            track = ([self.lower], [self._zero_state()])
            self._tracks[key] = track
        ts, states = track
        i = bisect.bisect_left(ts, t)
        if i < len(ts) and ts[i] == t:
            return states[i]
        cands = []
        if i > 0:
            cands.append(i - 1)
        if i < len(ts):
            cands.append(i)
        j = min(cands, key=lambda k: abs(ts[k] - t))
        state = self._advance(args, states[j], ts[j], t, self.order)
        k = bisect.bisect_left(ts, t)
        ts.insert(k, t)
        states.insert(k, state)
        return state

    def _advance(self, args, state, t0, t1, order):
        if t1 == t0:
            return state
        span = t1 - t0
        h = span
        t = t0
        steps = 0
        state = dict(state)
        while (span > 0 and t < t1 - 1e-15 * max(1.0, abs(t1))) or \
              (span < 0 and t > t1 + 1e-15 * max(1.0, abs(t1))):
            steps += 1
            if steps > _MAX_STEPS:
                raise QuadratureError(f"step budget exhausted advancing to {t1:g}")
            if (span > 0 and t + h > t1) or (span < 0 and t + h < t1):
                h = t1 - t
            ks = []
            for stage in range(6):
                ts_ = t + _CK_C[stage] * h
                st = state
                if stage:
                    st = {}
                    coeffs = _CK_A[stage]
                    for name in self.names:
                        acc = state[name]
                        for c, k in zip(coeffs, ks):
                            if c:
                                acc = acc + k[name] * (c * h)
                        st[name] = acc
                pt = list(args)
                pt[self.var] = ts_
                try:
                    ks.append(self.rhs(tuple(pt), st, order))
                except (OverflowError, ZeroDivisionError) as exc:
                    raise QuadratureError(
                        f"integral system diverged near {ts_:g}: {exc} "
                        "(generating data likely leaves the main regime)") from exc
            new = {}
            errs = {}
            for name in self.names:
                acc5 = state[name]
                err = None
                for b5, b4, k in zip(_CK_B5, _CK_B4, ks):
                    if b5:
                        acc5 = acc5 + k[name] * (b5 * h)
                    d = b5 - b4
                    if d:
                        err = k[name] * (d * h) if err is None else err + k[name] * (d * h)
                new[name] = acc5
                errs[name] = err if err is not None else TSeries(self.arity, order, {})
            err_norm = _norm_state(errs)
            scale = max(1.0, _norm_state(new))
            if not (err_norm < 1e250 and scale < 1e250):
                raise QuadratureError(
                    f"integral system diverged near {t:g} "
                    "(generating data likely leaves the main regime)")
            tol_step = self.tol * max(abs(h) / max(abs(span), 1e-30), 1e-3)
            if err_norm <= tol_step * scale or abs(h) < 1e-13 * max(1.0, abs(span)):
                t += h
                state = new
                grow = 0.9 * (tol_step * scale / err_norm) ** 0.2 if err_norm > 0 else 5.0
                h *= min(5.0, max(1.0, grow))
            else:
                h *= max(0.2, 0.9 * (tol_step * scale / err_norm) ** 0.25)
                if abs(h) < 1e-9 * max(1.0, abs(span)):
                    raise QuadratureError(
                        f"step size collapsed near {t:g} "
                        "(integrand likely singular: generating data leaves "
                        "the main regime inside the interval)")
        return state


class SweepComponent(Field):
    """One integral of the sweep as a scalar field with exact jets.

    Values and parametric derivatives come from the advanced state; the
    anisotropic derivative tower is rebuilt from the defining integrand, so
    the jet identity d(component)/dvar = integrand holds to rounding.
    """

    def __init__(self, sweep: ShellSweep, name: str, integrand_series, depends):
        self.sweep = sweep
        self.name = name
        self.arity = sweep.arity
        self.integrand_series = integrand_series  # (args, order) -> canonical TSeries
        self.depends = tuple(depends)

    def _eval(self, args, order, space):
        state = self.sweep.state_at(args)[self.name]
        from .taylor import key_degree
        out = TSeries(self.arity, order,
                      {k: v for k, v in state.c.items() if key_degree(k) <= order})
        if order >= 1:
            g = self.integrand_series(args, order - 1)
            shift = 4 * self.sweep.var
            unit = 1 << shift
            for key, val in g.c.items():
                k = (key >> shift) & 0xF
                nk = key + unit
                out.c[nk] = out.c.get(nk, 0.0) + val / (k + 1)
        return out
