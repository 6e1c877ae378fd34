"""Truncated multivariate Taylor arithmetic for exact partial derivatives.

Everything downstream (metrics, connections, curvature, solution residuals)
is built on jets evaluated through this module, so derivatives are exact up
to floating-point rounding rather than finite-difference approximations.

A series is stored sparsely as a map from packed exponent multi-indices to
Taylor coefficients, truncated at a fixed total degree.  Exponents pack four
bits per variable, so multi-index addition during multiplication is a single
integer addition (per-variable exponents stay below 16 for every supported
order).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

MAX_JET_ORDER = 4

_NIBBLE = 4
_MASK = 0xF


def pack_key(exponents) -> int:
    key = 0
    for i, e in enumerate(exponents):
        key |= int(e) << (_NIBBLE * i)
    return key


def unpack_key(key: int, nvars: int) -> tuple:
    return tuple((key >> (_NIBBLE * i)) & _MASK for i in range(nvars))


_DEG_CACHE: dict = {0: 0}


def key_degree(key: int) -> int:
    d = _DEG_CACHE.get(key)
    if d is None:
        d = 0
        k = key
        while k:
            d += k & _MASK
            k >>= _NIBBLE
        _DEG_CACHE[key] = d
    return d


class DomainError(ValueError):
    """Evaluation point lies outside the declared domain (or on an excluded set)."""


class UnsupportedOrderError(ValueError):
    """Requested derivative order exceeds the supported maximum."""


class DegenerateMetricError(ArithmeticError):
    """A metric block is numerically degenerate at the evaluation point."""

    def __init__(self, message: str, determinant: float = 0.0):
        super().__init__(message)
        self.determinant = determinant


class ShapeError(ValueError):
    """Mismatched dimensions between interacting objects."""


class TSeries:
    """A real Taylor polynomial in `nvars` variables, truncated at total degree `order`.

    Coefficients are Taylor coefficients (derivative over multi-index
    factorial), keyed by packed exponent integers.  Arithmetic truncates
    consistently, so any composite of smooth primitives carries exact
    derivatives of the composite.
    """

    __slots__ = ("nvars", "order", "c")

    def __init__(self, nvars: int, order: int, coeffs: dict | None = None):
        self.nvars = nvars
        self.order = order
        self.c = coeffs if coeffs is not None else {}

    # -- constructors -------------------------------------------------------

    @classmethod
    def constant(cls, value: float, nvars: int, order: int) -> "TSeries":
        if value == 0.0:
            return cls(nvars, order, {})
        return cls(nvars, order, {0: float(value)})

    @classmethod
    def variable(cls, index: int, value: float, nvars: int, order: int) -> "TSeries":
        coeffs = {}
        if value != 0.0:
            coeffs[0] = float(value)
        if order >= 1:
            coeffs[1 << (_NIBBLE * index)] = 1.0
        return cls(nvars, order, coeffs)

    # -- inspection ---------------------------------------------------------

    @property
    def value(self) -> float:
        return self.c.get(0, 0.0)

    def coeff(self, exponents) -> float:
        return self.c.get(pack_key(exponents), 0.0)

    def partial(self, exponents) -> float:
        """Partial derivative for an exponent multi-index (coeff times factorials)."""
        f = 1.0
        for e in exponents:
            f *= math.factorial(e)
        return self.c.get(pack_key(exponents), 0.0) * f

    def partial_packed(self, key: int) -> float:
        f = 1.0
        k = key
        while k:
            f *= math.factorial(k & _MASK)
            k >>= _NIBBLE
        return self.c.get(key, 0.0) * f

    def deriv(self, index: int) -> "TSeries":
        """Series of the partial derivative along one variable (order drops by one)."""
        shift = _NIBBLE * index
        unit = 1 << shift
        out = {}
        for key, val in self.c.items():
            e = (key >> shift) & _MASK
            if e == 0:
                continue
            out[key - unit] = val * e
        return TSeries(self.nvars, self.order - 1, out)

    def truncate(self, order: int) -> "TSeries":
        if order >= self.order:
            return TSeries(self.nvars, order, dict(self.c))
        out = {k: v for k, v in self.c.items() if key_degree(k) <= order}
        return TSeries(self.nvars, order, out)

    # -- ring operations ----------------------------------------------------

    def _coerce(self, other):
        if isinstance(other, TSeries):
            if other.nvars != self.nvars:
                raise ShapeError(f"mixing series over {other.nvars} and {self.nvars} variables")
            return other
        return TSeries.constant(float(other), self.nvars, self.order)

    def __add__(self, other):
        if not isinstance(other, TSeries):
            f = float(other)
            out = dict(self.c)
            if f != 0.0:
                s = out.get(0, 0.0) + f
                if s == 0.0:
                    out.pop(0, None)
                else:
                    out[0] = s
            return TSeries(self.nvars, self.order, out)
        o = self._coerce(other)
        order = self.order if self.order <= o.order else o.order
        a, b = self.c, o.c
        if len(a) < len(b):
            a, b = b, a
        if order < self.order or order < o.order:
            out = {k: v for k, v in a.items() if key_degree(k) <= order}
        else:
            out = dict(a)
        for k, v in b.items():
            if key_degree(k) > order:
                continue
            s = out.get(k, 0.0) + v
            if s == 0.0:
                out.pop(k, None)
            else:
                out[k] = s
        return TSeries(self.nvars, order, out)

    __radd__ = __add__

    def __neg__(self):
        return TSeries(self.nvars, self.order, {k: -v for k, v in self.c.items()})

    def __sub__(self, other):
        if not isinstance(other, TSeries):
            return self + (-float(other))
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if not isinstance(other, TSeries):
            f = float(other)
            if f == 0.0:
                return TSeries(self.nvars, self.order, {})
            return TSeries(self.nvars, self.order, {k: v * f for k, v in self.c.items()})
        o = self._coerce(other)
        order = self.order if self.order <= o.order else o.order
        ac, bc = self.c, o.c
        # constant-series fast paths
        if len(ac) == 1 and 0 in ac:
            f = ac[0]
            return TSeries(self.nvars, order,
                           {k: v * f for k, v in bc.items() if key_degree(k) <= order})
        if len(bc) == 1 and 0 in bc:
            f = bc[0]
            return TSeries(self.nvars, order,
                           {k: v * f for k, v in ac.items() if key_degree(k) <= order})
        if len(ac) > len(bc):
            ac, bc = bc, ac
        deg = key_degree
        blist = [(k2, deg(k2), v2) for k2, v2 in bc.items()]
        out: dict = {}
        get = out.get
        for k1, v1 in ac.items():
            rem = order - deg(k1)
            if rem < 0:
                continue
            for k2, d2, v2 in blist:
                if d2 > rem:
                    continue
                nk = k1 + k2
                out[nk] = get(nk, 0.0) + v1 * v2
        return TSeries(self.nvars, order, out)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if not isinstance(other, TSeries):
            return self * (1.0 / float(other))
        return self * other._reciprocal()

    def __rtruediv__(self, other):
        return self._reciprocal() * other

    def __pow__(self, p):
        if isinstance(p, int) or (isinstance(p, float) and p.is_integer()):
            p = int(p)
            if p == 0:
                return TSeries.constant(1.0, self.nvars, self.order)
            if p < 0:
                return self._reciprocal() ** (-p)
            result = self
            for _ in range(p - 1):
                result = result * self
            return result
        return powf(self, float(p))

    # -- composition with univariate analytic maps --------------------------

    def _split(self):
        """Constant part and the strictly positive-degree remainder."""
        delta = TSeries(self.nvars, self.order,
                        {k: v for k, v in self.c.items() if k != 0})
        return self.c.get(0, 0.0), delta

    def compose(self, derivs: list) -> "TSeries":
        """Evaluate f(self) where derivs[k] = f^(k) at the constant part."""
        _c0, delta = self._split()
        m = min(self.order, len(derivs) - 1)
        result = TSeries.constant(derivs[m] / math.factorial(m), self.nvars, self.order)
        for k in range(m - 1, -1, -1):
            result = result * delta + (derivs[k] / math.factorial(k))
        return result

    def _reciprocal(self) -> "TSeries":
        c0 = self.value
        if c0 == 0.0:
            raise ZeroDivisionError("division by a series with zero constant part")
        if len(self.c) == 1 and 0 in self.c:
            return TSeries.constant(1.0 / c0, self.nvars, self.order)
        derivs = []
        sign = 1.0
        for k in range(self.order + 1):
            derivs.append(sign * math.factorial(k) / c0 ** (k + 1))
            sign = -sign
        return self.compose(derivs)

    def project(self, varmap, nvars_out: int) -> "TSeries":
        """Relabel variables into another space; entries mapped to None are dropped
        at positive exponent (their value-dependence is kept)."""
        out: dict = {}
        for key, val in self.c.items():
            nk = 0
            keep = True
            k = key
            i = 0
            while k:
                e = k & _MASK
                if e:
                    m = varmap[i]
                    if m is None:
                        keep = False
                        break
                    nk += e << (_NIBBLE * m)
                k >>= _NIBBLE
                i += 1
            if keep:
                out[nk] = out.get(nk, 0.0) + val
        return TSeries(nvars_out, self.order, out)

    def __repr__(self):
        return f"TSeries(nvars={self.nvars}, order={self.order}, value={self.value!r})"


# -- analytic primitives dispatching on float | TSeries ----------------------


def exp(x):
    if isinstance(x, TSeries):
        e0 = math.exp(x.value)
        return x.compose([e0] * (x.order + 1))
    return math.exp(x)


def log(x):
    if isinstance(x, TSeries):
        c0 = x.value
        if c0 <= 0.0:
            raise DomainError(f"log of non-positive value {c0}")
        derivs = [math.log(c0)]
        sign = 1.0
        for k in range(1, x.order + 1):
            derivs.append(sign * math.factorial(k - 1) / c0 ** k)
            sign = -sign
        return x.compose(derivs)
    if x <= 0.0:
        raise DomainError(f"log of non-positive value {x}")
    return math.log(x)


def sin(x):
    if isinstance(x, TSeries):
        c0 = x.value
        cycle = [math.sin(c0), math.cos(c0), -math.sin(c0), -math.cos(c0)]
        return x.compose([cycle[k % 4] for k in range(x.order + 1)])
    return math.sin(x)


def cos(x):
    if isinstance(x, TSeries):
        c0 = x.value
        cycle = [math.cos(c0), -math.sin(c0), -math.cos(c0), math.sin(c0)]
        return x.compose([cycle[k % 4] for k in range(x.order + 1)])
    return math.cos(x)


def powf(x, p: float):
    """Real power x**p for positive base (general exponent)."""
    if isinstance(x, TSeries):
        c0 = x.value
        if c0 <= 0.0:
            raise DomainError(f"real power of non-positive base {c0}")
        derivs = []
        fac = 1.0
        for k in range(x.order + 1):
            derivs.append(fac * c0 ** (p - k))
            fac *= (p - k)
        return x.compose(derivs)
    if x <= 0.0:
        raise DomainError(f"real power of non-positive base {x}")
    return x ** p


def sqrt(x):
    if isinstance(x, TSeries):
        return powf(x, 0.5)
    if x < 0.0:
        raise DomainError(f"sqrt of negative value {x}")
    return math.sqrt(x)


ABS_GUARD = 1e-12


def absg(x, guard: float = ABS_GUARD):
    """Absolute value with a smoothness guard: rejects a neighbourhood of zero.

    |u| is smooth away from u = 0; inside the guard band the derivative data
    would be meaningless, so evaluation fails loudly instead.
    """
    if isinstance(x, TSeries):
        c0 = x.value
        if abs(c0) <= guard:
            raise DomainError(f"abs evaluated within guard band of zero ({c0})")
        return x if c0 > 0 else -x
    if abs(x) <= guard:
        raise DomainError(f"abs evaluated within guard band of zero ({x})")
    return abs(x)


# -- domain description -------------------------------------------------------


@dataclass(frozen=True)
class DomainBox:
    """Per-coordinate closed intervals with an excluded ball around the zero fiber.

    `fiber_indices` names the coordinates whose simultaneous vanishing is
    excluded (the zero section of the bundle); points with fiber norm below
    `null_eps` are rejected.
    """

    intervals: tuple
    fiber_indices: tuple = ()
    null_eps: float = 1e-8

    def __post_init__(self):
        for lo, hi in self.intervals:
            if not lo < hi:
                raise ShapeError(f"empty interval [{lo}, {hi}] in domain box")

    @property
    def dim(self) -> int:
        return len(self.intervals)

    def contains(self, point) -> bool:
        if len(point) != self.dim:
            return False
        for p, (lo, hi) in zip(point, self.intervals):
            if not (lo <= p <= hi):
                return False
        return not self.excludes(point)

    def excludes(self, point) -> bool:
        if not self.fiber_indices:
            return False
        norm2 = sum(point[i] ** 2 for i in self.fiber_indices)
        return norm2 < self.null_eps ** 2

    def check(self, point) -> None:
        if len(point) != self.dim:
            raise ShapeError(f"point of length {len(point)} in a {self.dim}-d box")
        for p, (lo, hi) in zip(point, self.intervals):
            if not (lo <= p <= hi):
                raise DomainError(f"coordinate {p} outside [{lo}, {hi}]")
        if self.excludes(point):
            raise DomainError("point within excluded ball around the zero fiber")

    @classmethod
    def cube(cls, dim: int, half_width: float = 10.0, fiber_indices: tuple = (),
             null_eps: float = 1e-8) -> "DomainBox":
        return cls(tuple((-half_width, half_width) for _ in range(dim)),
                   tuple(fiber_indices), null_eps)
