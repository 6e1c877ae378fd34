"""Scalar coefficient fields evaluable through the jet mechanism.

A field is a pure map from a coordinate tuple to a real value that can also
be evaluated on Taylor seeds, yielding exact derivatives of any composite.
Fields are immutable after construction and safe to share across workers.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

from . import taylor
from .taylor import MAX_JET_ORDER, ShapeError, TSeries, UnsupportedOrderError

_UID_COUNTER = itertools.count(1)
_EVAL_CACHE: dict = {}
_EVAL_CACHE_CAP = 400000


def clear_eval_cache() -> None:
    _EVAL_CACHE.clear()


def memo_eval(field, args, order, space, compute):
    """Memoized field evaluation; fields are immutable so results are reusable."""
    key = (field.uid, args, order)
    hit = _EVAL_CACHE.get(key)
    if hit is not None:
        return hit
    val = compute()
    if len(_EVAL_CACHE) >= _EVAL_CACHE_CAP:
        _EVAL_CACHE.clear()
    _EVAL_CACHE[key] = val
    return val


@dataclass(frozen=True)
class JetSpace:
    """Ambient jet space: number of directions and which field argument maps where.

    `varmap[j]` is the ambient direction seeded for argument j, or None when
    that argument is held constant during the evaluation.
    """

    nvars: int
    varmap: tuple

    @classmethod
    def identity(cls, arity: int) -> "JetSpace":
        return cls(arity, tuple(range(arity)))


_IDENTITY_MAPS = {n: tuple(range(n)) for n in range(0, 17)}
_IDENTITY_SPACES = {n: JetSpace(n, _IDENTITY_MAPS[n]) for n in range(0, 17)}


def _identity_space(arity: int) -> JetSpace:
    sp = _IDENTITY_SPACES.get(arity)
    if sp is None:
        sp = JetSpace.identity(arity)
    return sp


class Field:
    """Base class: a deterministic scalar field of fixed arity."""

    arity: int = 0
    depends: tuple = ()

    @property
    def uid(self) -> int:
        u = self.__dict__.get("_uid")
        if u is None:
            u = next(_UID_COUNTER)
            self.__dict__["_uid"] = u
        return u

    def eval_jet(self, args, order: int, space: JetSpace | None = None) -> TSeries:
        """Jet of the field at `args`.

        Evaluation is canonical: the field is always computed in its own
        identity space (memoized per point and order); a supplied ambient
        space is served by projecting the canonical series, so scratch
        directions opened by nested derivatives never trigger re-evaluation.
        """
        if not isinstance(args, tuple):
            args = tuple(args)
        canonical = space is None or (space.nvars == self.arity
                                      and space.varmap == _IDENTITY_MAPS.get(self.arity))
        if canonical:
            return memo_eval(self, args, order, None,
                             lambda: self._eval(args, order, _identity_space(self.arity)))
        canon = self.eval_jet(args, order, None)
        return canon.project(space.varmap, space.nvars)

    def _eval(self, args, order: int, space: JetSpace) -> TSeries:
        raise NotImplementedError

    def __call__(self, *args) -> float:
        if len(args) == 1 and isinstance(args[0], (tuple, list)):
            args = tuple(args[0])
        if len(args) != self.arity:
            raise ShapeError(f"field of arity {self.arity} called with {len(args)} arguments")
        return self.eval_jet(args, 0).value

    def _seed(self, args, order: int, space: JetSpace | None):
        if space is None:
            space = JetSpace.identity(self.arity)
        if len(args) != self.arity or len(space.varmap) != self.arity:
            raise ShapeError("argument/varmap length does not match field arity")
        seeds = []
        for j, a in enumerate(args):
            amb = space.varmap[j]
            if amb is None:
                seeds.append(TSeries.constant(float(a), space.nvars, order))
            else:
                seeds.append(TSeries.variable(amb, float(a), space.nvars, order))
        return seeds, space

    # algebra ---------------------------------------------------------------

    def d(self, var: int) -> "Field":
        return DerivField(self, var)

    def _binary(self, other, fn):
        other = as_field(other, self.arity)
        return MapField(fn, (self, other))

    def __add__(self, other):
        return self._binary(other, lambda a, b: a + b)

    __radd__ = __add__

    def __sub__(self, other):
        return self._binary(other, lambda a, b: a - b)

    def __rsub__(self, other):
        return self._binary(other, lambda a, b: b - a)

    def __mul__(self, other):
        return self._binary(other, lambda a, b: a * b)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return self._binary(other, lambda a, b: a / b)

    def __rtruediv__(self, other):
        return self._binary(other, lambda a, b: b / a)

    def __pow__(self, p):
        return MapField(lambda a: a ** p, (self,))

    def __neg__(self):
        return MapField(lambda a: -a, (self,))


class ConstField(Field):
    def __init__(self, value: float, arity: int):
        self.value = float(value)
        self.arity = arity
        self.depends = ()

    def eval_jet(self, args, order, space=None):
        nv = space.nvars if space is not None else self.arity
        return TSeries.constant(self.value, nv, order)

    _eval = None


class FuncField(Field):
    """Field defined by a python callable written against the jet primitives.

    The callable receives one argument per coordinate (floats or series) and
    must use `finslergrav.taylor` math functions for transcendentals.
    """

    def __init__(self, arity: int, fn, depends: tuple | None = None):
        self.arity = arity
        self.fn = fn
        self.depends = tuple(range(arity)) if depends is None else tuple(depends)

    def _eval(self, args, order, space):
        seeds, space = self._seed(args, order, space)
        out = self.fn(*seeds)
        if not isinstance(out, TSeries):
            out = TSeries.constant(float(out), space.nvars, order)
        return out


class MapField(Field):
    """Pointwise combination of child fields through a jet-arithmetic function."""

    def __init__(self, fn, children: tuple):
        if not children:
            raise ShapeError("MapField needs at least one child")
        self.arity = children[0].arity
        for ch in children:
            if ch.arity != self.arity:
                raise ShapeError("children of a MapField must share arity")
        self.fn = fn
        self.children = tuple(children)
        deps = set()
        for ch in children:
            deps.update(ch.depends)
        self.depends = tuple(sorted(deps))

    def _eval(self, args, order, space):
        vals = [ch.eval_jet(args, order, space) for ch in self.children]
        out = self.fn(*vals)
        if not isinstance(out, TSeries):
            out = TSeries.constant(float(out), space.nvars, order)
        return out


class DerivField(Field):
    """Exact partial derivative of a field along one of its arguments."""

    def __init__(self, base: Field, var: int):
        if not (0 <= var < base.arity):
            raise ShapeError(f"derivative index {var} out of range for arity {base.arity}")
        self.base = base
        self.var = var
        self.arity = base.arity
        self.depends = base.depends

    def _eval(self, args, order, space):
        # canonical evaluation: differentiate the base's own-arity series
        return self.base.eval_jet(args, order + 1, None).deriv(self.var)


class RestrictedField(Field):
    """View of a field with some arguments bound to constants and the rest renamed.

    `binding` has one entry per base argument: either ("var", j) pointing at
    argument j of the restricted field, or ("const", value).
    """

    def __init__(self, base: Field, binding: tuple, arity: int):
        if len(binding) != base.arity:
            raise ShapeError("binding length must equal base arity")
        self.base = base
        self.binding = tuple(binding)
        self.arity = arity
        deps = []
        for kind, payload in binding:
            if kind == "var":
                deps.append(payload)
        self.depends = tuple(sorted(set(deps)))

    def _eval(self, args, order, space):
        base_args = []
        base_map = []
        for kind, payload in self.binding:
            if kind == "var":
                base_args.append(args[payload])
                base_map.append(space.varmap[payload])
            else:
                base_args.append(payload)
                base_map.append(None)
        return self.base.eval_jet(tuple(base_args), order,
                                  JetSpace(space.nvars, tuple(base_map)))


def as_field(x, arity: int) -> Field:
    if isinstance(x, Field):
        return x
    return ConstField(float(x), arity)


# field versions of the analytic primitives ----------------------------------

def fexp(f: Field) -> Field:
    return MapField(taylor.exp, (f,))


def flog(f: Field) -> Field:
    return MapField(taylor.log, (f,))


def fsqrt(f: Field) -> Field:
    return MapField(taylor.sqrt, (f,))


def fsin(f: Field) -> Field:
    return MapField(taylor.sin, (f,))


def fcos(f: Field) -> Field:
    return MapField(taylor.cos, (f,))


def fabsg(f: Field) -> Field:
    return MapField(taylor.absg, (f,))


# -- jets ---------------------------------------------------------------------


class Jet:
    """Carrier for the value and exact partials of a field at a point."""

    def __init__(self, order: int, series: TSeries):
        self.order = order
        self._series = series
        self.value = series.value
        self.partials = {}
        for k in series.c:
            if 0 < taylor.key_degree(k) <= order:
                exps = taylor.unpack_key(k, series.nvars)
                self.partials[exps] = series.partial(exps)

    def partial_exp(self, key: tuple) -> float:
        """Partial derivative by exponent multi-index."""
        if sum(key) > self.order:
            raise UnsupportedOrderError(f"multi-index {key} beyond jet order {self.order}")
        return self._series.partial(key)

    def partial(self, *variables: int) -> float:
        """Partial derivative by a sequence of variable indices (order-insensitive)."""
        key = [0] * self._series.nvars
        for v in variables:
            key[v] += 1
        return self.partial_exp(tuple(key))


def jet(field: Field, point, order: int, domain=None) -> Jet:
    """Exact jet of a field at a point, up to total derivative order 4."""
    if order < 0 or order > MAX_JET_ORDER:
        raise UnsupportedOrderError(f"jet order {order} outside 0..{MAX_JET_ORDER}")
    point = tuple(float(p) for p in point)
    if len(point) != field.arity:
        raise ShapeError(f"point of length {len(point)} for field of arity {field.arity}")
    box = domain if domain is not None else getattr(field, "domain", None)
    if box is not None:
        box.check(point)
    return Jet(order, field.eval_jet(point, order))


def directional_derivative(field: Field, point, frame_vector) -> float:
    """First derivative of the field along a frame vector (sum of weighted partials)."""
    if len(frame_vector) != field.arity:
        raise ShapeError("frame vector length must equal field arity")
    series = field.eval_jet(tuple(float(p) for p in point), 1)
    total = 0.0
    for i, w in enumerate(frame_vector):
        if w == 0.0:
            continue
        total += w * series.partial_packed(1 << (4 * i))
    return total
