"""Serializable expression trees over the fixed primitive set.

Coefficient functions arriving through scenario configs are declared as
prefix-notation trees (JSON arrays), e.g. ``["*", ["var", "x1"], ["var", "x1"]]``.
Trees compile to fields with exact jets; the primitive set is closed under
the jet arithmetic, which keeps configs serializable and evaluation exact.
"""

from __future__ import annotations

from . import taylor
from .fields import Field, TSeries

_UNARY = {
    "neg": lambda a: -a,
    "exp": taylor.exp,
    "log": taylor.log,
    "sin": taylor.sin,
    "cos": taylor.cos,
    "sqrt": taylor.sqrt,
    "abs": taylor.absg,
}

_NARY = {"+", "*"}
_BINARY = {"-", "/"}


class ExprError(ValueError):
    """Malformed expression tree."""


def _compile(node, index_of):
    if isinstance(node, (int, float)):
        val = float(node)
        return lambda seeds, _v=val: _v
    if not isinstance(node, (list, tuple)) or not node:
        raise ExprError(f"expression node must be a number or a list, got {node!r}")
    head = node[0]
    if head == "var":
        if len(node) != 2 or node[1] not in index_of:
            raise ExprError(f"unknown variable reference {node!r}")
        idx = index_of[node[1]]
        return lambda seeds, _i=idx: seeds[_i]
    if head == "pow":
        if len(node) != 3 or not isinstance(node[2], (int, float)):
            raise ExprError("pow expects [\"pow\", base, numeric_exponent]")
        base = _compile(node[1], index_of)
        p = node[2]
        return lambda seeds, _b=base, _p=p: _b(seeds) ** _p
    if head in _UNARY:
        if len(node) != 2:
            raise ExprError(f"{head} expects one operand")
        child = _compile(node[1], index_of)
        fn = _UNARY[head]
        return lambda seeds, _c=child, _f=fn: _f(_c(seeds))
    if head in _NARY:
        if len(node) < 3:
            raise ExprError(f"{head} expects at least two operands")
        parts = [_compile(ch, index_of) for ch in node[1:]]
        if head == "+":
            def _sum(seeds, _ps=parts):
                acc = _ps[0](seeds)
                for p in _ps[1:]:
                    acc = acc + p(seeds)
                return acc
            return _sum

        def _prod(seeds, _ps=parts):
            acc = _ps[0](seeds)
            for p in _ps[1:]:
                acc = acc * p(seeds)
            return acc
        return _prod
    if head in _BINARY:
        if len(node) != 3:
            raise ExprError(f"{head} expects two operands")
        a = _compile(node[1], index_of)
        b = _compile(node[2], index_of)
        if head == "-":
            return lambda seeds, _a=a, _b=b: _a(seeds) - _b(seeds)
        return lambda seeds, _a=a, _b=b: _a(seeds) / _b(seeds)
    raise ExprError(f"unknown operator {head!r}")


def validate_tree(node, varnames) -> list:
    """Collect grammar errors without raising; empty list means valid."""
    errors = []
    try:
        _compile(node, {n: i for i, n in enumerate(varnames)})
    except ExprError as exc:
        errors.append(str(exc))
    return errors


def tree_variables(node, acc=None) -> set:
    if acc is None:
        acc = set()
    if isinstance(node, (list, tuple)) and node:
        if node[0] == "var" and len(node) == 2:
            acc.add(node[1])
        else:
            for ch in node[1:]:
                tree_variables(ch, acc)
    return acc


class ExprField(Field):
    """Field backed by a compiled expression tree."""

    def __init__(self, varnames, tree, domain=None):
        self.varnames = tuple(varnames)
        self.arity = len(self.varnames)
        self.tree = tree
        index_of = {n: i for i, n in enumerate(self.varnames)}
        self._fn = _compile(tree, index_of)
        used = tree_variables(tree)
        self.depends = tuple(i for i, n in enumerate(self.varnames) if n in used)
        if domain is not None:
            self.domain = domain

    def _eval(self, args, order, space):
        seeds, space = self._seed(args, order, space)
        out = self._fn(seeds)
        if not isinstance(out, TSeries):
            out = TSeries.constant(float(out), space.nvars, order)
        return out

    def serialize(self):
        return self.tree
