"""Expression-tree grammar: compilation, validation, serialization."""

import math

import pytest

from finslergrav.expr import ExprError, ExprField, tree_variables, validate_tree


def test_grammar_covers_primitive_set():
    names = ("x", "y")
    cases = [
        (["+", ["var", "x"], ["var", "y"], 1.0], lambda x, y: x + y + 1.0),
        (["-", ["var", "x"], 2.0], lambda x, y: x - 2.0),
        (["neg", ["var", "y"]], lambda x, y: -y),
        (["*", ["var", "x"], ["var", "y"], 2.0], lambda x, y: 2 * x * y),
        (["/", ["var", "x"], ["+", 1.0, ["var", "y"]]], lambda x, y: x / (1 + y)),
        (["pow", ["var", "x"], 3], lambda x, y: x ** 3),
        (["pow", ["+", 1.0, ["var", "x"]], 0.5], lambda x, y: math.sqrt(1 + x)),
        (["exp", ["var", "x"]], lambda x, y: math.exp(x)),
        (["log", ["+", 2.0, ["var", "y"]]], lambda x, y: math.log(2 + y)),
        (["sin", ["var", "x"]], lambda x, y: math.sin(x)),
        (["cos", ["var", "y"]], lambda x, y: math.cos(y)),
        (["sqrt", ["+", 1.0, ["var", "x"]]], lambda x, y: math.sqrt(1 + x)),
        (["abs", ["-", ["var", "x"], 5.0]], lambda x, y: abs(x - 5.0)),
    ]
    for tree, ref in cases:
        f = ExprField(names, tree)
        assert abs(f(0.4, 0.7) - ref(0.4, 0.7)) < 1e-14, tree


def test_validate_tree_errors():
    assert validate_tree(["var", "z"], ("x", "y"))
    assert validate_tree(["frob", 1.0], ("x",))
    assert validate_tree(["pow", ["var", "x"], ["var", "x"]], ("x",))
    assert validate_tree(["+", 1.0], ("x",))
    assert not validate_tree(["+", 1.0, 2.0], ("x",))


def test_unknown_operator_raises():
    with pytest.raises(ExprError):
        ExprField(("x",), ["spam", ["var", "x"]])


def test_tree_variables_and_depends():
    tree = ["+", ["*", ["var", "x1"], ["var", "v"]], ["sin", ["var", "x1"]]]
    assert tree_variables(tree) == {"x1", "v"}
    f = ExprField(("x1", "x2", "v", "y4"), tree)
    assert f.depends == (0, 2)


def test_serialize_roundtrip():
    tree = ["*", ["exp", ["var", "x"]], ["+", 1.0, ["var", "y"]]]
    f = ExprField(("x", "y"), tree)
    g = ExprField(("x", "y"), f.serialize())
    assert f(0.3, 0.4) == g(0.3, 0.4)
