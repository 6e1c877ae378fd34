"""Scenario configuration: schema, validation, normalization, probe seeding.

One JSON-compatible document drives every scenario; coefficient functions
are declared as expression trees over named coordinates.  Normalization is
canonical (sorted keys, defaults filled), so identical configs serialize
byte-identically, and all randomness used downstream derives from the single
seed through the quasi-random generator here.
"""

from __future__ import annotations

import json
import math

from .expr import ExprField, tree_variables, validate_tree

SCENARIOS = ("geometry-audit", "killing-construct", "eightd-construct",
             "brane-diagonal", "brane-offdiagonal", "dispersion-roundtrip")

COORDS = {
    "geometry-audit": ("x1", "x2", "v", "y4"),
    "killing-construct": ("x1", "x2", "v", "y4"),
    "eightd-construct": ("x1", "x2", "v", "y4", "y5", "y6", "y7", "y8"),
    "brane-diagonal": ("x1", "x2", "v", "y4", "y5", "y6", "y7", "y8"),
    "brane-offdiagonal": ("x1", "x2", "v", "y4", "y5", "y6", "y7", "y8"),
    "dispersion-roundtrip": (),
}

_DEFAULT_TOLERANCES = {"residual": 1e-7, "quadrature": 1e-10}


class ConfigError(ValueError):
    """Invalid scenario configuration; carries the full error list."""

    def __init__(self, errors):
        super().__init__("; ".join(errors))
        self.errors = list(errors)


class ScenarioConfig:
    """Validated, normalized configuration."""

    def __init__(self, data: dict):
        self.data = data

    @property
    def scenario(self) -> str:
        return self.data["scenario"]

    @property
    def seed(self) -> int:
        return self.data["seed"]

    @property
    def tolerances(self) -> dict:
        return self.data["tolerances"]

    @property
    def parameters(self) -> dict:
        return self.data["parameters"]

    @property
    def grid(self) -> dict:
        return self.data["grid"]

    @property
    def coords(self) -> tuple:
        return COORDS[self.scenario]

    def field(self, name: str) -> ExprField:
        return ExprField(self.coords, self.data["functions"][name])

    def maybe_field(self, key: str, default=0.0):
        """Parameter that is either a number or the name of a declared function."""
        val = self.parameters.get(key, default)
        if isinstance(val, str):
            return self.field(val)
        return val

    def normalized_json(self) -> str:
        return json.dumps(self.data, sort_keys=True, indent=2,
                          separators=(",", ": ")) + "\n"


def _check_number(errors, value, path, positive=False):
    if not isinstance(value, (int, float)) or isinstance(value, bool):
        errors.append(f"{path}: expected a number, got {value!r}")
        return False
    if positive and not value > 0:
        errors.append(f"{path}: must be positive, got {value!r}")
        return False
    return True


def validate_config(text_or_mapping):
    """Parse and validate; returns (ScenarioConfig | None, error list)."""
    errors = []
    if isinstance(text_or_mapping, str):
        try:
            raw = json.loads(text_or_mapping)
        except json.JSONDecodeError as exc:
            return None, [f"invalid JSON: {exc}"]
    else:
        raw = json.loads(json.dumps(text_or_mapping))
    if not isinstance(raw, dict):
        return None, ["config must be a JSON object"]

    data = {"schema_version": raw.get("schema_version", 1),
            "scenario": raw.get("scenario"),
            "seed": raw.get("seed", 0),
            "tolerances": dict(_DEFAULT_TOLERANCES),
            "functions": {},
            "parameters": {},
            "grid": {},
            "output": {}}

    if data["schema_version"] != 1:
        errors.append(f"schema_version: unsupported value {data['schema_version']!r}")
    if data["scenario"] not in SCENARIOS:
        errors.append(f"scenario: {data['scenario']!r} not one of {SCENARIOS}")
        return None, errors
    if not isinstance(data["seed"], int) or isinstance(data["seed"], bool):
        errors.append(f"seed: expected an integer, got {data['seed']!r}")
        data["seed"] = 0

    tol = raw.get("tolerances", {})
    if not isinstance(tol, dict):
        errors.append("tolerances: expected an object")
    else:
        for key, val in sorted(tol.items()):
            if _check_number(errors, val, f"tolerances.{key}", positive=True):
                data["tolerances"][key] = float(val)

    coords = COORDS[data["scenario"]]
    funcs = raw.get("functions", {})
    if not isinstance(funcs, dict):
        errors.append("functions: expected an object")
        funcs = {}
    for name in sorted(funcs):
        tree = funcs[name]
        errs = validate_tree(tree, coords)
        for e in errs:
            errors.append(f"functions.{name}: {e}")
        unknown = tree_variables(tree) - set(coords)
        if unknown:
            errors.append(f"functions.{name}: unknown coordinates {sorted(unknown)}")
        if not errs and not unknown:
            data["functions"][name] = tree

    params = raw.get("parameters", {})
    if not isinstance(params, dict):
        errors.append("parameters: expected an object")
        params = {}
    for key in sorted(params):
        val = params[key]
        if isinstance(val, str) and val not in data["functions"]:
            errors.append(f"parameters.{key}: undeclared function reference {val!r}")
        data["parameters"][key] = val

    if data["scenario"].startswith("brane"):
        m = data["parameters"].get("m", 2)
        if not isinstance(m, int) or not 1 <= m <= 4:
            errors.append(f"parameters.m: {m!r} outside the admissible range 1..4")

    grid = raw.get("grid", {})
    if not isinstance(grid, dict):
        errors.append("grid: expected an object")
        grid = {}
    for key in sorted(grid):
        val = grid[key]
        if key.endswith("count"):
            if not isinstance(val, int) or val < 1:
                errors.append(f"grid.{key}: expected a positive integer")
                continue
        elif isinstance(val, list):
            if not val:
                errors.append(f"grid.{key}: empty grid")
                continue
        data["grid"][key] = val

    out = raw.get("output", {})
    if not isinstance(out, dict):
        errors.append("output: expected an object")
        out = {}
    for key in sorted(out):
        data["output"][key] = out[key]

    known = {"schema_version", "scenario", "seed", "tolerances", "functions",
             "parameters", "grid", "output"}
    for key in sorted(set(raw) - known):
        errors.append(f"{key}: unknown top-level key")

    if errors:
        return None, errors
    return ScenarioConfig(data), []


# -- seeded quasi-random probes -------------------------------------------------

_PRIMES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29)


def _mix(seed: int) -> float:
    """Deterministic unit-interval hash of an integer (splitmix-style)."""
    z = (seed + 0x9E3779B97F4A7C15) & 0xFFFFFFFFFFFFFFFF
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & 0xFFFFFFFFFFFFFFFF
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & 0xFFFFFFFFFFFFFFFF
    z = z ^ (z >> 31)
    return (z >> 11) / float(1 << 53)


def probe_points(seed: int, count: int, box) -> list:
    """Low-discrepancy points in a box, deterministic in the seed.

    Additive recurrence with square-root-of-prime steps and a seeded offset
    per dimension; identical inputs give bit-identical points on any
    platform.
    """
    dims = len(box)
    alphas = [math.sqrt(_PRIMES[d % len(_PRIMES)]) % 1.0 for d in range(dims)]
    offsets = [_mix(seed * 1009 + d) for d in range(dims)]
    pts = []
    for i in range(count):
        pt = []
        for d, (lo, hi) in enumerate(box):
            u = (offsets[d] + (i + 1) * alphas[d]) % 1.0
            pt.append(lo + (hi - lo) * u)
        pts.append(tuple(pt))
    return pts
