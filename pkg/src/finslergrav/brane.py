"""Trapping-profile metrics on the eight-dimensional bundle.

Closed-form diagonal profiles (a rational warp factor and fiber scale), the
compatible diagonal sources, conservation diagnostics, the off-diagonal
assembly that dresses a shelled solution with the profile factors, and
parameter-space scans.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dgeometry import SourceSpec, levi_civita_residual
from .fields import FuncField, MapField, jet
from .finsler import SymmetricFieldMatrix
from .solutions import EightDAnsatz, FiberLevel
from .taylor import ShapeError

Y5 = 4  # index of the profile coordinate in the 8-coordinate layout


class ParameterError(ValueError):
    """Physically inadmissible profile parameters."""


@dataclass(frozen=True)
class BraneParams:
    """Parameters of the diagonal trapping profiles.

    m counts the effective extra dimensions (at most four on this bundle),
    eps is the profile width, lam the bulk constant, a the asymptotic value
    of the warp factor, mass_scale the coupling normalization.
    """

    m: int = 2
    eps: float = 1.0
    lam: float = 1.0
    a: float = 1.0
    mass_scale: float = 1.0
    l_p: float = 1.0
    y5_max: float = 10.0
    fiber_signs: tuple = (-1, -1)

    def __post_init__(self):
        if self.m not in (1, 2, 3, 4):
            raise ParameterError(f"extra-dimension count m={self.m} outside 1..4")
        if self.eps <= 0:
            raise ParameterError("profile width must be positive")
        if self.y5_max <= 0:
            raise ParameterError("profile cutoff must be positive")
        if self.mass_scale <= 0 or self.l_p <= 0:
            raise ParameterError("scales must be positive")
        if any(s not in (-1, 1) for s in self.fiber_signs):
            raise ParameterError("fiber signs must be +-1")


def phi_squared(y5: float, params: BraneParams) -> float:
    """Warp factor: equals 1 at the origin and tends to `a` far out."""
    u2 = y5 * y5
    e2 = 3.0 * params.eps ** 2
    return (e2 + params.a * u2) / (e2 + u2)


def lp_sqrt_hbar(y5: float, params: BraneParams) -> float:
    """Normalized fiber-scale combination; equals 1 at the origin."""
    e2 = 3.0 * params.eps ** 2
    return 9.0 * params.eps ** 4 / (e2 + y5 * y5) ** 2


def hbar_profile(y5: float, params: BraneParams) -> float:
    return (lp_sqrt_hbar(y5, params) / params.l_p) ** 2


def brane_sources(y5: float, params: BraneParams) -> tuple:
    """Diagonal source amplitudes compatible with the profile metric."""
    m, a, eps = params.m, params.a, params.eps
    u2 = y5 * y5
    den = (3.0 * eps ** 2 + u2) ** 2
    c4_1 = 2.0 * a * m * (a * (m + 2) - 3.0) / (3.0 * eps ** 2)
    c2_1 = 2.0 * (-2.0 * a * (m * m + 2 * m + 6) + 3.0 * (m + 3) * (1.0 + a * a))
    c0_1 = -6.0 * eps ** 2 * m * (m - 3.0 * a + 2.0)
    c4_2 = 2.0 * a * (m - 1) * (a * (m + 2) - 4.0) / (3.0 * eps ** 2)
    c2_2 = 4.0 * (-a * (m * m + m + 10) + 2.0 * (m + 2) * (1.0 + a * a))
    c0_2 = -6.0 * eps ** 2 * (m - 1) * (m - 4.0 * a + 2.0)
    scale = params.mass_scale ** (params.m + 2)
    k1 = scale * (params.lam + (c4_1 * u2 * u2 + c2_1 * u2 + c0_1) / den)
    k2 = scale * (params.lam + (c4_2 * u2 * u2 + c2_2 * u2 + c0_2) / den)
    return k1, k2


def width_for_m2(mass_scale: float, lam: float) -> float:
    """Profile width fixed by the bulk constant in the two-extra-dimension case."""
    if lam <= 0:
        raise ParameterError("bulk constant must be positive to fix the width")
    return math.sqrt(40.0 * mass_scale ** 4 / (3.0 * lam))


# -- profile fields (exact derivatives through the jet engine) ----------------


def profile_fields(params: BraneParams) -> dict:
    """phi^2, the fiber scale and both source amplitudes as 8-coordinate fields."""
    e2 = 3.0 * params.eps ** 2
    a = params.a

    def phi2(*u):
        y = u[Y5]
        return (e2 + a * y * y) / (e2 + y * y)

    def lph(*u):
        y = u[Y5]
        return 9.0 * params.eps ** 4 / (e2 + y * y) ** 2

    def hbar(*u):
        return (lph(*u) / params.l_p) ** 2

    m = params.m
    den_c = params.mass_scale ** (m + 2)
    c4_1 = 2.0 * a * m * (a * (m + 2) - 3.0) / (3.0 * params.eps ** 2)
    c2_1 = 2.0 * (-2.0 * a * (m * m + 2 * m + 6) + 3.0 * (m + 3) * (1.0 + a * a))
    c0_1 = -6.0 * params.eps ** 2 * m * (m - 3.0 * a + 2.0)
    c4_2 = 2.0 * a * (m - 1) * (a * (m + 2) - 4.0) / (3.0 * params.eps ** 2)
    c2_2 = 4.0 * (-a * (m * m + m + 10) + 2.0 * (m + 2) * (1.0 + a * a))
    c0_2 = -6.0 * params.eps ** 2 * (m - 1) * (m - 4.0 * a + 2.0)

    def k1(*u):
        y = u[Y5]
        u2 = y * y
        return den_c * (params.lam + (c4_1 * u2 * u2 + c2_1 * u2 + c0_1) / (e2 + u2) ** 2)

    def k2(*u):
        y = u[Y5]
        u2 = y * y
        return den_c * (params.lam + (c4_2 * u2 * u2 + c2_2 * u2 + c0_2) / (e2 + u2) ** 2)

    dep = (Y5,)
    return {"phi2": FuncField(8, phi2, depends=dep),
            "lp_sqrt_hbar": FuncField(8, lph, depends=dep),
            "hbar": FuncField(8, hbar, depends=dep),
            "K1": FuncField(8, k1, depends=dep),
            "K2": FuncField(8, k2, depends=dep)}


def conservation_residual(y5: float, params: BraneParams) -> float:
    """Difference between the source gradient and the warp-factor coupling term.

    Exact derivatives; the identity holds only for tuned parameter choices,
    so the value is a diagnostic, not a gate.
    """
    fields = profile_fields(params)
    pt = [0.0] * 8
    pt[Y5] = float(y5)
    jk1 = jet(fields["K1"], pt, 1)
    jphi = jet(fields["phi2"], pt, 1)
    k1 = jk1.value
    k2 = fields["K2"](*pt)
    dk1 = jk1.partial(Y5)
    dlog_phi = jphi.partial(Y5) / (2.0 * jphi.value)
    return dk1 - 4.0 * (k2 - k1) * dlog_phi


def assemble_diagonal_brane(params: BraneParams) -> SymmetricFieldMatrix:
    """Diagonal profile metric as an 8x8 coordinate field matrix.

    The base block is the flat (+,-,-,-) form warped by phi^2; fiber entries
    carry the scaled profile with configurable signs on the last two
    directions.
    """
    fields = profile_fields(params)
    phi2 = fields["phi2"]
    hb = fields["hbar"]
    l2 = params.l_p ** 2
    eta = (1.0, -1.0, -1.0, -1.0)
    entries = {}
    for i in range(4):
        entries[(i, i)] = phi2 * eta[i]
    fib = (-1.0, -1.0, float(params.fiber_signs[0]), float(params.fiber_signs[1]))
    for j in range(4):
        entries[(4 + j, 4 + j)] = hb * (fib[j] * l2)
    return SymmetricFieldMatrix(8, entries)


def brane_source_spec(params: BraneParams, sector78: float = 0.0) -> SourceSpec:
    """Per-sector diagonal source of the profile metric (last sector defaults empty)."""
    fields = profile_fields(params)
    lam = params.lam
    minv = params.mass_scale ** (-(params.m + 2))
    ups4 = MapField(lambda k: lam - minv * k, (fields["K1"],))
    ups56 = MapField(lambda k: lam - minv * k, (fields["K2"],))
    return SourceSpec.from_upsilon((ups4, ups4, ups56, sector78))


def diagonal_residual_sweep(params: BraneParams, y5_values) -> list:
    """Torsionless field-equation residual of the profile metric along y5.

    Diagnostic sweep: rows of (y5, max |residual component|).
    """
    metric = assemble_diagonal_brane(params)
    source = brane_source_spec(params)
    rows = []
    for y5 in y5_values:
        pt = [0.0] * 8
        pt[Y5] = float(y5)
        R = levi_civita_residual(metric, source, pt)
        rows.append((float(y5), float(np.max(np.abs(R)))))
    return rows


def assemble_finsler_brane(ansatz: EightDAnsatz, params: BraneParams) -> EightDAnsatz:
    """Dress the fiber shells of a constructed solution with the profile factors.

    Levels one and two are rescaled by hbar/phi^2 so the assembled coordinate
    matrix carries the scale-squared profile terms in its corner blocks.
    """
    fields = profile_fields(params)
    factor = fields["hbar"] / fields["phi2"]

    def scaled(level: FiberLevel) -> FiberLevel:
        return FiberLevel(factor * level.ha, factor * level.hb,
                          level.w, level.n, level.var, level.sigma)

    return EightDAnsatz(ansatz.core, scaled(ansatz.level1), scaled(ansatz.level2),
                        l_p=params.l_p)


SCAN_QUANTITIES = ("K1", "K2", "conservation", "lc_residual")


def parameter_scan(param_grid: dict, quantity: str, y5_values) -> list:
    """Tabulate a selected quantity over a parameter product grid.

    `param_grid` maps any of m/eps/lam/a/mass_scale to value lists; missing
    entries use the defaults.  Rows are (m, eps, lam, a, mass_scale, y5,
    value, crossing_flag) with a deterministic ordering; crossing_flag marks
    a sign change relative to the previous y5 of the same combination.
    """
    if quantity not in SCAN_QUANTITIES:
        raise ShapeError(f"unknown scan quantity {quantity!r}; pick from {SCAN_QUANTITIES}")
    defaults = BraneParams()
    axes = []
    for name, default in (("m", defaults.m), ("eps", defaults.eps),
                          ("lam", defaults.lam), ("a", defaults.a),
                          ("mass_scale", defaults.mass_scale)):
        axes.append([(name, v) for v in param_grid.get(name, [default])])
    rows = []

    def recurse(i, chosen):
        if i == len(axes):
            kwargs = dict(chosen)
            kwargs["m"] = int(kwargs["m"])
            params = BraneParams(**kwargs)
            prev = None
            for y5 in y5_values:
                if quantity == "K1":
                    val = brane_sources(y5, params)[0]
                elif quantity == "K2":
                    val = brane_sources(y5, params)[1]
                elif quantity == "conservation":
                    val = conservation_residual(y5, params)
                else:
                    val = diagonal_residual_sweep(params, [y5])[0][1]
                crossing = prev is not None and (prev < 0.0) != (val < 0.0)
                rows.append([kwargs["m"], kwargs["eps"], kwargs["lam"], kwargs["a"],
                             kwargs["mass_scale"], float(y5), float(val), int(crossing)])
                prev = val
            return
        for item in axes[i]:
            recurse(i + 1, chosen + [item])

    recurse(0, [])
    return rows
