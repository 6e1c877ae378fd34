"""Frequency-relation bridge: formulas, generating elements, roundtrip scaling."""

import math

import numpy as np
import pytest

from finslergrav.dispersion import (DispersionSpec, PhononSpec, SingularFormError,
                                    DeformationTooLargeError, discrepancy_scaling,
                                    finsler_omega_squared, generating_from_q,
                                    isotropic_q, null_root, phonon_matching_spec,
                                    phonon_omega_squared, roundtrip_check)
from finslergrav.finsler import check_homogeneity, hessian_metric

from oracles import richardson_diff2


def test_phonon_relation_values():
    spec = PhononSpec(c_s=1.0, m0=0.5, hbar_const=1.0)
    assert phonon_omega_squared((0.0, 0.0, 0.0), spec) == 0.0
    # quartic prefactor is one here, so omega^2 = 2 at unit wave number
    assert abs(phonon_omega_squared((1.0, 0.0, 0.0), spec) - 2.0) < 1e-14
    tiny = PhononSpec(c_s=2.0, m0=1.0, hbar_const=1e-12)
    k = (0.3, -0.4, 0.5)
    k2 = sum(x * x for x in k)
    assert abs(phonon_omega_squared(k, tiny) - 4.0 * k2) < 1e-10


def test_deformed_frequency_values():
    spec0 = DispersionSpec(r=1, q={}, c=2.0)
    k = (0.4, 0.1, -0.3)
    G = spec0.quadratic_form(k)
    assert abs(finsler_omega_squared(k, spec0) - 4.0 * G * G) < 1e-14
    spec = DispersionSpec(r=1, q={(0, 0): 2e-3}, c=1.0)
    assert abs(finsler_omega_squared((1.0, 0.0, 0.0), spec) - (1.0 - 2e-3)) < 1e-15
    with pytest.raises(SingularFormError):
        finsler_omega_squared((0.0, 0.0, 0.0), spec)


def test_correction_ratio_scale_invariance_on_element():
    """The generating-element ratio is degree zero: scaling the fiber leaves it."""
    spec = DispersionSpec(r=2, q={(0, 0, 1, 1): 3e-3, (0, 0, 0, 0): 1e-3})
    gen = generating_from_q(spec)

    def ratio(y):
        S = sum(v * v for v in y)
        F2 = gen.F2(0.0, 0.0, 0.0, 0.0, 0.0, *y)
        return (F2 - S) / S  # the relative correction

    y = (0.7, -0.2, 0.4)
    r1 = ratio(y)
    r2 = ratio(tuple(2.0 * v for v in y))
    assert abs(r1 - r2) < 1e-14


def test_generating_function_quadratic_limit():
    spec = DispersionSpec(r=1, q={})
    gen = generating_from_q(spec)
    H = hessian_metric(gen, (0.0, 0.0, 0.0, 0.0, 0.5, 0.7, 0.2, -0.4))
    assert np.allclose(H, np.diag([-1.0, 1.0, 1.0, 1.0]), atol=1e-12)


def test_generating_function_small_q_hessian():
    q = 2e-3
    spec = DispersionSpec(r=2, q={(0, 0, 0, 0): q})
    gen = generating_from_q(spec)
    pt = (0.0, 0.0, 0.0, 0.0, 0.3, 0.9, 0.5, 0.4)
    H = hessian_metric(gen, pt)
    base = np.diag([-1.0, 1.0, 1.0, 1.0])
    assert np.max(np.abs(H - base)) < 20 * q
    assert np.max(np.abs(H - base)) > q / 10  # the deformation is visible

    def F2_plain(p):
        return gen.F2(*p)
    for i in range(4):
        for j in range(i, 4):
            fd = 0.5 * richardson_diff2(F2_plain, pt, 4 + i, 4 + j, h=4e-3)
            assert abs(H[i, j] - fd) < 1e-7


def test_generating_function_homogeneity():
    spec = DispersionSpec(r=2, q=isotropic_q(1e-3))
    gen = generating_from_q(spec)
    pts = [(0.0, 0.0, 0.0, 0.0, 0.9, 0.4, -0.3, 0.6),
           (0.0, 0.0, 0.0, 0.0, 1.2, -0.5, 0.2, 0.1)]
    rep = check_homogeneity(gen, pts)
    assert rep.max_deviation < 1e-10


def test_deformation_too_large_guard():
    spec = DispersionSpec(r=1, q={(0, 0): -3.0})
    with pytest.raises(DeformationTooLargeError):
        generating_from_q(spec, probes=[(1.0, 0.0, 0.0)])


def test_roundtrip_zero_deformation_reduces_to_sound_cone():
    spec = DispersionSpec(r=1, q={}, c=1.7)
    rep = roundtrip_check(spec, [(0.5, 0.2, -0.1), (1.0, 0.0, 0.3)])
    assert rep.max_rel_discrepancy < 1e-11
    for _, omega_root, omega_disp, _ in rep.per_probe:
        assert abs(omega_root - 1.7) < 1e-10  # unit-normalized probes


def test_roundtrip_second_order_in_deformation():
    rng = np.random.default_rng(2)
    q = {(i, j): float(rng.normal() * 1e-2) for i in range(3) for j in range(i, 3)}
    spec = DispersionSpec(r=1, q=q)
    probes = rng.normal(size=(4, 3))
    r_full = roundtrip_check(spec, probes).max_rel_discrepancy
    r_half = roundtrip_check(spec.scaled(0.5), probes).max_rel_discrepancy
    assert r_full > 1e-8
    assert abs(r_full / r_half - 4.0) < 0.6


def test_roundtrip_small_random_table():
    rng = np.random.default_rng(5)
    q = {}
    for idx in [(0, 0, 0, 0), (0, 0, 0, 1), (0, 1, 2, 2), (1, 1, 2, 2)]:
        q[idx] = float(rng.normal() * 1e-4)
    spec = DispersionSpec(r=2, q=q, c=2.0)
    rep = roundtrip_check(spec, rng.normal(size=(5, 3)))
    assert rep.max_rel_discrepancy < 1e-7


def test_scaling_slope_near_two():
    rng = np.random.default_rng(9)
    q = {(i, j): float(rng.normal()) for i in range(3) for j in range(i, 3)}
    spec = DispersionSpec(r=1, q=q)
    probes = rng.normal(size=(4, 3))
    slope, pts = discrepancy_scaling(spec, probes, [1e-2, 5e-3, 2.5e-3, 1.25e-3])
    assert 1.8 <= slope <= 2.2
    assert len(pts) == 4


def test_phonon_correspondence_exact_on_velocity_branch():
    ph = PhononSpec(c_s=1.3, m0=0.5, hbar_const=0.7)
    spec = phonon_matching_spec(ph)
    gen = generating_from_q(spec)
    for k in ((0.5, 0.2, -0.1), (1.0, 0.0, 0.0), (0.2, 1.1, 0.4)):
        G = spec.quadratic_form(k)
        t = null_root(gen, k, math.sqrt(G))
        omega2 = (spec.c * t) ** 2
        assert abs(omega2 - phonon_omega_squared(k, ph)) < 1e-12


def test_q_table_canonicalization():
    spec = DispersionSpec(r=1, q={(1, 0): 2.0, (0, 1): 3.0})
    assert spec.q == {(0, 1): 5.0}
    k = (2.0, 1.0, 0.0)
    # contraction applies the permutation multiplicity
    assert abs(spec.q_contract(k) - 5.0 * 2 * 2.0 * 1.0) < 1e-14
