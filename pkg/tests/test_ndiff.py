import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stokeswkb import (NDifferential, PlanePath, continue_roots, find_zeros,
                       flat_length, natural_coord, natural_coords_all)
from stokeswkb.ndiff import amplitude, roots_at
from stokeswkb.errors import NonSimpleZero, ZeroOfDifferential

from oracles import fine_continuation, fine_quadrature


def test_zeros_roots_of_unity():
    w = NDifferential(2, (-1.0, 0, 0, 1.0))  # z^3 - 1
    zs = find_zeros(w)
    expect = sorted(np.exp(2j * np.pi * np.arange(3) / 3),
                    key=lambda v: (round(v.real, 12), round(v.imag, 12)))
    assert np.allclose(sorted(zs, key=lambda v: (round(v.real, 12), round(v.imag, 12))),
                       expect, atol=1e-12)


def test_zeros_linear():
    assert np.allclose(find_zeros(NDifferential(2, (0, 1))), [0.0])


def test_double_root_rejected():
    with pytest.raises(NonSimpleZero):
        find_zeros(NDifferential(2, (0, 0, 1.0)))   # z^2


def test_constant_has_no_zeros():
    assert find_zeros(NDifferential(3, (2.0,))) == []


def test_continuation_constant_sheets():
    w = NDifferential(2, (-1.0,))
    path = PlanePath((0.0, 1.0, 1.0 + 1.0j), r_min=1e-6)
    sheets = continue_roots(w, path)
    assert np.allclose(sheets.values, np.array([[1.0, -1.0]] * len(sheets.path.vertices)))


def test_loop_swaps_sheets_against_fine_oracle():
    w = NDifferential(2, (0, 1))
    th = np.linspace(0, 2 * np.pi, 41)
    loop = PlanePath(tuple(np.exp(1j * th[:-1])) + (1.0 + 0j,), r_min=0.3)
    sheets = continue_roots(w, loop)
    dense = fine_continuation(w, np.exp(1j * np.linspace(0, 2 * np.pi, 20001)))
    assert np.allclose(sheets.end_values(), dense[-1], atol=1e-8)
    # one full loop around the simple zero swaps the two sheets
    assert np.allclose(sheets.end_values(), sheets.values[0][::-1], atol=1e-10)


def test_semicircle_rotation_n3():
    # continuation of the cube root of -z along the upper semicircle rotates
    # the starting value by exp(i pi / 3)
    w = NDifferential(3, (0, 1))
    th = np.linspace(0, np.pi, 41)
    path = PlanePath(tuple(np.exp(1j * th)), r_min=0.3)
    base = roots_at(w, 1.0 + 0j)   # principal orbit at z = 1
    sheets = continue_roots(w, path, base_values=base)
    expect = sheets.values[0] * np.exp(1j * np.pi / 3)
    assert np.allclose(sheets.end_values(), expect, atol=1e-10)
    dense = fine_continuation(w, np.exp(1j * np.linspace(0, np.pi, 20001)),
                              start=base[0])
    assert np.allclose(sheets.end_values(), dense[-1], atol=1e-8)


def test_natural_coord_zero_length():
    w = NDifferential(2, (-1.0,))
    sheets = continue_roots(w, PlanePath((0.5,), r_min=1e-6))
    assert natural_coord(w, sheets) == 0.0


def test_natural_coord_unit_segment():
    w = NDifferential(2, (-1.0,))
    sheets = continue_roots(w, PlanePath((0.0, 1.0), r_min=1e-6))
    zs = natural_coords_all(w, sheets)
    assert np.allclose(sorted(zs, key=lambda z: z.real), [-1.0, 1.0], atol=1e-12)


def test_natural_coord_closed_form():
    # omega = z on [1, 4]: |zeta| = |(2/3) z^(3/2)|_1^4| = 14/3
    w = NDifferential(2, (0, 1))
    sheets = continue_roots(w, PlanePath((1.0, 4.0), r_min=0.5))
    z = natural_coord(w, sheets, sheet=0)
    assert abs(abs(z) - 14.0 / 3.0) < 1e-10
    dense = fine_quadrature(lambda zs: 1j * np.sqrt(zs), 1.0, 4.0)
    assert abs(abs(z) - abs(dense)) < 1e-9


def test_flat_length_euclidean_for_unit():
    w = NDifferential(3, (1.0,))
    p = PlanePath((0.0, 1.0 + 1.0j, 2.0), r_min=1e-6)
    assert abs(flat_length(w, p) - p.length()) < 1e-12


def test_flat_length_closed_form():
    w = NDifferential(2, (0, 1))
    p = PlanePath((1.0, 4.0), r_min=0.5)
    assert abs(flat_length(w, p) - 14.0 / 3.0) < 1e-10


def test_flat_length_refinement_invariant():
    w = NDifferential(2, (0.3 + 0.2j, 1.0, 0.1))
    p = PlanePath((1.0 + 0.5j, 2.0 - 0.3j, 3.0 + 1.0j), r_min=1e-3)
    a = flat_length(w, p)
    b = flat_length(w, p.refined(0.05))
    assert abs(a - b) < 1e-8 * max(1.0, abs(a))


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 4),
       st.lists(st.complex_numbers(max_magnitude=2.0, allow_nan=False,
                                   allow_infinity=False), min_size=2, max_size=5))
def test_vieta_consistency(n, coeffs):
    if all(abs(c) < 1e-3 for c in coeffs):
        coeffs = coeffs + [1.0]
    w = NDifferential(n, tuple(coeffs))
    z = 1.37 + 0.41j
    if abs(w(z)) < 1e-6:
        return
    mu = roots_at(w, z)
    assert abs(np.sum(mu)) < 1e-10 * max(1.0, np.max(np.abs(mu)))
    prod = np.prod(mu)
    target = -w(z) * (-1.0) ** (n + 1)
    assert abs(prod - target) < 1e-10 * max(1.0, abs(target))


def test_natural_coord_additive_and_reverses():
    w = NDifferential(3, (1.0, 0.5))
    p1 = PlanePath((1.0, 2.0 + 1.0j), r_min=1e-3)
    p2 = PlanePath((2.0 + 1.0j, 3.0), r_min=1e-3)
    whole = PlanePath((1.0, 2.0 + 1.0j, 3.0), r_min=1e-3)
    s1 = continue_roots(w, p1)
    s2 = continue_roots(w, p2, base_values=s1.end_values(),
                        base_log=s1.end_log_omega())
    sw = continue_roots(w, whole)
    za = natural_coords_all(w, s1) + natural_coords_all(w, s2)
    zw = natural_coords_all(w, sw)
    assert np.allclose(za, zw, atol=1e-10)
    rev = continue_roots(w, whole.reversed(), base_values=sw.end_values(),
                         base_log=sw.end_log_omega())
    assert np.allclose(natural_coords_all(w, rev), -zw, atol=1e-10)


def test_clearance_enforced():
    w = NDifferential(2, (0, 1))
    p = PlanePath((-1.0, 1.0), r_min=0.1)   # passes through the zero
    with pytest.raises(ZeroOfDifferential):
        continue_roots(w, p)


def test_amplitude_branch():
    w = NDifferential(2, (4.0,))
    sheets = continue_roots(w, PlanePath((0.0, 1.0), r_min=1e-6))
    a = amplitude(w, sheets)
    assert abs(a - 4.0 ** (-0.25)) < 1e-12


def test_json_roundtrip():
    w = NDifferential(3, (1.0, 0.5j, 0.25), mode="plane")
    w2 = NDifferential.from_json(w.to_json())
    assert w2.n == w.n and w2.coeffs == w.coeffs and w2.mode == "plane"
    wt = NDifferential(2, (2.0,), mode="torus", periods=(1.0, 1.0j))
    wt2 = NDifferential.from_json(wt.to_json())
    assert wt2.periods == (1.0 + 0j, 1.0j)


def test_torus_mode_requires_constant():
    with pytest.raises(ValueError):
        NDifferential(2, (0, 1.0), mode="torus", periods=(1.0, 1.0j))
    with pytest.raises(ValueError):
        NDifferential(2, (0.0,), mode="torus", periods=(1.0, 1.0j))
