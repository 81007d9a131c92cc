import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stokeswkb import (NDifferential, PlanePath, Jet, companion_system,
                       composed_automorphy, e_correction,
                       exact_constant_transfer, integrate_transfer,
                       m1_matrix, m2_matrix)
from stokeswkb.jets import composed_automorphy_jets
from stokeswkb.odeint import ScaledMatrix
from stokeswkb.errors import ZeroOfDifferential

from oracles import (expm_transfer, poly_compose, poly_derivatives_at,
                     poly_mul, wronskian_matrix)

RNG = np.random.default_rng(11)


def random_poly(deg, scale=1.0):
    c = RNG.normal(size=deg + 1) + 1j * RNG.normal(size=deg + 1)
    return scale * c


# ---------------------------------------------------------------- jets

def test_jet_polynomial_matches_derivatives():
    c = random_poly(5)
    z = 0.7 - 0.2j
    jet = Jet.from_polynomial(c, z, 4)
    assert np.allclose(jet.d, poly_derivatives_at(c, z, 5)[:5])


def test_jet_product_rule():
    a, b = random_poly(4), random_poly(3)
    z = 0.3 + 0.9j
    ja = Jet.from_polynomial(a, z, 5)
    jb = Jet.from_polynomial(b, z, 5)
    prod = Jet.from_polynomial(poly_mul(a, b), z, 5)
    assert np.allclose((ja * jb).d, prod.d, atol=1e-10)


def test_jet_power_and_exp():
    z = 1.2 + 0.4j
    jet = Jet.from_polynomial([1.0, 2.0, 0.5], z, 4)
    h = 1e-6
    jp = jet.power(1.0 / 3.0)
    f = lambda w: (1 + 2 * w + 0.5 * w * w) ** (1.0 / 3.0)
    fd = (f(z + h) - f(z - h)) / (2 * h)
    assert abs(jp.d[1] - fd) < 1e-7
    je = jet.exp()
    g = lambda w: np.exp(1 + 2 * w + 0.5 * w * w)
    gd = (g(z + h) - g(z - h)) / (2 * h)
    assert abs(je.d[1] - gd) < 1e-4 * abs(gd)


# ------------------------------------------------- M1 / M2 / Prop 2.4

def test_m1_m2_printed_n3():
    import sympy as sp
    z = sp.symbols("z")
    g = sp.Function("g")(z)
    hp = sp.Function("hp")(z)
    gz = sp.Rational(1, 1) * (1 + 2 * z + 3 * z ** 2)
    hpz = 2 - z + z ** 3
    zval = sp.Rational(1, 3)
    gj = Jet([complex(sp.diff(gz, z, k).subs(z, zval)) for k in range(3)])
    hj = Jet([complex(sp.diff(hpz, z, k).subs(z, zval)) for k in range(3)])
    M1 = m1_matrix(gj, 3)
    M2 = m2_matrix(hj, 3)
    gv = [complex(sp.diff(gz, z, k).subs(z, zval)) for k in range(3)]
    hv = [complex(sp.diff(hpz, z, k).subs(z, zval)) for k in range(3)]
    # printed 3x3 matrices: M1 = [[g, g', g''], [0, g, 2g'], [0, 0, g]],
    # M2 = [[1, 0, 0], [0, h', h''], [0, 0, h'^2]]
    assert np.allclose(M1, [[gv[0], gv[1], gv[2]],
                            [0, gv[0], 2 * gv[1]],
                            [0, 0, gv[0]]])
    assert np.allclose(M2, [[1, 0, 0],
                            [0, hv[0], hv[1]],
                            [0, 0, hv[0] ** 2]])


def test_m1_identity_for_constant_one():
    jet = Jet.constant(1.0, 3)
    assert np.allclose(m1_matrix(jet, 4), np.eye(4))


def test_m2_identity_for_identity_map():
    # h(z) = z: h' = 1, higher derivatives 0
    jet = Jet.constant(1.0, 3)
    assert np.allclose(m2_matrix(jet, 4), np.eye(4))


def wronskian_relation_residual(n, seed):
    rng = np.random.default_rng(seed)

    def rpoly(deg):
        return rng.normal(size=deg + 1) + 1j * rng.normal(size=deg + 1)

    fs = [rpoly(n + 1) for _ in range(n)]
    gp = rpoly(3)
    hp = rpoly(3)
    z = complex(rng.normal(scale=0.5), rng.normal(scale=0.5))
    # left side: W(g * (f o h)) at z
    gf = [poly_mul(gp, poly_compose(f, hp)) for f in fs]
    W_left = wronskian_matrix(gf, z, n)
    # right side: W(f)(h(z)) * M2(h') * M1(g)
    hz = np.polynomial.polynomial.polyval(z, hp)
    W_right_base = wronskian_matrix(fs, hz, n)
    hprime = np.polynomial.polynomial.polyder(hp)
    gjet = Jet.from_polynomial(gp, z, n)
    hjet = Jet.from_polynomial(hprime, z, n)
    M = composed_automorphy(gjet, hjet, n)
    W_right = W_right_base @ M
    scale = max(np.max(np.abs(W_left)), 1.0)
    return np.max(np.abs(W_left - W_right)) / scale


@pytest.mark.parametrize("n", [2, 3, 4])
def test_composed_wronskian_identity(n):
    for seed in range(5):
        assert wronskian_relation_residual(n, 100 * n + seed) < 1e-9


def test_recurrence_equals_product():
    for n in (2, 3, 4):
        g = Jet(RNG.normal(size=n + 1) + 1j * RNG.normal(size=n + 1))
        hp = Jet(RNG.normal(size=n + 1) + 1j * RNG.normal(size=n + 1))
        M_rec = composed_automorphy(g, hp, n)
        M_prod = m2_matrix(Jet(hp.d[:n - 1 + 1]), n) @ m1_matrix(Jet(g.d[:n]), n)
        assert np.max(np.abs(M_rec - M_prod)) < 1e-10 * max(1, np.max(np.abs(M_prod)))
        assert M_rec[0, 0] == g.d[0]
        assert np.allclose(np.tril(M_rec, -1), 0.0)


# ------------------------------------------------------- companion

def test_companion_entries():
    w = NDifferential(2, (0, 1))
    A, eps = companion_system(w, 16.0)
    assert np.allclose(A(2.0), [[0, 1], [-2.0, 0]])
    assert eps == 16.0 ** -0.5
    w3 = NDifferential(3, (1.0, 1.0))
    A3, _ = companion_system(w3, 10.0)
    M = A3(0.5 + 0.5j)
    mask = np.zeros((3, 3), bool)
    mask[0, 1] = mask[1, 2] = mask[2, 0] = True
    assert np.all(M[~mask] == 0)
    assert M[0, 1] == 1 and M[1, 2] == 1
    assert np.trace(M) == 0


# ------------------------------------------------- exact transfer

def test_exact_transfer_identity():
    assert np.allclose(exact_constant_transfer(1.5, 3, 10.0, 0.0), np.eye(3))


def test_exact_transfer_harmonic():
    # n=2, omega=1, t=1: eigenvalues over displacement d are e^(+-i d)
    d = 0.83
    T = exact_constant_transfer(1.0, 2, 1.0, d)
    ev = np.sort_complex(np.linalg.eigvals(T))
    expect = np.sort_complex([np.exp(1j * d), np.exp(-1j * d)])
    assert np.allclose(ev, expect, atol=1e-12)


def test_exact_transfer_semigroup():
    c, n, t = 0.7 - 0.3j, 3, 50.0
    d1, d2 = 0.31 + 0.12j, -0.18 + 0.4j
    T = exact_constant_transfer(c, n, t, d1 + d2)
    T12 = exact_constant_transfer(c, n, t, d1) @ exact_constant_transfer(c, n, t, d2)
    assert np.max(np.abs(T - T12)) < 1e-12 * np.max(np.abs(T))


def test_exact_transfer_nilpotent():
    T = exact_constant_transfer(0.0, 3, 1.0, 2.0)
    assert np.allclose(T, [[1, 2, 2], [0, 1, 2], [0, 0, 1]])


@pytest.mark.parametrize("n", [2, 3, 4])
def test_exact_transfer_vs_expm(n):
    c = 0.9 + 0.4j
    t, dz = 25.0, 0.4 - 0.2j
    assert np.allclose(exact_constant_transfer(c, n, t, dz),
                       expm_transfer(c, n, t, dz), atol=1e-10)


# --------------------------------------------------- integrator

def test_integrate_matches_exact_constant():
    w = NDifferential(2, (1.3 - 0.4j,))
    path = PlanePath((0.0, 0.6 + 0.3j), r_min=1e-6)
    T = integrate_transfer(w, 100.0, path)
    Te = exact_constant_transfer(w.coeffs[0], 2, 100.0, 0.6 + 0.3j)
    rel = np.linalg.norm(np.exp(T.r) * T.mhat - Te) / np.linalg.norm(Te)
    assert rel < 1e-8


def test_integrate_zero_length():
    w = NDifferential(2, (1.0,))
    T = integrate_transfer(w, 10.0, PlanePath((0.5,), r_min=1e-6))
    assert np.allclose(T.mhat, np.eye(2)) and T.r == 0.0


def test_reverse_transfer_is_inverse():
    w = NDifferential(2, (0.5, 1.0))
    p = PlanePath((1.0, 1.5 + 0.5j), r_min=0.2)
    T1 = integrate_transfer(w, 1000.0, p).scaled()
    T2 = integrate_transfer(w, 1000.0, p.reversed()).scaled()
    prod = (T2 @ T1).to_plain()
    assert np.linalg.norm(prod - np.eye(2)) < 1e-7


def test_split_composition():
    w = NDifferential(3, (1.0, 0.3))
    whole = PlanePath((0.5, 1.5 + 0.4j), r_min=0.1)
    mid = 1.0 + 0.2j
    first = PlanePath((0.5, mid), r_min=0.1)
    second = PlanePath((mid, 1.5 + 0.4j), r_min=0.1)
    t = 500.0
    Tw = integrate_transfer(w, t, whole).scaled()
    Tc = (integrate_transfer(w, t, second).scaled() @
          integrate_transfer(w, t, first).scaled())
    dev = np.abs(Tw.to_plain() - Tc.to_plain()).max() / np.abs(Tw.to_plain()).max()
    assert dev < 1e-7


def test_transfer_det_unimodular():
    w = NDifferential(2, (0.2, 1.0))
    T = integrate_transfer(w, 1e4, PlanePath((1.0, 2.0 + 1.0j), r_min=0.2))
    # true transfer has det of modulus 1; det(e^r mhat) = e^(2r) det(mhat)
    logdet = 2 * T.r + np.linalg.slogdet(T.mhat)[1]
    assert abs(logdet) < 1e-8


def test_rescaling_keeps_entries_bounded():
    w = NDifferential(2, (0, 1))
    T = integrate_transfer(w, 1e4, PlanePath((0.5, 3.0), r_min=0.2))
    assert 1 / 16 <= np.max(np.abs(T.mhat)) <= 16
    assert T.r > 10  # genuinely large transfer


def test_tolerance_invariance():
    w = NDifferential(2, (0.4j, 1.0))
    p = PlanePath((0.8, 1.8 + 0.6j), r_min=0.1)
    a = integrate_transfer(w, 1e3, p, rtol=1e-9).scaled().to_plain()
    b = integrate_transfer(w, 1e3, p, rtol=5e-10).scaled().to_plain()
    assert np.abs(a - b).max() / np.abs(a).max() < 1e-7


# ------------------------------------------------------ E matrix

def test_e_identity_for_unit_differential():
    w = NDifferential(3, (1.0,))
    assert np.allclose(e_correction(w, 0.7 + 0.1j), np.eye(3), atol=1e-12)


@pytest.mark.parametrize("n", [2, 3, 4])
def test_e_determinant_one(n):
    rng = np.random.default_rng(n)
    w = NDifferential(n, tuple(rng.normal(size=4) + 1j * rng.normal(size=4)))
    for _ in range(20):
        z = complex(rng.normal(), rng.normal())
        if abs(w(z)) < 1e-3:
            continue
        E = e_correction(w, z)
        assert abs(np.linalg.det(E) - 1.0) < 1e-10


def test_e_rejects_zero():
    w = NDifferential(2, (0, 1))
    with pytest.raises(ZeroOfDifferential):
        e_correction(w, 0.0)


def test_e_printed_n3_entries():
    # the printed n=3 example pins the bracket entries q'/3 and
    # q''/(3q) - (2q'/(3q))^2; in recurrence form E_{1,2} = -q'/(3q) and
    # E_{0,2} = -q^(-1/3) (q''/(3q) - (2 q'/(3q))^2)
    import sympy as sp
    zs = sp.symbols("z")
    q = 2 + zs + sp.Rational(1, 2) * zs ** 2
    zval = 0.37
    w = NDifferential(3, (2.0, 1.0, 0.5))
    E = e_correction(w, zval)
    qv = complex(q.subs(zs, zval))
    qp = complex(sp.diff(q, zs).subs(zs, zval))
    qpp = complex(sp.diff(q, zs, 2).subs(zs, zval))
    assert abs(E[0, 0] - qv ** (-1 / 3)) < 1e-12
    assert abs(E[1, 1] - 1.0) < 1e-12
    assert abs(E[2, 2] - qv ** (1 / 3)) < 1e-12
    assert abs(E[1, 2] + qp / (3 * qv)) < 1e-12
    bracket = qpp / (3 * qv) - (2 * qp / (3 * qv)) ** 2
    assert abs(E[0, 2] + qv ** (-1 / 3) * bracket) < 1e-12


def test_e_recurrence_property():
    # E_{i,j} = E'_{i,j-1} + E_{i-1,j-1} w^(1/n), checked by finite
    # differences of the assembled matrix
    w = NDifferential(3, (1.5, 0.7, 0.2))
    z, h = 0.9 + 0.3j, 1e-6
    E0 = e_correction(w, z)
    Ep = (e_correction(w, z + h) - e_correction(w, z - h)) / (2 * h)
    wroot = complex(w(z)) ** (1.0 / 3.0)
    for j in (1, 2):
        for i in range(j + 1):
            lhs = E0[i, j]
            rhs = Ep[i, j - 1] + (E0[i - 1, j - 1] * wroot if i >= 1 else 0.0)
            assert abs(lhs - rhs) < 1e-6 * max(1.0, abs(lhs))


# ----------------------------------------------- ScaledMatrix props

@settings(max_examples=30, deadline=None)
@given(st.floats(-30, 30), st.integers(2, 4))
def test_scaled_matrix_roundtrip(logscale, n):
    rng = np.random.default_rng(7)
    m = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    sm = ScaledMatrix(m, logscale).normalized()
    assert abs(np.max(np.abs(sm.m)) - 1.0) < 1e-12
    assert np.allclose(sm.to_plain(), m * np.exp(logscale))
