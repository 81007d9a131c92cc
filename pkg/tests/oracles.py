"""Independent oracles used to pin expected values.

Everything here deliberately avoids the package's own adaptive machinery:
fixed fine steps, dense enumeration, library matrix exponentials, Airy
special functions.
"""

import numpy as np
import scipy.linalg
from scipy.special import airy as _airy_fn


def fine_continuation(omega, zs, start=None):
    """Brute-force root continuation along dense points zs (no adaptivity)."""
    n = omega.n
    lam = np.exp(2j * np.pi * np.arange(n) / n)
    vals = lam * (-omega(zs[0])) ** (1.0 / n)
    if start is not None:
        k = int(np.argmin(np.abs(vals - start)))
        vals = np.roll(vals, -k)
    out = [vals]
    for z in zs[1:]:
        cand = lam * (-omega(z)) ** (1.0 / n)
        prev = out[-1]
        k = int(np.argmin(np.abs(cand - prev[0])))
        out.append(np.roll(cand, -k))
    return np.array(out)


def fine_quadrature(f, a, b, m=20001):
    """Composite Simpson along the straight segment a -> b."""
    zs = a + (b - a) * np.linspace(0.0, 1.0, m)
    w = np.ones(m)
    w[1:-1:2], w[2:-1:2] = 4.0, 2.0
    h = 1.0 / (m - 1)
    return (b - a) * h / 3.0 * np.sum(w * f(zs))


def ray_direction_count(n, k, grid=200001):
    """Dense-grid count of Re((lambda^i - lambda^j) e^(i(n+k)theta/n)) = 0
    over theta in [0, 2pi), all unordered pairs, deduped."""
    lam = np.exp(2j * np.pi * np.arange(n) / n)
    thetas = np.linspace(0.0, 2 * np.pi, grid, endpoint=False)
    roots = []
    p = (n + k) / n
    for i in range(n):
        for j in range(i + 1, n):
            g = np.real((lam[i] - lam[j]) * np.exp(1j * p * thetas))
            s = np.sign(g)
            s[s == 0] = 1
            flips = np.nonzero(s[1:] * s[:-1] < 0)[0]
            for f in flips:
                roots.append(thetas[f])
            # wrap interval handled on the principal branch only, matching
            # the package's convention
    roots = sorted(r % (2 * np.pi) for r in roots)
    out = []
    for r in roots:
        if not out or abs(r - out[-1]) > 1e-4:
            out.append(r)
    return len(out), out


def expm_transfer(c, n, t, dz):
    """Constant-coefficient transfer via scipy's matrix exponential."""
    A = np.zeros((n, n), dtype=complex)
    for i in range(n - 1):
        A[i, i + 1] = 1.0
    A[n - 1, 0] = -c
    eps = t ** (-1.0 / n)
    return scipy.linalg.expm(A * dz / eps)


def poly_mul(a, b):
    return np.polynomial.polynomial.polymul(a, b)


def poly_compose(f, h):
    """Coefficients of f(h(z)) by Horner on coefficient arrays."""
    out = np.array([0.0 + 0j])
    for c in f[::-1]:
        out = np.polynomial.polynomial.polyadd(poly_mul(out, h), [c])
    return out


def poly_derivatives_at(coeffs, z, orders):
    c = np.asarray(coeffs, dtype=complex)
    vals = []
    for k in range(orders):
        ck = np.polynomial.polynomial.polyder(c, k) if k else c
        vals.append(np.polynomial.polynomial.polyval(z, ck))
    return np.array(vals)


def wronskian_matrix(polys, z, n):
    """W[i, j] = f_i^(j)(z) for polynomial rows (the paper's row layout)."""
    W = np.zeros((n, n), dtype=complex)
    for i, f in enumerate(polys):
        W[i] = poly_derivatives_at(f, z, n)
    return W


def airy_state(c, z, t):
    """eps-scaled state column of Ai(omega_3^c kappa z) for y'' + tzy = 0."""
    w3 = np.exp(2j * np.pi / 3)
    kap = t ** (1.0 / 3) * np.exp(1j * np.pi / 3)
    eps = t ** (-0.5)
    v, dv, _, _ = _airy_fn(w3 ** c * kap * z)
    return np.array([v, eps * w3 ** c * kap * dv])


def airy_exact_transfer(t, z0, z1):
    """Exact transfer for omega = z, n = 2 built from Airy functions."""
    M0 = np.column_stack([airy_state(0, z0, t), airy_state(1, z0, t)])
    M1 = np.column_stack([airy_state(0, z1, t), airy_state(1, z1, t)])
    return M1 @ np.linalg.inv(M0)
