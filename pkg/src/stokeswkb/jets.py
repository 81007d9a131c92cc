"""Truncated jets (value + derivatives at a point) and the Wronskian
automorphy matrices M1, M2 built from them.

A Jet stores the derivative values [u(z0), u'(z0), ..., u^(m)(z0)] of a
scalar function at a fixed point.  Arithmetic is exact forward-mode
differentiation, which keeps the E(z) entries free of finite-difference
noise.
"""

from __future__ import annotations

import math

import numpy as np


class Jet:
    """Derivative values of a scalar function at a point, up to fixed order."""

    __slots__ = ("d",)

    def __init__(self, derivatives):
        self.d = np.asarray(derivatives, dtype=complex)

    @classmethod
    def constant(cls, value, order):
        d = np.zeros(order + 1, dtype=complex)
        d[0] = value
        return cls(d)

    @classmethod
    def variable(cls, value, order):
        """The identity function z at z0 = value."""
        d = np.zeros(order + 1, dtype=complex)
        d[0] = value
        if order >= 1:
            d[1] = 1.0
        return cls(d)

    @classmethod
    def from_polynomial(cls, coeffs, z0, order):
        """Jet of a polynomial (ascending coefficients) at z0."""
        c = np.asarray(coeffs, dtype=complex)
        d = []
        for k in range(order + 1):
            ck = np.polynomial.polynomial.polyder(c, k) if k else c
            d.append(np.polynomial.polynomial.polyval(z0, ck))
        return cls(d)

    @property
    def order(self):
        return len(self.d) - 1

    @property
    def value(self):
        return complex(self.d[0])

    def derivative(self):
        """Jet of u', one order shorter."""
        if self.order == 0:
            raise ValueError("cannot differentiate an order-0 jet")
        return Jet(self.d[1:])

    def _taylor(self):
        facts = np.array([math.factorial(k) for k in range(len(self.d))])
        return self.d / facts

    @classmethod
    def _from_taylor(cls, a):
        facts = np.array([math.factorial(k) for k in range(len(a))])
        return cls(a * facts)

    def __add__(self, other):
        other = _as_jet(other, self.order)
        m = min(self.order, other.order)
        return Jet(self.d[:m + 1] + other.d[:m + 1])

    __radd__ = __add__

    def __neg__(self):
        return Jet(-self.d)

    def __sub__(self, other):
        return self + (-_as_jet(other, self.order))

    def __rsub__(self, other):
        return _as_jet(other, self.order) - self

    def __mul__(self, other):
        other = _as_jet(other, self.order)
        m = min(self.order, other.order)
        a, b = self._taylor()[:m + 1], other._taylor()[:m + 1]
        c = np.array([np.sum(a[:k + 1] * b[:k + 1][::-1]) for k in range(m + 1)])
        return Jet._from_taylor(c)

    __rmul__ = __mul__

    def reciprocal(self):
        a = self._taylor()
        if a[0] == 0:
            raise ZeroDivisionError("jet value is zero")
        b = np.zeros_like(a)
        b[0] = 1.0 / a[0]
        for k in range(1, len(a)):
            b[k] = -np.sum(a[1:k + 1] * b[:k][::-1]) / a[0]
        return Jet._from_taylor(b)

    def __truediv__(self, other):
        return self * _as_jet(other, self.order).reciprocal()

    def __rtruediv__(self, other):
        return _as_jet(other, self.order) * self.reciprocal()

    def exp(self):
        """Jet of exp(u)."""
        a = self._taylor()
        b = np.zeros_like(a)
        b[0] = np.exp(a[0])
        for k in range(1, len(a)):
            b[k] = np.sum(np.arange(1, k + 1) * a[1:k + 1] * b[:k][::-1]) / k
        return Jet._from_taylor(b)

    def power(self, alpha, base_value=None):
        """u^alpha with the branch fixed by base_value (default: principal).

        All derivatives follow from the value via (u^a)' = a u^(a-1) u', so
        supplying the continued base_value pins the branch unambiguously.
        """
        a = self._taylor()
        if a[0] == 0:
            raise ZeroDivisionError("fractional power of a zero-valued jet")
        if base_value is None:
            base_value = a[0] ** alpha
        # b = exp(alpha log u): solve b' u = alpha b u' order by order
        m = len(a)
        b = np.zeros(m, dtype=complex)
        b[0] = base_value
        for k in range(1, m):
            # k b_k a_0 = alpha sum_{j=1}^{k} j a_j b_{k-j} - sum_{j=1}^{k-1} j b_j a_{k-j}
            s = alpha * np.sum(np.arange(1, k + 1) * a[1:k + 1] * b[:k][::-1])
            if k > 1:
                s -= np.sum(np.arange(1, k) * b[1:k] * a[1:k][::-1])
            b[k] = s / (k * a[0])
        return Jet._from_taylor(b)


def _as_jet(x, order):
    if isinstance(x, Jet):
        return x
    return Jet.constant(x, order)


def m1_matrix(g: Jet, n: int):
    """M1(g) with W(g f_1, ..., g f_n) = W(f_1, ..., f_n) M1(g).

    Entry (k, j) = binom(j, k) g^(j-k), upper triangular.  Needs a jet of
    order >= n-1.
    """
    if g.order < n - 1:
        raise ValueError(f"need jet order >= {n - 1}, got {g.order}")
    M = np.zeros((n, n), dtype=complex)
    for j in range(n):
        for k in range(j + 1):
            M[k, j] = math.comb(j, k) * g.d[j - k]
    return M


def m2_matrix(hprime: Jet, n: int):
    """M2(h') with W(f∘h, ...) = W(f)(h) M2(h').

    Entry (k, j) = B_{j,k}(h', h'', ...), the partial Bell polynomials of
    the derivatives of h.  Needs h' as a jet of order >= n-2.
    """
    if n >= 2 and hprime.order < n - 2:
        raise ValueError(f"need jet order >= {n - 2}, got {hprime.order}")
    M = np.zeros((n, n), dtype=complex)
    M[0, 0] = 1.0
    # h^(i) for i >= 1 in terms of the jet of h'
    hd = [None] + [hprime.d[i] for i in range(n)]
    for j in range(1, n):
        for k in range(1, j + 1):
            M[k, j] = _partial_bell(j, k, hd)
    return M


def _partial_bell(j, k, hd):
    """B_{j,k}(x_1, ..., x_{j-k+1}) with x_i = hd[i] = h^(i)."""
    if k == 0:
        return 1.0 if j == 0 else 0.0
    if j == 0:
        return 0.0
    total = 0.0 + 0j
    for i in range(1, j - k + 2):
        total += math.comb(j - 1, i - 1) * hd[i] * _partial_bell(j - i, k - 1, hd)
    return total


def composed_automorphy(g: Jet, hprime: Jet, n: int):
    """M = M2(h') M1(g) via the triangular recurrence.

    M_{0,0} = g, M_{i,j} = M'_{i,j-1} + M_{i-1,j-1} h', strictly lower
    entries zero.  Entries are produced as jets internally so the recurrence
    differentiations are exact; the returned matrix holds the values.
    """
    jets = composed_automorphy_jets(g, hprime, n)
    M = np.zeros((n, n), dtype=complex)
    for i in range(n):
        for j in range(i, n):
            M[i, j] = jets[i][j].value
    return M


def composed_automorphy_jets(g: Jet, hprime: Jet, n: int):
    """Entry jets of M2(h') M1(g) from the recurrence.

    Jet order shrinks by one per column (each column differentiates the
    previous one), so column j carries jets of order g.order - j.
    """
    if g.order < n - 1 or (n >= 2 and hprime.order < n - 1):
        raise ValueError(f"need jets of order >= {n - 1}")
    rows = [[None] * n for _ in range(n)]
    rows[0][0] = g
    for j in range(1, n):
        order_j = g.order - j
        for i in range(j + 1):
            left = rows[i][j - 1]
            term = Jet.constant(0.0, order_j) if left is None else left.derivative()
            if i >= 1:
                up = rows[i - 1][j - 1]
                term = term + Jet(up.d[:order_j + 1]) * Jet(hprime.d[:order_j + 1])
            rows[i][j] = term
    return rows
