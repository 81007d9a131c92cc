"""The eps-scaled companion system, overflow-safe transfer matrices, and the
Wronskian automorphy machinery (M1, M2, E(z)).

State convention: Y = (y, eps*y', ..., eps^(n-1)*y^(n-1))^T with
eps = t^(-1/n), so eps*Y' = A(z)*Y where A has ones on the superdiagonal and
-w(z) in the bottom-left corner.  Transfers act as Y(end) = T * Y(start).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import StepUnderflow, ToleranceFailure, ZeroOfDifferential
from .jets import Jet, composed_automorphy_jets
from .ndiff import NDifferential, PlanePath

RESCALE_HI = 16.0
RESCALE_LO = 1.0 / 16.0

# Dormand-Prince 5(4) tableau
_DP_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_DP_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_DP_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_DP_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640,
                   -92097 / 339200, 187 / 2100, 1 / 40])


class ScaledMatrix:
    """A matrix stored as exp(logscale) * m with m kept at unit scale."""

    __slots__ = ("m", "logscale")

    def __init__(self, m, logscale=0.0):
        self.m = np.asarray(m, dtype=complex)
        self.logscale = float(logscale)

    @classmethod
    def identity(cls, n):
        return cls(np.eye(n, dtype=complex), 0.0)

    @classmethod
    def from_plain(cls, m):
        return cls(m, 0.0).normalized()

    def normalized(self):
        s = np.max(np.abs(self.m))
        if s == 0.0:
            return ScaledMatrix(self.m, self.logscale)
        return ScaledMatrix(self.m / s, self.logscale + np.log(s))

    def __matmul__(self, other):
        if isinstance(other, ScaledMatrix):
            return ScaledMatrix(self.m @ other.m,
                                self.logscale + other.logscale).normalized()
        return ScaledMatrix(self.m @ np.asarray(other, dtype=complex),
                            self.logscale).normalized()

    def __rmatmul__(self, other):
        return ScaledMatrix(np.asarray(other, dtype=complex) @ self.m,
                            self.logscale).normalized()

    def inv(self):
        return ScaledMatrix(np.linalg.inv(self.m), -self.logscale).normalized()

    def to_plain(self):
        return np.exp(self.logscale) * self.m

    def log_norm(self):
        """log of the Frobenius norm of the full matrix."""
        return self.logscale + np.log(np.linalg.norm(self.m))

    def det_modulus_log(self):
        n = self.m.shape[0]
        sign, ld = np.linalg.slogdet(self.m)
        return n * self.logscale + ld

    def distance_to_identity(self):
        """Frobenius distance of the full matrix from the identity.

        Saturates at overflow scales; meaningful when logscale is moderate.
        """
        n = self.m.shape[0]
        if self.logscale > 200:
            return np.inf
        return float(np.linalg.norm(self.to_plain() - np.eye(n)))


@dataclass
class TransferResult:
    """Reduced transfer matrix: true transfer = exp(r) * mhat."""

    mhat: np.ndarray
    r: float
    steps: int
    err: float

    def scaled(self):
        return ScaledMatrix(self.mhat, self.r)

    def to_json(self):
        import json
        return json.dumps({
            "mhat": [[[v.real, v.imag] for v in row] for row in self.mhat],
            "r": self.r, "steps": self.steps, "err": self.err,
        }, sort_keys=True)


def companion_system(omega: NDifferential, t: float):
    """z -> A(z) for eps Y' = A Y, plus eps = t^(-1/n)."""
    if t <= 0:
        raise ValueError("t must be positive")
    n = omega.n
    eps = t ** (-1.0 / n)

    def A(z):
        M = np.zeros((n, n), dtype=complex)
        for i in range(n - 1):
            M[i, i + 1] = 1.0
        M[n - 1, 0] = -omega(z)
        return M

    return A, eps


def _apply_companion(wvals, Y, n):
    """A(z) @ Y without building A: rows shift up, last row is -w * row0."""
    out = np.empty_like(Y)
    out[:n - 1] = Y[1:]
    out[n - 1] = -wvals * Y[0]
    return out


def integrate_transfer(omega: NDifferential, t: float, path: PlanePath,
                       rtol=1e-9, atol=1e-12, step_cap_factor=0.5,
                       h_min=1e-13, max_steps=2_000_000):
    """Transfer matrix of eps Y' = A(z) Y along a polyline.

    Adaptive Dormand-Prince 5(4) on the chord parameter of each edge, with
    the oscillation-aware cap h <= step_cap_factor * eps / max|mu| and a
    scalar rescale whenever entries leave [1/16, 16].
    """
    if omega.mode == "plane":
        path.check_clearance(omega.zeros)
    n = omega.n
    eps = t ** (-1.0 / n)
    Y = np.eye(n, dtype=complex)
    r = 0.0
    steps = 0
    err_acc = 0.0

    for a, b in zip(path.vertices, path.vertices[1:]):
        chord = b - a

        def rhs(s, Y):
            z = a + s * chord
            return (chord / eps) * _apply_companion(omega(z), Y, n)

        # worst-case |mu| on this edge from a few samples
        zs = a + chord * np.linspace(0.0, 1.0, 9)
        mu_max = float(np.max(np.abs(omega(zs)) ** (1.0 / n)))
        h_cap = step_cap_factor * eps / max(mu_max * abs(chord), 1e-30)
        h_cap = min(h_cap, 0.2)
        h = h_cap
        s = 0.0
        while s < 1.0:
            h = min(h, 1.0 - s)
            if h < h_min:
                raise StepUnderflow(f"step {h:.2e} below minimum at s={s}")
            K = []
            for stage in range(7):
                ys = Y
                for j, aij in enumerate(_DP_A[stage]):
                    if aij != 0.0:
                        ys = ys + h * aij * K[j]
                K.append(rhs(s + _DP_C[stage] * h, ys))
            Y5 = Y + h * sum(b5 * k for b5, k in zip(_DP_B5, K) if b5 != 0.0)
            Y4 = Y + h * sum(b4 * k for b4, k in zip(_DP_B4, K) if b4 != 0.0)
            scale = atol + rtol * np.maximum(np.abs(Y), np.abs(Y5))
            err = float(np.sqrt(np.mean((np.abs(Y5 - Y4) / scale) ** 2)))
            if err <= 1.0:
                s += h
                Y = Y5
                err_acc += err * rtol
                m = np.max(np.abs(Y))
                if m > RESCALE_HI or m < RESCALE_LO:
                    Y = Y / m
                    r += np.log(m)
            steps += 1
            if steps > max_steps:
                raise ToleranceFailure(f"exceeded {max_steps} steps")
            # standard step-size controller
            fac = 0.9 * err ** (-0.2) if err > 0 else 5.0
            h = h * min(5.0, max(0.2, fac))
            h = min(h, h_cap)

    m = np.max(np.abs(Y))
    if m != 0.0 and (m > RESCALE_HI or m < RESCALE_LO):
        Y = Y / m
        r += np.log(m)
    return TransferResult(mhat=Y, r=r, steps=steps, err=err_acc)


def exact_constant_transfer(c, n, t, dz):
    """exp(A dz / eps) for constant w = c: the const-coefficient oracle."""
    eps = t ** (-1.0 / n)
    x = dz / eps
    if c == 0:
        T = np.zeros((n, n), dtype=complex)
        fact = 1.0
        for k in range(n):
            if k > 0:
                fact *= k
            for i in range(n - k):
                T[i, i + k] = x ** k / fact
        return T
    lam = np.exp(2j * np.pi * np.arange(n) / n)
    mu = lam * (-c) ** (1.0 / n)
    P = np.vander(mu, n, increasing=True).T  # columns (1, mu_j, mu_j^2, ...)
    return (P * np.exp(mu * x)) @ np.linalg.inv(P)


def vandermonde_frame(mu):
    """P0 with columns (1, mu_j, ..., mu_j^(n-1)); diagonalizes A(z)."""
    n = len(mu)
    return np.vander(np.asarray(mu, dtype=complex), n, increasing=True).T


def e_correction(omega: NDifferential, z, log_omega=None, min_abs=1e-12):
    """The unimodular correction matrix E(z).

    Built from the triangular recurrence E_{0,0} = w^((1-n)/(2n)),
    E_{i,j} = E'_{i,j-1} + E_{i-1,j-1} * w^(1/n) (equivalently the product
    M2(w^(1/n)) M1(w^((1-n)/(2n))) of the automorphy matrices).  The branch
    of the fractional powers is pinned by the continued log w when given.
    """
    n = omega.n
    w = complex(omega(z))
    if abs(w) < min_abs:
        raise ZeroOfDifferential(f"|w({z})| = {abs(w):.2e} too small for E(z)")
    order = n  # one spare order for the recurrence differentiations
    wjet = Jet.from_polynomial(omega.coeffs, z, order)
    lw = np.log(w) if log_omega is None else complex(log_omega)
    g = wjet.power((1.0 - n) / (2.0 * n), base_value=np.exp((1.0 - n) / (2.0 * n) * lw))
    hp = wjet.power(1.0 / n, base_value=np.exp(lw / n))
    jets = composed_automorphy_jets(g, hp, n)
    E = np.zeros((n, n), dtype=complex)
    for i in range(n):
        for j in range(i, n):
            E[i, j] = jets[i][j].value
    return E
