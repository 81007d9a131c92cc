"""The n-differential w(z): zeros, branch-tracked roots, natural coordinates.

Sign convention used everywhere downstream: the sheet values mu_i are the n
roots of mu^n = -w(z), i.e. the exact exponents of y^(n) + t*w*y = 0.  They
come as mu_i = lambda^i * mu_0 with lambda = exp(2*pi*i/n).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import BranchTrackingFailure, NonSimpleZero, ZeroOfDifferential

TOL_SEP = 1e-6
TOL_ROOT = 1e-9
MAX_SUBDIVISIONS = 40

# 16-node Gauss-Legendre rule on [0, 1], used by the composite quadratures.
_GL_X, _GL_W = np.polynomial.legendre.leggauss(16)
_GL_X = 0.5 * (_GL_X + 1.0)
_GL_W = 0.5 * _GL_W


@dataclass(frozen=True)
class NDifferential:
    """Polynomial n-differential w(z) with validated simple zeros.

    coeffs are ascending-degree complex coefficients.  In torus mode the
    differential is a nonzero constant and carries two complex periods.
    """

    n: int
    coeffs: tuple
    mode: str = "plane"
    periods: tuple | None = None
    _zeros: tuple = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("order n must be >= 2")
        if self.mode not in ("plane", "torus"):
            raise ValueError(f"unknown mode {self.mode!r}")
        coeffs = tuple(complex(c) for c in self.coeffs)
        while len(coeffs) > 1 and coeffs[-1] == 0:
            coeffs = coeffs[:-1]
        if not coeffs:
            coeffs = (0j,)
        object.__setattr__(self, "coeffs", coeffs)
        if self.mode == "torus":
            if self.degree != 0 or coeffs[0] == 0:
                raise ValueError("torus mode requires a nonzero constant differential")
            if self.periods is None:
                raise ValueError("torus mode requires periods")
            object.__setattr__(self, "periods", tuple(complex(p) for p in self.periods))

    @property
    def degree(self):
        return len(self.coeffs) - 1

    def __call__(self, z):
        return np.polynomial.polynomial.polyval(z, np.asarray(self.coeffs))

    def derivative(self, z, order=1):
        c = np.polynomial.polynomial.polyder(np.asarray(self.coeffs), order)
        return np.polynomial.polynomial.polyval(z, c)

    def jet(self, z, order):
        """Taylor coefficients [w(z), w'(z), ..., w^(order)(z)/order!] * k!.

        Returned as plain derivative values (not divided by factorials).
        """
        return np.array([self.derivative(z, k) if k else self(z) for k in range(order + 1)])

    @property
    def zeros(self):
        if self._zeros is None:
            object.__setattr__(self, "_zeros", tuple(find_zeros(self)))
        return np.array(self._zeros)

    def coefficient_scale(self):
        return max(abs(c) for c in self.coeffs)

    def to_json(self):
        d = {
            "n": self.n,
            "coeffs": [[c.real, c.imag] for c in self.coeffs],
            "mode": self.mode,
        }
        if self.periods is not None:
            d["periods"] = [[p.real, p.imag] for p in self.periods]
        return json.dumps(d, sort_keys=True)

    @classmethod
    def from_json(cls, text):
        d = json.loads(text) if isinstance(text, str) else text
        coeffs = [complex(re, im) for re, im in d["coeffs"]]
        periods = None
        if d.get("periods") is not None:
            periods = [complex(re, im) for re, im in d["periods"]]
        return cls(n=int(d["n"]), coeffs=tuple(coeffs), mode=d.get("mode", "plane"),
                   periods=periods)


def find_zeros(omega: NDifferential, tol_simple_factor=1e-8, tol_sep=TOL_SEP):
    """All roots of the polynomial w, each certified simple.

    Companion-matrix eigenvalues followed by a Newton polish.  Raises
    NonSimpleZero when a root fails |w'(z0)| > tol or two roots sit closer
    than tol_sep.
    """
    if omega.mode != "plane":
        return []
    if omega.degree < 1:
        return []
    c = np.asarray(omega.coeffs)
    roots = np.polynomial.polynomial.polyroots(c)
    polished = []
    for r in roots:
        z = r
        for _ in range(8):
            f = omega(z)
            fp = omega.derivative(z)
            if fp == 0:
                break
            step = f / fp
            z = z - step
            if abs(step) < 1e-14 * (1.0 + abs(z)):
                break
        polished.append(z)
    polished = sorted(polished, key=lambda w: (round(w.real, 12), round(w.imag, 12)))
    scale = omega.coefficient_scale()
    tol_simple = tol_simple_factor * scale
    for z in polished:
        if abs(omega.derivative(z)) <= tol_simple:
            raise NonSimpleZero(f"zero {z} has |w'| = {abs(omega.derivative(z)):.3e} <= {tol_simple:.3e}")
    for i in range(len(polished)):
        for j in range(i + 1, len(polished)):
            if abs(polished[i] - polished[j]) <= tol_sep:
                raise NonSimpleZero(
                    f"zeros {polished[i]} and {polished[j]} closer than {tol_sep}")
    return polished


@dataclass(frozen=True)
class PlanePath:
    """Ordered polyline in the z-plane with a clearance radius from zeros."""

    vertices: tuple
    r_min: float = 1e-3

    def __post_init__(self):
        verts = tuple(complex(v) for v in self.vertices)
        if len(verts) < 1:
            raise ValueError("path needs at least one vertex")
        for a, b in zip(verts, verts[1:]):
            if a == b:
                raise ValueError("consecutive path vertices must be distinct")
        object.__setattr__(self, "vertices", verts)

    @property
    def start(self):
        return self.vertices[0]

    @property
    def end(self):
        return self.vertices[-1]

    def reversed(self):
        return PlanePath(self.vertices[::-1], self.r_min)

    def length(self):
        v = np.array(self.vertices)
        return float(np.sum(np.abs(np.diff(v)))) if len(v) > 1 else 0.0

    def check_clearance(self, zeros):
        """Distance check of every edge (not only vertices) against zeros."""
        if len(zeros) == 0:
            return
        v = np.array(self.vertices)
        for z0 in zeros:
            if len(v) == 1:
                d = abs(v[0] - z0)
            else:
                d = min(_segment_distance(a, b, z0) for a, b in zip(v, v[1:]))
            if d < self.r_min:
                raise ZeroOfDifferential(
                    f"path comes within {d:.3e} < r_min={self.r_min} of zero {z0}")

    def refined(self, max_edge):
        """Same path with every edge split to length <= max_edge."""
        out = [self.vertices[0]]
        for a, b in zip(self.vertices, self.vertices[1:]):
            m = max(1, int(np.ceil(abs(b - a) / max_edge)))
            for k in range(1, m + 1):
                out.append(a + (b - a) * k / m)
        return PlanePath(tuple(out), self.r_min)


def _segment_distance(a, b, p):
    """Distance from point p to segment [a, b] in the complex plane."""
    ab = b - a
    t = ((p - a) * np.conj(ab)).real / abs(ab) ** 2
    t = min(1.0, max(0.0, t))
    return abs(a + t * ab - p)


def roots_at(omega, z, near=None):
    """The n roots of mu^n = -w(z), ordered to match `near` when given.

    Without a reference the roots come as lambda^i * principal, i = 0..n-1.
    """
    n = omega.n
    w = complex(omega(z))
    if w == 0:
        raise ZeroOfDifferential(f"w({z}) = 0, roots collide")
    lam = np.exp(2j * np.pi * np.arange(n) / n)
    base = (-w) ** (1.0 / n)
    cand = lam * base
    if near is None:
        return cand
    # roots form one lambda-orbit, so matching the slot-0 root fixes all slots
    k = int(np.argmin(np.abs(cand - near[0])))
    return np.roll(cand, -k)


def _local_gap(values):
    n = len(values)
    if n < 2:
        return np.inf
    gap = np.inf
    for i in range(n):
        for j in range(i + 1, n):
            gap = min(gap, abs(values[i] - values[j]))
    return gap


@dataclass
class SheetAssignment:
    """Continuous branch record of the n roots of mu^n = -w along a path.

    values[k, i] is sheet i at path vertex k.  log_omega is the continued
    logarithm of w along the same vertices (used for branch-consistent
    fractional powers such as the WKB amplitude).
    """

    omega: NDifferential
    path: PlanePath
    values: np.ndarray
    log_omega: np.ndarray

    @property
    def n(self):
        return self.omega.n

    @property
    def base_point(self):
        return self.path.vertices[0]

    @property
    def base_root(self):
        return self.values[0, 0]

    def end_values(self):
        return self.values[-1]

    def end_log_omega(self):
        return complex(self.log_omega[-1])

    def validate(self, tol_root=TOL_ROOT):
        scale = max(1.0, self.omega.coefficient_scale())
        for k, z in enumerate(self.path.vertices):
            w = self.omega(z)
            res = np.abs(self.values[k] ** self.n + w)
            if np.any(res > tol_root * scale):
                raise BranchTrackingFailure(
                    f"root residual {res.max():.3e} at vertex {k}")
        for k in range(1, len(self.path.vertices)):
            gap = _local_gap(self.values[k])
            if np.any(np.abs(self.values[k] - self.values[k - 1]) > 0.5 * gap + 1e-12):
                raise BranchTrackingFailure(f"continuation jump at vertex {k}")


def continue_roots(omega, path, base_values=None, base_log=None,
                   max_subdivisions=MAX_SUBDIVISIONS):
    """Continue all n roots of mu^n = -w and log w along a polyline.

    Edges are subdivided adaptively until consecutive root values move by
    less than half the local root gap (and the log-w increment stays well
    inside a half-turn).
    """
    if omega.mode == "plane":
        path.check_clearance(omega.zeros)
    verts = list(path.vertices)
    v0 = roots_at(omega, verts[0], near=base_values)
    if base_values is not None:
        # honor the caller's exact ordering, not just the base root
        order = [int(np.argmin(np.abs(v0 - b))) for b in base_values]
        if len(set(order)) != omega.n:
            raise BranchTrackingFailure("ambiguous base root matching")
        v0 = v0[order]
    lw0 = complex(np.log(omega(verts[0]))) if base_log is None else complex(base_log)
    out_vals = [v0]
    out_logs = [lw0]
    out_verts = [verts[0]]

    def step(z_from, z_to, vals, lw, depth):
        w_to = omega(z_to)
        if w_to == 0:
            raise ZeroOfDifferential(f"path vertex at zero of w: {z_to}")
        cand = roots_at(omega, z_to, near=vals)
        gap = _local_gap(cand)
        dlog = np.log(w_to / omega(z_from))
        ok = np.all(np.abs(cand - vals) < 0.5 * gap) and abs(dlog.imag) < 1.5
        if ok:
            return [(z_to, cand, lw + dlog)]
        if depth >= max_subdivisions:
            raise BranchTrackingFailure(
                f"continuation between {z_from} and {z_to} exceeded "
                f"{max_subdivisions} subdivisions")
        mid = 0.5 * (z_from + z_to)
        first = step(z_from, mid, vals, lw, depth + 1)
        z_m, v_m, l_m = first[-1]
        return first + step(z_m, z_to, v_m, l_m, depth + 1)

    for a, b in zip(verts, verts[1:]):
        pieces = step(a, b, out_vals[-1], out_logs[-1], 0)
        for z, v, lw in pieces:
            out_verts.append(z)
            out_vals.append(v)
            out_logs.append(lw)

    refined = PlanePath(tuple(out_verts), path.r_min)
    sheets = SheetAssignment(omega, refined, np.array(out_vals), np.array(out_logs))
    sheets.validate()
    return sheets


def _edge_quadrature(f, a, b):
    """16-node Gauss-Legendre of f along the straight edge a->b."""
    zs = a + (b - a) * _GL_X
    return (b - a) * np.sum(_GL_W * f(zs))


def natural_coord(omega, sheets: SheetAssignment, sheet=0, tol_quad=1e-10):
    """zeta = integral of mu_sheet dz along the continued path.

    Composite Gauss quadrature on the continuation polyline, refined until
    two successive refinements agree to tol_quad (relative).
    """
    return natural_coords_all(omega, sheets, tol_quad)[sheet]


def natural_coords_all(omega, sheets: SheetAssignment, tol_quad=1e-10):
    """All n per-sheet natural coordinates at once."""
    verts = sheets.path.vertices
    n = omega.n
    if len(verts) < 2:
        return np.zeros(n, dtype=complex)
    total = np.zeros(n, dtype=complex)
    for k in range(len(verts) - 1):
        a, b = verts[k], verts[k + 1]
        va = sheets.values[k]
        total += _edge_integral_all(omega, a, b, va, tol_quad)
    return total


def _edge_integral_all(omega, a, b, start_vals, tol_quad, depth=0):
    coarse = _edge_nodes_integral(omega, a, b, start_vals)
    mid = 0.5 * (a + b)
    vm = roots_at(omega, mid, near=start_vals)
    fine = _edge_nodes_integral(omega, a, mid, start_vals) + \
        _edge_nodes_integral(omega, mid, b, vm)
    scale = max(np.max(np.abs(fine)), 1e-30)
    if np.max(np.abs(fine - coarse)) < tol_quad * max(scale, 1.0) or depth > 24:
        return fine
    return _edge_integral_all(omega, a, mid, start_vals, tol_quad, depth + 1) + \
        _edge_integral_all(omega, mid, b, vm, tol_quad, depth + 1)


def _edge_nodes_integral(omega, a, b, start_vals):
    zs = a + (b - a) * _GL_X
    vals = np.empty((len(zs), len(start_vals)), dtype=complex)
    prev = start_vals
    for i, z in enumerate(zs):
        prev = roots_at(omega, z, near=prev)
        vals[i] = prev
    return (b - a) * (_GL_W[:, None] * vals).sum(axis=0)


def flat_length(omega, path: PlanePath, tol=1e-10):
    """Length of the path in the flat |w|^(1/n) metric."""
    verts = path.vertices
    if len(verts) < 2:
        return 0.0
    n = omega.n
    total = 0.0
    for a, b in zip(verts, verts[1:]):
        total += _adaptive_real_edge(lambda zs: np.abs(omega(zs)) ** (1.0 / n), a, b, tol)
    return total


def _adaptive_real_edge(f, a, b, tol, depth=0):
    coarse = abs(_edge_quadrature(f, a, b))
    mid = 0.5 * (a + b)
    fine = abs(_edge_quadrature(f, a, mid)) + abs(_edge_quadrature(f, mid, b))
    if abs(fine - coarse) < tol * max(1.0, fine) or depth > 24:
        return fine
    return _adaptive_real_edge(f, a, mid, tol, depth + 1) + \
        _adaptive_real_edge(f, mid, b, tol, depth + 1)


def amplitude(omega, sheets: SheetAssignment, index=-1):
    """Branch-tracked WKB amplitude w^((1-n)/(2n)) at a continuation vertex."""
    n = omega.n
    lw = sheets.log_omega[index]
    return np.exp((1.0 - n) / (2.0 * n) * lw)
