"""The equivariant map into positive-definite matrices, rescaled distances,
apartment coordinates, and the (Stokes chain, apartment vector) cone data.

Map value: G(z) = T(basepoint -> z) E(z)^(-1) with T the eps-scaled transfer
from identity Wronskian data at the basepoint; the coset point is
H = G G^* (det-normalized, stored with a log scale).

Metric conventions: sym_distance(H1, H2) = sqrt(sum log^2 eig(H1^(-1) H2)).
Because H = G G^* doubles the log singular values of G, apartment-unit
distances (the ones the flat limits sqrt(2) Re dz / sqrt(n/2) |dz| refer
to) equal sym_distance / 2; rescaled_distance reports apartment units.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import (CrossSectorRequest, RoutingFailure, UnsupportedOrder,
                     ZeroOfDifferential)
from .ndiff import (NDifferential, PlanePath, continue_roots,
                    natural_coords_all, _segment_distance)
from .odeint import ScaledMatrix, e_correction, exact_constant_transfer, \
    integrate_transfer
from .stokesgeo import StokesGraph, decompose_path
from .wkb import AsymptoticReport, _check_ladder, _extrapolate, \
    _monotone_tail, segment_zetas


@dataclass
class SymPoint:
    """Determinant-one positive-definite Hermitian H with a log scale."""

    h: np.ndarray
    logscale: float = 0.0

    def __post_init__(self):
        self.h = np.asarray(self.h, dtype=complex)
        herm = np.linalg.norm(self.h - self.h.conj().T)
        if herm > 1e-10 * max(1.0, np.linalg.norm(self.h)):
            raise ValueError(f"not Hermitian: deviation {herm:.2e}")
        self.h = 0.5 * (self.h + self.h.conj().T)

    @classmethod
    def from_group_element(cls, g: ScaledMatrix):
        n = g.m.shape[0]
        H = g.m @ g.m.conj().T
        sign, ld = np.linalg.slogdet(H)
        shift = ld.real / n
        return cls(H * np.exp(-shift), 2 * g.logscale + shift)

    @property
    def n(self):
        return self.h.shape[0]

    def eigenvalues(self):
        return np.linalg.eigvalsh(self.h)

    def det_log(self):
        return float(np.linalg.slogdet(self.h)[1]) + self.n * 0.0


def sym_distance(h1: SymPoint, h2: SymPoint):
    """sqrt(sum_i log^2 mu_i) for mu_i the eigenvalues of H1^(-1) H2."""
    mu = scipy.linalg.eigh(h2.h, h1.h, eigvals_only=True)
    logs = np.log(mu) + (h2.logscale - h1.logscale)
    return float(np.sqrt(np.sum(logs ** 2)))


def route_path(omega: NDifferential, a, b, r_min=5e-2, depth=8):
    """Zero-avoiding polyline from a to b: straight when clear, otherwise a
    perpendicular detour around the most-violating zero."""
    a, b = complex(a), complex(b)
    if omega.mode != "plane" or len(omega.zeros) == 0:
        return PlanePath((a, b), r_min)

    def build(a, b, depth):
        if abs(b - a) < 1e-14:
            return [a]
        worst, dist = None, np.inf
        for z0 in omega.zeros:
            d = _segment_distance(a, b, z0)
            if d < r_min and d < dist:
                worst, dist = z0, d
        if worst is None or depth == 0:
            return [a, b]
        ab = b - a
        tpar = ((worst - a) * np.conj(ab)).real / abs(ab) ** 2
        tpar = min(0.9, max(0.1, tpar))
        foot = a + tpar * ab
        nrm = 1j * ab / abs(ab)
        side = nrm if ((worst - foot) * np.conj(nrm)).real <= 0 else -nrm
        way = worst + side * max(2.5 * r_min, 2.0 * dist + r_min)
        left = build(a, way, depth - 1)
        right = build(way, b, depth - 1)
        return left + right[1:]

    pts = build(a, b, depth)
    path = PlanePath(tuple(pts), r_min)
    try:
        path.check_clearance(omega.zeros)
    except ZeroOfDifferential as exc:
        raise RoutingFailure(str(exc)) from exc
    return path


def ep_t(omega: NDifferential, z, t, basepoint, *, path=None, rtol=1e-9):
    """Coset point H = G G^* of G = T(basepoint -> z) E(z)^(-1)."""
    z, basepoint = complex(z), complex(basepoint)
    if path is None:
        if omega.mode == "plane" and abs(z - basepoint) > 1e-14:
            path = route_path(omega, basepoint, z)
        else:
            path = PlanePath((basepoint, z) if z != basepoint
                             else (basepoint,), r_min=0.0)
    if len(path.vertices) >= 2:
        sheets = continue_roots(omega, path)
        T = integrate_transfer(omega, t, path, rtol=rtol).scaled()
        log_w = sheets.end_log_omega()
    else:
        T = ScaledMatrix.identity(omega.n)
        log_w = np.log(omega(z))
    E = e_correction(omega, z, log_omega=log_w)
    G = T @ ScaledMatrix(np.linalg.inv(E))
    return SymPoint.from_group_element(G)


def relative_group_element(omega, x, y, t, *, path=None, rtol=1e-9):
    """G(x)^(-1) G(y) = E(x) T(x -> y) E(y)^(-1); basepoint-independent."""
    x, y = complex(x), complex(y)
    if path is None:
        path = route_path(omega, x, y)
    sheets = continue_roots(omega, path)
    T = integrate_transfer(omega, t, path, rtol=rtol).scaled()
    Ex = e_correction(omega, x, log_omega=sheets.log_omega[0])
    Ey = e_correction(omega, y, log_omega=sheets.end_log_omega())
    return ScaledMatrix(Ex) @ T @ ScaledMatrix(np.linalg.inv(Ey))


def pair_distance(omega, x, y, t, *, path=None, rtol=1e-9, apartment=True):
    """d(Ep_t(x), Ep_t(y)), overflow-safe via singular values of the
    relative group element.  apartment=True reports apartment units
    (= sym_distance / 2).

    Small singular values drown in double precision once the spread exceeds
    ~35 in the log; they are repaired from the reversed-path element (whose
    large values are computed stably) and the unimodularity constraint.
    """
    if path is None:
        path = route_path(omega, x, y)
    G = relative_group_element(omega, x, y, t, path=path, rtol=rtol)
    n = G.m.shape[0]
    logs_f = np.sort(np.log(np.linalg.svd(G.m, compute_uv=False)))[::-1] \
        + G.logscale
    Grev = relative_group_element(omega, y, x, t, path=path.reversed(),
                                  rtol=rtol)
    logs_r = np.sort(np.log(np.linalg.svd(Grev.m, compute_uv=False)))[::-1] \
        + Grev.logscale
    # det G = 1 exactly; combine the reliable halves of both sweeps
    logs = np.array(logs_f)
    k_top = (n + 1) // 2
    for i in range(k_top, n):
        logs[i] = -logs_r[n - 1 - i]
    if n % 2 == 1:
        mid = n // 2
        logs[mid] = -(np.sum(logs[:mid]) + np.sum(logs[mid + 1:]))
    logs = logs - np.mean(logs)
    d = float(np.sqrt(np.sum(logs ** 2)))
    return d if apartment else 2.0 * d


def rescaled_distance(omega, x, y, t_ladder, *, basepoint=None, graph=None,
                      path=None, rtol=1e-9):
    """Ladder of d(Ep_t(x), Ep_t(y)) / t^(1/n) with the flat prediction.

    Same-sector pairs get the predicted flat value (sqrt(2) |Re dzeta| for
    n = 2, sqrt(n/2) |dzeta| for n > 2); pairs crossing rays are still
    measured but the prediction is omitted and CrossSectorRequest issued.
    """
    t_ladder = _check_ladder(t_ladder)
    n = omega.n
    x, y = complex(x), complex(y)
    if path is None:
        path = route_path(omega, x, y)
    cross_sector = False
    if graph is not None:
        try:
            dec = decompose_path(path, graph)
            cross_sector = len(dec.events) > 0
        except Exception:
            cross_sector = True
    predicted = None
    if not cross_sector:
        sheets = continue_roots(omega, path)
        zetas = natural_coords_all(omega, sheets)
        dz = zetas[0]
        if n == 2:
            predicted = float(np.sqrt(2.0) * abs(dz.real))
        else:
            predicted = float(np.sqrt(n / 2.0) * abs(dz))
    else:
        warnings.warn("pair spans different Stokes sectors; flat prediction "
                      "omitted", CrossSectorRequest)
    values = []
    for t in t_ladder:
        d = pair_distance(omega, x, y, t, path=path, rtol=rtol)
        values.append(d / t ** (1.0 / n))
    return AsymptoticReport(
        ladder=t_ladder, values=tuple(values),
        extrapolated=float(_extrapolate(t_ladder, values, n)),
        monotone_tail=_monotone_tail([v - (predicted or 0.0) for v in values]),
        meta={"predicted": predicted, "cross_sector": cross_sector})


@dataclass
class ApartmentVector:
    x: np.ndarray

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        if abs(self.x.sum()) > 1e-9 * max(1.0, np.abs(self.x).max()):
            raise ValueError(f"coordinates sum to {self.x.sum():.2e}, not 0")

    def norm(self):
        return float(np.linalg.norm(self.x))


def apartment_coords(omega, z, basepoint, *, path=None):
    """x = (Re zeta_1, ..., Re zeta_n) along a zero-avoiding path."""
    z, basepoint = complex(z), complex(basepoint)
    if abs(z - basepoint) < 1e-14:
        return ApartmentVector(np.zeros(omega.n))
    if path is None:
        path = route_path(omega, basepoint, z)
    sheets = continue_roots(omega, path)
    zetas = natural_coords_all(omega, sheets)
    x = zetas.real
    return ApartmentVector(x - x.mean())


@dataclass
class ConePoint:
    """Ordered Stokes-chain labels plus the apartment displacement."""

    chain: tuple
    vector: ApartmentVector

    def to_json(self):
        return json.dumps({
            "chain": [{"ray": c[0], "base": [c[1].real, c[1].imag],
                       "generation": c[2]} for c in self.chain],
            "vector": list(self.vector.x),
        }, sort_keys=True)


def cone_point(omega, path: PlanePath, graph: StokesGraph, factors=None):
    """Chain of crossing labels and the accumulated apartment vector."""
    sheets = continue_roots(omega, path)
    decomp = decompose_path(path, graph, sheets=sheets)
    chain = []
    for e in decomp.events:
        ray = graph.rays[e.ray_index]
        chain.append((e.ray_index, ray.source, ray.generation))
    zetas = natural_coords_all(omega, sheets)
    x = zetas.real
    return ConePoint(chain=tuple(chain), vector=ApartmentVector(x - x.mean()))


def injectivity_probe(omega, zero, r, t_ladder, *, rtol=1e-9,
                      graph=None):
    """Pairwise rescaled distances of mid-sector samples around a zero.

    Samples one point per local sector at model radius r and reports the
    distance table; the antipodal pair is compared against the two scaling
    regimes (flat within n+1 adjacent sectors, the shorter cross value
    beyond a half plane).  Only defined for n > 2.
    """
    n = omega.n
    if n <= 2:
        raise UnsupportedOrder("injectivity probe needs n > 2")
    t_ladder = _check_ladder(t_ladder)
    zero = complex(zero)
    from .stokesgeo import seed_directions
    seeds = seed_directions(omega, zero, min(0.2 * r, 0.05))
    angles = sorted(th for th, _ in seeds)
    m = len(angles)
    mids = []
    for i in range(m):
        gap = (angles[(i + 1) % m] - angles[i]) % (2 * np.pi)
        mids.append((angles[i] + 0.5 * gap) % (2 * np.pi))
    pts = [zero + r * np.exp(1j * th) for th in mids]

    table = np.zeros((m, m))
    for i in range(m):
        for j in range(i + 1, m):
            arc = _zero_arc(zero, pts[i], pts[j])
            rep = rescaled_distance(omega, pts[i], pts[j], t_ladder,
                                    path=arc, rtol=rtol)
            table[i, j] = table[j, i] = rep.extrapolated

    # model-coordinate radius of the samples: |int_zero^p mu| (one sheet)
    from .ndiff import _GL_X, _GL_W, roots_at
    zr = []
    for p in pts:
        nodes = zero + (p - zero) * _GL_X
        prev = None
        vals = []
        for znode in nodes:
            prev = roots_at(omega, znode, near=prev)
            vals.append(prev[0])
        zr.append(abs((p - zero) * np.sum(_GL_W * np.array(vals))))
    zeta_radius = float(np.mean(zr))
    scale = np.sqrt(n / 2.0)
    return ProbeResult(
        zero=zero, radius=r, angles=tuple(mids), points=tuple(pts),
        table=table, sectors=m, zeta_radius=zeta_radius,
        adjacent_predicted=float(scale * 2 * np.sin(np.pi / (2 * n)) *
                                 zeta_radius),
        antipodal_predicted=float(scale * 2 * zeta_radius))


def _zero_arc(center, a, b):
    """Circular arc between two same-radius points around a zero."""
    tha, thb = np.angle(a - center), np.angle(b - center)
    dth = (thb - tha) % (2 * np.pi)
    if dth > np.pi:
        dth -= 2 * np.pi
    r = abs(a - center)
    k = max(8, int(abs(dth) / 0.05))
    phis = tha + dth * np.linspace(0.0, 1.0, k + 1)
    return PlanePath(tuple(center + r * np.exp(1j * phis)), r_min=0.0)


@dataclass
class ProbeResult:
    """Pairwise rescaled-distance table of the mid-sector samples.

    The two reference values realize the local dichotomy: samples within a
    half plane stay flat (adjacent pairs at the chord value
    sqrt(n/2) 2 sin(pi/2n) rho), while the antipodal pair measures the
    through-vertex value sqrt(n/2) 2 rho, rho the model-coordinate radius.
    Both scale linearly with rho, so the probe reports the dichotomy rather
    than asserting a bare constant.
    """

    zero: complex
    radius: float
    angles: tuple
    points: tuple
    table: np.ndarray
    sectors: int
    zeta_radius: float = 0.0
    adjacent_predicted: float = 0.0
    antipodal_predicted: float = 0.0

    def adjacent_value(self):
        return float(self.table[0, 1])

    def antipodal_value(self):
        half = self.sectors // 2
        return float(self.table[0, half])

    def to_csv(self):
        lines = ["i,j,angle_i,angle_j,distance"]
        m = self.sectors
        for i in range(m):
            for j in range(i + 1, m):
                lines.append(f"{i},{j},{self.angles[i]:.10g},"
                             f"{self.angles[j]:.10g},{self.table[i, j]:.10g}")
        return "\n".join(lines) + "\n"


def torus_holonomy(omega: NDifferential, t, period):
    """Exact transfer over one period of a constant torus differential."""
    if omega.mode != "torus":
        raise ValueError("torus holonomy needs torus mode")
    return exact_constant_transfer(omega.coeffs[0], omega.n, t, period)
