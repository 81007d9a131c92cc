"""Stokes graph of the differential: primary rays from zeros, crossings,
secondary rays, and decomposition of paths into sector segments.

A ray of sheet pair (a, b) is the level set Re int_source^z (mu_a - mu_b) = 0
traced from its source (a zero for generation 0, a crossing for generation
>= 1).  Pair identity is carried as root *values* along the ray, not global
indices; consumers match values against their own continuations.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import (NearDoubleCrossing, TangentialCrossing, TraceDivergence,
                     ZeroOfDifferential)
from .ndiff import NDifferential, PlanePath, roots_at, _GL_X, _GL_W

TOL_RAY = 1e-6
ESCAPED = "escaped"
HIT_CROSSING = "hit_crossing"
STEP_LIMIT = "step_limit"


def local_ray_directions(n: int, k: int):
    """Model-equation ray directions: angles where
    Re((lambda^i - lambda^j) * zeta^((n+k)/n)) = 0 on the principal branch.

    Returns a sorted list of (angle, [(i, j), ...]) with angles in [0, 2*pi)
    and every unordered sheet pair that vanishes there.
    """
    if n < 2 or k < 0:
        raise ValueError("need n >= 2 and k >= 0")
    lam = np.exp(2j * np.pi * np.arange(n) / n)
    p = (n + k) / n
    found = []
    for i in range(n):
        for j in range(i + 1, n):
            d = lam[i] - lam[j]
            phi = np.angle(d)
            # cos(phi + p*theta) = 0  =>  theta = (pi/2 - phi + m*pi)/p
            m = 0
            while True:
                theta = (np.pi / 2 - phi + m * np.pi) / p
                if theta >= 2 * np.pi - 1e-12:
                    break
                if theta >= -1e-12:
                    found.append((theta % (2 * np.pi), (i, j)))
                m += 1
    found.sort(key=lambda t: t[0])
    out = []
    for theta, pair in found:
        if out and abs(theta - out[-1][0]) < 1e-9:
            out[-1][1].append(pair)
        else:
            out.append((theta, [pair]))
    return [(theta, pairs) for theta, pairs in out]


@dataclass
class StokesRay:
    """Traced ray: polyline, per-vertex pair values, bookkeeping."""

    source: complex
    pair_values: np.ndarray        # shape (m, 2): the two root values per vertex
    vertices: np.ndarray           # shape (m,)
    direction: complex             # unit seed direction
    generation: int
    termination: str
    phi: np.ndarray                # accumulated int (mu_a - mu_b) per vertex
    index: int = -1
    source_kind: str = "zero"
    weight_kappa: complex = 0j     # secondary rays: exp-weight exponent of the factor
    parent_shared_value: complex | None = None

    def point_at_radius(self, r):
        """First polyline point at distance ~r from the source, interpolated."""
        d = np.abs(self.vertices - self.source)
        idx = np.searchsorted(np.maximum.accumulate(d), r)
        if idx >= len(self.vertices):
            raise ValueError(f"ray never reaches radius {r}")
        if idx == 0:
            return self.vertices[0], self.pair_values[0]
        a, b = self.vertices[idx - 1], self.vertices[idx]
        da, db = d[idx - 1], d[idx]
        t = 0.0 if db == da else (r - da) / (db - da)
        z = a + t * (b - a)
        return z, self.pair_values[idx]

    def values_near(self, z):
        """Stored pair values at the polyline vertex closest to z."""
        idx = int(np.argmin(np.abs(self.vertices - z)))
        return self.pair_values[idx]

    def angle_at_radius(self, r):
        z, _ = self.point_at_radius(r)
        return float(np.angle(z - self.source) % (2 * np.pi))


@dataclass
class Crossing:
    point: complex
    ray_a: int
    ray_b: int
    index: int = -1


@dataclass
class StokesGraph:
    omega: NDifferential
    rays: list
    crossings: list
    radius: float
    truncated: bool = False
    seed_radius: float = 0.05

    def primary_count(self):
        return sum(1 for r in self.rays if r.generation == 0)

    def secondary_count(self):
        return sum(1 for r in self.rays if r.generation > 0)

    def rays_from_zero(self, z0, tol=1e-9):
        return [r for r in self.rays
                if r.generation == 0 and abs(r.source - z0) < tol]

    def to_json(self):
        d = {
            "omega": json.loads(self.omega.to_json()),
            "radius": self.radius,
            "truncated": self.truncated,
            "rays": [{
                "source": [r.source.real, r.source.imag],
                "generation": r.generation,
                "termination": r.termination,
                "pair_seed": [[v.real, v.imag] for v in r.pair_values[0]],
                "vertices": [[z.real, z.imag] for z in r.vertices],
            } for r in self.rays],
            "crossings": [{
                "point": [c.point.real, c.point.imag],
                "rays": [c.ray_a, c.ray_b],
            } for c in self.crossings],
        }
        return json.dumps(d, sort_keys=True)

    def to_svg(self, pad_frac=0.10, size=800):
        """Zeros as filled circles, primary rays solid, secondary dashed,
        crossings as open circles."""
        R = self.radius * (1.0 + pad_frac)
        sc = size / (2 * R)

        def xy(z):
            return (z.real + R) * sc, (R - z.imag) * sc

        parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" '
                 f'height="{size}" viewBox="0 0 {size} {size}">',
                 f'<rect width="{size}" height="{size}" fill="white"/>']
        for ray in self.rays:
            pts = " ".join(f"{xy(z)[0]:.2f},{xy(z)[1]:.2f}" for z in ray.vertices)
            dash = ' stroke-dasharray="6,4"' if ray.generation > 0 else ""
            parts.append(f'<polyline points="{pts}" fill="none" '
                         f'stroke="black" stroke-width="1.2"{dash}/>')
        if self.omega.mode == "plane":
            for z0 in self.omega.zeros:
                x, y = xy(z0)
                parts.append(f'<circle cx="{x:.2f}" cy="{y:.2f}" r="4" fill="black"/>')
        for c in self.crossings:
            x, y = xy(c.point)
            parts.append(f'<circle cx="{x:.2f}" cy="{y:.2f}" r="4" fill="white" '
                         f'stroke="black" stroke-width="1.2"/>')
        parts.append("</svg>")
        return "\n".join(parts)


def _pair_at(omega, z, prev_pair):
    """Continue a pair of roots of mu^n = -w to the point z."""
    allroots = roots_at(omega, z)
    out = []
    for v in prev_pair:
        out.append(allroots[int(np.argmin(np.abs(allroots - v)))])
    return np.array(out)


def _radial_pair_integral(omega, z0, seed, pair_at_seed):
    """int_{z0}^{seed} (mu_a - mu_b) dz along the radius, roots continued
    inward from the seed values.  Gauss nodes avoid the zero itself."""
    nodes = z0 + (seed - z0) * _GL_X[::-1]   # from outside in
    vals = []
    prev = pair_at_seed
    for z in nodes:
        prev = _pair_at(omega, z, prev)
        vals.append(prev[0] - prev[1])
    vals = np.array(vals[::-1])              # back to inside-out order
    return (seed - z0) * np.sum(_GL_W * vals)


def seed_directions(omega, z0, seed_radius):
    """Ray seeds on the circle |z - z0| = seed_radius.

    Continues the root orbit around the circle and locates the sign changes
    of Re Phi_ab for every unordered pair, using the local monomial model
    Phi ~ (n/(n+1)) z_rel * (mu_a - mu_b) and polishing against the honest
    radial integral.
    """
    n = omega.n
    m_grid = max(360, 90 * n)
    # irrational grid offset keeps symmetric configurations' roots off nodes
    thetas = (np.arange(m_grid) + 0.3183098861) * (2 * np.pi / m_grid)
    ring = z0 + seed_radius * np.exp(1j * thetas)
    orbit = [roots_at(omega, ring[0])]
    for z in ring[1:]:
        orbit.append(roots_at(omega, z, near=orbit[-1]))
    orbit.append(roots_at(omega, ring[0], near=orbit[-1]))  # wrap continuation
    orbit = np.array(orbit)

    seeds = []
    model = n / (n + 1.0)
    for i in range(n):
        for j in range(i + 1, n):
            dmu = orbit[:, i] - orbit[:, j]
            g = np.real(model * (np.concatenate([ring, ring[:1]]) - z0) * dmu)
            for k in range(m_grid):
                g0, g1 = g[k], g[k + 1]
                if g0 == 0.0 or g0 * g1 < 0.0:
                    th_lo, th_hi = thetas[k], thetas[k] + (2 * np.pi / m_grid)
                    pair_lo = orbit[k][[i, j]]
                    theta, pair = _polish_seed(omega, z0, seed_radius,
                                               th_lo, th_hi, pair_lo)
                    seeds.append((theta % (2 * np.pi), pair))
    # dedupe: distinct pair labelings can describe the same geometric ray
    seeds.sort(key=lambda s: s[0])
    out = []
    for theta, pair in seeds:
        dup = False
        for theta2, pair2 in out:
            if abs(theta - theta2) < 1e-7 and (
                    np.allclose(sorted(pair, key=lambda v: (v.real, v.imag)),
                                sorted(pair2, key=lambda v: (v.real, v.imag)),
                                rtol=1e-6, atol=1e-12)):
                dup = True
                break
        if dup:
            continue
        out.append((theta, pair))
    return out


def _polish_seed(omega, z0, r0, th_lo, th_hi, pair_lo, iters=50):
    """Bisection on the anchored radial integral Re Phi(theta) = 0."""
    def g(theta, pair_ref):
        z = z0 + r0 * np.exp(1j * theta)
        pair = _pair_at(omega, z, pair_ref)
        return np.real(_radial_pair_integral(omega, z0, z, pair)), pair

    glo, pair = g(th_lo, pair_lo)
    ghi, _ = g(th_hi, pair)
    if glo * ghi > 0:
        # model located the change; fall back to the midpoint
        return 0.5 * (th_lo + th_hi), pair
    for _ in range(iters):
        mid = 0.5 * (th_lo + th_hi)
        gm, pair_m = g(mid, pair)
        if glo * gm <= 0:
            th_hi = mid
        else:
            th_lo, glo, pair = mid, gm, pair_m
        if th_hi - th_lo < 1e-12:
            break
    theta = 0.5 * (th_lo + th_hi)
    z = z0 + r0 * np.exp(1j * theta)
    return theta, _pair_at(omega, z, pair)


def trace_ray(omega, source, direction, R, *, pair_values=None,
              generation=0, seed_radius=0.05, tol_ray=TOL_RAY,
              max_steps=40_000):
    """Trace the level set Re int_source (mu_a - mu_b) = 0.

    For generation 0 the source must be a zero of w; the seed sits on the
    circle of `seed_radius` in the given direction and the pair defaults to
    the two roots whose anchored integral vanishes there.  For generation
    >= 1 the source is a crossing point and pair_values are required.
    """
    source = complex(source)
    if generation == 0:
        if omega.mode != "plane" or not any(abs(source - z0) < 1e-8
                                            for z0 in omega.zeros):
            raise ZeroOfDifferential(
                f"generation-0 ray source {source} is not a zero of w")
        theta = float(np.angle(complex(direction)))
        if pair_values is None:
            cands = seed_directions(omega, source, seed_radius)
            k = int(np.argmin([abs((th - theta + np.pi) % (2 * np.pi) - np.pi)
                               for th, _ in cands]))
            theta, pair_values = cands[k]
        return trace_ray_from_zero(omega, source, theta, pair_values, R,
                                   seed_radius=seed_radius, tol_ray=tol_ray,
                                   max_steps=max_steps)
    if pair_values is None:
        raise ValueError("secondary rays need explicit pair values")
    z1, p1, f1 = _newton_correct(omega, source, np.asarray(pair_values), 0j,
                                 tol_ray)
    sign = +1.0
    u = 1j * np.conj(p1[0] - p1[1])
    if (np.conj(complex(direction)) * u).real < 0:
        sign = -1.0
    verts, pairs, phis, term = _trace_from(
        omega, source, z1, p1, f1, sign, R, tol_ray=tol_ray,
        max_steps=max_steps)
    return StokesRay(source=source, pair_values=pairs, vertices=verts,
                     direction=complex(direction), generation=generation,
                     termination=term, phi=phis, source_kind="crossing")


def _trace_from(omega, anchor, z_start, pair_start, phi_start, sign, R, *,
                tol_ray=TOL_RAY, max_steps=40_000, curve_target=0.08,
                stop_points=(), stop_radius=0.0):
    """Core level-set marcher; returns (vertices, pairs, phis, termination)."""
    verts = [complex(z_start)]
    pairs = [np.asarray(pair_start, dtype=complex)]
    phis = [complex(phi_start)]
    arclen = 0.0
    scale = max(1.0, abs(R))
    h = 0.01 * scale

    def unit_dir(z, pair):
        dmu = pair[0] - pair[1]
        if dmu == 0:
            return None
        return sign * 1j * np.conj(dmu) / abs(dmu)

    z, pair, phi = verts[0], pairs[0], phis[0]
    u_prev = unit_dir(z, pair)
    if u_prev is None:
        raise TraceDivergence("degenerate pair at seed")
    termination = STEP_LIMIT
    for _ in range(max_steps):
        # RK2 predictor on arclength
        accepted = False
        collided = False
        for _try in range(40):
            u1 = unit_dir(z, pair)
            zm = z + 0.5 * h * u1
            pm = _pair_at(omega, zm, pair)
            u2 = unit_dir(zm, pm)
            if u2 is None:
                h *= 0.5
                collided = True
                continue
            z_new = z + h * u2
            pair_new = _pair_at(omega, z_new, pm)
            dmu_new = pair_new[0] - pair_new[1]
            if abs(dmu_new) < 1e-10 * max(1.0, np.max(np.abs(pair_new))):
                h *= 0.5
                collided = True
                continue
            turn = abs(np.angle(u2 / u1))
            if turn > curve_target:
                h *= 0.5
                continue
            accepted = True
            break
        if not accepted:
            if collided:
                # walked into a pair collision (another zero): stop here
                termination = HIT_CROSSING
                break
            raise TraceDivergence(f"step collapse near {z}")

        # accumulate Phi over the accepted chord, then Newton-correct
        dphi = _chord_pair_integral(omega, z, z_new, pair)
        phi_new = phi + dphi
        z_corr, pair_corr, phi_corr = _newton_correct(
            omega, z_new, pair_new, phi_new, tol_ray)
        arclen += abs(z_corr - z)
        z, pair, phi = z_corr, pair_corr, phi_corr
        verts.append(z)
        pairs.append(pair)
        phis.append(phi)
        u_prev = unit_dir(z, pair)
        if u_prev is None:
            termination = HIT_CROSSING
            break
        if abs(z) >= R:
            termination = ESCAPED
            break
        hit = False
        for p in stop_points:
            if abs(z - p) < stop_radius:
                hit = True
                break
        if hit:
            termination = HIT_CROSSING
            break
        # local root gap controls how closely we may approach other zeros
        gap = abs(pair[0] - pair[1])
        if gap < 1e-8 * max(1.0, np.max(np.abs(pair))):
            termination = HIT_CROSSING
            break
        h = min(h * 1.6, 0.03 * scale)
    return (np.array(verts), np.array(pairs), np.array(phis), termination)


def _chord_pair_integral(omega, a, b, pair_a):
    """Gauss quadrature of (mu_a - mu_b) along the chord a -> b."""
    zs = a + (b - a) * _GL_X
    prev = pair_a
    total = 0j
    for x, wgt in zip(zs, _GL_W):
        prev = _pair_at(omega, x, prev)
        total += wgt * (prev[0] - prev[1])
    return (b - a) * total


def _newton_correct(omega, z, pair, phi, tol_ray, iters=8):
    """Project z transversally onto Re Phi = 0, updating pair and Phi."""
    for _ in range(iters):
        res = phi.real
        dmu = pair[0] - pair[1]
        if abs(dmu) == 0:
            raise TraceDivergence(f"pair collision during correction at {z}")
        if abs(res) < 0.25 * tol_ray * max(1.0, abs(z)):
            return z, pair, phi
        v = np.conj(dmu) / abs(dmu)
        delta = -res / abs(dmu)
        z_new = z + delta * v
        dphi = _chord_pair_integral(omega, z, z_new, pair)
        pair = _pair_at(omega, z_new, pair)
        phi = phi + dphi
        z = z_new
    if abs(phi.real) > tol_ray * max(1.0, abs(z)):
        raise TraceDivergence(f"corrector stalled at {z}, residual {phi.real:.2e}")
    return z, pair, phi


def trace_ray_from_zero(omega, z0, theta, pair_at_seed, R, *, seed_radius=0.05,
                        tol_ray=TOL_RAY, max_steps=40_000, stop_points=(),
                        stop_radius=0.0):
    """Trace one primary ray seeded on the circle around the zero z0."""
    seed = z0 + seed_radius * np.exp(1j * theta)
    phi0 = _radial_pair_integral(omega, z0, seed, pair_at_seed)
    z, pair, phi = _newton_correct(omega, seed, np.asarray(pair_at_seed),
                                   phi0, tol_ray)
    # outward orientation, decided before tracing
    dmu = pair[0] - pair[1]
    u = 1j * np.conj(dmu) / abs(dmu)
    sign = +1.0 if (np.conj(z - z0) * u).real >= 0 else -1.0
    verts, pairs, phis, term = _trace_from(
        omega, z0, z, pair, phi, sign, R, tol_ray=tol_ray,
        max_steps=max_steps, stop_points=stop_points, stop_radius=stop_radius)
    return StokesRay(source=complex(z0), pair_values=pairs, vertices=verts,
                     direction=np.exp(1j * theta), generation=0,
                     termination=term, phi=phis, source_kind="zero")


def trace_level_arc(omega, z0, pair_values, length, sign=+1.0, *,
                    tol_ray=TOL_RAY, max_steps=20_000):
    """Polyline along the level set Re int_z0 (mu_a - mu_b) = const through
    z0 (zero dominance spread for that pair along the arc)."""
    verts = [complex(z0)]
    pair = np.asarray(pair_values, dtype=complex)
    z, phi = complex(z0), 0j
    arclen = 0.0
    h = min(0.05, length / 8)
    while arclen < length:
        dmu = pair[0] - pair[1]
        u1 = sign * 1j * np.conj(dmu) / abs(dmu)
        zm = z + 0.5 * h * u1
        pm = _pair_at(omega, zm, pair)
        u2 = sign * 1j * np.conj(pm[0] - pm[1]) / abs(pm[0] - pm[1])
        z_new = z + h * u2
        dphi = _chord_pair_integral(omega, z, z_new, pair)
        pair_new = _pair_at(omega, z_new, pair)
        z, pair, phi = _newton_correct(omega, z_new, pair_new, phi + dphi,
                                       tol_ray)
        arclen += abs(z - verts[-1])
        verts.append(z)
        if len(verts) > max_steps:
            raise TraceDivergence("level arc exceeded step budget")
    return PlanePath(tuple(verts), r_min=0.0)


def build_graph(omega: NDifferential, R=None, max_generations=3, *,
                seed_radius=None, tol_ray=TOL_RAY, tol_cross=None,
                max_steps=40_000, max_rays=400):
    """Trace all primary rays, detect crossings, seed secondary rays."""
    if omega.mode != "plane" or omega.degree < 1:
        return StokesGraph(omega, [], [], R or 2.0, False)
    zeros = omega.zeros
    if R is None:
        R = 2.0 + 3.0 * float(np.max(np.abs(zeros)))
    if tol_cross is None:
        tol_cross = 1e-6 * R
    if seed_radius is None:
        sep = np.inf
        for i in range(len(zeros)):
            for j in range(i + 1, len(zeros)):
                sep = min(sep, abs(zeros[i] - zeros[j]))
        seed_radius = min(0.012 * R, 0.12 * sep if np.isfinite(sep) else np.inf)

    rays = []
    stop_pts = tuple(zeros)
    for z0 in sorted(zeros, key=lambda w: (round(w.real, 12), round(w.imag, 12))):
        for theta, pair in seed_directions(omega, z0, seed_radius):
            ray = trace_ray_from_zero(
                omega, z0, theta, pair, R, seed_radius=seed_radius,
                tol_ray=tol_ray, max_steps=max_steps,
                stop_points=tuple(p for p in stop_pts if p != z0),
                stop_radius=0.8 * seed_radius)
            ray.index = len(rays)
            rays.append(ray)

    crossings = []
    truncated = False
    processed = set()
    generation = 0
    frontier = list(range(len(rays)))
    while frontier:
        new_crossings = _find_crossings(rays, frontier, tol_cross, seed_radius)
        births = []
        for c in new_crossings:
            key = (round(c.point.real, 8), round(c.point.imag, 8),
                   min(c.ray_a, c.ray_b), max(c.ray_a, c.ray_b))
            if key in processed:
                continue
            processed.add(key)
            c.index = len(crossings)
            crossings.append(c)
            births.extend(_secondary_seeds(omega, rays, c))
        if not births:
            break
        generation += 1
        if generation > max_generations or len(rays) + 2 * len(births) > max_rays:
            truncated = True
            break
        frontier = []
        for (q, pair, kappa, shared) in births:
            for sign in (+1.0, -1.0):
                try:
                    z1, p1, f1 = _newton_correct(omega, q, pair, 0j, tol_ray)
                    verts, pairs, phis, term = _trace_from(
                        omega, q, z1, p1, f1, sign, R, tol_ray=tol_ray,
                        max_steps=max_steps, stop_points=stop_pts,
                        stop_radius=0.8 * seed_radius)
                except TraceDivergence:
                    continue
                ray = StokesRay(source=q, pair_values=pairs, vertices=verts,
                                direction=(verts[1] - verts[0]) / abs(verts[1] - verts[0])
                                if len(verts) > 1 else 1.0 + 0j,
                                generation=generation, termination=term,
                                phi=phis, source_kind="crossing",
                                weight_kappa=kappa, parent_shared_value=shared)
                ray.index = len(rays)
                rays.append(ray)
                frontier.append(ray.index)
    return StokesGraph(omega, rays, crossings, R, truncated, seed_radius)


def _find_crossings(rays, frontier, tol_cross, seed_radius):
    """Pairwise polyline intersections involving at least one frontier ray."""
    out = []
    frontier_set = set(frontier)
    for ia in range(len(rays)):
        for ib in range(max(ia + 1, 0), len(rays)):
            if ia not in frontier_set and ib not in frontier_set:
                continue
            ra, rb = rays[ia], rays[ib]
            for q in _polyline_intersections(ra.vertices, rb.vertices, tol_cross):
                if abs(q - ra.source) < 2.0 * seed_radius and ra.source == rb.source:
                    continue
                if abs(q - ra.source) < 1e-9 or abs(q - rb.source) < 1e-9:
                    continue
                out.append(Crossing(point=q, ray_a=ia, ray_b=ib))
    out.sort(key=lambda c: (c.ray_a, c.ray_b, round(c.point.real, 9),
                            round(c.point.imag, 9)))
    return out


def _polyline_intersections(va, vb, tol):
    """Intersection points of two polylines (bbox-pruned exact 2x2 solves)."""
    a0, a1 = va[:-1], va[1:]
    b0, b1 = vb[:-1], vb[1:]
    if len(a0) == 0 or len(b0) == 0:
        return []
    aminx = np.minimum(a0.real, a1.real)[:, None]
    amaxx = np.maximum(a0.real, a1.real)[:, None]
    aminy = np.minimum(a0.imag, a1.imag)[:, None]
    amaxy = np.maximum(a0.imag, a1.imag)[:, None]
    bminx = np.minimum(b0.real, b1.real)[None, :]
    bmaxx = np.maximum(b0.real, b1.real)[None, :]
    bminy = np.minimum(b0.imag, b1.imag)[None, :]
    bmaxy = np.maximum(b0.imag, b1.imag)[None, :]
    mask = (aminx <= bmaxx + tol) & (bminx <= amaxx + tol) & \
           (aminy <= bmaxy + tol) & (bminy <= amaxy + tol)
    pts = []
    for i, j in zip(*np.nonzero(mask)):
        q = _segment_intersection(a0[i], a1[i], b0[j], b1[j])
        if q is None:
            continue
        if all(abs(q - p) > tol for p in pts):
            pts.append(q)
    return pts


def _segment_intersection(a0, a1, b0, b1):
    da, db = a1 - a0, b1 - b0
    det = da.real * (-db.imag) - (-db.real) * da.imag
    if abs(det) < 1e-14 * max(abs(da), abs(db)) ** 2:
        return None
    rhs = b0 - a0
    t = (rhs.real * (-db.imag) - (-db.real) * rhs.imag) / det
    s = (da.real * rhs.imag - da.imag * rhs.real) / det
    if -1e-12 <= t <= 1 + 1e-12 and -1e-12 <= s <= 1 + 1e-12:
        return a0 + t * da
    return None


def _secondary_seeds(omega, rays, crossing):
    """Birth rule: l_ab x l_bd with one shared root value -> seed l_ad.

    Also computes the exponential-weight exponent kappa =
    int (mu_b - mu_d) from the second parent's source to the crossing along
    that parent, plus the first parent's piece back to its source; on the
    parents' own level sets these integrals are (numerically) imaginary.
    """
    ra, rb = rays[crossing.ray_a], rays[crossing.ray_b]
    q = crossing.point
    va = _pair_at(omega, q, ra.values_near(q))
    vb = _pair_at(omega, q, rb.values_near(q))
    scale = max(np.max(np.abs(va)), np.max(np.abs(vb)))
    tol = 1e-6 * scale
    shared = []
    for i in range(2):
        for j in range(2):
            if abs(va[i] - vb[j]) < tol:
                shared.append((i, j))
    if len(shared) != 1:
        return []
    i_sh, j_sh = shared[0]
    alpha = va[1 - i_sh]      # the non-shared value on parent a
    beta = va[i_sh]           # shared
    delta = vb[1 - j_sh]      # the non-shared value on parent b
    if abs(alpha - delta) < tol:
        return []
    kappa = _ray_integral_to(omega, rb, q, (beta, delta)) \
        - _ray_integral_to(omega, ra, q, (beta, delta))
    pair = np.array([alpha, delta])
    return [(q, pair, kappa, beta)]


def _ray_integral_to(omega, ray, q, pair_values):
    """int of (v0 - v1) from the ray's source to q along the ray polyline,
    continuing the given pair values backwards from q."""
    verts = ray.vertices
    d = np.abs(verts - q)
    k = int(np.argmin(d))
    pts = list(verts[:k + 1]) + [q]
    total = 0j
    prev = _pair_at(omega, q, np.asarray(pair_values))
    # integrate backwards (q -> source), then negate
    for a, b in zip(pts[::-1], pts[::-1][1:]):
        zs = a + (b - a) * _GL_X
        seg = 0j
        for x, wgt in zip(zs, _GL_W):
            prev = _pair_at(omega, x, prev)
            seg += wgt * (prev[0] - prev[1])
        total += (b - a) * seg
    return -total


@dataclass
class PathEvent:
    s: float                 # arclength parameter along the path
    point: complex
    ray_index: int
    pair_path_indices: tuple  # indices into the path's sheet continuation
    pair_values: np.ndarray   # ray pair values continued to the point
    direction: int = 1       # +1: path crosses with positive orientation
                             # (Im(conj(ray tangent) * path tangent) > 0)
    pos_dominant: int = 0    # which of the pair dominates on the positive side
    ray_phi: complex = 0j    # int_source^q (mu_a - mu_b) along the ray


@dataclass
class PathDecomposition:
    path: PlanePath
    segments: list            # list of PlanePath
    events: list              # list of PathEvent

    def events_csv(self):
        lines = ["s,point_re,point_im,ray,alpha,beta"]
        for e in self.events:
            lines.append(f"{e.s:.12g},{e.point.real:.12g},{e.point.imag:.12g},"
                         f"{e.ray_index},{e.pair_path_indices[0]},"
                         f"{e.pair_path_indices[1]}")
        return "\n".join(lines) + "\n"


def decompose_path(path: PlanePath, graph: StokesGraph, sheets=None, *,
                   tol_tangent=1e-3, tol_cross=None):
    """Split a path at its ray crossings, ordered by arclength.

    sheets: optional precomputed SheetAssignment of the path (continued from
    its start); computed on demand.  Events carry the crossing point, the
    ray, and the path-frame indices of the ray's sheet pair.
    """
    from .ndiff import continue_roots
    omega = graph.omega
    if omega.mode == "plane":
        path.check_clearance(omega.zeros)
    if tol_cross is None:
        tol_cross = 1e-6 * graph.radius
    if sheets is None:
        sheets = continue_roots(omega, path)

    verts = np.array(path.vertices)
    raw = []
    for ray in graph.rays:
        for k in range(len(verts) - 1):
            a, b = verts[k], verts[k + 1]
            for q in _polyline_intersections(np.array([a, b]), ray.vertices,
                                             tol_cross):
                # transversality: compare path edge and local ray direction
                idx = int(np.argmin(np.abs(ray.vertices - q)))
                i2 = min(idx + 1, len(ray.vertices) - 1)
                i1 = max(0, i2 - 1)
                rdir = ray.vertices[i2] - ray.vertices[i1]
                pdir = b - a
                denom = abs(rdir) * abs(pdir)
                if denom == 0:
                    continue
                cross = (np.conj(rdir) * pdir).imag
                if abs(cross) / denom < tol_tangent:
                    raise TangentialCrossing(
                        f"path edge {k} tangent to ray {ray.index} at {q}")
                s_here = float(np.sum(np.abs(np.diff(verts[:k + 1])))) + abs(q - a)
                raw.append((s_here, q, ray, 1 if cross > 0 else -1))
    raw.sort(key=lambda e: e[0])
    # drop duplicates found from two adjacent path edges sharing a vertex
    deduped = []
    for s_here, q, ray, sgn in raw:
        if deduped and ray.index == deduped[-1][2].index and \
                abs(q - deduped[-1][1]) < tol_cross:
            continue
        deduped.append((s_here, q, ray, sgn))
    # merge events where two traced rays overlap along one Stokes line
    # (saddle configurations trace the same line from both ends); keep the
    # ray whose source is closest, so loop fits anchor to the local zero
    def _tangent(ray, q):
        idx = int(np.argmin(np.abs(ray.vertices - q)))
        i2 = min(idx + 1, len(ray.vertices) - 1)
        i1 = max(0, i2 - 1)
        d = ray.vertices[i2] - ray.vertices[i1]
        return d / abs(d)

    merged = []
    for ev in deduped:
        s_here, q, ray, sgn = ev
        if merged:
            s2, q2, ray2, sgn2 = merged[-1]
            if ray.index != ray2.index and \
                    abs(q - q2) < max(10 * tol_cross, 5e-3 * graph.radius):
                vals1 = sorted(_pair_at(omega, q, ray.values_near(q)),
                               key=lambda v: (v.real, v.imag))
                vals2 = sorted(_pair_at(omega, q, ray2.values_near(q)),
                               key=lambda v: (v.real, v.imag))
                parallel = abs((_tangent(ray, q) *
                                np.conj(_tangent(ray2, q2))).imag) < 0.05
                if parallel and np.allclose(vals1, vals2, rtol=1e-4,
                                            atol=1e-9):
                    if abs(q - ray.source) < abs(q2 - ray2.source):
                        merged[-1] = ev
                    continue
        merged.append(ev)
    deduped = merged

    events = []
    prev_s = None
    for s_here, q, ray, sgn in deduped:
        if prev_s is not None and s_here - prev_s < tol_cross:
            warnings.warn(f"events at s={prev_s:.6g} and s={s_here:.6g} nearly "
                          f"coincide", NearDoubleCrossing)
        prev_s = s_here
        ray_vals = _pair_at(omega, q, ray.values_near(q))
        path_vals = roots_at(omega, q, near=_sheet_values_at(sheets, q))
        ia = int(np.argmin(np.abs(path_vals - ray_vals[0])))
        ib = int(np.argmin(np.abs(path_vals - ray_vals[1])))
        if ia == ib:
            raise ZeroOfDifferential(f"pair matching degenerate at {q}")
        # which pair sheet dominates on the positive-crossing side:
        # d/ds Re int (mu_a - mu_b) along i * (ray tangent)
        idx = int(np.argmin(np.abs(ray.vertices - q)))
        i2 = min(idx + 1, len(ray.vertices) - 1)
        i1 = max(0, i2 - 1)
        rhat = ray.vertices[i2] - ray.vertices[i1]
        rhat = rhat / abs(rhat)
        growth_pos = ((ray_vals[0] - ray_vals[1]) * 1j * rhat).real
        # accumulated pair integral of the ray at q (source-anchored)
        phi_q = ray.phi[idx] + _chord_pair_integral(
            omega, ray.vertices[idx], q, ray.pair_values[idx])
        events.append(PathEvent(s=s_here, point=q, ray_index=ray.index,
                                pair_path_indices=(ia, ib),
                                pair_values=ray_vals, direction=sgn,
                                pos_dominant=0 if growth_pos > 0 else 1,
                                ray_phi=complex(phi_q)))

    segments = _split_path(path, [e for e in events])
    return PathDecomposition(path=path, segments=segments, events=events)


def _sheet_values_at(sheets, q):
    """Path-sheet values at the path point nearest to q."""
    idx = int(np.argmin(np.abs(np.array(sheets.path.vertices) - q)))
    return sheets.values[idx]


def _split_path(path, events):
    """Segments between consecutive events; always len(events) + 1 pieces
    (zero-length pieces are single-vertex paths)."""
    verts = list(path.vertices)
    if not events:
        return [path]

    def make(pieces):
        if len(pieces) >= 2:
            return PlanePath(tuple(pieces), path.r_min)
        return PlanePath((pieces[0],), path.r_min)

    segs = []
    cur = [verts[0]]
    acc = 0.0
    ei = 0
    for a, b in zip(verts, verts[1:]):
        edge = abs(b - a)
        while ei < len(events) and acc + edge >= events[ei].s - 1e-12:
            q = events[ei].point
            if abs(q - cur[-1]) > 1e-12:
                cur.append(q)
            segs.append(make(cur))
            cur = [q]
            ei += 1
        if abs(b - cur[-1]) > 1e-12:
            cur.append(b)
        acc += edge
    segs.append(make(cur))
    return segs
