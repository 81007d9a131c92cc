"""WKB frames, dominant-term transfer products, Stokes-factor fits, and the
asymptotic residual ladders behind the dominant-term and growth-rate claims.

Frame convention: F(z) = w^((1-n)/(2n)) * P0(z) with P0 the Vandermonde of
the sheet values.  The frame-corrected transfer rho(t) =
F_cont(end)^(-1) T(start->end) F(start) factorizes asymptotically as

    rho(t) ~ E(g_{N+1}) U_N E(g_N) ... U_1 E(g_1),

E(g) = diag exp(t^(1/n) int_g mu_i) over the decomposition segments and
U_k = I + u_k E_(a,b) the unipotent factor of the crossed ray (u is the
constant fit_stokes_factor measures; it equals the inverse-orientation
constant of the sector-to-sector connection).
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import (DominanceTie, FactorMismatch, LadderTooShort,
                     NonUnipotentConnection, SectorTooWide,
                     ZeroOfDifferential)
from .jets import Jet
from .ndiff import (NDifferential, PlanePath, SheetAssignment, continue_roots,
                    natural_coords_all, flat_length, roots_at)
from .odeint import ScaledMatrix, integrate_transfer, vandermonde_frame
from .stokesgeo import (HIT_CROSSING, PathDecomposition, StokesGraph,
                        decompose_path)

DEFAULT_LADDER = (1e2, 1e3, 1e4, 1e5)
TOL_FIT = 1e-3


@dataclass
class WKBFrame:
    """Pointwise WKB frame: P0 diagonalizes the companion coefficient."""

    z: complex
    mu: np.ndarray           # sheet values, the diagonal of B0
    amplitude: complex       # w^((1-n)/(2n)) on the tracked branch
    log_omega: complex

    @property
    def P0(self):
        return vandermonde_frame(self.mu)

    @property
    def B0(self):
        return np.diag(self.mu)

    def matrix(self):
        return self.amplitude * self.P0

    def corrected_matrix(self, omega, eps, order=2):
        """F * (I + eps K1 + eps^2 K2): higher-order WKB anchor data.

        K1 = N_ij/(mu_i - mu_j) for N = offdiag(F^-1 F'), K2 from the next
        order of the diagonalizing expansion.  Used to seed sector bases
        with smaller contamination than the bare frame.
        """
        n = len(self.mu)
        F = self.matrix()
        if order == 0:
            return F
        K1, K2 = _anchor_corrections(omega, self.z, self.mu)
        S = np.eye(n, dtype=complex) + eps * K1
        if order >= 2:
            S = S + eps * eps * K2
        return F @ S


def frame(omega: NDifferential, z, mu_values=None, log_omega=None,
          min_abs=1e-12):
    """WKB frame at z; branch data from a continuation when supplied."""
    w = complex(omega(z))
    if abs(w) < min_abs * max(1.0, omega.coefficient_scale()):
        raise ZeroOfDifferential(f"frame at zero of w: z={z}")
    if mu_values is None:
        mu_values = roots_at(omega, z)
    lw = complex(np.log(w)) if log_omega is None else complex(log_omega)
    n = omega.n
    a = np.exp((1.0 - n) / (2.0 * n) * lw)
    return WKBFrame(z=complex(z), mu=np.asarray(mu_values, dtype=complex),
                    amplitude=a, log_omega=lw)


def frame_from_sheets(omega, sheets: SheetAssignment, index):
    """Frame at a continuation vertex, branch-consistent with the path."""
    z = sheets.path.vertices[index]
    return frame(omega, z, mu_values=sheets.values[index],
                 log_omega=sheets.log_omega[index])


def _anchor_corrections(omega, z, mu):
    """(K1, K2) of the WKB anchor expansion at z."""
    n = len(mu)
    w = complex(omega(z))
    wp = complex(omega.derivative(z))
    wpp = complex(omega.derivative(z, 2))
    delta = wp / (n * w)
    deltap = wpp / (n * w) - n * delta * delta
    P0 = vandermonde_frame(mu)
    Drow = np.diag(np.arange(n, dtype=float))
    G = np.linalg.solve(P0, Drow @ P0)       # constant in z along a sheet orbit
    dmu = mu[:, None] - mu[None, :]
    np.fill_diagonal(dmu, 1.0)
    Ghat = G / dmu
    np.fill_diagonal(Ghat, 0.0)
    N = delta * G
    np.fill_diagonal(N, 0.0)
    K1 = delta * Ghat
    K1p = (deltap - delta * delta) * Ghat
    M = K1p + N @ K1
    K2 = M / dmu
    np.fill_diagonal(K2, 0.0)
    return K1, K2


def segment_zetas(omega, segment: PlanePath, base_values, base_log):
    """Per-sheet natural-coordinate increments along one segment.

    Returns (zeta vector, end sheet values, end log w) so consecutive
    segments can chain their continuations.
    """
    sheets = continue_roots(omega, segment, base_values=base_values,
                            base_log=base_log)
    z = natural_coords_all(omega, sheets)
    return z, sheets.end_values(), sheets.end_log_omega(), sheets


def e_factor(omega, segment: PlanePath, t, base_values=None, base_log=None):
    """diag exp(t^(1/n) int mu_i) over a segment, overflow-safe."""
    n = omega.n
    if segment.length() == 0.0:
        return ScaledMatrix.identity(n)
    if base_values is None:
        base_values = roots_at(omega, segment.start)
    if base_log is None:
        base_log = np.log(omega(segment.start))
    zetas, _, _, _ = segment_zetas(omega, segment, base_values, base_log)
    return _exp_diag(t ** (1.0 / n) * zetas)


def _exp_diag(exponents):
    x = np.asarray(exponents, dtype=complex)
    s = float(np.max(x.real))
    return ScaledMatrix(np.diag(np.exp(x - s)), s)


@dataclass
class StokesFactor:
    """Fitted unipotent factor of one ray.

    Crossing the ray with positive orientation (the ray tangent, then the
    path tangent, positively oriented) applies U = I + u(t) E over the
    pattern slot; the negative orientation applies U^(-1) = I - u(t) E.
    `slot` picks the pattern entry: +1 means row = first of the ray's pair,
    column = second; -1 the transpose slot.  For secondary rays
    u(t) = a exp(t^(1/n) kappa); `constant` stores the de-weighted,
    ladder-extrapolated a.
    """

    ray_index: int
    base: complex
    pair_values: tuple
    constant: complex               # extrapolated de-weighted constant
    residual: float                 # off-pattern mass of the arc audit at ladder top
    t: float                        # ladder top
    slot: int = 1
    kappa: complex = 0j
    by_t: dict = field(default_factory=dict)   # t -> total pattern constant u(t)
    diag_dev: float = 0.0
    solve_residuals: dict = field(default_factory=dict)
    visible_by_t: dict = field(default_factory=dict)  # arc-audit pattern entry

    def u_total(self, t, n):
        if t in self.by_t:
            return self.by_t[t]
        return self.constant * np.exp(t ** (1.0 / n) * self.kappa)

    def to_json(self):
        return json.dumps({
            "ray": self.ray_index,
            "base": [self.base.real, self.base.imag],
            "pair": [[v.real, v.imag] for v in self.pair_values],
            "a": [self.constant.real, self.constant.imag],
            "slot": self.slot,
            "residual": self.residual,
            "t": self.t,
        }, sort_keys=True)


@dataclass
class AsymptoticReport:
    ladder: tuple
    values: tuple
    extrapolated: float
    monotone_tail: bool
    meta: dict = field(default_factory=dict)

    def to_json(self):
        return json.dumps({
            "ladder": list(self.ladder), "values": list(self.values),
            "extrapolated": self.extrapolated,
            "monotone_tail": self.monotone_tail, **self.meta,
        }, sort_keys=True)

    def to_csv(self):
        lines = ["t,value"]
        for t, v in zip(self.ladder, self.values):
            lines.append(f"{t:.12g},{v:.12g}")
        return "\n".join(lines) + "\n"


def _check_ladder(t_ladder):
    t = tuple(float(x) for x in t_ladder)
    if len(t) < 4 or any(b <= a for a, b in zip(t, t[1:])):
        raise LadderTooShort(f"need >= 4 strictly increasing t values, got {t}")
    return t


def _extrapolate(ladder, values, n):
    """Least-squares fit value ~ c0 + c1 x + c2 x^2, x = t^(-1/n);
    returns c0 (the quadratic term only with >= 4 rungs)."""
    x = np.asarray(ladder, float) ** (-1.0 / n)
    cols = [np.ones_like(x), x]
    if len(x) >= 4:
        cols.append(x ** 2)
    A = np.stack(cols, axis=1)
    vals = np.asarray(values)
    c, *_ = np.linalg.lstsq(A, vals, rcond=None)
    return c[0]


def _monotone_tail(values, k=3):
    v = [abs(x) for x in values]
    tail = v[-min(k + 1, len(v)):]
    return all(b < a for a, b in zip(tail, tail[1:]))


def fit_stokes_factor(omega, graph: StokesGraph, ray_index, t_ladder, *,
                      anchor_order=2, tol_fit=TOL_FIT, rtol=1e-10,
                      eta_window=(6.0, 40.0), audit_hspan=6.0):
    """Fit the unipotent factor of one ray.

    The pattern constants come from the trivial-monodromy solve: the
    frame-corrected holonomy of a loop around the ray's source is exact
    branch bookkeeping (closed loop, entire coefficients), and the product
    of segment e-factors and the unknown unipotents must reproduce it.
    Around a zero this determines all of its ray constants at once (the
    classical n^2 - 1 equation count); around a crossing it determines the
    secondary-line constants given the parents'.

    A separate short-arc connection measurement supplies the unipotence
    audit (diagonal deviation and off-pattern mass); the Stokes jump itself
    sits below every polynomial order of smooth WKB anchors, which is why
    the constant is solved from monodromy instead of read off the arc.
    """
    t_ladder = _check_ladder(t_ladder)
    cache = _factor_cache(graph)
    if ray_index not in cache:
        _solve_source_group(omega, graph, graph.rays[ray_index].source,
                            t_ladder, eta_window, cache)
    factor = cache[ray_index]
    # arc audit at the ladder top
    ray = graph.rays[ray_index]
    reach = np.max(np.abs(ray.vertices - ray.source))
    audit_radius = min(0.55 * graph.radius, 0.8 * reach)
    q, pair_q = ray.point_at_radius(audit_radius)
    for t in t_ladder:
        tn = t ** (1.0 / omega.n)
        dth = _solve_halfwidth(omega, ray.source, q, pair_q, tn,
                               audit_hspan, 0.6)
        u_vis, off, diag_dev, _ = _audit_once(
            omega, ray.source, q, pair_q, dth, t, anchor_order, rtol)
        factor.visible_by_t[t] = u_vis
        factor.residual = float(off)
        factor.diag_dev = float(diag_dev)
    if factor.diag_dev > tol_fit:
        raise NonUnipotentConnection(
            f"diagonal deviates by {factor.diag_dev:.2e} > {tol_fit} "
            f"at t={t_ladder[-1]}")
    return factor


def _factor_cache(graph):
    if not hasattr(graph, "_factor_cache"):
        graph._factor_cache = {}
    return graph._factor_cache


def circle_path(center, radius, start_angle, m=256, r_min=0.0):
    """Closed CCW circle polyline starting and ending at start_angle."""
    phis = start_angle + np.linspace(0.0, 2 * np.pi, m + 1)
    pts = center + radius * np.exp(1j * phis)
    pts[-1] = pts[0]
    return PlanePath(tuple(pts), r_min=r_min)


def loop_holonomy_exact(omega, sheets: SheetAssignment):
    """F_cont(end)^(-1) F(start) for a closed loop: the exact monodromy of
    the frame-corrected transfer (T = I for entire coefficients)."""
    F0 = frame_from_sheets(omega, sheets, 0).matrix()
    F1 = frame_from_sheets(omega, sheets, len(sheets.path.vertices) - 1).matrix()
    return ScaledMatrix(np.linalg.solve(F1, F0))


def _group_rays(graph, source, tol=1e-9):
    return [r.index for r in graph.rays if abs(r.source - source) < tol]


def _isolation_radius(graph, source, group):
    """Distance from the source to the nearest genuinely foreign ray.

    Rays terminating at the source (saddle partners: the same Stokes line
    traced from the other end) do not count; decompose merges their events
    with the local rays'.
    """
    iso = graph.radius
    from .ndiff import _segment_distance
    for r in graph.rays:
        if r.index in group:
            continue
        if r.termination == HIT_CROSSING and \
                abs(r.vertices[-1] - source) < 2.0 * graph.seed_radius:
            continue
        v = r.vertices
        d = min(_segment_distance(a, b, source) for a, b in zip(v, v[1:])) \
            if len(v) > 1 else abs(v[0] - source)
        iso = min(iso, d)
    return iso


def _pair_scale_at(graph, group, radius):
    """Largest |int (mu_a - mu_b)| among the group rays at a given radius."""
    best = 0.0
    for idx in group:
        ray = graph.rays[idx]
        d = np.abs(ray.vertices - ray.source)
        if d[-1] < radius:
            continue
        k = int(np.searchsorted(np.maximum.accumulate(d), radius))
        k = min(k, len(ray.phi) - 1)
        best = max(best, float(np.abs(ray.phi[k])))
    return best


def _solve_source_group(omega, graph, source, t_ladder, eta_window, cache):
    """Solve all unfitted factors sourced at `source` from loop monodromy."""
    n = omega.n
    group = _group_rays(graph, source)
    if not group:
        raise FactorMismatch(f"no rays sourced at {source}")
    reach = min(float(np.max(np.abs(graph.rays[i].vertices - source)))
                for i in group)
    r_hi = min(0.6 * graph.radius, 0.9 * reach)
    # keep the loop on this zero's side of any saddle partner so the
    # overlap merge resolves consistently toward the local source
    if omega.mode == "plane":
        for z0 in omega.zeros:
            d = abs(z0 - source)
            if d > 1e-9:
                r_hi = min(r_hi, 0.45 * d)
    r_lo = max(1.3 * graph.seed_radius, 1e-3)
    if r_hi <= r_lo:
        r_hi = 1.5 * r_lo
    eta_lo, eta_hi = eta_window

    # known factors that the loop may cross (secondary loops cross parents)
    def radius_for(t):
        tn = t ** (1.0 / n)
        if _pair_scale_at(graph, group, r_hi) * tn <= eta_hi:
            return r_hi
        lo, hi = r_lo, r_hi
        for _ in range(40):
            mid = 0.5 * (lo + hi)
            if _pair_scale_at(graph, group, mid) * tn > 0.5 * (eta_lo + eta_hi):
                hi = mid
            else:
                lo = mid
        return 0.5 * (lo + hi)

    rung_solutions = {}
    etas = {}
    prev = None
    slot_rule = None
    for t in t_ladder:
        r_t = radius_for(t)
        eta = _pair_scale_at(graph, group, r_t) * t ** (1.0 / n)
        radii = [r_t]
        r2 = max(0.72 * r_t, r_lo)
        if r2 < 0.95 * r_t:
            radii.append(r2)
        sol, resid, slot_rule = _solve_loops_at(
            omega, graph, source, group, radii, t, cache, warm=prev,
            slot_rule=slot_rule)
        rung_solutions[t] = (sol, resid)
        etas[t] = max(eta, 1e-12)
        if resid < 0.2:
            prev = sol

    ts_good = [t for t in t_ladder if rung_solutions[t][1] < 0.2]
    if len(ts_good) < 2:
        raise FactorMismatch(
            f"monodromy solve converged on {len(ts_good)} rungs only; "
            f"residuals {[rung_solutions[t][1] for t in t_ladder]}")

    # regression against 1/eta (the frame-bias scale) per solved ray;
    # transversal foreign rays picked up by the loops are cached too when
    # they were present on enough rungs
    solved = set()
    for t in ts_good:
        solved.update(rung_solutions[t][0].keys())
    for ridx in sorted(solved):
        ts_ray = [t for t in ts_good if ridx in rung_solutions[t][0]]
        if ridx not in group and len(ts_ray) < max(3, len(ts_good) - 1):
            continue
        if len(ts_ray) < 2:
            if ridx in group:
                raise FactorMismatch(
                    f"ray {ridx} solved on {len(ts_ray)} rungs only")
            continue
        kappa = complex(graph.rays[ridx].weight_kappa)
        x = np.array([1.0 / etas[t] for t in ts_ray])
        A = np.stack([np.ones_like(x), x], axis=1)
        de_w = np.array([rung_solutions[t][0][ridx] *
                         np.exp(-t ** (1.0 / n) * kappa) for t in ts_ray])
        c, *_ = np.linalg.lstsq(A, de_w, rcond=None)
        a0, a1 = complex(c[0]), complex(c[1])
        by_t = {}
        for t in t_ladder:
            if t in ts_ray:
                by_t[t] = rung_solutions[t][0][ridx]
            else:
                by_t[t] = (a0 + a1 / etas[t]) * np.exp(t ** (1.0 / n) * kappa)
        ray = graph.rays[ridx]
        cache[ridx] = StokesFactor(
            ray_index=ridx, base=ray.source,
            pair_values=tuple(ray.pair_values[0]),
            constant=a0, residual=0.0, t=float(ts_ray[-1]),
            slot=slot_rule, kappa=kappa, by_t=by_t,
            solve_residuals={t: rung_solutions[t][1] for t in t_ladder})
    for ridx in group:
        if ridx not in cache:
            raise FactorMismatch(f"group ray {ridx} not crossed by fit loops")


def _loop_system(omega, graph, source, group, radius, t, cache, m_gon=256,
                 gen_cap=None):
    """Assemble (Es, patterns, rho) for one loop radius.

    gen_cap filters the ray set the loop is decomposed against; primary
    constants are solved against the generation-0 subgraph (secondary lines
    are exponentially dormant near the zeros, which the solve residual
    verifies after the fact).
    """
    n = omega.n
    tn = t ** (1.0 / n)
    angles = []
    for idx in group:
        ray = graph.rays[idx]
        d = np.abs(ray.vertices - ray.source)
        if d[-1] >= radius:
            angles.append(ray.angle_at_radius(radius))
    angles = sorted(a % (2 * np.pi) for a in angles)
    if not angles:
        raise FactorMismatch(f"no group ray reaches radius {radius}")
    gaps = [(angles[(i + 1) % len(angles)] - angles[i]) % (2 * np.pi)
            for i in range(len(angles))]
    k = int(np.argmax(gaps))
    start = angles[k] + 0.5 * gaps[k]

    loop = circle_path(source, radius, start, m=m_gon)
    sheets = continue_roots(omega, loop)
    if gen_cap is None:
        gen_cap = max(graph.rays[i].generation for i in group)
    sub = StokesGraph(omega=omega,
                      rays=[r for r in graph.rays if r.generation <= gen_cap],
                      crossings=graph.crossings, radius=graph.radius,
                      truncated=graph.truncated,
                      seed_radius=graph.seed_radius)
    decomp = decompose_path(loop, sub, sheets=sheets)
    rho = loop_holonomy_exact(omega, sheets)

    Es = []
    base_vals, base_log = sheets.values[0], sheets.log_omega[0]
    for seg in decomp.segments:
        zetas, base_vals, base_log, _ = segment_zetas(omega, seg, base_vals,
                                                      base_log)
        Es.append(_exp_diag(tn * zetas))

    patterns = []
    for e in decomp.events:
        if e.ray_index in cache:
            patterns.append(("known", e))
        else:
            # unfitted rays (own or transversal foreign lines) enter the
            # solve as unknowns; saddle-overlapping duplicates were merged
            # by decompose_path
            patterns.append(("unknown", e))
    return Es, patterns, rho.to_plain()


def _solve_loops_at(omega, graph, source, group, radii, t, cache, *,
                    warm=None, slot_rule=None):
    """Monodromy solve for the constants of all unfitted rays crossed by
    loops around `source`, joint over several loop radii.  The constants
    are radius-independent, which singles out the physical root of the
    polynomial system; spurious single-loop roots do not survive the
    second radius."""
    n = omega.n
    raw = [_loop_system(omega, graph, source, group, r, t, cache)
           for r in radii]
    unknown_index = {}
    for Es, patterns, _ in raw:
        for kind, e in patterns:
            if kind == "unknown" and e.ray_index not in unknown_index:
                unknown_index[e.ray_index] = len(unknown_index)
    m_unk = len(unknown_index)
    if m_unk == 0:
        raise FactorMismatch("loop crosses no unfitted rays")
    order = sorted(unknown_index, key=unknown_index.get)

    from scipy.optimize import least_squares

    def attempt(rule):
        models = [_LoopModel(Es, patterns, rho, unknown_index, cache, t, n,
                             rule) for Es, patterns, rho in raw]

        def pack(R_J):
            pass

        def fun(xs):
            u = xs[0::2] + 1j * xs[1::2]
            out = []
            for mdl in models:
                R, _ = mdl.resid_and_jac(u, m_unk)
                out.append(R.real.ravel())
                out.append(R.imag.ravel())
            return np.concatenate(out)

        def jac(xs):
            u = xs[0::2] + 1j * xs[1::2]
            blocks = []
            for mdl in models:
                _, J = mdl.resid_and_jac(u, m_unk)
                Jflat = J.reshape(-1, m_unk)
                re = np.empty((Jflat.shape[0], 2 * m_unk))
                re[:, 0::2] = Jflat.real
                re[:, 1::2] = -Jflat.imag
                im = np.empty((Jflat.shape[0], 2 * m_unk))
                im[:, 0::2] = Jflat.imag
                im[:, 1::2] = Jflat.real
                blocks.append(re)
                blocks.append(im)
            return np.concatenate(blocks, axis=0)

        rng = np.random.default_rng(7)
        starts = []
        if warm is not None:
            starts.append(np.concatenate(
                [[warm.get(r, 0j).real, warm.get(r, 0j).imag]
                 for r in order]))
        starts.append(np.zeros(2 * m_unk))
        for _ in range(4):
            starts.append(rng.normal(scale=0.7, size=2 * m_unk))
        n_resid = sum(2 * s[2].size for s in raw)
        method = "lm" if n_resid >= 2 * m_unk else "trf"
        best = None
        for x0 in starts:
            res = least_squares(fun, x0, jac=jac, method=method,
                                xtol=1e-15, ftol=1e-15, gtol=1e-15,
                                max_nfev=400)
            fnorm = float(np.linalg.norm(res.fun))
            if best is None or fnorm < best[1]:
                best = (res.x, fnorm)
            if fnorm < 1e-8:
                break
        sol = {ridx: best[0][2 * i] + 1j * best[0][2 * i + 1]
               for ridx, i in unknown_index.items()}
        return sol, best[1]

    if slot_rule is not None:
        sol, resid = attempt(slot_rule)
        return sol, resid, slot_rule
    sol_p, resid_p = attempt(+1)
    sol_m, resid_m = attempt(-1)
    if resid_p <= resid_m:
        return sol_p, resid_p, +1
    return sol_m, resid_m, -1


class _LoopModel:
    """One loop's product model, compiled to plain-matrix form.

    P(u) = exp(L) * M_{N+1} V_N M_N ... V_1 M_1 with constant diagonal
    blocks M_k and V_k = I + d_k w_k u_{j(k)} E_(r_k, c_k); multilinearity
    in the unknowns gives the Jacobian from prefix/suffix products.
    """

    def __init__(self, Es, patterns, rho, unknown_index, cache, t, n, rule):
        tn = t ** (1.0 / n)
        self.n = n
        self.rho = rho
        self.Ms = []
        self.L = 0.0
        for E in Es:
            self.Ms.append(E.m)
            self.L += E.logscale
        self.events = []   # (uidx or None, coeff, row, col, const_u)
        for kind, e in patterns:
            if kind == "unknown":
                slot = rule
                uidx = unknown_index[e.ray_index]
                base = 1.0
            else:
                fac = cache[e.ray_index]
                slot = fac.slot
                uidx = None
                base = fac.u_total(t, n)
            ia, ib = e.pair_path_indices
            dom = (ia, ib)[e.pos_dominant]
            rec = (ia, ib)[1 - e.pos_dominant]
            row, col = (dom, rec) if slot > 0 else (rec, dom)
            sigma = 1.0 if (row, col) == (ia, ib) else -1.0
            coeff = e.direction * base * np.exp(sigma * tn * e.ray_phi)
            self.events.append((uidx, coeff, row, col))
        # honest per-entry scale with |u| ~ 1 nominal chains
        eps = t ** (-1.0 / n)
        A = np.abs(self.Ms[0]).astype(float)
        alog = 0.0
        for k, (uidx, coeff, row, col) in enumerate(self.events):
            U = np.eye(n)
            U[row, col] += abs(coeff)
            A = np.abs(self.Ms[k + 1]) @ U @ A
            m = A.max()
            if m > 0:
                A /= m
                alog += np.log(m)
        self.scale = np.abs(rho) + \
            eps * A * np.exp(min(alog + self.L, 260.0)) + 1e-280

    def resid_and_jac(self, u, m_unk):
        n = self.n
        N = len(self.events)
        Vs = []
        for (uidx, coeff, row, col) in self.events:
            V = np.eye(n, dtype=complex)
            V[row, col] += coeff * (u[uidx] if uidx is not None else 1.0)
            Vs.append(V)
        prefix = [self.Ms[0]]            # prefix[k] = M_k V_{k-1} ... M_0
        for k, V in enumerate(Vs):
            prefix.append(self.Ms[k + 1] @ (V @ prefix[-1]))
        tail = [None] * max(N, 1)        # tail[k] = M_N V_{N-1} ... M_{k+1}
        if N:
            T = self.Ms[N]
            tail[N - 1] = T
            for k in range(N - 2, -1, -1):
                T = T @ Vs[k + 1] @ self.Ms[k + 1]
                tail[k] = T
        scl = np.exp(min(self.L, 260.0))
        P = prefix[-1] * scl
        R = (P - self.rho) / self.scale
        J = np.zeros((n, n, m_unk), dtype=complex)
        for k, (uidx, coeff, row, col) in enumerate(self.events):
            if uidx is None:
                continue
            dV = np.zeros((n, n), dtype=complex)
            dV[row, col] = coeff
            J[:, :, uidx] += (tail[k] @ dV @ prefix[k]) * scl / self.scale
        return R, J


def _solve_halfwidth(omega, source, q, pair_q, tn, target, cap):
    """Half-width dth with |t^(1/n) Re int_arc (mu_a - mu_b)| ~ target."""
    dth = min(0.2, cap)
    for _ in range(6):
        h = abs(_arc_pair_span(omega, source, q, pair_q, dth)) * tn
        if h < 1e-12:
            dth = min(2 * dth, cap)
            continue
        dth = dth * min(4.0, max(0.25, target / h))
        dth = min(dth, cap)
    return max(dth, 1e-5)


def _arc_pair_span(omega, source, q, pair_q, dth):
    """Re int of the pair difference along the arc q -> q*e^{i dth}."""
    m = 12
    phis = np.linspace(0.0, dth, m + 1)
    pts = source + (q - source) * np.exp(1j * phis)
    total = 0j
    prev = np.asarray(pair_q)
    from .stokesgeo import _chord_pair_integral, _pair_at
    for a, b in zip(pts, pts[1:]):
        total += _chord_pair_integral(omega, a, b, prev)
        prev = _pair_at(omega, b, prev)
    return total.real


def _arc_path(source, q, dth, m=None):
    """Circular-arc polyline around `source` from -dth to +dth through q."""
    if m is None:
        m = max(12, int(np.ceil(2 * dth / 0.03)))
    phis = np.linspace(-dth, dth, m + 1)
    pts = source + (q - source) * np.exp(1j * phis)
    return PlanePath(tuple(pts), r_min=0.0)


def _audit_once(omega, source, q, pair_q, dth, t, anchor_order, rtol):
    """One stripped connection measurement across the ray (unipotence audit)."""
    n = omega.n
    eps = t ** (-1.0 / n)
    tn = 1.0 / eps
    arc = _arc_path(source, q, dth)
    x_L = arc.start
    # continuation along the arc, labels anchored at x_L
    sheets = continue_roots(omega, arc)
    vals_L = sheets.values[0]
    # split the arc at q for the e-factor stripping
    mid = int(np.argmin(np.abs(np.array(sheets.path.vertices) - q)))
    zeta_L = _partial_zetas(omega, sheets, 0, mid)
    zeta_R = _partial_zetas(omega, sheets, mid, len(sheets.path.vertices) - 1)
    # pair indices in the arc labels, matched at q
    from .stokesgeo import _pair_at
    ray_vals = _pair_at(omega, q, np.asarray(pair_q))
    path_vals = sheets.values[mid]
    ia = int(np.argmin(np.abs(path_vals - ray_vals[0])))
    ib = int(np.argmin(np.abs(path_vals - ray_vals[1])))
    if ia == ib:
        raise ZeroOfDifferential("degenerate pair matching in fit")

    T = integrate_transfer(omega, t, arc, rtol=rtol)
    f_L = frame_from_sheets(omega, sheets, 0)
    f_R = frame_from_sheets(omega, sheets, len(sheets.path.vertices) - 1)
    FL = f_L.corrected_matrix(omega, eps, anchor_order)
    FR = f_R.corrected_matrix(omega, eps, anchor_order)
    rho = ScaledMatrix(np.linalg.inv(FR)) @ T.scaled() @ ScaledMatrix(FL)
    U = _exp_diag(-tn * zeta_R) @ rho @ _exp_diag(-tn * zeta_L)
    Upl = U.to_plain()
    diag_dev = float(np.max(np.abs(np.diag(Upl) - 1.0)))
    cand_ab, cand_ba = Upl[ia, ib], Upl[ib, ia]
    if abs(cand_ab) >= abs(cand_ba):
        o, u = (ia, ib), cand_ab
    else:
        o, u = (ib, ia), cand_ba
    E = np.zeros_like(Upl)
    E[o] = 1.0
    off = float(np.linalg.norm(Upl - np.eye(n) - u * E))
    return complex(u), off, diag_dev, o


def _partial_zetas(omega, sheets: SheetAssignment, i0, i1):
    """Per-sheet integral between two continuation vertices."""
    n = sheets.n
    if i1 <= i0:
        return np.zeros(n, dtype=complex)
    from .ndiff import _edge_integral_all
    total = np.zeros(n, dtype=complex)
    verts = sheets.path.vertices
    for k in range(i0, i1):
        total += _edge_integral_all(omega, verts[k], verts[k + 1],
                                    sheets.values[k], 1e-11)
    return total


def _event_unipotent(event, u_base, slot, n, tn):
    """(I + u E)^(direction) at one crossing.

    The pattern slot is anchored to the sheet dominating on the ray's
    positive-crossing side (slot=+1: that sheet tags the row).  The ray's
    constant is source-anchored; re-anchoring the unipotent to the crossing
    point q pulls the diagonal through it, so the factor at q carries the
    weight exp(+tn int_source^q (mu_row - mu_col)), a pure phase on primary
    rays.
    """
    ia, ib = event.pair_path_indices
    dom = (ia, ib)[event.pos_dominant]
    rec = (ia, ib)[1 - event.pos_dominant]
    row, col = (dom, rec) if slot > 0 else (rec, dom)
    sigma = 1.0 if (row, col) == (ia, ib) else -1.0
    u = u_base * np.exp(sigma * tn * event.ray_phi)
    U = np.eye(n, dtype=complex)
    if event.direction > 0:
        U[row, col] += u
    else:
        U[row, col] -= u
    return U


def predicted_transfer(omega, decomp: PathDecomposition, factors, t, *,
                       sheets=None, with_scale=False):
    """The dominant-term product E(g_{N+1}) U_N ... U_1 E(g_1).

    factors: dict ray_index -> StokesFactor (or list in event order).  The
    product composes like the transfer: rightmost factor acts first.  Each
    event applies (I + u E_slot)^(direction) with the slot orientation
    recorded on the factor.

    with_scale: also return the entrywise magnitude chain (|E| |U| ...
    products), the natural scale against which entry deviations are honest.
    """
    n = omega.n
    tn = t ** (1.0 / n)
    if isinstance(factors, dict):
        flist = []
        for e in decomp.events:
            if e.ray_index not in factors:
                raise FactorMismatch(f"no factor for ray {e.ray_index}")
            flist.append(factors[e.ray_index])
    else:
        flist = list(factors)
        if len(flist) != len(decomp.events):
            raise FactorMismatch(
                f"{len(decomp.events)} events but {len(flist)} factors")

    base_vals = None
    base_log = None
    P = ScaledMatrix.identity(n)
    Aabs = np.eye(n)
    alog = 0.0
    for k, seg in enumerate(decomp.segments):
        zetas, end_vals, end_log, seg_sheets = segment_zetas(
            omega, seg, base_vals, base_log if base_log is not None
            else np.log(omega(seg.start)))
        E = _exp_diag(tn * zetas)
        P = E @ P
        Aabs = np.abs(E.m) @ Aabs
        alog += E.logscale
        base_vals, base_log = end_vals, end_log
        if k < len(decomp.events):
            e = decomp.events[k]
            fac = flist[k]
            u = fac.u_total(t, n)
            U = _event_unipotent(e, u, fac.slot, n, tn)
            P = ScaledMatrix(U) @ P
            Aabs = np.abs(U) @ Aabs
        m = Aabs.max()
        if m > 0:
            Aabs /= m
            alog += np.log(m)
    if with_scale:
        return P, ScaledMatrix(Aabs, alog)
    return P


def corrected_holonomy(omega, path: PlanePath, t, *, sheets=None, rtol=1e-10,
                       anchor_order=2):
    """Frame-corrected transfer F_cont(end)^(-1) T F(start) along a path.

    The endpoint frames carry the higher-order WKB anchor corrections
    (anchor_order=0 gives the bare w^((1-n)/(2n)) P0 limit frames; the
    corrections vanish in the limit but cut the finite-t frame bias).
    """
    if sheets is None:
        sheets = continue_roots(omega, path)
    eps = t ** (-1.0 / omega.n)
    T = integrate_transfer(omega, t, path, rtol=rtol)
    F0 = frame_from_sheets(omega, sheets, 0).corrected_matrix(
        omega, eps, anchor_order)
    F1 = frame_from_sheets(omega, sheets,
                           len(sheets.path.vertices) - 1).corrected_matrix(
        omega, eps, anchor_order)
    return ScaledMatrix(np.linalg.inv(F1)) @ T.scaled() @ ScaledMatrix(F0)


def theorem1_residual(omega, path: PlanePath, graph: StokesGraph, t_ladder, *,
                      factors=None, rtol=1e-10, fit_opts=None,
                      exact_loop=False, weighted=False):
    """Residual ladder || rho_t (predicted)^(-1) - I || of the dominant-term
    factorization along one path.

    exact_loop: for a closed path in plane mode, take the numeric holonomy
    from the exact branch bookkeeping (T = I for entire coefficients)
    instead of re-integrating the transfer.

    weighted: compare rho and the prediction entry by entry against the
    honest scale |P_ij| + eps * (magnitude chain)_ij instead of the raw
    Frobenius deviation.  The raw metric is faithful only when the path's
    dominance spread stays small; entries below the spread amplification
    carry no numerical content and swamp the raw residual on long paths
    and loops.
    """
    t_ladder = _check_ladder(t_ladder)
    n = omega.n
    sheets = continue_roots(omega, path)
    decomp = decompose_path(path, graph, sheets=sheets)
    if factors is None:
        factors = {}
        for e in decomp.events:
            if e.ray_index not in factors:
                factors[e.ray_index] = fit_stokes_factor(
                    omega, graph, e.ray_index, t_ladder, **(fit_opts or {}))
    closed = abs(path.start - path.end) < 1e-12 and omega.mode == "plane"
    resid = []
    for t in t_ladder:
        if exact_loop and closed:
            rho = loop_holonomy_exact(omega, sheets)
        else:
            rho = corrected_holonomy(omega, path, t, sheets=sheets, rtol=rtol)
        if weighted:
            P, A = predicted_transfer(omega, decomp, factors, t,
                                      with_scale=True)
            eps = t ** (-1.0 / n)
            delta = np.abs(rho.to_plain() - P.m * np.exp(min(P.logscale, 280)))
            scale = np.abs(P.m) * np.exp(min(P.logscale, 280)) + \
                eps * A.m * np.exp(min(A.logscale, 280)) + 1e-280
            resid.append(float(np.max(delta / scale)))
        else:
            P = predicted_transfer(omega, decomp, factors, t)
            resid.append((rho @ P.inv()).distance_to_identity())
    return AsymptoticReport(
        ladder=t_ladder, values=tuple(resid),
        extrapolated=float(_extrapolate(t_ladder, resid, n)),
        monotone_tail=_monotone_tail(resid),
        meta={"events": len(decomp.events), "weighted": weighted})


def growth_exponent(omega, path: PlanePath, graph: StokesGraph, t_ladder, *,
                    tol_tie=1e-6, rtol=1e-10):
    """(measured, predicted) growth rate of log||rho_t|| / t^(1/n).

    predicted = sum over segments of the dominant sheet's Re zeta; requires
    a unique argmax per segment (margin > tol_tie * flat length).
    """
    t_ladder = _check_ladder(t_ladder)
    n = omega.n
    sheets = continue_roots(omega, path)
    decomp = decompose_path(path, graph, sheets=sheets)
    base_vals, base_log = None, None
    predicted = 0.0
    for seg in decomp.segments:
        zetas, base_vals, base_log, _ = segment_zetas(
            omega, seg, base_vals,
            base_log if base_log is not None else np.log(omega(seg.start)))
        re = np.sort(zetas.real)[::-1]
        margin = re[0] - re[1]
        floor = tol_tie * max(flat_length(omega, seg), 1e-12)
        if margin <= floor:
            raise DominanceTie(
                f"dominance margin {margin:.2e} <= {floor:.2e} on segment")
        predicted += re[0]
    logs = []
    for t in t_ladder:
        rho = corrected_holonomy(omega, path, t, sheets=sheets, rtol=rtol)
        logs.append(rho.log_norm())
    x = np.array(t_ladder) ** (1.0 / n)
    A = np.stack([np.ones_like(x), x], axis=1)
    c, *_ = np.linalg.lstsq(A, np.array(logs), rcond=None)
    return float(c[1]), float(predicted)


def model_zero_basis(zeta, n, k, sector, *, min_radius=0.5):
    """Asymptotic basis of the model equation y^(n) = zeta^k y in a sector.

    Returns an (n, n) array: row i holds the i-th basis value and its first
    n-1 derivatives, built by exact differentiation of
    zeta^(k(1-n)/(2n)) exp(lambda^i n zeta^((n+k)/n) / (n+k)) with the
    fractional powers on the branch of arg zeta inside the sector.
    """
    lo, hi = float(sector[0]), float(sector[1])
    if hi - lo >= n * np.pi / (n + k) - 1e-12:
        raise SectorTooWide(
            f"sector angle {hi - lo:.4f} >= n*pi/(n+k) = {n * np.pi / (n + k):.4f}")
    z = complex(zeta)
    if abs(z) < min_radius:
        raise ValueError(f"|zeta| = {abs(z):.3g} below minimum radius {min_radius}")
    theta = np.angle(z)
    while theta < lo - 1e-12:
        theta += 2 * np.pi
    while theta > hi + 1e-12:
        theta -= 2 * np.pi
    if not (lo - 1e-9 <= theta <= hi + 1e-9):
        raise ValueError(f"arg zeta = {np.angle(z):.4f} not in sector ({lo}, {hi})")
    logz = np.log(abs(z)) + 1j * theta
    lam = np.exp(2j * np.pi * np.arange(n) / n)
    a = k * (1.0 - n) / (2.0 * n)
    b = (n + k) / n
    zjet = Jet.variable(z, n)
    zpow_a = zjet.power(a, base_value=np.exp(a * logz))
    zpow_b = zjet.power(b, base_value=np.exp(b * logz))
    out = np.zeros((n, n), dtype=complex)
    for i in range(n):
        c = lam[i] * n / (n + k)
        f = zpow_a * (c * zpow_b).exp()
        out[i] = f.d[:n]
    return out


def zero_rescaling(n, t):
    """Scaling triple mapping the model solution to the eps-scaled system.

    Z(zeta, t) = prefactor * diag * Y*(zeta * argscale) solves
    eps Z' = A0(zeta) Z when Y* solves the unscaled model system.
    """
    if t <= 0:
        raise ValueError("t must be positive")
    pref = t ** ((n - 1.0) / (2.0 * n * (n + 1.0)))
    diag = np.array([t ** (-i / (n * (n + 1.0))) for i in range(n)])
    argscale = t ** (1.0 / (n + 1.0))
    return pref, diag, argscale
