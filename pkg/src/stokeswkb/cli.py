"""Command-line front end.

Subcommands: stokes-graph, verify, conemap, fit-stokes, growth.
Exit codes: 0 success, 2 config error, 3 truncated geometry,
4 analysis precondition failure, 5 unsupported request.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .config import load_config
from .errors import (ConfigError, DominanceTie, FactorMismatch,
                     StokesWKBError, TangentialCrossing, UnsupportedOrder,
                     ZeroOfDifferential)
from .stokesgeo import build_graph, decompose_path
from .wkb import fit_stokes_factor, growth_exponent, theorem1_residual
from .conemap import (apartment_coords, injectivity_probe, rescaled_distance)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_TRUNCATED = 3
EXIT_PRECONDITION = 4
EXIT_UNSUPPORTED = 5


def _write(path, text):
    with open(path, "w") as fh:
        fh.write(text)


def _graph_for(cfg):
    return build_graph(cfg.differential, R=cfg.radius,
                       max_generations=cfg.max_generations,
                       tol_ray=cfg.tolerances.tol_ray)


def cmd_stokes_graph(cfg, dry_run=False):
    if dry_run:
        return EXIT_OK
    out = cfg.ensure_outdir()
    graph = _graph_for(cfg)
    _write(os.path.join(out, "graph.json"), graph.to_json())
    _write(os.path.join(out, "graph.svg"), graph.to_svg())
    print(f"rays: {graph.primary_count()} crossings: {len(graph.crossings)} "
          f"secondary: {graph.secondary_count()}")
    if graph.truncated:
        print("geometry truncated at the generation cap", file=sys.stderr)
        return EXIT_TRUNCATED
    return EXIT_OK


def cmd_verify(cfg, dry_run=False):
    if dry_run:
        return EXIT_OK
    out = cfg.ensure_outdir()
    omega = cfg.differential
    path = cfg.plane_path()
    graph = _graph_for(cfg)
    try:
        path.check_clearance(omega.zeros)
        report = theorem1_residual(
            omega, path, graph, cfg.ladder,
            rtol=cfg.tolerances.ode_rtol, exact_loop=cfg.exact_loop,
            weighted=cfg.weighted_residual)
        slope, predicted = growth_exponent(
            omega, path, graph, cfg.ladder, tol_tie=cfg.tolerances.tol_tie,
            rtol=cfg.tolerances.ode_rtol)
        sheets_factors = {}
        decomp = decompose_path(path, graph)
        for e in decomp.events:
            if e.ray_index not in sheets_factors:
                fac = fit_stokes_factor(omega, graph, e.ray_index, cfg.ladder,
                                        tol_fit=cfg.tolerances.tol_fit)
                sheets_factors[e.ray_index] = json.loads(fac.to_json())
    except (DominanceTie, TangentialCrossing, ZeroOfDifferential,
            FactorMismatch) as exc:
        print(f"analysis precondition failed: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION
    doc = {
        "residuals": json.loads(report.to_json()),
        "growth": {"measured": slope, "predicted": predicted,
                   "difference": abs(slope - predicted)},
        "stokes_factors": sheets_factors,
    }
    _write(os.path.join(out, "verify.json"), json.dumps(doc, sort_keys=True))
    bound = cfg.tolerances.residual_bound
    ok = report.monotone_tail and report.values[-1] < bound
    print(f"final residual {report.values[-1]:.3e} "
          f"(bound {bound:.1e}), monotone {report.monotone_tail}")
    return EXIT_OK if ok else EXIT_PRECONDITION


def cmd_conemap(cfg, dry_run=False, injectivity=False):
    if dry_run:
        return EXIT_OK
    omega = cfg.differential
    if injectivity and omega.n == 2:
        print("injectivity probe is undefined for n = 2", file=sys.stderr)
        return EXIT_UNSUPPORTED
    out = cfg.ensure_outdir()
    lines = ["x_re,x_im,y_re,y_im,measured,predicted,relerr"]
    apartments = []
    pts = [complex(re, im) for re, im in (cfg.points or [])]
    base = cfg.basepoint if cfg.basepoint is not None else (pts[0] if pts else 0j)
    for i in range(0, len(pts) - 1, 2):
        x, y = pts[i], pts[i + 1]
        rep = rescaled_distance(omega, x, y, cfg.ladder,
                                rtol=cfg.tolerances.ode_rtol)
        pred = rep.meta.get("predicted")
        rel = "" if pred in (None, 0.0) else \
            f"{abs(rep.extrapolated - pred) / pred:.6g}"
        pred_s = "" if pred is None else f"{pred:.12g}"
        lines.append(f"{x.real:.12g},{x.imag:.12g},{y.real:.12g},"
                     f"{y.imag:.12g},{rep.extrapolated:.12g},{pred_s},{rel}")
        for z in (x, y):
            coords = apartment_coords(omega, z, base)
            apartments.append({"point": [z.real, z.imag],
                               "coords": list(coords.x)})
    _write(os.path.join(out, "distances.csv"), "\n".join(lines) + "\n")
    _write(os.path.join(out, "apartments.json"),
           json.dumps(apartments, sort_keys=True))
    if injectivity:
        spec = cfg.injectivity or {}
        zero = complex(*spec.get("zero", [1.0, 0.0]))
        r = float(spec.get("r", 0.25))
        probe = injectivity_probe(omega, zero, r, cfg.ladder,
                                  rtol=cfg.tolerances.ode_rtol)
        _write(os.path.join(out, "injectivity.csv"), probe.to_csv())
        print(f"adjacent {probe.adjacent_value():.6g} "
              f"(pred {probe.adjacent_predicted:.6g}), antipodal "
              f"{probe.antipodal_value():.6g} "
              f"(pred {probe.antipodal_predicted:.6g})")
    return EXIT_OK


def cmd_fit_stokes(cfg, dry_run=False):
    if dry_run:
        return EXIT_OK
    out = cfg.ensure_outdir()
    omega = cfg.differential
    graph = _graph_for(cfg)
    factors = []
    for ray in graph.rays:
        if ray.generation > 0:
            continue
        try:
            fac = fit_stokes_factor(omega, graph, ray.index, cfg.ladder,
                                    tol_fit=cfg.tolerances.tol_fit)
        except (FactorMismatch, StokesWKBError) as exc:
            print(f"ray {ray.index}: fit failed: {exc}", file=sys.stderr)
            return EXIT_PRECONDITION
        factors.append(json.loads(fac.to_json()))
    _write(os.path.join(out, "stokes_factors.json"),
           json.dumps(factors, sort_keys=True))
    print(f"fitted {len(factors)} primary-ray factors")
    return EXIT_OK


def cmd_growth(cfg, dry_run=False):
    if dry_run:
        return EXIT_OK
    out = cfg.ensure_outdir()
    omega = cfg.differential
    graph = _graph_for(cfg)
    try:
        slope, predicted = growth_exponent(
            omega, cfg.plane_path(), graph, cfg.ladder,
            tol_tie=cfg.tolerances.tol_tie, rtol=cfg.tolerances.ode_rtol)
    except (DominanceTie, TangentialCrossing, ZeroOfDifferential) as exc:
        print(f"analysis precondition failed: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION
    doc = {"measured": slope, "predicted": predicted,
           "difference": abs(slope - predicted)}
    _write(os.path.join(out, "growth.json"), json.dumps(doc, sort_keys=True))
    print(f"measured {slope:.6f} predicted {predicted:.6f}")
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="stokeswkb")
    p.add_argument("--config", required=True, help="JSON config file or text")
    p.add_argument("--out", help="output directory (overrides config)")
    p.add_argument("--ladder", help="comma-separated t values")
    p.add_argument("--radius", type=float, help="escape radius R")
    p.add_argument("--dry-run", action="store_true",
                   help="validate the configuration and exit")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("stokes-graph")
    sub.add_parser("verify")
    pc = sub.add_parser("conemap")
    pc.add_argument("--injectivity", action="store_true")
    sub.add_parser("fit-stokes")
    sub.add_parser("growth")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    overrides = {"out": args.out, "radius": args.radius}
    if args.ladder:
        try:
            overrides["ladder"] = [float(x) for x in args.ladder.split(",")]
        except ValueError:
            print("bad --ladder value", file=sys.stderr)
            return EXIT_CONFIG
    try:
        cfg = load_config(args.config, overrides)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        if args.command == "stokes-graph":
            return cmd_stokes_graph(cfg, args.dry_run)
        if args.command == "verify":
            return cmd_verify(cfg, args.dry_run)
        if args.command == "conemap":
            return cmd_conemap(cfg, args.dry_run, args.injectivity)
        if args.command == "fit-stokes":
            return cmd_fit_stokes(cfg, args.dry_run)
        if args.command == "growth":
            return cmd_growth(cfg, args.dry_run)
    except UnsupportedOrder as exc:
        print(f"unsupported: {exc}", file=sys.stderr)
        return EXIT_UNSUPPORTED
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
