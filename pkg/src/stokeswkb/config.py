"""Experiment configuration: differential, ladder, tolerances, outputs."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

from .errors import ConfigError
from .ndiff import NDifferential, PlanePath

DEFAULT_LADDER = (1e2, 1e3, 1e4, 1e5)


@dataclass
class Tolerances:
    ode_rtol: float = 1e-9
    tol_ray: float = 1e-6
    tol_fit: float = 1e-3
    tol_tie: float = 1e-6
    residual_bound: float = 1e-2

    def validate(self):
        for name in ("ode_rtol", "tol_ray", "tol_fit", "tol_tie",
                     "residual_bound"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"tolerance {name} must be positive")


@dataclass
class ExperimentConfig:
    differential: NDifferential
    ladder: tuple = DEFAULT_LADDER
    radius: float | None = None
    max_generations: int = 1
    out: str = "out"
    path: tuple | None = None
    points: tuple | None = None
    basepoint: complex | None = None
    injectivity: dict | None = None
    tolerances: Tolerances = field(default_factory=Tolerances)
    weighted_residual: bool = False
    exact_loop: bool = False
    r_min: float = 0.05
    seed_order: str = "angle"

    def validate(self):
        lad = tuple(float(t) for t in self.ladder)
        if any(b <= a for a, b in zip(lad, lad[1:])) or any(t <= 0 for t in lad):
            raise ConfigError("ladder must be strictly increasing and positive")
        object.__setattr__(self, "ladder", lad)
        if self.radius is not None and self.radius <= 0:
            raise ConfigError("radius must be positive")
        self.tolerances.validate()
        if self.seed_order not in ("angle",):
            raise ConfigError(f"unknown seed ordering {self.seed_order!r}")
        return self

    def plane_path(self):
        if not self.path:
            raise ConfigError("config carries no path")
        return PlanePath(tuple(complex(re, im) for re, im in self.path),
                         r_min=self.r_min)

    def ensure_outdir(self):
        os.makedirs(self.out, exist_ok=True)
        if not os.access(self.out, os.W_OK):
            raise ConfigError(f"output directory {self.out!r} not writable")
        return self.out


def _complex_of(v):
    if isinstance(v, (list, tuple)) and len(v) == 2:
        return complex(v[0], v[1])
    raise ConfigError(f"expected [re, im] pair, got {v!r}")


def load_config(source, overrides=None):
    """Build an ExperimentConfig from a JSON file path, JSON text, or dict."""
    if isinstance(source, dict):
        raw = dict(source)
    else:
        text = source
        if os.path.exists(str(source)):
            with open(source) as fh:
                text = fh.read()
        try:
            raw = json.loads(text)
        except (json.JSONDecodeError, TypeError) as exc:
            raise ConfigError(f"malformed config JSON: {exc}") from exc
    overrides = overrides or {}
    raw.update({k: v for k, v in overrides.items() if v is not None})
    if "differential" not in raw:
        raise ConfigError("config needs a 'differential' entry")
    try:
        diff = NDifferential.from_json(raw["differential"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad differential spec: {exc}") from exc
    tol = Tolerances(**raw.get("tolerances", {}))
    cfg = ExperimentConfig(
        differential=diff,
        ladder=tuple(raw.get("ladder", DEFAULT_LADDER)),
        radius=raw.get("radius"),
        max_generations=int(raw.get("max_generations", 1)),
        out=raw.get("out", "out"),
        path=raw.get("path"),
        points=raw.get("points"),
        basepoint=_complex_of(raw["basepoint"]) if "basepoint" in raw else None,
        injectivity=raw.get("injectivity"),
        tolerances=tol,
        weighted_residual=bool(raw.get("weighted_residual", False)),
        exact_loop=bool(raw.get("exact_loop", False)),
        r_min=float(raw.get("r_min", 0.05)),
        seed_order=raw.get("seed_order", "angle"),
    )
    return cfg.validate()
