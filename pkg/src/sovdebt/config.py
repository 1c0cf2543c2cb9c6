"""Run configuration: JSON document, validation, salvage/cost registries,
deterministic hashing, and CSV emission.

Config layout (all keys required unless noted):

    {
      "model":   {"r": .., "lambda": .., "mu": .., "x_star": ..,
                  "bankruptcy_cost": ..},
      "salvage": {"family": "constant" | "bounded" | "power", ...},
      "costs":   {"family": "reference", "l0": .., "c1": .., "delta0": ..},
      "solver":  {...}            # optional overrides
      "simulate": {"x0": [...]}   # optional, for the simulate subcommand
      "sweep":   {...}            # optional, for the sweep subcommand
      "seed": 0                   # optional
    }
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass, field

from . import costs as _costs
from .hamiltonian import Model, ModelParams

__all__ = [
    "ConfigError",
    "RunConfig",
    "load_config",
    "build_model",
    "make_salvage",
    "write_csv",
    "ARTIFACT_VERSION",
]

ARTIFACT_VERSION = "0.1.0"


class ConfigError(Exception):
    """Malformed or inconsistent run configuration; carries key context."""


_SOLVER_DEFAULTS = {
    "rtol": 1e-9,
    "atol": 1e-12,
    "tol_lim": 1e-8,
    "max_levels": 40,
    "n_curve_nodes": 2048,
}


@dataclass
class RunConfig:
    model: dict
    salvage: dict
    costs: dict
    solver: dict = field(default_factory=dict)
    simulate: dict = field(default_factory=dict)
    sweep: dict = field(default_factory=dict)
    seed: int = 0

    def canonical_json(self) -> str:
        doc = {
            "model": self.model, "salvage": self.salvage, "costs": self.costs,
            "solver": self.solver, "simulate": self.simulate,
            "sweep": self.sweep, "seed": self.seed,
        }
        return json.dumps(doc, sort_keys=True, separators=(",", ":"))

    @property
    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()[:16]

    def solver_opt(self, key):
        return self.solver.get(key, _SOLVER_DEFAULTS[key])


def _need(d: dict, key: str, where: str, typ=(int, float)):
    if key not in d:
        raise ConfigError(f"missing key '{where}.{key}'")
    val = d[key]
    if typ is not None and not isinstance(val, typ):
        raise ConfigError(
            f"key '{where}.{key}' must be {typ}, got {type(val).__name__}"
        )
    return val


def make_salvage(spec: dict):
    """Salvage-rate family from its config spec.

    constant: theta(s) = value
    bounded:  theta(s) = min(1, R / s)        (sup s*theta = R)
    power:    theta(s) = min(1, scale * s^-exponent), 0 < exponent < 1
    """
    family = _need(spec, "family", "salvage", str)
    if family == "constant":
        value = float(_need(spec, "value", "salvage"))
        if not 0.0 <= value <= 1.0:
            raise ConfigError(f"salvage.value {value!r} outside [0, 1]")
        return lambda s: value
    if family == "bounded":
        cap = float(_need(spec, "R", "salvage"))
        if cap <= 0.0:
            raise ConfigError("salvage.R must be positive")
        return lambda s: min(1.0, cap / s) if s > 0.0 else 1.0
    if family == "power":
        expo = float(_need(spec, "exponent", "salvage"))
        scale = float(spec.get("scale", 1.0))
        if not 0.0 < expo < 1.0:
            raise ConfigError(f"salvage.exponent {expo!r} outside (0, 1)")
        return lambda s: min(1.0, scale * s ** (-expo)) if s > 0.0 else 1.0
    raise ConfigError(f"unknown salvage family {family!r}")


def make_costs(spec: dict) -> _costs.CostModel:
    family = _need(spec, "family", "costs", str)
    if family == "reference":
        return _costs.reference_costs(
            l0=float(_need(spec, "l0", "costs")),
            c1=float(_need(spec, "c1", "costs")),
            delta0=float(spec.get("delta0", 1.0)),
        )
    raise ConfigError(f"unknown cost family {family!r}")


def build_model(cfg: RunConfig) -> Model:
    md = cfg.model
    r = float(_need(md, "r", "model"))
    lam = float(_need(md, "lambda", "model"))
    mu = float(_need(md, "mu", "model"))
    x_star = float(_need(md, "x_star", "model"))
    bcost = float(_need(md, "bankruptcy_cost", "model"))
    if not r > mu >= 0.0:
        raise ConfigError(f"model.r={r!r} must exceed model.mu={mu!r} >= 0")
    if lam < 0.0 or x_star <= 0.0 or bcost <= 0.0:
        raise ConfigError("model.lambda >= 0, model.x_star > 0, "
                          "model.bankruptcy_cost > 0 required")
    theta = make_salvage(cfg.salvage)
    try:
        params = ModelParams(
            r=r, lam=lam, mu=mu, x_star=x_star, bankruptcy_cost=bcost,
            theta=theta, theta_spec=dict(cfg.salvage),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return Model(params=params, costs=make_costs(cfg.costs))


def load_config(path) -> RunConfig:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(
            f"malformed JSON in {path!r} at line {exc.lineno}, column "
            f"{exc.colno}: {exc.msg}"
        ) from exc
    if not isinstance(doc, dict):
        raise ConfigError("config root must be a JSON object")
    for key in ("model", "salvage", "costs"):
        if key not in doc:
            raise ConfigError(f"missing section '{key}'")
        if not isinstance(doc[key], dict):
            raise ConfigError(f"section '{key}' must be an object")
    cfg = RunConfig(
        model=doc["model"],
        salvage=doc["salvage"],
        costs=doc["costs"],
        solver=doc.get("solver", {}),
        simulate=doc.get("simulate", {}),
        sweep=doc.get("sweep", {}),
        seed=int(doc.get("seed", 0)),
    )
    for key, val in cfg.solver.items():
        if key not in _SOLVER_DEFAULTS:
            raise ConfigError(f"unknown solver option 'solver.{key}'")
        if not isinstance(val, (int, float)) or val <= 0:
            raise ConfigError(f"'solver.{key}' must be a positive number")
    build_model(cfg)  # full validation up front
    return cfg


def _fmt(value) -> str:
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        return format(value, ".17g")
    return str(value)


def write_csv(path, header, rows):
    """Deterministic CSV: 17 significant digits, LF line endings."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])
