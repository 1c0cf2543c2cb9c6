"""Batch command-line front end.

Subcommands:
    solve           build the equilibrium, write solution JSON + CSV + summary
    simulate        forward-simulate from given starts and verify both clauses
    sweep           large-threshold sweep (bounded / ponzi salvage families)
    validate-costs  structural checks of the configured cost family

Exit codes: 0 success, 2 config error, 3 hypothesis violated, 4 numerical
failure or verification above threshold.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import asymptotics
from .config import (
    ARTIFACT_VERSION,
    ConfigError,
    RunConfig,
    build_model,
    load_config,
    write_csv,
)
from .constant_strategy import ConstantStrategyCurve
from .costs import validate as validate_costs
from .equilibrium import EquilibriumSolution, build_equilibrium
from .errors import DebtModelError, HypothesisError
from .simulate import (
    discounted_cost,
    equilibrium_policy,
    price_functional,
    simulate,
    verify_equilibrium,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_HYPOTHESIS = 3
EXIT_NUMERICAL = 4


def _stamp(cfg: RunConfig) -> dict:
    return {"config_hash": cfg.config_hash, "artifact_version": ARTIFACT_VERSION}


def _write_error(outdir, kind, message, extra=None):
    doc = {"error": {"kind": kind, "message": message}}
    if extra:
        doc["error"].update(extra)
    os.makedirs(outdir, exist_ok=True)
    with open(os.path.join(outdir, "error.json"), "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)


def _build_solution(cfg: RunConfig):
    model = build_model(cfg)
    curve = ConstantStrategyCurve(model, n=int(cfg.solver_opt("n_curve_nodes")))
    sol = build_equilibrium(
        model,
        curve=curve,
        tol_lim=cfg.solver_opt("tol_lim"),
        max_levels=int(cfg.solver_opt("max_levels")),
        rtol=cfg.solver_opt("rtol"),
        atol=cfg.solver_opt("atol"),
    )
    return model, curve, sol


def cmd_solve(cfg: RunConfig, outdir: str) -> int:
    model, curve, sol = _build_solution(cfg)
    os.makedirs(outdir, exist_ok=True)
    doc = sol.to_dict()
    doc.update(_stamp(cfg))
    with open(os.path.join(outdir, "solution.json"), "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
    sol.sample_csv(os.path.join(outdir, "solution_samples.csv"))
    curve.export_csv(os.path.join(outdir, "constant_strategy.csv"))

    info = sol.build_info
    lines = [
        f"artifact_version: {ARTIFACT_VERSION}",
        f"config_hash: {cfg.config_hash}",
        f"x_star: {model.params.x_star!r}",
        f"bankruptcy_cost: {model.params.bankruptcy_cost!r}",
        f"W(x_star): {info['w_at_cap']!r} (must exceed bankruptcy cost)",
        f"theta(x_star): {info['theta_at_cap']!r}",
        f"p_c(x_star): {info['p_c_at_cap']!r}",
        f"price hypothesis: {info['price_hypothesis']}",
        f"semi-equilibrium point x_1: {sol.semi_equilibrium_point()!r}",
        f"touch points: {sol.touches!r}",
        f"arc count: {len(sol.arcs)}",
        f"no-devaluation band edge x_flat: {info['x_flat']!r}",
        f"devaluation threshold x_crit: {info['x_crit']!r}",
    ]
    with open(os.path.join(outdir, "summary.txt"), "w") as fh:
        fh.write("\n".join(lines) + "\n")
    print("\n".join(lines))
    return EXIT_OK


def cmd_simulate(cfg: RunConfig, outdir: str, x0_list, residual_cap: float = 1e-4) -> int:
    model, curve, sol = _build_solution(cfg)
    os.makedirs(outdir, exist_ok=True)
    if x0_list is None:
        x0_list = cfg.simulate.get("x0")
    if not x0_list:
        x0_list = list(np.linspace(0.0, model.params.x_star, 11))
    pol = equilibrium_policy(sol)
    rows = []
    for i, x0 in enumerate(x0_list):
        traj = simulate(model, pol, float(x0))
        traj.export_csv(os.path.join(outdir, f"trajectory_{i:03d}.csv"))
        j, jtail = discounted_cost(model, traj)
        psi, ptail = price_functional(model, traj)
        rows.append({
            "x0": float(x0),
            "end": traj.end_reason,
            "T_b": None if traj.bankruptcy_time == float("inf") else traj.bankruptcy_time,
            "steady_x": traj.steady_x,
            "J": j, "V": sol.value(float(x0)),
            "cost_residual": abs(j - sol.value(float(x0))),
            "Psi": psi, "p": sol.price(float(x0)),
            "price_residual": abs(psi - sol.price(float(x0))),
        })
    report = verify_equilibrium(
        sol,
        x0_grid=[float(x) for x in x0_list],
        n_probes=int(cfg.simulate.get("n_probes", 50)),
        seed=cfg.seed,
    )
    doc = {"per_x0": rows, "verification": report.to_dict()}
    doc.update(_stamp(cfg))
    with open(os.path.join(outdir, "verification.json"), "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
    worst = max(
        max((r["cost_residual"] for r in rows), default=0.0),
        max((r["price_residual"] for r in rows), default=0.0),
    )
    for r in rows:
        tag = (f"steady state at x={r['steady_x']!r}" if r["end"] == "steady"
               else (f"bankruptcy at T_b={r['T_b']!r}" if r["end"] == "bankrupt"
                     else r["end"]))
        print(f"x0={r['x0']:.6g}: {tag}; cost residual {r['cost_residual']:.3e}, "
              f"price residual {r['price_residual']:.3e}")
    if worst > residual_cap:
        print(f"verification residual {worst:.3e} above cap {residual_cap:.0e}",
              file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


def cmd_sweep(cfg: RunConfig, outdir: str) -> int:
    model = build_model(cfg)
    os.makedirs(outdir, exist_ok=True)
    spec = cfg.sweep or {}
    kind = spec.get("kind", "bounded")
    if kind == "bounded":
        result = asymptotics.regime_bounded(
            model,
            R=float(spec.get("R", 1.0)),
            multipliers=tuple(spec.get("multipliers", (10.0, 20.0, 40.0))),
        )
    elif kind == "ponzi":
        result = asymptotics.regime_ponzi(
            model,
            exponent=float(spec.get("exponent", 0.5)),
            scale=float(spec.get("scale", 10.0)),
            decades=tuple(spec.get("decades", (1e2, 1e3, 1e4))),
        )
    elif kind == "devaluation":
        wit = asymptotics.devaluation_active(model)
        doc = wit.to_dict()
        doc.update(_stamp(cfg))
        with open(os.path.join(outdir, "sweep.json"), "w") as fh:
            json.dump(doc, fh, indent=1, sort_keys=True)
        print(f"devaluation witness: {wit.witness_x!r} (v={wit.witness_v!r})")
        return EXIT_OK if wit.found else EXIT_NUMERICAL
    else:
        raise ConfigError(f"unknown sweep.kind {kind!r}")
    if not result.rows:
        print("empty sweep grid: nothing to do", file=sys.stderr)
        return EXIT_OK
    doc = result.to_dict()
    doc.update(_stamp(cfg))
    with open(os.path.join(outdir, "sweep.json"), "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
    result.export_csv(os.path.join(outdir, "sweep.csv"))
    print(f"regime: {result.regime} ({len(result.rows)} thresholds)")
    return EXIT_OK


def cmd_validate_costs(cfg: RunConfig) -> int:
    model = build_model(cfg)
    report = validate_costs(model.costs)
    print(report)
    return EXIT_OK


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="sovdebt",
        description="Feedback equilibria of the deterministic debt-management model.",
    )
    parser.add_argument("--config", required=True, help="path to the JSON run config")
    parser.add_argument("--out", default="out", help="output directory")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("solve")
    p_sim = sub.add_parser("simulate")
    p_sim.add_argument("--x0", default=None,
                       help="comma-separated list of starting ratios")
    sub.add_parser("sweep")
    sub.add_parser("validate-costs")
    args = parser.parse_args(argv)

    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        if args.command == "solve":
            return cmd_solve(cfg, args.out)
        if args.command == "simulate":
            x0 = None
            if args.x0:
                try:
                    x0 = [float(tok) for tok in args.x0.split(",") if tok.strip()]
                except ValueError as exc:
                    print(f"config error: bad --x0 list: {exc}", file=sys.stderr)
                    return EXIT_CONFIG
            return cmd_simulate(cfg, args.out, x0)
        if args.command == "sweep":
            return cmd_sweep(cfg, args.out)
        if args.command == "validate-costs":
            return cmd_validate_costs(cfg)
        raise AssertionError(f"unhandled command {args.command!r}")
    except HypothesisError as exc:
        _write_error(args.out, "hypothesis", str(exc), {"violated": exc.violated})
        print(f"hypothesis violated: {exc}", file=sys.stderr)
        return EXIT_HYPOTHESIS
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DebtModelError as exc:
        _write_error(args.out, type(exc).__name__, str(exc))
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
