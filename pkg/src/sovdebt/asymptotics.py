"""Large-threshold behavior of the equilibrium.

When the bankruptcy threshold is pushed out, the equilibrium high up in the
ratio enters a no-control regime (u = v = 0) whose value/price pair solves
a closed algebraic system.  The speed of decay of the salvage rate then
separates two regimes: bounded s*theta(s) keeps the value bounded away
from zero (no profitable Ponzi scheme), while s*theta(s) -> infinity
drives the value to zero.  A third result gives checkable conditions under
which the equilibrium feedback actually devaluates somewhere.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from .constant_strategy import ConstantStrategyCurve
from .equilibrium import EquilibriumSolution, build_equilibrium
from .errors import RegimeViolatedError
from .hamiltonian import Model, ModelParams

__all__ = [
    "explicit_regime",
    "explicit_regime_ode",
    "no_control_thresholds",
    "regime_bounded",
    "regime_ponzi",
    "devaluation_active",
    "SweepResult",
    "with_cap",
]


def with_cap(model: Model, x_star: float, theta, theta_spec=None) -> Model:
    """Clone of the model with a new bankruptcy threshold and salvage map."""
    p = model.params
    return Model(
        params=ModelParams(
            r=p.r, lam=p.lam, mu=p.mu, x_star=x_star,
            bankruptcy_cost=p.bankruptcy_cost, theta=theta,
            theta_spec=theta_spec or {},
        ),
        costs=model.costs,
    )


def no_control_thresholds(model: Model, c1_sup: float | None = None):
    """Constants of the no-control regime:

    gamma = min((r-mu) / (2 c^{-1}(rB)), (r-mu) c'(0) / (4B))   price bar
    M2    = max(4/(r-mu), 4B/((r-mu) L'(0)))                    ratio floor
    M     = (1/(r-mu)) max(4, 4B/L'(0), 4 C1 B/c'(0),
                            2 C1 c^{-1}(rB))                    entry floor
    (M requires C1 = sup s*theta(s).)
    """
    m, cs = model.params, model.costs
    rm = m.r - m.mu
    cinv = cs.c_inv(m.r * m.bankruptcy_cost)
    gamma = min(rm / (2.0 * cinv), rm * cs.c_prime0 / (4.0 * m.bankruptcy_cost))
    m2 = max(4.0 / rm, 4.0 * m.bankruptcy_cost / (rm * cs.l_prime0))
    out = {"gamma": gamma, "M2": m2, "c_inv_rB": cinv}
    if c1_sup is not None:
        out["M"] = (1.0 / rm) * max(
            4.0,
            4.0 * m.bankruptcy_cost / cs.l_prime0,
            4.0 * c1_sup * m.bankruptcy_cost / cs.c_prime0,
            2.0 * c1_sup * cinv,
        )
    return out


def explicit_regime(model: Model, x: float, *, check: bool = True,
                    damping: float = 0.5, tol: float = 1e-12,
                    max_iter: int = 10_000):
    """Closed-form value/price pair of the no-control regime at ratio x:

        p = (theta x_star / x) ((1-p)/(1-theta))^{(r-mu)/(r+lam)}
        V = B ((1-p)/(1-theta))^{r/(r+lam)}

    solved by damped fixed-point iteration on p in (0, 1) with a bracketed
    fallback.  With ``check``, the constants of the regime are verified at
    the solution (price below gamma, ratio above M2, both control
    thresholds inactive) and RegimeViolatedError is raised otherwise.
    """
    m = model.params
    theta = m.salvage_at_cap
    if not 0.0 < theta < 1.0:
        raise RegimeViolatedError(f"salvage {theta!r} outside (0, 1)")
    if x <= 0.0 or x > m.x_star:
        raise ValueError(f"x={x!r} outside (0, x_star]")
    a = theta * m.x_star / x
    e1 = (m.r - m.mu) / (m.r + m.lam)

    def rhs(p):
        return a * ((1.0 - p) / (1.0 - theta)) ** e1

    p = theta
    ok = False
    for _ in range(max_iter):
        nxt = (1.0 - damping) * p + damping * rhs(min(p, 1.0 - 1e-15))
        if abs(nxt - p) <= tol * (1.0 + p):
            p = nxt
            ok = True
            break
        p = nxt
    if not ok:
        p = brentq(lambda q: q - rhs(q), 1e-300, 1.0 - 1e-15,
                   xtol=1e-300, rtol=8.9e-16)
    v = m.bankruptcy_cost * ((1.0 - p) / (1.0 - theta)) ** (m.r / (m.r + m.lam))

    if check:
        th = no_control_thresholds(model)
        cs = model.costs
        # derivative of the value branch, for the control thresholds
        vp = m.r * p * v / (((m.lam + m.r) - (m.lam + m.mu) * p) * x)
        bad = []
        if p > th["gamma"] * (1.0 + 1e-9):
            bad.append(f"price {p!r} above gamma={th['gamma']!r}")
        if x < th["M2"] * (1.0 - 1e-9):
            bad.append(f"ratio {x!r} below M2={th['M2']!r}")
        if vp / p > cs.l_prime0:
            bad.append("repayment threshold active (V'/p > L'(0))")
        if vp * x > cs.c_prime0:
            bad.append("devaluation threshold active (x V' > c'(0))")
        if bad:
            raise RegimeViolatedError("; ".join(bad))
    return v, p


def explicit_regime_ode(model: Model, x_probe: float, *, rtol=1e-10, atol=1e-14):
    """Independent oracle: integrate the no-control reduction

        V' = r p V / ((lam+r) - (lam+mu) p) / x
        p' = (lam+r) p (p-1) / ((lam+r) - (lam+mu) p) / x

    backward from (x_star, B, theta(x_star)) and return (V, p) at x_probe."""
    m = model.params

    def rhs(x, s):
        v, p = s
        den = ((m.lam + m.r) - (m.lam + m.mu) * p) * x
        return (m.r * p * v / den, (m.lam + m.r) * p * (p - 1.0) / den)

    res = solve_ivp(rhs, (m.x_star, x_probe), (m.bankruptcy_cost, m.salvage_at_cap),
                    method="RK45", rtol=rtol, atol=atol, dense_output=False)
    if res.status != 0:
        raise RegimeViolatedError(f"no-control reduction failed: {res.message}")
    return float(res.y[0, -1]), float(res.y[1, -1])


@dataclass
class SweepResult:
    regime: str                 # "bounded-Rs" | "ponzi-decay"
    rows: list
    thresholds: dict
    notes: dict = field(default_factory=dict)

    def to_dict(self):
        return {"regime": self.regime, "rows": self.rows,
                "thresholds": self.thresholds, "notes": self.notes}

    def export_csv(self, path):
        from .config import write_csv

        if not self.rows:
            return
        header = sorted(self.rows[0].keys())
        write_csv(path, header, ([row[k] for k in header] for row in self.rows))


def classify_regime(xstars, salvage) -> str:
    """Data-driven tag from the trend of s * theta(s) along the sweep."""
    prods = [xs * salvage(xs) for xs in xstars]
    grow = all(b > a * 1.05 for a, b in zip(prods, prods[1:]))
    return "ponzi-decay" if grow else "bounded-Rs"


def _build(model: Model, **kw) -> EquilibriumSolution:
    curve = ConstantStrategyCurve(model)
    return build_equilibrium(model, curve=curve, **kw)


def _model_payload(model: Model, x_star: float, salvage_spec: dict) -> dict:
    """Picklable reconstruction recipe for a swept model (parallel runs
    cannot ship the salvage/cost closures)."""
    cs = model.costs
    if cs.family != "reference":
        raise ValueError("parallel sweeps need a registered cost family")
    p = model.params
    return {
        "model": {"r": p.r, "lambda": p.lam, "mu": p.mu, "x_star": x_star,
                  "bankruptcy_cost": p.bankruptcy_cost},
        "salvage": salvage_spec,
        "costs": {"family": cs.family, "delta0": cs.delta0, **cs.params},
    }


def _sweep_point(payload: dict) -> dict:
    """Build one swept equilibrium and evaluate the regime quantities.
    Module-level so process pools can run it; failures are preserved as
    error rows rather than aborting the sweep."""
    from .config import RunConfig, build_model

    xs = payload["spec"]["model"]["x_star"]
    try:
        cfg = RunConfig(model=payload["spec"]["model"],
                        salvage=payload["spec"]["salvage"],
                        costs=payload["spec"]["costs"])
        mm = build_model(cfg)
        sol = _build(mm)
        if payload["kind"] == "bounded":
            probe = payload["probe"]
            u, v = sol.feedback(probe)
            return {
                "x_star": xs, "x": probe, "V": sol.value(probe),
                "p": sol.price(probe), "u": u, "v": v,
                "bound_liminf": payload["bound"],
                "p_upper": payload["R"] / probe,
                "touch_count": len(sol.touches),
            }
        m = mm.params
        gamma, m2 = payload["gamma"], payload["m2"]
        theta = m.salvage_at_cap
        if theta >= gamma:
            tau = xs
        else:
            # first ratio (scanning down) whose price still exceeds gamma
            grid = np.geomspace(m2, xs, 512)
            above = [float(g) for g in grid if sol.price(float(g)) > gamma]
            tau = min(above) if above else xs
        x_hi = math.sqrt(tau * xs)           # probe inside [tau, x_star]
        x_lo = math.sqrt(m2 * min(tau, xs))  # probe inside [M2, tau]
        b, r, lam, mu = m.bankruptcy_cost, m.r, m.lam, m.mu
        return {
            "x_star": xs, "theta": theta, "tau": tau,
            "x_probe": payload["probe"], "V_probe": sol.value(payload["probe"]),
            "x_hi": x_hi, "V_hi": sol.value(x_hi),
            "bound_hi": b * (x_hi / (theta * xs)) ** (r / (r - mu)),
            "x_lo": x_lo, "V_lo": sol.value(x_lo),
            "bound_lo": b * (x_lo / tau) ** (r * gamma / (r + lam)),
            "touch_count": len(sol.touches),
        }
    except Exception as exc:  # partial results survive per-point failures
        return {"x_star": xs, "error": f"{type(exc).__name__}: {exc}"}


def _run_sweep(payloads, jobs):
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_sweep_point, payloads))
    return [_sweep_point(p) for p in payloads]


def regime_bounded(
    model: Model,
    *,
    R: float = 1.0,
    multipliers=(10.0, 20.0, 40.0),
    probe_factor: float = 2.0,
    jobs: int = 1,
) -> SweepResult:
    """Sweep with salvage theta(s) = min(1, R/s), so sup s*theta = R.

    At probes x >= M the controls must both vanish and the value must
    (eventually in x_star) dominate B (1 - R/x)^{r/(r+lam)}.
    """
    th = no_control_thresholds(model, c1_sup=R)
    m_entry = th["M"]
    probe = probe_factor * m_entry
    salvage = lambda s: min(1.0, R / s) if s > 0.0 else 1.0
    xstars = [mult * m_entry for mult in multipliers]
    b = model.params.bankruptcy_cost
    bound = b * (1.0 - R / probe) ** (model.r / (model.r + model.lam))
    payloads = [
        {"kind": "bounded", "probe": probe, "bound": bound, "R": R,
         "spec": _model_payload(model, xs, {"family": "bounded", "R": R})}
        for xs in xstars
    ]
    rows = _run_sweep(payloads, jobs)
    errors = [r for r in rows if "error" in r]
    return SweepResult(
        regime=classify_regime(xstars, salvage),
        rows=[r for r in rows if "error" not in r],
        thresholds={**th, "R": R, "probe": probe, "bound_liminf": bound},
        notes={"errors": errors} if errors else {},
    )


def regime_ponzi(
    model: Model,
    *,
    exponent: float = 0.5,
    scale: float = 10.0,
    decades=(1e2, 1e3, 1e4),
    jobs: int = 1,
) -> SweepResult:
    """Sweep with salvage theta(s) = min(1, s^-exponent): s*theta -> inf.

    Reports the value at a fixed probe (monotone decay toward 0 expected)
    and verifies the two proof bounds

        V(x, x_star) <= B (x / (theta x_star))^{r/(r-mu)}   on [tau, x_star]
        V(x, x_star) <= B (x / tau)^{r gamma/(r+lam)}       on [M2, tau]

    where tau is where the price first drops below gamma.
    """
    th = no_control_thresholds(model)
    gamma, m2 = th["gamma"], th["M2"]
    salvage = lambda s: min(1.0, s ** (-exponent)) if s > 0.0 else 1.0
    xstars = [scale * d for d in decades]
    probe_fixed = 2.0 * m2
    if any(probe_fixed >= xs for xs in xstars):
        raise ValueError("fixed probe must sit below every swept threshold")
    payloads = [
        {"kind": "ponzi", "probe": probe_fixed, "gamma": gamma, "m2": m2,
         "spec": _model_payload(
             model, xs, {"family": "power", "exponent": exponent})}
        for xs in xstars
    ]
    rows = _run_sweep(payloads, jobs)
    errors = [r for r in rows if "error" in r]
    return SweepResult(
        regime=classify_regime(xstars, salvage),
        rows=[r for r in rows if "error" not in r],
        thresholds={**th, "exponent": exponent, "probe": probe_fixed},
        notes={"errors": errors} if errors else {},
    )


@dataclass
class DevaluationWitness:
    conditions_hold: bool
    conditions: dict
    witness_x: float | None
    witness_v: float | None
    found: bool

    def to_dict(self):
        return {
            "conditions_hold": self.conditions_hold,
            "conditions": self.conditions,
            "witness_x": self.witness_x,
            "witness_v": self.witness_v,
            "found": self.found,
        }


def devaluation_active(model: Model, *, n_scan: int = 1000, **build_kw) -> DevaluationWitness:
    """Check the sufficient conditions for active devaluation and exhibit a
    witness ratio with v*(x) > 0 on the built equilibrium.

    Conditions (exact arithmetic on the model constants):
        x_star > (L'(0) + B r) / (L'(0) (r - mu))
        B      >= 2 (r - mu) c'(0) / r
        theta(x_star) x_star > 2 (r+lam) c'(0) / (r-mu) * (1/(rB) + 1/L'(0))
    """
    m, cs = model.params, model.costs
    r, lam, mu = m.r, m.lam, m.mu
    b = m.bankruptcy_cost
    lhs_cap = (cs.l_prime0 + b * r) / (cs.l_prime0 * (r - mu))
    rhs_salvage = (2.0 * (r + lam) * cs.c_prime0 / (r - mu)) * (1.0 / (r * b) + 1.0 / cs.l_prime0)
    conds = {
        "cap_large": m.x_star > lhs_cap,
        "cap_bound": lhs_cap,
        "cost_large": b >= 2.0 * (r - mu) * cs.c_prime0 / r,
        "cost_bound": 2.0 * (r - mu) * cs.c_prime0 / r,
        "salvage_product": m.salvage_at_cap * m.x_star,
        "salvage_bound": rhs_salvage,
        "salvage_large": m.salvage_at_cap * m.x_star > rhs_salvage,
    }
    hold = conds["cap_large"] and conds["cost_large"] and conds["salvage_large"]

    sol = _build(model, **build_kw)
    witness_x = witness_v = None
    for x in np.geomspace(m.x_star * 1e-3, m.x_star, n_scan):
        _, v = sol.feedback(float(x))
        if v > 0.0:
            witness_x, witness_v = float(x), float(v)
            break
    return DevaluationWitness(
        conditions_hold=hold,
        conditions=conds,
        witness_x=witness_x,
        witness_v=witness_v,
        found=witness_x is not None,
    )
