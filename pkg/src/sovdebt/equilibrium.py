"""Assembly of the global feedback equilibrium from backward arcs.

The first arc runs from (x_star, B, theta(x_star)) down to its first
contact with the constant-strategy cost W; each contact point x_k is
continued by the eps-regularized restart, and the concatenation

    (V*, p*) = arc_k on (a(x_k), x_k]

defines a continuous, strictly increasing value function and a
nonincreasing, left-upper-jumping bond price on [0, x_star].  The feedback
controls are the pointwise minimizers evaluated on (V*', p*).
"""

from __future__ import annotations

import bisect
import json
from dataclasses import dataclass, field

import numpy as np

from . import costs as _costs
from .backward import (
    BackwardArc,
    StopReason,
    eps_limit,
    integrate_backward,
)
from .constant_strategy import ConstantStrategyCurve, p_const, v_const, w_cost
from .errors import ConstructionError, HypothesisError
from .hamiltonian import Branch, Model, ModelParams, costate_root, xi_sharp

__all__ = ["EquilibriumSolution", "build_equilibrium"]

_FORMAT_VERSION = 1


@dataclass
class EquilibriumSolution:
    """Ordered arcs and touch points giving (V*, p*, u*, v*) on [0, x_star].

    ``arcs[0]`` owns (x_1, x_star]; ``arcs[k]`` owns (x_{k+1}, x_k] with the
    convention that a touch point belongs to the arc terminating there, so
    the posted price at x_k is the restart price p_c(x_k).
    """

    model: Model
    curve: ConstantStrategyCurve
    arcs: list
    touches: list
    build_info: dict = field(default_factory=dict)

    # -- arc lookup ------------------------------------------------------
    def _owner(self, x: float) -> BackwardArc:
        if not 0.0 <= x <= self.model.params.x_star * (1.0 + 1e-12):
            raise ValueError(f"x={x!r} outside [0, x_star]")
        # touches are decreasing and each belongs to the arc terminating
        # there: arcs[k] owns (touch_{k+1}, touch_k], arcs[0] owns
        # (touch_1, x_star]
        k = bisect.bisect_right([-t for t in self.touches], -x)
        return self.arcs[min(k, len(self.arcs) - 1)]

    # -- evaluators ------------------------------------------------------
    def value(self, x: float) -> float:
        if x <= 0.0:
            return 0.0
        return float(self._owner(x).z(x))

    def price(self, x: float) -> float:
        if x <= 0.0:
            return 1.0
        return float(min(self._owner(x).q(x), 1.0))

    def value_prime(self, x: float) -> float:
        if x <= 0.0:
            x = 1e-14
        return self._owner(x).z_prime(x)

    def eval(self, x: float):
        """(V*, p*, right-derivative of V*) at x."""
        return self.value(x), self.price(x), self.value_prime(x)

    def feedback(self, x: float):
        """Optimal controls (u*, v*) = minimizers at (V*'(x), p*(x))."""
        if x <= 0.0:
            return 0.0, 0.0
        arc = self._owner(x)
        xi = arc.z_prime(x)
        p = float(min(arc.q(x), 1.0))
        cs = self.model.costs
        return _costs.u_star(cs, xi, p), _costs.v_star(cs, x, xi)

    def semi_equilibrium_point(self) -> float:
        """Threshold x_1 splitting eventual steady state (below) from
        bankruptcy in finite time (above); 0 when the first arc reaches
        the origin untouched."""
        return self.touches[0] if self.touches else 0.0

    def drift(self, x: float) -> float:
        """Closed-loop drift of the ratio under the posted price and the
        equilibrium feedback (equals H_xi at the owning branch point)."""
        if x <= 0.0:
            return 0.0
        u, v = self.feedback(x)
        p = self.price(x)
        m = self.model
        return ((m.lam + m.r) / p - m.lam - m.mu - v) * x - u / p

    # -- serialization ---------------------------------------------------
    def to_dict(self) -> dict:
        def arc_doc(arc: BackwardArc):
            return {
                "x": arc.x_nodes.tolist(),
                "z": arc.z_nodes.tolist(),
                "q": arc.q_nodes.tolist(),
                "y": arc.y_nodes.tolist(),
                "f": arc.f_nodes.tolist(),
                "g": arc.g_nodes.tolist(),
                "invh": arc.invh_nodes.tolist(),
                "terminal": list(arc.terminal),
                "stop_reason": arc.stop_reason.value,
                "hit_x": arc.hit_x,
            }

        return {
            "format_version": _FORMAT_VERSION,
            "touches": list(self.touches),
            "arcs": [arc_doc(a) for a in self.arcs],
            "build_info": self.build_info,
        }

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1, sort_keys=True)

    @classmethod
    def from_dict(cls, model: Model, curve: ConstantStrategyCurve, doc: dict):
        if doc.get("format_version") != _FORMAT_VERSION:
            raise ValueError(f"unsupported solution format {doc.get('format_version')!r}")
        arcs = []
        for ad in doc["arcs"]:
            arcs.append(
                BackwardArc(
                    model=model,
                    x_nodes=np.asarray(ad["x"]),
                    z_nodes=np.asarray(ad["z"]),
                    q_nodes=np.asarray(ad["q"]),
                    y_nodes=np.asarray(ad["y"]),
                    f_nodes=np.asarray(ad["f"]),
                    g_nodes=np.asarray(ad["g"]),
                    invh_nodes=np.asarray(ad["invh"]),
                    terminal=tuple(ad["terminal"]),
                    stop_reason=StopReason(ad["stop_reason"]),
                    hit_x=ad["hit_x"],
                )
            )
        return cls(model=model, curve=curve, arcs=arcs,
                   touches=list(doc["touches"]), build_info=doc.get("build_info", {}))

    @classmethod
    def from_json(cls, model: Model, curve: ConstantStrategyCurve, path):
        with open(path) as fh:
            return cls.from_dict(model, curve, json.load(fh))

    def sample_csv(self, path, n: int = 2000):
        from .config import write_csv

        xs = np.linspace(0.0, self.model.params.x_star, n)
        rows = []
        for x in xs:
            x = float(x)
            v, p, vp = self.eval(x)
            u, vd = self.feedback(x)
            rows.append((x, v, vp, p, u, vd, float(self.curve.w(x))))
        write_csv(path, ["x", "V", "V_prime", "p", "u", "v", "W"], rows)


def _check_hypotheses(model: Model, curve: ConstantStrategyCurve) -> dict:
    """Structural hypotheses for the construction.

    W(x_star) > B is required outright.  theta(x_star) <= p_c(x_star) is
    the checkable sufficient condition for the terminal price-monotonicity
    inequality; when it fails the inequality itself,
      theta < (r+lam) / (r+lam + v*(x_star, F-(x_star, B, theta))),
    is checked directly (large-threshold salvage sweeps live in this
    relaxed regime).
    """
    m = model.params
    w_cap = w_cost(model, m.x_star)
    info = {"w_at_cap": w_cap, "bankruptcy_cost": m.bankruptcy_cost}
    if not w_cap > m.bankruptcy_cost:
        raise HypothesisError(
            "W(x_star) > B",
            f"W(x_star) = {w_cap!r} must exceed the bankruptcy cost "
            f"{m.bankruptcy_cost!r}",
        )
    theta = m.salvage_at_cap
    pc_cap = p_const(model, m.x_star)
    info["theta_at_cap"] = theta
    info["p_c_at_cap"] = pc_cap
    if theta <= pc_cap:
        info["price_hypothesis"] = "theta(x_star) <= p_c(x_star)"
        return info
    # relaxed check at the terminal point itself
    if theta <= 0.0:
        raise HypothesisError("theta(x_star) > 0", "salvage must be positive")
    f_term = costate_root(model, Branch.MINUS, m.x_star, m.bankruptcy_cost, theta)
    v_term = _costs.v_star(model.costs, m.x_star, f_term)
    rl = m.r + m.lam
    bound = rl / (rl + v_term)
    if not theta < bound:
        raise HypothesisError(
            "theta(x_star) <= p_c(x_star)",
            f"salvage {theta!r} exceeds p_c(x_star) = {pc_cap!r} and the "
            f"terminal monotonicity bound {bound!r}",
        )
    info["price_hypothesis"] = (
        "relaxed: theta < (r+lam)/(r+lam+v*(x_star, F-(x_star, B, theta)))"
    )
    info["terminal_price_bound"] = bound
    return info


def build_equilibrium(
    model: Model,
    *,
    curve: ConstantStrategyCurve | None = None,
    tol_lim: float = 1e-8,
    max_levels: int = 40,
    max_arcs: int = 64,
    rtol: float = 1e-9,
    atol: float = 1e-12,
) -> EquilibriumSolution:
    """Construct the feedback equilibrium by backward concatenation."""
    if curve is None:
        curve = ConstantStrategyCurve(model)
    info = _check_hypotheses(model, curve)
    m = model.params

    arcs = []
    touches = []
    eps_meta = []
    arc = integrate_backward(
        model, curve, (m.x_star, m.bankruptcy_cost, m.salvage_at_cap),
        rtol=rtol, atol=atol,
    )
    arcs.append(arc)
    while arc.stop_reason is StopReason.HIT_W:
        if len(arcs) >= max_arcs:
            raise ConstructionError(f"more than {max_arcs} arcs; construction diverges")
        x_k = float(arc.hit_x)
        # the left endpoint of the previous arc may only touch W from below
        q_left = float(arc.q(x_k))
        pc_k = p_const(model, x_k)
        if q_left > pc_k + 1e-7:
            raise ConstructionError(
                f"price limit {q_left!r} at touch {x_k!r} exceeds the "
                f"constant-strategy price {pc_k!r}"
            )
        touches.append(x_k)
        lim = eps_limit(model, curve, x_k, tol_lim=tol_lim,
                        max_levels=max_levels, rtol=rtol, atol=atol)
        eps_meta.append({
            "x_k": x_k,
            "levels": len(lim.eps_levels),
            "last_eps": lim.eps_levels[-1],
            "last_sup_diff": lim.sup_diffs[-1],
        })
        arc = lim.arc
        arcs.append(arc)
    if arc.stop_reason not in (StopReason.HIT_ZERO, StopReason.REACHED_END):
        raise ConstructionError(
            f"final arc stopped with {arc.stop_reason} at x = {arc.x_left!r} "
            f"(meta: {arc.meta})"
        )

    info["n_touch_points"] = len(touches)
    info["touches"] = list(touches)
    info["eps_limits"] = eps_meta
    info["x_flat"] = curve.x_flat
    info["x_crit"] = curve.x_crit
    sol = EquilibriumSolution(model=model, curve=curve, arcs=arcs,
                              touches=touches, build_info=info)
    _post_checks(sol)
    return sol


def _post_checks(sol: EquilibriumSolution):
    """Cheap structural sanity on the assembled solution."""
    m = sol.model.params
    v_cap = sol.value(m.x_star)
    if abs(v_cap - m.bankruptcy_cost) > 1e-9 * (1.0 + m.bankruptcy_cost):
        raise ConstructionError(f"V(x_star) = {v_cap!r} != B = {m.bankruptcy_cost!r}")
    p_cap = sol.price(m.x_star)
    if abs(p_cap - m.salvage_at_cap) > 1e-9:
        raise ConstructionError(f"p(x_star) = {p_cap!r} != theta = {m.salvage_at_cap!r}")
    # drift sign per interval: rising debt strictly inside every arc
    checks = []
    bounds = [m.x_star] + sol.touches + [0.0]
    for k, arc in enumerate(sol.arcs):
        hi, lo = bounds[k], bounds[k + 1]
        xs = np.linspace(lo + 0.15 * (hi - lo), hi - 0.05 * (hi - lo), 7)
        drifts = [sol.drift(float(x)) for x in xs]
        checks.append(min(drifts))
        if min(drifts) <= 0.0:
            raise ConstructionError(
                f"nonpositive interior drift {min(drifts)!r} on arc {k} "
                f"({lo!r}, {hi!r}): minus-branch orientation violated"
            )
    sol.build_info["min_interior_drift_per_arc"] = checks
