"""Forward simulation of the closed-loop debt dynamics and verification of
both equilibrium clauses.

The state is integrated together with the discounted running cost, the
investor discount factor D(t) = exp(-int (r+lam+v)), and the price
accumulator P(t) = int (r+lam) D; cost and price functionals are then read
off the accumulators with exact terminal terms:

    J   = cost(T) + e^{-r T_b} B                    (bankruptcy)
        = cost(T) + e^{-r T} [L(u) + c(v)] / r      (steady state)
    Psi = P(T) + D(T) theta(x_star)                 (bankruptcy)
        = P(T) + D(T) (r+lam)/(r+lam+v)             (steady state)

Trajectories under the equilibrium feedback stop when they cross a touch
point from below: the drift vanishes there like sqrt(x_k - x), so the
crossing detector is the robust form of steady-state detection.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from . import costs as _costs
from .equilibrium import EquilibriumSolution
from .errors import StiffnessError
from .hamiltonian import Model, xi_sharp

__all__ = [
    "Trajectory",
    "simulate",
    "equilibrium_policy",
    "constant_strategy_policy",
    "open_loop_policy",
    "discounted_cost",
    "price_functional",
    "verify_equilibrium",
    "VerificationReport",
]

_X_FLOOR = 1e-13


@dataclass
class Policy:
    """Price map plus control law for the forward dynamics.

    ``control(t, x) -> (u, v)``; ``price(x) -> p`` is the posted bond
    price, frozen during simulation.  ``absorb`` lists ratios where the
    closed loop is steady (touch points; the held ratio of a constant
    strategy).  ``switches`` are control discontinuities in time.
    """

    price: callable
    control: callable
    absorb: tuple = ()
    switches: tuple = ()
    steady_controls: callable | None = None  # exact controls at an absorb point


@dataclass
class Trajectory:
    t: np.ndarray
    x: np.ndarray
    u: np.ndarray
    v: np.ndarray
    cost: np.ndarray        # discounted running cost accumulator
    discount: np.ndarray    # D(t)
    price_acc: np.ndarray   # P(t)
    t_end: float
    end_reason: str         # bankrupt | steady | t_max | hit_zero
    bankruptcy_time: float  # inf unless bankrupt
    steady_x: float | None
    steady_uv: tuple | None
    meta: dict = field(default_factory=dict)

    def export_csv(self, path):
        from .config import write_csv

        rows = zip(self.t, self.x, self.u, self.v, self.cost, self.discount)
        write_csv(path, ["t", "x", "u", "v", "discounted_cost", "D"], rows)


def equilibrium_policy(sol: EquilibriumSolution) -> Policy:
    """Feedback policy of a built equilibrium, with fast interpolated V'."""
    model = sol.model
    cs = model.costs

    def control(t, x):
        if x <= 0.0:
            return 0.0, 0.0
        arc = sol._owner(x)
        xi = float(arc.z_prime_fast(x))
        p = float(min(arc.q(x), 1.0))
        return _costs.u_star(cs, xi, p), _costs.v_star(cs, x, xi)

    def steady_controls(x):
        # exact critical controls at a touch point (the interpolated V'
        # carries the eps-regularization bias, the fixed point does not)
        p = sol.price(x)
        xi = xi_sharp(model, x, p)
        return _costs.u_star(cs, xi, p), _costs.v_star(cs, x, xi)

    return Policy(
        price=sol.price,
        control=control,
        absorb=tuple(sol.touches),
        steady_controls=steady_controls,
    )


def constant_strategy_policy(model: Model, x_bar: float) -> Policy:
    """Hold the ratio at x_bar with the cheapest constant strategy; the
    posted price is the implied constant-strategy price."""
    from .constant_strategy import constant_strategy_pair

    u, v, p = constant_strategy_pair(model, x_bar)
    return Policy(
        price=lambda x: p,
        control=lambda t, x: (u, v),
        absorb=(x_bar,),
        steady_controls=lambda x: (u, v),
    )


def open_loop_policy(sol: EquilibriumSolution, schedule) -> Policy:
    """Piecewise-constant open-loop controls against the posted price map.

    ``schedule`` is a sequence of (t_from, u, v), sorted by t_from.
    """
    times = [s[0] for s in schedule]

    def control(t, x):
        i = 0
        for j, t0 in enumerate(times):
            if t >= t0:
                i = j
        return schedule[i][1], schedule[i][2]

    return Policy(
        price=sol.price,
        control=control,
        switches=tuple(times[1:]),
    )


def _drift(model: Model, p: float, x: float, u: float, v: float) -> float:
    return ((model.lam + model.r) / p - model.lam - model.mu - v) * x - u / p


def simulate(
    model: Model,
    policy: Policy,
    x0: float,
    *,
    t_max: float | None = None,
    rtol: float = 1e-10,
    atol: float = 1e-13,
) -> Trajectory:
    """Integrate the closed loop from x0 until bankruptcy, a steady state,
    the origin, or t_max."""
    m = model.params
    if not 0.0 <= x0 <= m.x_star:
        raise ValueError(f"x0={x0!r} outside [0, x_star]")
    if t_max is None:
        t_max = 400.0 / model.r
    cs = model.costs

    # immediate boundary / steady cases
    if x0 >= m.x_star:
        return _empty_traj(x0, "bankrupt", 0.0, None, None)
    for a in policy.absorb:
        if abs(x0 - a) <= 1e-9 * (1.0 + a):
            uv = (policy.steady_controls(a) if policy.steady_controls is not None
                  else policy.control(0.0, a))
            return _empty_traj(a, "steady", math.inf, a, uv)
    u0, v0 = policy.control(0.0, x0)
    p0 = float(policy.price(x0)) if x0 > 0.0 else 1.0
    if abs(_drift(model, p0, x0, u0, v0)) < 1e-13 * (1.0 + x0):
        return _empty_traj(x0, "steady", math.inf, x0, (u0, v0))

    def rhs(t, s):
        x = min(max(s[0], 0.0), m.x_star)
        u, v = policy.control(t, x)
        p = float(policy.price(x)) if x > 0.0 else 1.0
        dx = _drift(model, p, x, u, v)
        run = math.exp(-model.r * t) * (cs.l_eval(u) + cs.c_eval(v))
        dD = -(model.r + model.lam + v) * s[2]
        dP = (model.r + model.lam) * s[2]
        return (dx, run, dD, dP)

    events = []

    def ev_bankrupt(t, s):
        return s[0] - m.x_star

    ev_bankrupt.terminal = True
    ev_bankrupt.direction = 1
    events.append(("bankrupt", ev_bankrupt))

    def ev_zero(t, s):
        return s[0] - _X_FLOOR

    ev_zero.terminal = True
    ev_zero.direction = -1
    events.append(("hit_zero", ev_zero))

    absorb_above = sorted(a for a in policy.absorb if a > x0 + 1e-12)
    if absorb_above:
        target = absorb_above[0]

        def ev_absorb(t, s, target=target):
            return s[0] - target

        ev_absorb.terminal = True
        ev_absorb.direction = 1
        events.append(("steady", ev_absorb))
    else:
        target = None

    # integrate segment-by-segment across control switch times
    seg_starts = [0.0] + [s for s in policy.switches if 0.0 < s < t_max]
    seg_ends = seg_starts[1:] + [t_max]
    state = (x0, 0.0, 1.0, 0.0)
    ts, xs, us, vs, costs_, Ds, Ps = [], [], [], [], [], [], []
    end_reason, t_end = "t_max", t_max
    steady_x = None
    for t0, t1 in zip(seg_starts, seg_ends):
        res = solve_ivp(
            rhs, (t0, t1), state, method="RK45", rtol=rtol, atol=atol,
            events=[e for _, e in events], max_step=(t1 - t0) / 8.0,
        )
        if res.status == -1:
            raise StiffnessError(
                f"forward step control failed at t={res.t[-1]!r}: {res.message}",
                trajectory=None,
            )
        for tt, ss in zip(res.t, res.y.T):
            x = float(min(max(ss[0], 0.0), m.x_star))
            u, v = policy.control(float(tt), x)
            ts.append(float(tt))
            xs.append(x)
            us.append(u)
            vs.append(v)
            costs_.append(float(ss[1]))
            Ds.append(float(ss[2]))
            Ps.append(float(ss[3]))
        state = tuple(res.y[:, -1])
        if res.status == 1:
            fired = [name for (name, _), te in zip(events, res.t_events) if te.size > 0]
            end_reason = fired[0]
            t_end = float(res.t[-1])
            if end_reason == "steady":
                steady_x = target
            break
    else:
        t_end = float(ts[-1]) if ts else t_max

    bankruptcy_time = t_end if end_reason == "bankrupt" else math.inf
    steady_uv = None
    if end_reason == "steady":
        if policy.steady_controls is not None:
            steady_uv = policy.steady_controls(steady_x)
        else:
            steady_uv = policy.control(t_end, steady_x)
    return Trajectory(
        t=np.asarray(ts), x=np.asarray(xs), u=np.asarray(us), v=np.asarray(vs),
        cost=np.asarray(costs_), discount=np.asarray(Ds), price_acc=np.asarray(Ps),
        t_end=t_end, end_reason=end_reason, bankruptcy_time=bankruptcy_time,
        steady_x=steady_x, steady_uv=steady_uv,
    )


def _empty_traj(x0, reason, t_b, steady_x, steady_uv):
    z = np.zeros(1)
    return Trajectory(
        t=z, x=np.full(1, x0), u=z.copy(), v=z.copy(), cost=z.copy(),
        discount=np.ones(1), price_acc=z.copy(), t_end=0.0, end_reason=reason,
        bankruptcy_time=t_b if reason == "bankrupt" else math.inf,
        steady_x=steady_x, steady_uv=steady_uv,
    )


def discounted_cost(model: Model, traj: Trajectory):
    """Total discounted cost of a trajectory; returns (J, tail_bound).

    The tail bound is nonzero only for t_max truncation, where the omitted
    remainder is at most e^{-r T} sup[L(u)+c(v)] / r along the final leg.
    """
    m = model.params
    cs = model.costs
    total = float(traj.cost[-1])
    tail = 0.0
    if traj.end_reason == "bankrupt":
        total += math.exp(-model.r * traj.bankruptcy_time) * m.bankruptcy_cost
    elif traj.end_reason == "steady":
        u, v = traj.steady_uv
        total += math.exp(-model.r * traj.t_end) * (cs.l_eval(u) + cs.c_eval(v)) / model.r
    elif traj.end_reason == "hit_zero":
        pass  # idling at zero debt is free under the optimal continuation
    else:  # t_max truncation
        sup_run = float(np.max(cs.l_eval(traj.u[-1]) + cs.c_eval(traj.v[-1])))
        tail = math.exp(-model.r * traj.t_end) * sup_run / model.r
    return total, tail


def price_functional(model: Model, traj: Trajectory):
    """Discounted investor payoff along the trajectory; returns
    (Psi, tail_bound)."""
    m = model.params
    psi = float(traj.price_acc[-1])
    D_end = float(traj.discount[-1])
    tail = 0.0
    if traj.end_reason == "bankrupt":
        psi += D_end * m.theta(m.x_star)
    elif traj.end_reason == "steady":
        _, v = traj.steady_uv
        rl = model.r + model.lam
        psi += D_end * rl / (rl + v)
    elif traj.end_reason == "hit_zero":
        psi += D_end  # v = 0 continuation pays the full stream
    else:
        tail = D_end
    return psi, tail


def phi_profile(model: Model, sol: EquilibriumSolution, traj: Trajectory):
    """phi(t) = cost(t) + e^{-rt} V*(x(t)): constant along equilibrium play,
    nondecreasing along any admissible control."""
    vals = np.empty(len(traj.t))
    for i, (t, x) in enumerate(zip(traj.t, traj.x)):
        vals[i] = traj.cost[i] + math.exp(-model.r * t) * sol.value(float(x))
    return vals


@dataclass
class VerificationReport:
    rows: list
    max_cost_residual: float
    max_price_residual: float
    n_probes: int
    probe_violations: int
    probe_min_margin: float
    max_phi_drift: float
    probe_phi_min_step: float

    def to_dict(self):
        return {
            "rows": self.rows,
            "max_cost_residual": self.max_cost_residual,
            "max_price_residual": self.max_price_residual,
            "n_probes": self.n_probes,
            "probe_violations": self.probe_violations,
            "probe_min_margin": self.probe_min_margin,
            "max_phi_drift": self.max_phi_drift,
            "probe_phi_min_step": self.probe_phi_min_step,
        }


def verify_equilibrium(
    sol: EquilibriumSolution,
    x0_grid=None,
    *,
    n_probes: int = 200,
    n_switches: int = 5,
    seed: int = 0,
    probe_tol: float = 1e-6,
    t_max: float | None = None,
) -> VerificationReport:
    """Check both equilibrium clauses by forward simulation.

    For each start x0: the realized discounted cost must equal V*(x0) and
    the investor payoff must equal the posted price p*(x0).  Random
    piecewise-constant open-loop controls must never undercut V*(x0).
    """
    model = sol.model
    m = model.params
    if x0_grid is None:
        x0_grid = np.linspace(0.0, m.x_star, 50)
    pol = equilibrium_policy(sol)

    rows = []
    worst_cost = worst_price = worst_phi = 0.0
    for x0 in x0_grid:
        x0 = float(x0)
        traj = simulate(model, pol, x0, t_max=t_max)
        j, _ = discounted_cost(model, traj)
        psi, _ = price_functional(model, traj)
        res_i = abs(j - sol.value(x0))
        res_ii = abs(psi - sol.price(x0))
        phi = phi_profile(model, sol, traj)
        drift = float(np.max(np.abs(phi - phi[0]))) if len(phi) else 0.0
        worst_cost = max(worst_cost, res_i)
        worst_price = max(worst_price, res_ii)
        worst_phi = max(worst_phi, drift)
        rows.append({
            "x0": x0, "J": j, "V": sol.value(x0), "cost_residual": res_i,
            "Psi": psi, "p": sol.price(x0), "price_residual": res_ii,
            "end": traj.end_reason,
            "T_b": traj.bankruptcy_time if traj.end_reason == "bankrupt" else None,
            "steady_x": traj.steady_x,
        })

    rng = np.random.default_rng(seed)
    violations = 0
    min_margin = math.inf
    min_phi_step = math.inf
    probe_horizon = min(t_max or 600.0, 600.0)
    for _ in range(n_probes):
        x0 = float(rng.uniform(0.05, 0.95) * m.x_star)
        t_sw = np.sort(rng.uniform(0.0, 0.5 * probe_horizon, n_switches))
        sched = [(0.0, float(rng.uniform(0.0, 0.9)), float(rng.uniform(0.0, 0.5)))]
        for t0 in t_sw:
            sched.append((float(t0), float(rng.uniform(0.0, 0.9)),
                          float(rng.uniform(0.0, 0.5))))
        probe = open_loop_policy(sol, sched)
        traj = simulate(model, probe, x0, t_max=probe_horizon)
        j, _ = discounted_cost(model, traj)
        margin = j - sol.value(x0)
        min_margin = min(min_margin, margin)
        if margin < -probe_tol:
            violations += 1
        phi = phi_profile(model, sol, traj)
        if len(phi) > 1:
            min_phi_step = min(min_phi_step, float(np.min(np.diff(phi))))

    return VerificationReport(
        rows=rows,
        max_cost_residual=worst_cost,
        max_price_residual=worst_price,
        n_probes=n_probes,
        probe_violations=violations,
        probe_min_margin=min_margin,
        max_phi_drift=worst_phi,
        probe_phi_min_step=min_phi_step,
    )
