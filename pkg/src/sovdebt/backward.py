"""Backward integration of the minus-branch system

    Z'(x) = F-(x, Z, q),   q'(x) = G-(x, Z, q)

from terminal data toward x = 0, with event detection for contact with the
constant-strategy cost W, branch singularity (H_xi -> 0), and the price
leaving (0, 1].  A third component y with y' = 1/H_xi is co-integrated; the
exponential lower bounds Z >= B e^{r y} and q >= theta e^{(r+lam+v) y} are
asserted from it in the tests.

Touch points are continued by the eps-regularized restart: the terminal
data (W(x0) - eps, p_c(x0)) sits just below the critical level, and the
solution of interest is the monotone limit of the family as eps -> 0.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicHermiteSpline, PchipInterpolator
from scipy.optimize import brentq

from . import costs as _costs
from .constant_strategy import ConstantStrategyCurve, w_cost, p_const
from .errors import (
    InfeasibleRestartError,
    NonCauchyError,
    NoSolutionError,
)
from .hamiltonian import (
    Model,
    h_max,
    h_xi,
    hamiltonian,
    minus_branch_fields,
    singular_guard,
)

__all__ = [
    "StopReason",
    "BackwardArc",
    "integrate_backward",
    "restart_eps",
    "eps_limit",
    "EpsLimitResult",
    "delta_flat_bound",
    "X_TINY",
]

#: arcs that reach this abscissa are considered to have reached the origin
X_TINY = 1e-12

#: a W-contact located below this fraction of x_star is the Z -> 0 corner
#: (both Z and W vanish at the origin), not a genuine touch point
_HIT_FLOOR_FRACTION = 1e-8

#: a singularity stop below this abscissa is the origin corner, where the
#: whole Hamiltonian (hence H_xi, linearly in x) collapses; the branch
#: surface proper cannot be reached there because the level r*Z shrinks
#: much faster than the peak
_SINGULAR_ZERO_FLOOR = 1e-6

_RTOL = 1e-9
_ATOL = 1e-12


class StopReason(enum.Enum):
    HIT_W = "hit_w"
    HIT_ZERO = "hit_zero"
    SINGULAR = "singular"
    Q_EXIT = "q_exit"
    STEP_FAILURE = "step_failure"
    REACHED_END = "reached_end"


@dataclass
class BackwardArc:
    """One backward-integrated segment with terminal data and stop reason.

    Nodes are stored in increasing x together with the exact right-hand
    side at each node; dense output is cubic Hermite through those pairs,
    so the interpolant's derivative is available analytically and the
    midpoint defect measures true integration error.
    """

    model: Model
    x_nodes: np.ndarray          # increasing
    z_nodes: np.ndarray
    q_nodes: np.ndarray
    y_nodes: np.ndarray
    f_nodes: np.ndarray          # Z' = F-(x, Z, q) at nodes
    g_nodes: np.ndarray          # q' at nodes
    invh_nodes: np.ndarray       # 1/H_xi at nodes
    terminal: tuple              # (x_T, Z_T, q_T)
    stop_reason: StopReason
    hit_x: float | None = None   # polished W-contact abscissa
    meta: dict = field(default_factory=dict)
    _z_spline: CubicHermiteSpline | None = field(default=None, repr=False)
    _q_spline: CubicHermiteSpline | None = field(default=None, repr=False)
    _y_spline: CubicHermiteSpline | None = field(default=None, repr=False)
    _f_interp: PchipInterpolator | None = field(default=None, repr=False)

    def __post_init__(self):
        x = self.x_nodes
        self._z_spline = CubicHermiteSpline(x, self.z_nodes, self.f_nodes)
        self._q_spline = CubicHermiteSpline(x, self.q_nodes, self.g_nodes)
        self._y_spline = CubicHermiteSpline(x, self.y_nodes, self.invh_nodes)
        self._f_interp = PchipInterpolator(x, self.f_nodes, extrapolate=True)

    @property
    def x_left(self) -> float:
        return float(self.x_nodes[0])

    @property
    def x_right(self) -> float:
        return float(self.x_nodes[-1])

    def z(self, x):
        return self._z_spline(x)

    def q(self, x):
        return self._q_spline(x)

    def y(self, x):
        return self._y_spline(x)

    def z_prime(self, x: float) -> float:
        """Exact branch value F-(x, Z(x), q(x)) (not a difference quotient)."""
        f, _, _ = minus_branch_fields(self.model, x, float(self.z(x)), float(self.q(x)))
        return f

    def z_prime_fast(self, x):
        """Interpolated Z' for simulation hot paths."""
        return self._f_interp(x)

    def ode_defect(self, n_mid: int = 512):
        """Max defect |dZ/dx - F-| and |dq/dx - G-| of the Hermite dense
        output at interval midpoints (an honest a-posteriori error check:
        node values and node slopes are integrator output, the midpoint
        slope is not)."""
        xm = 0.5 * (self.x_nodes[1:] + self.x_nodes[:-1])
        if len(xm) > n_mid:
            xm = xm[np.linspace(0, len(xm) - 1, n_mid).astype(int)]
        dz = self._z_spline.derivative()
        dq = self._q_spline.derivative()
        worst_z = worst_q = 0.0
        for x in xm:
            x = float(x)
            f, g, _ = minus_branch_fields(self.model, x, float(self.z(x)), float(self.q(x)))
            worst_z = max(worst_z, abs(float(dz(x)) - f))
            worst_q = max(worst_q, abs(float(dq(x)) - g))
        return worst_z, worst_q

    def export_csv(self, path):
        from .config import write_csv

        rows = zip(self.x_nodes, self.z_nodes, self.q_nodes, self.f_nodes,
                   self.g_nodes, self.y_nodes,
                   (1.0 / h for h in self.invh_nodes))
        write_csv(
            path,
            ["x", "Z", "q", "Z_prime", "q_prime", "y", "H_xi"],
            ((x, z, q, f, g, y, hxi) for (x, z, q, f, g, y, hxi) in rows),
        )


def _assemble_arc(model, res, terminal, stop_reason, hit_x=None, meta=None):
    ts = res.t[::-1].copy()
    ys = res.y[:, ::-1].copy()
    # drop duplicated abscissae (event point can coincide with a step end)
    keep = np.concatenate(([True], np.diff(ts) > 0))
    ts, ys = ts[keep], ys[:, keep]
    f = np.empty_like(ts)
    g = np.empty_like(ts)
    ih = np.empty_like(ts)
    for i, (x, z, q) in enumerate(zip(ts, ys[0], ys[1])):
        fi, gi, hxi = minus_branch_fields(model, float(x), float(z), float(q))
        f[i], g[i] = fi, gi
        ih[i] = 1.0 / hxi if hxi != 0.0 else math.inf
    return BackwardArc(
        model=model,
        x_nodes=ts,
        z_nodes=ys[0].copy(),
        q_nodes=ys[1].copy(),
        y_nodes=ys[2].copy(),
        f_nodes=f,
        g_nodes=g,
        invh_nodes=ih,
        terminal=terminal,
        stop_reason=stop_reason,
        hit_x=hit_x,
        meta=meta or {},
    )


def _polish_hit(model, arc: BackwardArc, x_event: float) -> float:
    """Refine the W-contact against direct (non-interpolated) W."""
    g = lambda x: float(arc.z(x)) - w_cost(model, float(x))
    xs = arc.x_nodes
    i = int(np.searchsorted(xs, x_event))
    lo = float(xs[max(0, i - 2)])
    hi = float(xs[min(len(xs) - 1, i + 2)])
    if lo >= hi:
        return x_event
    glo, ghi = g(lo), g(hi)
    if glo == 0.0:
        return lo
    if glo * ghi > 0.0:
        return x_event
    return brentq(g, lo, hi, xtol=1e-12, rtol=8.9e-16)


def integrate_backward(
    model: Model,
    curve: ConstantStrategyCurve,
    terminal: tuple,
    *,
    x_end: float = X_TINY,
    detect_w: bool = True,
    rtol: float = _RTOL,
    atol: float = _ATOL,
    max_step: float | None = None,
) -> BackwardArc:
    """Integrate the minus-branch system backward from ``terminal``.

    Stops at the earliest of: contact Z(x) = W(x) (HIT_W), reaching
    ``x_end`` (HIT_ZERO), branch singularity |H_xi| below the guard
    (SINGULAR), or the price leaving (0, 1] (Q_EXIT).
    """
    x_t, z_t, q_t = terminal
    if not 0.0 < q_t <= 1.0:
        raise ValueError(f"terminal price {q_t!r} outside (0, 1]")
    peak = h_max(model, x_t, q_t)
    if not 0.0 < model.r * z_t <= peak * (1.0 + 1e-12):
        raise NoSolutionError(x_t, z_t, q_t, peak)
    if h_xi(model, x_t, minus_branch_fields(model, x_t, z_t, q_t)[0], q_t) <= 0.0:
        raise NoSolutionError(
            x_t, z_t, q_t, peak,
            message=f"H_xi not positive at the terminal branch point x={x_t!r}",
        )

    q_guard = 1.0 + 1e-9

    def rhs(x, s):
        z = s[0]
        q = min(max(s[1], 1e-12), q_guard)
        f, g, hxi = minus_branch_fields(model, x, z, q)
        ih = 1.0 / hxi if hxi != 0.0 else 0.0
        return (f, g, ih)

    events = []

    def ev_singular(x, s):
        q = min(max(s[1], 1e-12), q_guard)
        f, _, hxi = minus_branch_fields(model, x, s[0], q)
        return hxi - singular_guard(x)

    ev_singular.terminal = True
    ev_singular.direction = -1
    events.append(("singular", ev_singular))

    if detect_w:
        def ev_hit_w(x, s):
            return s[0] - float(curve.w(x))

        ev_hit_w.terminal = True
        ev_hit_w.direction = 1
        events.append(("hit_w", ev_hit_w))

    def ev_q_hi(x, s):
        return s[1] - q_guard

    ev_q_hi.terminal = True
    ev_q_hi.direction = 1
    events.append(("q_hi", ev_q_hi))

    def ev_q_lo(x, s):
        return s[1] - 1e-12

    ev_q_lo.terminal = True
    ev_q_lo.direction = -1
    events.append(("q_lo", ev_q_lo))

    span = x_t - x_end
    res = solve_ivp(
        rhs,
        (x_t, x_end),
        (z_t, q_t, 0.0),
        method="RK45",
        rtol=rtol,
        atol=atol,
        max_step=max_step if max_step is not None else max(span / 256.0, 16 * X_TINY),
        events=[e for _, e in events],
        dense_output=False,
    )

    meta = {"solver_status": int(res.status), "n_steps": len(res.t)}
    hit_x = None
    if res.status == 1:  # one of the terminal events fired
        fired = [name for (name, _), te in zip(events, res.t_events) if te.size > 0]
        name = fired[0] if fired else "unknown"
        if name == "hit_w":
            x_ev = float(res.t_events[[n for n, _ in events].index("hit_w")][0])
            if x_ev <= _HIT_FLOOR_FRACTION * model.params.x_star:
                stop = StopReason.HIT_ZERO
            else:
                stop = StopReason.HIT_W
                hit_x = x_ev
        elif name == "singular":
            x_ev = float(res.t[-1])
            stop = (StopReason.HIT_ZERO if x_ev <= _SINGULAR_ZERO_FLOOR
                    else StopReason.SINGULAR)
        else:
            stop = StopReason.Q_EXIT
    elif res.status == 0:
        stop = StopReason.HIT_ZERO if x_end <= 4.0 * X_TINY else StopReason.REACHED_END
    else:
        stop = StopReason.STEP_FAILURE
        meta["solver_message"] = res.message

    arc = _assemble_arc(model, res, terminal, stop, hit_x=hit_x, meta=meta)
    if stop is StopReason.HIT_W:
        arc.hit_x = _polish_hit(model, arc, hit_x)
    return arc


def restart_eps(
    model: Model,
    curve: ConstantStrategyCurve,
    x0: float,
    eps: float,
    **kw,
) -> BackwardArc:
    """Backward continuation from a touch point: terminal data
    (x0, W(x0) - eps, p_c(x0)).

    Feasibility requires r (W(x0) - eps) <= Hmax(x0, p_c(x0)); this holds
    for every eps > 0 when x0 lies in the no-devaluation band, and fails
    for small eps above it (the best constant strategy is then strictly
    dearer than the Hamiltonian peak at its own implied price).
    """
    if not 0.0 < x0 <= model.params.x_star:
        raise ValueError(f"restart point {x0!r} outside (0, x_star]")
    if eps <= 0.0:
        raise ValueError("eps must be positive")
    w0 = w_cost(model, x0)
    p0 = p_const(model, x0)
    z0 = w0 - eps
    if z0 <= 0.0:
        raise ValueError(f"eps={eps!r} exceeds W(x0)={w0!r}")
    peak = h_max(model, x0, p0)
    if model.r * z0 > peak:
        gap = (model.r * w0 - peak) / model.r
        raise InfeasibleRestartError(
            f"restart at x0={x0!r} infeasible: W(x0)={w0!r} exceeds the "
            f"critical level Hmax(x0, p_c(x0))/r={peak / model.r!r} by {gap!r}; "
            f"continuation from touch points is only defined where the "
            f"constant-strategy optimum is Hamiltonian-critical "
            f"(x0 <= x_flat={curve.x_flat!r})"
        )
    arc = restart = integrate_backward(model, curve, (x0, z0, p0), **kw)
    arc.meta["eps"] = eps
    return restart


@dataclass
class EpsLimitResult:
    """Regularized family at a touch point and its limit.

    The family Z_eps is pointwise increasing as eps decreases, so the
    deepest arc is the pointwise supremum up to the Cauchy tolerance."""

    x0: float
    arc: BackwardArc           # deepest-eps arc (pointwise sup of the family)
    a: float                   # limit of the left contact points
    q_at_a: float
    eps_levels: list
    sup_diffs: list
    converged: bool
    arcs: list | None = None   # full family, kept on request


def _sup_diff(arc1: BackwardArc, arc2: BackwardArc, n: int = 512) -> float:
    lo = max(arc1.x_left, arc2.x_left)
    hi = min(arc1.x_right, arc2.x_right)
    if hi <= lo:
        return math.inf
    xs = np.linspace(lo, hi, n)
    return float(np.max(np.abs(arc1.z(xs) - arc2.z(xs))))


def eps_limit(
    model: Model,
    curve: ConstantStrategyCurve,
    x0: float,
    *,
    eps0: float | None = None,
    tol_lim: float = 1e-8,
    max_levels: int = 40,
    keep_arcs: bool = False,
    **kw,
) -> EpsLimitResult:
    """Limit of the restart family along eps_n = eps0 * 2^-n.

    Terminates when two consecutive arcs differ by less than ``tol_lim`` in
    sup norm on the common domain; the returned arc is the deepest level
    (the family is pointwise monotone increasing as eps decreases).
    """
    if eps0 is None:
        eps0 = 1e-3 * (1.0 + w_cost(model, x0))
    eps0 = min(eps0, 0.5 * w_cost(model, x0))
    levels, diffs = [], []
    family = [] if keep_arcs else None
    prev = None
    eps = eps0
    for _ in range(max_levels):
        arc = restart_eps(model, curve, x0, eps, **kw)
        levels.append(eps)
        if keep_arcs:
            family.append(arc)
        if prev is not None:
            d = _sup_diff(prev, arc)
            diffs.append(d)
            if d < tol_lim:
                a = _left_contact(arc)
                return EpsLimitResult(
                    x0=x0, arc=arc, a=a, q_at_a=float(arc.q_nodes[0]),
                    eps_levels=levels, sup_diffs=diffs, converged=True,
                    arcs=family,
                )
        prev = arc
        eps *= 0.5
    raise NonCauchyError(
        f"restart family at x0={x0!r} failed the Cauchy criterion "
        f"({max_levels} levels, last sup-diff {diffs[-1] if diffs else None!r})"
    )


def _left_contact(arc: BackwardArc) -> float:
    if arc.stop_reason is StopReason.HIT_W and arc.hit_x is not None:
        return float(arc.hit_x)
    if arc.stop_reason in (StopReason.HIT_ZERO, StopReason.REACHED_END):
        return 0.0
    raise NonCauchyError(
        f"restart arc stopped for unexpected reason {arc.stop_reason}"
    )


def delta_flat_bound(model: Model, curve: ConstantStrategyCurve,
                     x_w_star: float | None = None) -> float:
    """Uniform lower bound on the backward progress of a restart,
    min(d1, d1^2 / (8 C^2 (2 W' + d1))), from the slope gap
    d1 = inf (xi_sharp(x, p_c) - W') over the restart band and the
    1/2-Hoelder constant of the minus branch.

    When every touch lies below x_flat the band degenerates; the gap is
    then evaluated at the top of the no-devaluation band, which is where
    it is smallest.
    """
    from .hamiltonian import holder_constant, xi_sharp

    xf = curve.x_flat
    hi = min(model.params.x_star, xf if x_w_star is None else max(x_w_star, xf))
    hi = min(hi, model.params.x_star)
    lo = min(xf, hi)
    xs = np.linspace(lo, hi, 65) if hi > lo else np.array([hi])
    d1 = math.inf
    wp_max = 0.0
    for x in xs:
        x = float(x)
        pc = p_const(model, x)
        gap = xi_sharp(model, x, pc) - float(curve._wp(x))
        d1 = min(d1, gap)
        wp_max = max(wp_max, float(curve._wp(x)))
    if not d1 > 0.0:
        return 0.0
    c = holder_constant(model, lo, model.params.salvage_at_cap)
    curvature_term = d1 * d1 / (8.0 * c * c * (2.0 * wp_max + d1))
    return min(d1, curvature_term)
