"""Optimal constant-debt strategies.

A constant strategy at ratio ``x`` holds the debt-to-income ratio fixed
forever; lenders then price the bond at p = (r+lam)/(r+lam+v) and the
repayment fraction is pinned to u = (r+lam)(r-mu)x / (r+lam+v).  W(x) is
the cheapest such cost, v_c / p_c the minimizing devaluation rate and its
implied price, and two structural abscissas mark where devaluation (x_c)
and the critical-price coupling (x_flat) first activate.

Identities used as oracles elsewhere:
  * on [0, x_flat]:  r W(x) = Hmax(x, 1) = L((r-mu) x), p_c = 1, v_c = 0;
  * W'(x) = (r-mu)/r * p_c(x) * L'(p_c(x) (r-mu) x)  (envelope formula);
  * W' < xi_sharp(x, p_c(x)) on the band [0, x_flat].

Above x_flat the value of the best constant strategy strictly exceeds
Hmax(x, p_c(x))/r (the minimizing pair is no longer critical for the
Hamiltonian at its own implied price); see the solver notes in README.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import PchipInterpolator

from ._bracket import brent, grow_upper
from .errors import BracketError
from .hamiltonian import Model, h_max, xi_sharp

__all__ = [
    "x_flat",
    "x_crit",
    "v_const",
    "p_const",
    "w_cost",
    "w_cost_dual",
    "w_prime",
    "constant_strategy_pair",
    "ConstantStrategyCurve",
]


def _increasing_side(model: Model):
    """Upper end of the domain where L'((r-mu)x) is defined: x < 1/(r-mu)."""
    return (1.0 - 1e-12) / (model.r - model.mu)


def x_flat(model: Model) -> float:
    """Unique root of c'(0) = x * L'((r-mu) x): left of it the critical
    price at p = 1 involves no devaluation."""
    cs = model.costs
    rm = model.r - model.mu
    f = lambda x: x * cs.l_prime(rm * x) - cs.c_prime0
    hi = _increasing_side(model)
    if f(hi) < 0.0:
        raise BracketError("L' grows too slowly: x_flat equation has no root")
    return brent(f, 0.0, hi)


def x_crit(model: Model) -> float:
    """Unique root of (r+lam) c'(0) = (r-mu) x L'((r-mu) x): the largest
    ratio whose cheapest constant strategy uses no devaluation."""
    cs = model.costs
    rm = model.r - model.mu
    f = lambda x: rm * x * cs.l_prime(rm * x) - (model.r + model.lam) * cs.c_prime0
    hi = _increasing_side(model)
    if f(hi) < 0.0:
        raise BracketError("L' grows too slowly: x_crit equation has no root")
    return brent(f, 0.0, hi)


def _foc(model: Model, x: float, v: float) -> float:
    """Derivative (up to 1/r) of the constant-strategy cost in v:
    c'(v) - (r+lam)(r-mu)x / (r+lam+v)^2 * L'((r+lam)(r-mu)x / (r+lam+v)).
    Monotone increasing in v on its domain."""
    cs = model.costs
    a = (model.r + model.lam) * (model.r - model.mu) * x
    s = model.r + model.lam + v
    u = a / s
    return cs.c_prime(v) - (a / (s * s)) * cs.l_prime(u)


def v_const(model: Model, x: float, *, x_c: float | None = None) -> float:
    """Minimizing devaluation rate of the constant-strategy cost.

    Zero up to x_crit; above, the unique positive root of the first-order
    condition (the cost is convex in v with derivative increasing to +inf).
    """
    if x <= 0.0:
        return 0.0
    if x_c is None:
        x_c = x_crit(model)
    if x <= x_c:
        return 0.0
    rl = model.r + model.lam
    a = rl * (model.r - model.mu) * x
    # keep the L' argument strictly inside [0, 1)
    v_lo = max(0.0, a / (1.0 - 1e-9) - rl)
    f = lambda v: _foc(model, x, v)
    lo, hi = grow_upper(lambda v: -f(v), v_lo + 1e-14, max(2.0 * v_lo, 1.0))
    return brent(f, lo, hi)


def p_const(model: Model, x: float, *, v_c: float | None = None) -> float:
    """Implied bond price of the best constant strategy."""
    if v_c is None:
        v_c = v_const(model, x)
    rl = model.r + model.lam
    return rl / (rl + v_c)


def constant_strategy_pair(model: Model, x: float):
    """(u, v, p) of the cheapest strategy holding the ratio at ``x``.

    Satisfies (r+lam)(r-mu) x = (r+lam+v) u and p = (r+lam)/(r+lam+v)
    exactly, so the closed-loop drift vanishes."""
    v = v_const(model, x)
    rl = model.r + model.lam
    u = rl * (model.r - model.mu) * x / (rl + v)
    return u, v, rl / (rl + v)


def w_cost(model: Model, x: float, *, v_c: float | None = None) -> float:
    """Cheapest constant-strategy cost:
    (1/r) [ L((r+lam)(r-mu)x / (r+lam+v_c)) + c(v_c) ]."""
    if x <= 0.0:
        return 0.0
    cs = model.costs
    if v_c is None:
        v_c = v_const(model, x)
    rl = model.r + model.lam
    u = rl * (model.r - model.mu) * x / (rl + v_c)
    return (cs.l_eval(u) + cs.c_eval(v_c)) / model.r


def w_cost_dual(model: Model, x: float, *, p_c: float | None = None) -> float:
    """Hamiltonian-peak route: Hmax(x, p_c(x)) / r.  Agrees with w_cost on
    [0, x_flat]; a strict lower bound above (see module docstring)."""
    if x <= 0.0:
        return 0.0
    if p_c is None:
        p_c = p_const(model, x)
    return h_max(model, x, p_c) / model.r


def w_prime(model: Model, x: float, *, v_c: float | None = None) -> float:
    """Envelope derivative of W:  (r-mu)/r * p_c(x) * L'(p_c(x) (r-mu) x)."""
    cs = model.costs
    if v_c is None:
        v_c = v_const(model, x)
    rl = model.r + model.lam
    pc = rl / (rl + v_c)
    rm = model.r - model.mu
    return (rm / model.r) * pc * cs.l_prime(pc * rm * x)


class ConstantStrategyCurve:
    """Memoized constant-strategy quantities on a geometric grid.

    The backward solver queries W millions of times during event detection,
    so W is tabulated on ``n`` nodes (geometric toward 0, plus the origin)
    and interpolated with a monotone cubic.  Direct evaluation stays
    available through the module functions; event hits are polished against
    them.
    """

    def __init__(self, model: Model, n: int = 2048):
        self.model = model
        self.x_flat = x_flat(model)
        self.x_crit = x_crit(model)
        xs = model.params.x_star
        grid = np.concatenate(([0.0], np.geomspace(xs * 1e-9, xs, n - 1)))
        vc = np.empty_like(grid)
        for i, x in enumerate(grid):
            vc[i] = v_const(model, float(x), x_c=self.x_crit)
        rl = model.r + model.lam
        pc = rl / (rl + vc)
        w = np.array([w_cost(model, float(x), v_c=float(v)) for x, v in zip(grid, vc)])
        wp = np.array([w_prime(model, float(x), v_c=float(v)) for x, v in zip(grid, vc)])
        self.x_nodes = grid
        self.v_c_nodes = vc
        self.p_c_nodes = pc
        self.w_nodes = w
        self.w_prime_nodes = wp
        self._w = PchipInterpolator(grid, w, extrapolate=True)
        self._wp = PchipInterpolator(grid, wp, extrapolate=True)
        self._pc = PchipInterpolator(grid, pc, extrapolate=True)

    def w(self, x):
        return self._w(x)

    def w_direct(self, x: float) -> float:
        return w_cost(self.model, x)

    def w_prime(self, x):
        return self._wp(x)

    def p_c(self, x):
        return self._pc(x)

    def p_c_direct(self, x: float) -> float:
        return p_const(self.model, x)

    def export_csv(self, path):
        from .config import write_csv

        rows = zip(self.x_nodes, self.v_c_nodes, self.p_c_nodes,
                   self.w_nodes, self.w_prime_nodes)
        write_csv(path, ["x", "v_c", "p_c", "W", "W_prime"], rows)


def no_devaluation_band_checks(model: Model, curve: ConstantStrategyCurve,
                               n: int = 256) -> list[str]:
    """Sanity assertions valid on [0, min(x_star, x_flat)]: price pinned at 1,
    dual route equality, and the slope gap W' < xi_sharp(x, p_c).  Returns a
    list of violations (empty when clean)."""
    bad = []
    top = min(model.params.x_star, curve.x_flat)
    for x in np.linspace(top * 1e-3, top, n):
        x = float(x)
        vc = v_const(model, x, x_c=curve.x_crit)
        if vc != 0.0:
            bad.append(f"v_c({x}) = {vc} nonzero inside the no-devaluation band")
            continue
        wa = w_cost_dual(model, x, p_c=1.0)
        wb = w_cost(model, x, v_c=0.0)
        if abs(wa - wb) > 1e-9 * (1.0 + abs(wb)):
            bad.append(f"dual route mismatch at x={x}: {wa} vs {wb}")
        if not w_prime(model, x, v_c=0.0) < xi_sharp(model, x, 1.0):
            bad.append(f"W'(x) >= xi_sharp(x, 1) at x={x}")
    return bad
