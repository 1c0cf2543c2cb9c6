"""The Hamiltonian of the debt dynamics and its costate branch maps.

    H(x, xi, p) = min_u {L(u) - u xi/p} + min_v {c(v) - v x xi}
                  + ((lam + r)/p - lam - mu) x xi

For fixed (x, p) the map xi -> H is concave with a unique interior peak at
``xi_sharp``; each level r*eta below the peak is attained by exactly two
costate roots, the increasing branch ``MINUS`` (rising debt) and the
decreasing branch ``PLUS`` (falling debt).  The bond-price slope along a
branch is the ratio of the price-equation numerator to H_xi.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable

from . import costs as _costs
from ._bracket import brent, grow_upper, polish_newton
from .errors import NoSolutionError, SingularSlopeError

__all__ = [
    "ModelParams",
    "Model",
    "Branch",
    "HamiltonianPoint",
    "dump_costate_curve",
    "hamiltonian",
    "hamiltonian_grad",
    "h_xi",
    "xi_sharp",
    "h_max",
    "costate_root",
    "costate_root_deta",
    "price_slope",
    "minus_branch_fields",
    "holder_constant",
    "F_RESIDUAL_TOL",
    "singular_guard",
]

#: residual tolerance for costate roots: |H(x, F, p) - r*eta| <= tol*(1+r*eta)
F_RESIDUAL_TOL = 1e-10


def singular_guard(x: float) -> float:
    """|H_xi| below this is treated as the singular surface."""
    return 1e-9 * (1.0 + x)


@dataclass(frozen=True)
class ModelParams:
    """Economic constants.

    r       bond interest rate (also the borrower's discount rate)
    lam     principal repayment rate
    mu      mean income growth rate, 0 <= mu < r
    x_star  bankruptcy threshold for the debt-to-income ratio
    bankruptcy_cost  lump cost B paid at bankruptcy
    theta   salvage map s -> fraction of capital recovered at bankruptcy
    """

    r: float
    lam: float
    mu: float
    x_star: float
    bankruptcy_cost: float
    theta: Callable[[float], float]
    theta_spec: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (self.r > self.mu >= 0.0):
            raise ValueError(f"need r > mu >= 0, got r={self.r}, mu={self.mu}")
        if self.lam < 0.0:
            raise ValueError(f"need lam >= 0, got {self.lam}")
        if self.x_star <= 0.0:
            raise ValueError(f"need x_star > 0, got {self.x_star}")
        if self.bankruptcy_cost <= 0.0:
            raise ValueError(f"need bankruptcy_cost > 0, got {self.bankruptcy_cost}")
        th = self.theta(self.x_star)
        if not (0.0 <= th <= 1.0):
            raise ValueError(f"theta(x_star) = {th} outside [0, 1]")

    @property
    def salvage_at_cap(self) -> float:
        return self.theta(self.x_star)


@dataclass(frozen=True)
class Model:
    """Parameters plus cost functions; the shared context of every solver."""

    params: ModelParams
    costs: _costs.CostModel

    @property
    def r(self):
        return self.params.r

    @property
    def lam(self):
        return self.params.lam

    @property
    def mu(self):
        return self.params.mu

    @property
    def x_star(self):
        return self.params.x_star

    @property
    def bankruptcy_cost(self):
        return self.params.bankruptcy_cost


class Branch(enum.Enum):
    MINUS = -1
    PLUS = +1


@dataclass(frozen=True)
class HamiltonianPoint:
    """State-costate-price triple with every derived quantity cached.

    Convenience bundle for diagnostics and hot loops that would otherwise
    recompute the pointwise controls several times."""

    x: float
    xi: float
    p: float
    u: float
    v: float
    h: float
    h_x: float
    h_xi: float
    h_p: float

    @classmethod
    def at(cls, model: "Model", x: float, xi: float, p: float) -> "HamiltonianPoint":
        if p <= 0.0:
            raise ValueError(f"price must be positive, got p={p!r}")
        cs = model.costs
        u = _costs.u_star(cs, xi, p)
        v = _costs.v_star(cs, x, xi)
        lr = model.lam + model.r
        core = lr - p * (model.lam + model.mu + v)
        run = (cs.l_eval(u) - u * xi / p) + (cs.c_eval(v) - v * x * xi)
        return cls(
            x=x, xi=xi, p=p, u=u, v=v,
            h=run + (lr / p - model.lam - model.mu) * x * xi,
            h_x=core * xi / p,
            h_xi=(x * core - u) / p,
            h_p=(u - x * lr) * xi / (p * p),
        )


def hamiltonian(model: Model, x: float, xi: float, p: float) -> float:
    if p <= 0.0:
        raise ValueError(f"price must be positive, got p={p!r}")
    cs = model.costs
    u = _costs.u_star(cs, xi, p)
    v = _costs.v_star(cs, x, xi)
    run = (cs.l_eval(u) - u * xi / p) + (cs.c_eval(v) - v * x * xi)
    drift = ((model.lam + model.r) / p - model.lam - model.mu) * x * xi
    return run + drift


def hamiltonian_grad(model: Model, x: float, xi: float, p: float):
    """(H_x, H_xi, H_p) in terms of the pointwise optimal controls."""
    if p <= 0.0:
        raise ValueError(f"price must be positive, got p={p!r}")
    cs = model.costs
    u = _costs.u_star(cs, xi, p)
    v = _costs.v_star(cs, x, xi)
    lr = model.lam + model.r
    core = lr - p * (model.lam + model.mu + v)
    hx = core * xi / p
    hxi = (x * core - u) / p
    hp = (u - x * lr) * xi / (p * p)
    return hx, hxi, hp


def h_xi(model: Model, x: float, xi: float, p: float) -> float:
    cs = model.costs
    u = _costs.u_star(cs, xi, p)
    v = _costs.v_star(cs, x, xi)
    return (x * ((model.lam + model.r) - p * (model.lam + model.mu + v)) - u) / p


def xi_sharp(model: Model, x: float, p: float) -> float:
    """Unique maximizer of xi -> H(x, xi, p) on [0, inf).

    H_xi is positive and constant up to the first control threshold, then
    strictly decreasing to -inf, so the root bracket is
    [min(p L'(0), c'(0)/x), hi] with hi grown by doubling.
    """
    if x <= 0.0 or p <= 0.0:
        raise ValueError(f"need x > 0 and p > 0, got x={x!r}, p={p!r}")
    cs = model.costs
    lo = min(p * cs.l_prime0, cs.c_prime0 / x)
    f = lambda xi: h_xi(model, x, xi, p)
    lo_, hi = grow_upper(lambda xi: -f(xi), lo, max(2.0 * lo, 1.0))
    return brent(f, lo_, hi)


def h_max(model: Model, x: float, p: float) -> float:
    """Peak value of the Hamiltonian in the costate; strictly decreasing in p."""
    return hamiltonian(model, x, xi_sharp(model, x, p), p)


def _linear_zone_root(model: Model, x: float, eta: float, p: float):
    """Closed-form MINUS root when both control thresholds are inactive:
    H is linear there with slope ((lam+r)/p - lam - mu) * x."""
    slope = ((model.lam + model.r) / p - model.lam - model.mu) * x
    if slope <= 0.0:
        return None
    xi = model.r * eta / slope
    cs = model.costs
    if xi <= p * cs.l_prime0 and x * xi <= cs.c_prime0:
        return xi
    return None


def costate_root(
    model: Model,
    branch: Branch,
    x: float,
    eta: float,
    p: float,
    *,
    xi_peak: float | None = None,
    h_peak: float | None = None,
) -> float:
    """Solve H(x, xi, p) = r*eta on the requested branch.

    MINUS returns the root in [0, xi_sharp], PLUS the root in
    [xi_sharp, inf).  At the peak level both coincide with xi_sharp.
    Residual contract: |H - r*eta| <= F_RESIDUAL_TOL * (1 + r*eta).
    """
    if eta <= 0.0:
        raise ValueError(f"need eta > 0, got {eta!r}")
    target = model.r * eta
    if branch is Branch.MINUS and xi_peak is None:
        xi = _linear_zone_root(model, x, eta, p)
        if xi is not None:
            return xi
    if xi_peak is None:
        xi_peak = xi_sharp(model, x, p)
    if h_peak is None:
        h_peak = hamiltonian(model, x, xi_peak, p)
    gap = h_peak - target
    tol = F_RESIDUAL_TOL * (1.0 + abs(target))
    if gap < -tol:
        raise NoSolutionError(x, eta, p, h_peak)
    if gap <= tol:
        return xi_peak

    f = lambda xi: hamiltonian(model, x, xi, p) - target
    if branch is Branch.MINUS:
        lo, hi = 0.0, xi_peak
    else:
        _, hi = grow_upper(f, xi_peak, max(2.0 * xi_peak, 1.0))
        lo = xi_peak
    root = brent(f, lo, hi)
    return polish_newton(f, lambda xi: h_xi(model, x, xi, p), root, lo, hi, tol)


def costate_root_deta(model: Model, branch: Branch, x: float, eta: float, p: float) -> float:
    """Sensitivity of the branch root to the level: r / H_xi at the root.

    Positive on MINUS, negative on PLUS, diverging at the peak."""
    xi = costate_root(model, branch, x, eta, p)
    d = h_xi(model, x, xi, p)
    if abs(d) < singular_guard(x):
        raise SingularSlopeError(
            f"H_xi = {d!r} within singular guard at x={x!r}, eta={eta!r}, p={p!r}"
        )
    return model.r / d


def price_slope(model: Model, branch: Branch, x: float, eta: float, p: float) -> float:
    """Bond-price slope along a branch:
    ((r + lam + v*(x, F)) p - (r + lam)) / H_xi(x, F, p)."""
    xi = costate_root(model, branch, x, eta, p)
    d = h_xi(model, x, xi, p)
    if abs(d) < singular_guard(x):
        raise SingularSlopeError(
            f"H_xi = {d!r} within singular guard at x={x!r}, eta={eta!r}, p={p!r}"
        )
    v = _costs.v_star(model.costs, x, xi)
    rl = model.r + model.lam
    return ((rl + v) * p - rl) / d


def minus_branch_fields(model: Model, x: float, z: float, q: float):
    """One-stop evaluation for the backward system at state (x, Z, q):
    returns (F, G, H_xi) with a single root solve.  Used in the ODE
    right-hand side where xi_sharp would otherwise be recomputed.

    Clamps the level to the Hamiltonian peak when a trial step overshoots
    (the singularity event terminates the integration before this matters).
    """
    cs = model.costs
    target = model.r * z
    xi = _linear_zone_root(model, x, z, q)
    if xi is None:
        xp = xi_sharp(model, x, q)
        hp = hamiltonian(model, x, xp, q)
        if target >= hp:
            xi = xp
        else:
            f = lambda s: hamiltonian(model, x, s, q) - target
            xi = brent(f, 0.0, xp)
            xi = polish_newton(
                f, lambda s: h_xi(model, x, s, q), xi, 0.0, xp,
                F_RESIDUAL_TOL * (1.0 + abs(target)),
            )
    d = h_xi(model, x, xi, q)
    v = _costs.v_star(cs, x, xi)
    rl = model.r + model.lam
    num = (rl + v) * q - rl
    if d == 0.0:
        g = math.inf if num > 0 else (-math.inf if num < 0 else 0.0)
    else:
        g = num / d
    return xi, g, d


def dump_costate_curve(model: Model, x: float, p: float, path, *,
                       xi_max: float | None = None, n: int = 400):
    """Diagnostic CSV of (xi, H, H_xi) at fixed (x, p), for plotting the
    concave profile and its peak."""
    from .config import write_csv

    if xi_max is None:
        xi_max = 2.0 * xi_sharp(model, x, p)
    rows = []
    for i in range(n):
        xi = xi_max * i / (n - 1)
        rows.append((xi, hamiltonian(model, x, xi, p), h_xi(model, x, xi, p)))
    write_csv(path, ["xi", "H", "H_xi"], rows)


def holder_constant(model: Model, x1: float, p1: float) -> float:
    """Constant of the 1/2-Hoelder estimate for the MINUS branch in the
    level variable, on x in [x1, x_star], p in [p1, 1], level differences
    at most 2 * bankruptcy_cost:

        sqrt(2 r delta0 / min(1, x1^2 p1)) + sqrt(2 B) r / ((r - mu) x1)
    """
    if x1 <= 0.0 or p1 <= 0.0:
        raise ValueError("need x1 > 0 and p1 > 0")
    d0 = model.costs.delta0
    curv = math.sqrt(2.0 * model.r * d0 / min(1.0, x1 * x1 * p1))
    lip = math.sqrt(2.0 * model.bankruptcy_cost) * model.r / ((model.r - model.mu) * x1)
    return curv + lip
