"""Cost primitives: repayment cost L, devaluation cost c, their convex
conjugates, and the pointwise optimal controls.

L is the cost of devoting a fraction ``u`` in [0, 1) of income to debt
service; it is strictly convex, vanishes at 0, and blows up as u -> 1.
c is the social cost of devaluating at rate ``v >= 0``; strictly convex,
vanishing at 0, unbounded.  Both second derivatives are bounded below by
``delta0 > 0``, a certified constant used by the Hoelder estimate of the
costate branch maps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

__all__ = [
    "CostModel",
    "reference_costs",
    "costs_from_derivatives",
    "u_star",
    "v_star",
    "conj_l",
    "conj_c",
    "validate",
    "CostValidationReport",
]


@dataclass(frozen=True)
class CostModel:
    """Bundle of the two cost functions and the maps derived from them.

    ``l_prime_inv`` inverts L' on [L'(0), inf); ``c_prime_inv`` inverts c'
    on [c'(0), inf).  All callables are scalar float -> float and pure.
    """

    l_eval: Callable[[float], float]
    l_prime: Callable[[float], float]
    l_second: Callable[[float], float]
    l_prime_inv: Callable[[float], float]
    c_eval: Callable[[float], float]
    c_prime: Callable[[float], float]
    c_second: Callable[[float], float]
    c_prime_inv: Callable[[float], float]
    delta0: float
    family: str = "custom"
    params: dict = field(default_factory=dict)

    # threshold marginals, cached once (used in every Hamiltonian call)
    @property
    def l_prime0(self) -> float:
        return self.l_prime(0.0)

    @property
    def c_prime0(self) -> float:
        return self.c_prime(0.0)

    def c_inv(self, y: float) -> float:
        """Inverse of c on [0, inf), by doubling bracket + bisection."""
        if y <= 0.0:
            return 0.0
        hi = 1.0
        while self.c_eval(hi) < y:
            hi *= 2.0
            if hi > 1e18:
                raise ValueError("c grows too slowly to reach requested level")
        lo = 0.0
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if self.c_eval(mid) < y:
                lo = mid
            else:
                hi = mid
            if hi - lo <= 1e-14 * (1.0 + hi):
                break
        return 0.5 * (lo + hi)


def reference_costs(l0: float = 0.1, c1: float = 0.2, delta0: float = 1.0) -> CostModel:
    """Concrete family with closed-form inverse marginals.

        L(u) = l0*u - ln(1-u) - u       L'(u) = l0 + u/(1-u)
        c(v) = c1*v + v^2/2             c'(v) = c1 + v

    L'' = (1-u)^-2 >= 1 and c'' = 1, so delta0 = 1 is certified.
    """
    if l0 <= 0.0 or c1 <= 0.0:
        raise ValueError("l0 and c1 must be positive (L'(0) > 0, c'(0) > 0)")

    def l_eval(u: float) -> float:
        return l0 * u - math.log1p(-u) - u

    def l_prime(u: float) -> float:
        return l0 + u / (1.0 - u)

    def l_second(u: float) -> float:
        return 1.0 / ((1.0 - u) * (1.0 - u))

    def l_prime_inv(rho: float) -> float:
        if rho <= l0:
            return 0.0
        t = rho - l0
        return t / (1.0 + t)

    def c_eval(v: float) -> float:
        return c1 * v + 0.5 * v * v

    def c_prime(v: float) -> float:
        return c1 + v

    def c_second(v: float) -> float:
        return 1.0

    def c_prime_inv(rho: float) -> float:
        return rho - c1 if rho > c1 else 0.0

    return CostModel(
        l_eval=l_eval,
        l_prime=l_prime,
        l_second=l_second,
        l_prime_inv=l_prime_inv,
        c_eval=c_eval,
        c_prime=c_prime,
        c_second=c_second,
        c_prime_inv=c_prime_inv,
        delta0=delta0,
        family="reference",
        params={"l0": l0, "c1": c1},
    )


def _bisect_inverse(fprime, lo, hi_cap, rho, max_iter=200):
    """Invert an increasing marginal by doubling toward ``hi_cap`` then
    bisection to tolerance 1e-12 * (1 + |rho|)."""
    hi = min(hi_cap, max(2.0 * lo + 1e-6, 1e-6))
    while fprime(hi) < rho:
        nxt = min(hi_cap, 2.0 * hi)
        if nxt == hi:  # pinned at the cap; marginal blows up there
            break
        hi = nxt
    tol = 1e-12 * (1.0 + abs(rho))
    a, b = lo, hi
    for _ in range(max_iter):
        mid = 0.5 * (a + b)
        if fprime(mid) < rho:
            a = mid
        else:
            b = mid
        if b - a <= tol:
            break
    return 0.5 * (a + b)


def costs_from_derivatives(
    l_eval, l_prime, l_second, c_eval, c_prime, c_second, delta0,
    family="custom", params=None,
) -> CostModel:
    """Build a CostModel when no closed-form inverse marginals exist.

    Inverses fall back to bisection (u on [0, 1), v on [0, inf) with a
    doubling bracket).
    """

    def l_prime_inv(rho: float) -> float:
        if rho <= l_prime(0.0):
            return 0.0
        return _bisect_inverse(l_prime, 0.0, 1.0 - 1e-16, rho)

    def c_prime_inv(rho: float) -> float:
        if rho <= c_prime(0.0):
            return 0.0
        return _bisect_inverse(c_prime, 0.0, 1e18, rho)

    return CostModel(
        l_eval=l_eval, l_prime=l_prime, l_second=l_second, l_prime_inv=l_prime_inv,
        c_eval=c_eval, c_prime=c_prime, c_second=c_second, c_prime_inv=c_prime_inv,
        delta0=delta0, family=family, params=params or {},
    )


def u_star(costs: CostModel, xi: float, p: float) -> float:
    """Optimal repayment fraction: argmin over u in [0,1) of L(u) - u*xi/p.

    Zero below the threshold xi = p*L'(0); at the kink the minimizer is 0
    (both conventions agree in value).
    """
    if p <= 0.0:
        raise ValueError(f"price must be positive, got p={p!r}")
    if xi <= p * costs.l_prime0:
        return 0.0
    return costs.l_prime_inv(xi / p)


def v_star(costs: CostModel, x: float, xi: float) -> float:
    """Optimal devaluation rate: argmin over v >= 0 of c(v) - v*x*xi."""
    w = x * xi
    if w <= costs.c_prime0:
        return 0.0
    return costs.c_prime_inv(w)


def conj_l(costs: CostModel, rho: float) -> float:
    """Convex conjugate of L (extended by +inf outside [0,1)):
    sup_u { rho*u - L(u) }.  Zero for rho <= L'(0)."""
    if rho <= costs.l_prime0:
        return 0.0
    u = costs.l_prime_inv(rho)
    return rho * u - costs.l_eval(u)


def conj_c(costs: CostModel, rho: float) -> float:
    """Convex conjugate of c (extended by +inf on v < 0)."""
    if rho <= costs.c_prime0:
        return 0.0
    v = costs.c_prime_inv(rho)
    return rho * v - costs.c_eval(v)


@dataclass
class CostValidationReport:
    ok: bool
    violations: list

    def __str__(self):
        if self.ok:
            return "cost model: all structural checks passed"
        return "cost model violations:\n  " + "\n  ".join(self.violations)


def validate(costs: CostModel, *, n_grid: int = 200, u_max: float = 1.0 - 1e-6,
             v_max: float = 50.0) -> CostValidationReport:
    """Grid check of the structural requirements.  Reports violations,
    never raises."""
    bad = []

    def _check(cond, msg):
        if not cond:
            bad.append(msg)

    try:
        _check(abs(costs.l_eval(0.0)) <= 1e-14, "L(0) = 0 violated")
        _check(abs(costs.c_eval(0.0)) <= 1e-14, "c(0) = 0 violated")
        _check(costs.l_prime0 > 0.0, "L'(0) > 0 violated")
        _check(costs.c_prime0 > 0.0, "c'(0) > 0 violated")
        _check(costs.delta0 > 0.0, "delta0 > 0 violated")

        lp_ok = lpp_ok = True
        for i in range(n_grid):
            u = u_max * (i + 0.5) / n_grid
            lp_ok = lp_ok and costs.l_prime(u) > 0.0
            lpp_ok = lpp_ok and costs.l_second(u) >= costs.delta0 * (1.0 - 1e-12)
        _check(lp_ok, "L' > 0 violated on grid")
        _check(lpp_ok, "L'' >= delta0 violated on grid")

        cp_ok = cpp_ok = True
        for i in range(n_grid):
            v = v_max * (i + 0.5) / n_grid
            cp_ok = cp_ok and costs.c_prime(v) > 0.0
            cpp_ok = cpp_ok and costs.c_second(v) >= costs.delta0 * (1.0 - 1e-12)
        _check(cp_ok, "c' > 0 violated on grid")
        _check(cpp_ok, "c'' >= delta0 violated on grid")

        # blow-up of L at the right endpoint: a 3-decade jump in the value
        # or in the marginal (log-type barriers diverge slowly in value but
        # fast in slope)
        near_one = 1.0 - 1e-6
        _check(
            costs.l_eval(near_one) > 1e3 * costs.l_eval(0.5)
            or (costs.l_eval(near_one) > 10.0 * costs.l_eval(0.5)
                and costs.l_prime(near_one) > 1e3 * costs.l_prime(0.5)),
            "L(u) -> inf as u -> 1 violated (no blow-up at 1-1e-6)",
        )

        # inverse marginals round-trip
        inv_ok = True
        for i in range(n_grid):
            u = u_max * (i + 0.5) / n_grid
            rho = costs.l_prime(u)
            inv_ok = inv_ok and abs(costs.l_prime_inv(rho) - u) <= 1e-10 * (1.0 + u)
        _check(inv_ok, "l_prime_inv(L'(u)) = u round-trip violated")
        inv_ok = True
        for i in range(n_grid):
            v = v_max * (i + 0.5) / n_grid
            rho = costs.c_prime(v)
            inv_ok = inv_ok and abs(costs.c_prime_inv(rho) - v) <= 1e-10 * (1.0 + v)
        _check(inv_ok, "c_prime_inv(c'(v)) = v round-trip violated")
    except Exception as exc:  # report, never abort
        bad.append(f"evaluation failure during validation: {exc!r}")

    return CostValidationReport(ok=not bad, violations=bad)
