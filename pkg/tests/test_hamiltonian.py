import math

import numpy as np
import pytest

from sovdebt.costs import u_star, v_star
from sovdebt.errors import NoSolutionError, SingularSlopeError
from sovdebt.hamiltonian import (
    Branch,
    costate_root,
    costate_root_deta,
    h_max,
    h_xi,
    hamiltonian,
    hamiltonian_grad,
    holder_constant,
    price_slope,
    xi_sharp,
)

RNG_BOX = {"x": (0.2, 3.0), "p": (0.3, 1.0), "xi": (0.01, 1.5)}


def sample_points(model, n, seed, off_kinks=True):
    """Random interior (x, xi, p), rejecting a 1e-4-neighborhood of the
    control-threshold loci where H is only C^1."""
    rng = np.random.default_rng(seed)
    cs = model.costs
    pts = []
    while len(pts) < n:
        x = float(rng.uniform(*RNG_BOX["x"]))
        p = float(rng.uniform(*RNG_BOX["p"]))
        xi = float(rng.uniform(*RNG_BOX["xi"]))
        if off_kinks and (
            abs(xi - p * cs.l_prime0) < 1e-4 or abs(x * xi - cs.c_prime0) < 1e-4
        ):
            continue
        pts.append((x, xi, p))
    return pts


class TestHamiltonianValues:
    def test_zero_costate(self, model):
        for x in (0.0, 0.5, 1.0, 3.0):
            for p in (0.3, 0.7, 1.0):
                assert hamiltonian(model, x, 0.0, p) == 0.0

    def test_reference_point_closed_form(self, model):
        # both minimizers inactive: H = (r - mu) * x * xi
        assert hamiltonian(model, 1.0, 0.05, 1.0) == pytest.approx(0.0015, abs=1e-18)

    def test_reference_point_grid_minimization(self, model):
        cs = model.costs
        x, xi, p = 1.0, 0.05, 1.0
        us = np.linspace(0.0, 0.999, 20001)
        vs = np.linspace(0.0, 5.0, 20001)
        mu_term = min(cs.l_eval(float(u)) - float(u) * xi / p for u in us)
        mv_term = min(cs.c_eval(float(v)) - float(v) * x * xi for v in vs)
        drift = ((model.lam + model.r) / p - model.lam - model.mu) * x * xi
        assert hamiltonian(model, x, xi, p) == pytest.approx(
            mu_term + mv_term + drift, abs=1e-8)

    def test_upper_bound(self, model):
        for x, xi, p in sample_points(model, 100, 3, off_kinks=False):
            bound = ((model.lam + model.r) / p - (model.lam + model.mu)) * x * xi
            assert hamiltonian(model, x, xi, p) <= bound + 1e-14

    def test_lower_bounds(self, model):
        cs = model.costs
        for x, xi, p in sample_points(model, 100, 4, off_kinks=False):
            v = v_star(cs, x, xi)
            lower = (((model.lam + model.r) * x - 1.0) / p
                     - (model.lam + model.mu + v) * x) * xi
            assert hamiltonian(model, x, xi, p) >= lower - 1e-12

    def test_concavity_in_costate(self, model):
        for (x, p) in [(0.5, 1.0), (1.0, 0.7), (2.5, 0.4)]:
            xs = np.linspace(0.0, 2.0, 400)
            vals = np.array([hamiltonian(model, x, float(t), p) for t in xs])
            d2 = np.diff(vals, 2)
            assert np.all(d2 <= 1e-8)

    def test_price_domain_error(self, model):
        with pytest.raises(ValueError):
            hamiltonian(model, 1.0, 0.1, 0.0)
        with pytest.raises(ValueError):
            hamiltonian_grad(model, 1.0, 0.1, -0.2)


class TestGradient:
    def test_zero_costate_slope(self, model):
        for x in (0.3, 1.0, 2.0):
            for p in (0.4, 1.0):
                expected = ((model.lam + model.r) / p - (model.lam + model.mu)) * x
                assert h_xi(model, x, 0.0, p) == pytest.approx(expected, abs=1e-12)

    def test_gradient_vs_central_differences(self, model):
        pts = sample_points(model, 50, 12)
        for x, xi, p in pts:
            hx, hxi, hp = hamiltonian_grad(model, x, xi, p)
            for i, (val, arg) in enumerate(zip((hx, hxi, hp), (x, xi, p))):
                h = 1e-6 * (1.0 + abs(arg))
                args = [x, xi, p]
                args[i] = arg + h
                up = hamiltonian(model, *args)
                args[i] = arg - h
                dn = hamiltonian(model, *args)
                fd = (up - dn) / (2 * h)
                assert val == pytest.approx(fd, rel=1e-5, abs=1e-9)

    def test_price_slope_negative_when_repayment_small(self, model):
        for x, xi, p in sample_points(model, 50, 13, off_kinks=False):
            u = u_star(model.costs, xi, p)
            if u < x * (model.lam + model.r) and xi > 0:
                assert hamiltonian_grad(model, x, xi, p)[2] < 0.0


class TestPeak:
    def test_no_devaluation_closed_form(self, model):
        # at (x=1, p=1) the peak lies below the devaluation threshold
        xs = xi_sharp(model, 1.0, 1.0)
        expected = model.costs.l_prime((model.r - model.mu) * 1.0)
        assert xs == pytest.approx(expected, rel=1e-12)
        assert xs == pytest.approx(0.13092783505154639, rel=1e-12)
        assert 1.0 * xs < model.costs.c_prime0  # consistency of the branch

    def test_first_order_condition(self, model):
        for (x, p) in [(0.5, 1.0), (1.0, 0.6), (2.0, 0.9), (3.0, 0.35)]:
            xs = xi_sharp(model, x, p)
            assert abs(h_xi(model, x, xs, p)) <= 1e-10
            assert xs >= min(p * model.costs.l_prime0, model.costs.c_prime0 / x)

    def test_strict_interior_maximum(self, model):
        for (x, p) in [(0.7, 1.0), (1.5, 0.5)]:
            xs = xi_sharp(model, x, p)
            peak = hamiltonian(model, x, xs, p)
            for delta in (1e-3, -1e-3):
                assert hamiltonian(model, x, xs + delta, p) < peak

    def test_peak_value_frozen_and_golden_section(self, model):
        # L(0.03) = 0.1*0.03 - ln(0.97) - 0.03
        val = h_max(model, 1.0, 1.0)
        assert val == pytest.approx(0.003 - math.log(0.97) - 0.03, rel=1e-12)
        assert val == pytest.approx(0.003459207484708574, rel=1e-10)
        # golden-section cross-check
        lo, hi = 0.0, 1.0
        invphi = (math.sqrt(5) - 1) / 2
        f = lambda t: -hamiltonian(model, 1.0, t, 1.0)
        a, b = lo, hi
        c, d = b - invphi * (b - a), a + invphi * (b - a)
        for _ in range(120):
            if f(c) < f(d):
                b, d = d, c
                c = b - invphi * (b - a)
            else:
                a, c = c, d
                d = a + invphi * (b - a)
        assert val == pytest.approx(-f(0.5 * (a + b)), abs=1e-12)

    def test_peak_equals_running_cost_at_critical_controls(self, model):
        for (x, p) in [(0.8, 1.0), (1.0, 0.55), (2.5, 0.8)]:
            xs = xi_sharp(model, x, p)
            u = u_star(model.costs, xs, p)
            v = v_star(model.costs, x, xs)
            peak = h_max(model, x, p)
            assert peak == pytest.approx(
                model.costs.l_eval(u) + model.costs.c_eval(v), abs=1e-10)
            # critical repayment identity
            assert u == pytest.approx(
                ((model.lam + model.r) - p * (model.lam + model.mu + v)) * x,
                abs=1e-9)

    def test_peak_decreasing_in_price(self, model):
        ps = np.linspace(0.2, 1.0, 9)
        vals = [h_max(model, 1.0, float(p)) for p in ps]
        assert all(b < a for a, b in zip(vals, vals[1:]))


class TestBranches:
    def test_residual_contract(self, model):
        rng = np.random.default_rng(21)
        for _ in range(1000):
            x = float(rng.uniform(0.2, 3.0))
            p = float(rng.uniform(0.3, 1.0))
            peak = h_max(model, x, p)
            eta = float(rng.uniform(0.02, 0.98)) * peak / model.r
            for br in (Branch.MINUS, Branch.PLUS):
                xi = costate_root(model, br, x, eta, p)
                res = abs(hamiltonian(model, x, xi, p) - model.r * eta)
                assert res <= 1e-10 * (1.0 + model.r * eta)

    def test_branch_ordering_and_peak_level(self, model):
        x, p = 1.3, 0.8
        xs = xi_sharp(model, x, p)
        peak = h_max(model, x, p)
        eta = 0.5 * peak / model.r
        lo = costate_root(model, Branch.MINUS, x, eta, p)
        hi = costate_root(model, Branch.PLUS, x, eta, p)
        assert 0.0 < lo < xs < hi
        for br in (Branch.MINUS, Branch.PLUS):
            assert costate_root(model, br, x, peak / model.r, p) == pytest.approx(
                xs, abs=1e-8)

    def test_monotone_in_level(self, model):
        x, p = 0.9, 0.75
        peak = h_max(model, x, p)
        etas = np.linspace(0.05, 0.95, 20) * peak / model.r
        minus = [costate_root(model, Branch.MINUS, x, float(e), p) for e in etas]
        plus = [costate_root(model, Branch.PLUS, x, float(e), p) for e in etas]
        assert all(b > a for a, b in zip(minus, minus[1:]))
        assert all(b < a for a, b in zip(plus, plus[1:]))

    def test_linear_zone_closed_form(self, model):
        x, p = 1.0, 0.9
        eta = 0.01
        xi = costate_root(model, Branch.MINUS, x, eta, p)
        expected = p * model.r * eta / (
            (model.lam + model.r - p * (model.lam + model.mu)) * x)
        assert xi == pytest.approx(expected, rel=1e-12)

    def test_no_solution_above_peak(self, model):
        x, p = 1.0, 0.8
        peak = h_max(model, x, p)
        with pytest.raises(NoSolutionError):
            costate_root(model, Branch.MINUS, x, 1.5 * peak / model.r, p)
        with pytest.raises(ValueError):
            costate_root(model, Branch.MINUS, x, -0.1, p)

    def test_level_sensitivity_vs_finite_differences(self, model):
        x, p = 1.1, 0.85
        peak = h_max(model, x, p)
        for frac in np.linspace(0.1, 0.85, 20):
            eta = float(frac) * peak / model.r
            h = 1e-7 * (1.0 + eta)
            for br, sign in ((Branch.MINUS, 1.0), (Branch.PLUS, -1.0)):
                d = costate_root_deta(model, br, x, eta, p)
                fd = (costate_root(model, br, x, eta + h, p)
                      - costate_root(model, br, x, eta - h, p)) / (2 * h)
                assert d == pytest.approx(fd, rel=1e-4)
                assert sign * d > 0.0

    def test_level_sensitivity_diverges_at_peak(self, model):
        # so close to the peak that either the slope blows past 1e3 or the
        # singularity guard trips (the root snaps to xi_sharp within the
        # residual tolerance) -- both witness the divergence
        x, p = 1.0, 0.9
        peak = h_max(model, x, p)
        eta = peak * (1.0 - 1e-8) / model.r
        try:
            assert abs(costate_root_deta(model, Branch.MINUS, x, eta, p)) > 1e3
        except SingularSlopeError:
            pass
        # a level just outside the snap tolerance gives a finite huge slope
        eta2 = (peak - 5e-10 * (1.0 + peak)) / model.r
        assert abs(costate_root_deta(model, Branch.MINUS, x, eta2, p)) > 1e3

    def test_price_sensitivity_identity(self, model):
        # dF-/dp = -H_p/H_xi > F-/p > 0 at interior points
        x = 1.2
        for p in (0.5, 0.7, 0.9):
            peak = h_max(model, x, p)
            eta = 0.5 * peak / model.r
            xi = costate_root(model, Branch.MINUS, x, eta, p)
            _, hxi, hp = hamiltonian_grad(model, x, xi, p)
            dfdp = -hp / hxi
            h = 1e-6
            fd = (costate_root(model, Branch.MINUS, x, eta, p + h)
                  - costate_root(model, Branch.MINUS, x, eta, p - h)) / (2 * h)
            assert dfdp == pytest.approx(fd, rel=1e-4)
            assert dfdp > xi / p > 0.0


class TestPriceSlope:
    def test_zero_when_price_one_and_no_devaluation(self, model):
        x, p = 1.0, 1.0
        eta = 0.3 * h_max(model, x, p) / model.r
        xi = costate_root(model, Branch.MINUS, x, eta, p)
        assert v_star(model.costs, x, xi) == 0.0
        assert price_slope(model, Branch.MINUS, x, eta, p) == pytest.approx(0.0, abs=1e-15)

    def test_sign_below_par_without_devaluation(self, model):
        x, p = 2.0, 0.9
        eta = 0.5 * h_max(model, x, p) / model.r
        xi = costate_root(model, Branch.MINUS, x, eta, p)
        assert v_star(model.costs, x, xi) == 0.0
        assert h_xi(model, x, xi, p) > 0.0
        g = price_slope(model, Branch.MINUS, x, eta, p)
        num = (model.r + model.lam) * (p - 1.0)
        assert g == pytest.approx(num / h_xi(model, x, xi, p), rel=1e-10)
        assert g < 0.0

    def test_singular_guard(self, model):
        x, p = 1.0, 0.9
        peak = h_max(model, x, p)
        with pytest.raises(SingularSlopeError):
            price_slope(model, Branch.MINUS, x, peak * (1 - 1e-14) / model.r, p)


class TestHoelder:
    def test_empirical_constant_below_printed(self, model):
        x1, p1 = 0.3, 0.5
        bound = holder_constant(model, x1, p1)
        two_b = 2.0 * model.bankruptcy_cost
        rng = np.random.default_rng(33)
        worst = 0.0
        for _ in range(1000):
            x = float(rng.uniform(x1, model.params.x_star))
            p = float(rng.uniform(p1, 1.0))
            peak = h_max(model, x, p)
            e1 = float(rng.uniform(0.01, 0.999)) * peak / model.r
            e2 = float(rng.uniform(0.01, 0.999)) * peak / model.r
            if abs(e1 - e2) > two_b or e1 == e2:
                continue
            f1 = costate_root(model, Branch.MINUS, x, e1, p)
            f2 = costate_root(model, Branch.MINUS, x, e2, p)
            ratio = abs(f1 - f2) / math.sqrt(abs(e1 - e2))
            worst = max(worst, ratio)
        assert 0.0 < worst <= bound
