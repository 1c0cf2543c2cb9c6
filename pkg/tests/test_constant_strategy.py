import numpy as np
import pytest

from sovdebt.constant_strategy import (
    ConstantStrategyCurve,
    constant_strategy_pair,
    no_devaluation_band_checks,
    p_const,
    v_const,
    w_cost,
    w_cost_dual,
    w_prime,
    x_crit,
    x_flat,
)
from sovdebt.hamiltonian import h_max, xi_sharp
from tests.conftest import make_reference_model

# a wider cap so the devaluating region (x > x_crit) is reachable
WIDE = make_reference_model(x_star=15.0, bankruptcy_cost=0.05, theta_value=0.5)


class TestAbscissas:
    def test_residuals(self, model):
        cs = model.costs
        rm = model.r - model.mu
        xf = x_flat(model)
        assert abs(xf * cs.l_prime(rm * xf) - cs.c_prime0) < 1e-10
        xc = x_crit(model)
        assert abs(rm * xc * cs.l_prime(rm * xc)
                   - (model.r + model.lam) * cs.c_prime0) < 1e-10

    def test_ordering(self, model):
        assert 0.0 < x_flat(model) < x_crit(model)

    def test_scaling_with_devaluation_marginal(self):
        small = make_reference_model()
        big = make_reference_model(c1=0.4)
        assert x_flat(big) > x_flat(small)
        assert x_crit(big) > x_crit(small)


class TestDevaluationChoice:
    def test_zero_without_debt_pressure(self, model):
        assert v_const(model, 0.0) == 0.0
        assert v_const(model, 0.7) == 0.0
        assert p_const(model, 0.7) == 1.0

    def test_first_order_condition_root(self):
        m = WIDE
        x = 2.0 * x_crit(m)
        v = v_const(m, x)
        assert v > 0.0
        cs = m.costs
        a = (m.r + m.lam) * (m.r - m.mu) * x
        s = m.r + m.lam + v
        resid = cs.c_prime(v) - (a / (s * s)) * cs.l_prime(a / s)
        assert abs(resid) < 1e-10

    def test_matches_grid_minimization(self):
        m = WIDE
        x = 2.0 * x_crit(m)

        def cost(v):
            u = (m.r + m.lam) * (m.r - m.mu) * x / (m.r + m.lam + v)
            if not 0.0 <= u < 1.0:
                return np.inf
            return (m.costs.l_eval(u) + m.costs.c_eval(v)) / m.r

        vs = np.arange(0.0, 50.0, 1e-4)
        best = float(vs[int(np.argmin([cost(float(v)) for v in vs]))])
        v = v_const(m, x)
        assert cost(v) <= cost(best) + 1e-12
        assert v == pytest.approx(best, abs=2e-4)

    def test_strategy_pair_identity(self):
        m = WIDE
        for x in (0.5, 3.0, 12.0):
            u, v, p = constant_strategy_pair(m, x)
            lhs = (m.r + m.lam) * (m.r - m.mu) * x
            assert lhs == pytest.approx((m.r + m.lam + v) * u, rel=1e-12)
            assert p == pytest.approx((m.r + m.lam) / (m.r + m.lam + v), rel=1e-15)


class TestCostOfBestConstantStrategy:
    def test_small_ratio_closed_form(self, model):
        for x in (0.1, 0.6, 1.1):
            expected = model.costs.l_eval((model.r - model.mu) * x) / model.r
            assert w_cost(model, x) == pytest.approx(expected, rel=1e-13)

    def test_zero_at_origin(self, model):
        assert w_cost(model, 0.0) == 0.0

    def test_dual_route_agreement_inside_band(self, model):
        # duality holds exactly where the critical price is 1 (x <= x_flat)
        top = min(model.params.x_star, x_flat(model))
        for x in np.linspace(top / 100, top, 100):
            x = float(x)
            a = w_cost_dual(model, x)
            b = w_cost(model, x)
            assert abs(a - b) <= 1e-9 * (1.0 + abs(b))

    def test_dual_route_is_lower_bound_everywhere(self):
        # (u(v_c), v_c) lies in the fixed-price constraint set, so the
        # peak route can never exceed the direct route; above x_flat the
        # gap is strict (the minimizing pair is no longer critical there)
        m = WIDE
        xf = x_flat(m)
        for x in np.linspace(0.2, m.params.x_star * 0.9, 40):
            x = float(x)
            a, b = w_cost_dual(m, x), w_cost(m, x)
            assert a <= b + 1e-12
            if x > xf * 1.05:
                assert a < b - 1e-12

    def test_nondecreasing(self, model):
        xs = np.linspace(0.0, model.params.x_star, 200)
        vals = [w_cost(model, float(x)) for x in xs]
        assert all(b >= a for a, b in zip(vals, vals[1:]))

    def test_fixed_price_duality(self):
        # peak value == constrained minimum over the strategy line at any
        # fixed price, by direct grid minimization over v with u eliminated
        m = WIDE
        rng = np.random.default_rng(5)
        for _ in range(20):
            x = float(rng.uniform(0.3, 6.0))
            p = float(rng.uniform(0.3, 1.0))
            lr = m.lam + m.r

            def cost(v):
                u = ((lr) - p * (m.lam + m.mu + v)) * x
                if not 0.0 <= u <= 1.0 - 1e-12:
                    return np.inf
                return m.costs.l_eval(u) + m.costs.c_eval(v)

            # coarse grid + corner candidates + one refinement pass
            vs = np.linspace(0.0, 60.0, 600001)
            corner = lr / p - m.lam - m.mu  # where the strategy line hits u = 0
            cands = list(vs) + [0.0, corner]
            best_v = min(cands, key=lambda v: cost(float(v)))
            fine = np.linspace(max(0.0, best_v - 2e-4), best_v + 2e-4, 4001)
            best = min(min(cost(float(v)) for v in fine), cost(float(best_v)))
            assert h_max(m, x, p) == pytest.approx(best, abs=1e-6)
            assert h_max(m, x, p) <= best + 1e-12


class TestSlope:
    def test_matches_finite_differences(self, model):
        xc = x_crit(model)
        for x in np.linspace(0.05, model.params.x_star, 37):
            x = float(x)
            if abs(x - xc) < 1e-3:
                continue
            h = 1e-6 * (1.0 + x)
            fd = (w_cost(model, x + h) - w_cost(model, x - h)) / (2 * h)
            assert w_prime(model, x) == pytest.approx(fd, rel=1e-5)

    def test_matches_finite_differences_devaluating(self):
        m = WIDE
        for x in np.linspace(1.2 * x_crit(m), 0.9 * m.params.x_star, 9):
            x = float(x)
            h = 1e-6 * (1.0 + x)
            fd = (w_cost(m, x + h) - w_cost(m, x - h)) / (2 * h)
            assert w_prime(m, x) == pytest.approx(fd, rel=1e-5)

    def test_small_ratio_reduction(self, model):
        for x in (0.2, 0.9):
            expected = ((model.r - model.mu) / model.r
                        * model.costs.l_prime((model.r - model.mu) * x))
            assert w_prime(model, x) == pytest.approx(expected, rel=1e-13)

    def test_slope_gap_inside_band(self, model):
        # W' < xi_sharp(x, p_c(x)) with the true peak locus
        top = min(model.params.x_star, x_flat(model))
        for x in np.linspace(top / 50, top, 50):
            x = float(x)
            assert w_prime(model, x) < xi_sharp(model, x, p_const(model, x))

    def test_continuity_across_devaluation_threshold(self):
        # one-sided limits at x_crit via first-order extrapolation
        m = WIDE
        xc = x_crit(m)
        h = 1e-7
        left = w_cost(m, xc - h) + h * w_prime(m, xc - h)
        right = w_cost(m, xc + h) - h * w_prime(m, xc + h)
        assert left == pytest.approx(right, abs=1e-8)
        assert w_prime(m, xc - h) == pytest.approx(w_prime(m, xc + h), abs=1e-6)


class TestCurve:
    def test_memoized_matches_direct(self, model, curve):
        rng = np.random.default_rng(17)
        for x in rng.uniform(0.0, model.params.x_star, 200):
            x = float(x)
            assert float(curve.w(x)) == pytest.approx(w_cost(model, x), abs=1e-8)
            assert float(curve.w_prime(x)) == pytest.approx(
                w_prime(model, x), abs=1e-7)
            assert float(curve.p_c(x)) == pytest.approx(
                p_const(model, x), abs=1e-10)

    def test_band_checks_clean(self, model, curve):
        assert no_devaluation_band_checks(model, curve) == []

    def test_price_identity_on_nodes(self, curve):
        m = curve.model
        rl = m.r + m.lam
        assert np.allclose(curve.p_c_nodes, rl / (rl + curve.v_c_nodes), rtol=1e-15)

    def test_no_devaluation_up_to_crit(self):
        m = WIDE
        c = ConstantStrategyCurve(m, n=512)
        inside = c.x_nodes <= min(c.x_crit, m.params.x_star)
        assert np.all(c.v_c_nodes[inside] == 0.0)
        assert np.all(c.p_c_nodes[inside] == 1.0)

    def test_export_csv(self, curve, tmp_path):
        path = tmp_path / "curve.csv"
        curve.export_csv(path)
        lines = path.read_text().splitlines()
        assert lines[0] == "x,v_c,p_c,W,W_prime"
        assert len(lines) == len(curve.x_nodes) + 1
