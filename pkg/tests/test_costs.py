import math

import numpy as np
import pytest

from sovdebt.costs import (
    conj_c,
    conj_l,
    costs_from_derivatives,
    reference_costs,
    u_star,
    v_star,
    validate,
)

C = reference_costs(l0=0.1, c1=0.2)


def grid_argmin(f, lo, hi, n):
    xs = np.linspace(lo, hi, n)
    vals = [f(float(x)) for x in xs]
    return float(xs[int(np.argmin(vals))])


class TestReferenceClosedForms:
    def test_marginals(self):
        for u in (0.0, 0.1, 0.5, 0.9):
            assert C.l_prime(u) == pytest.approx(0.1 + u / (1 - u), rel=1e-14)
            assert C.l_second(u) == pytest.approx((1 - u) ** -2, rel=1e-14)
        assert C.l_prime0 == 0.1
        assert C.c_prime(0.3) == 0.5
        assert C.c_second(12.0) == 1.0

    def test_inverse_marginals_roundtrip(self):
        for u in np.linspace(0.0, 0.99, 50):
            rho = C.l_prime(float(u))
            assert C.l_prime_inv(rho) == pytest.approx(u, abs=1e-10 * (1 + u))
        for v in np.linspace(0.0, 40.0, 50):
            rho = C.c_prime(float(v))
            assert C.c_prime_inv(rho) == pytest.approx(v, abs=1e-10 * (1 + v))

    def test_c_inverse(self):
        y = C.c_eval(3.7)
        assert C.c_inv(y) == pytest.approx(3.7, rel=1e-10)
        assert C.c_inv(0.0) == 0.0


class TestOptimalControls:
    def test_u_below_threshold(self):
        assert u_star(C, 0.05, 1.0) == 0.0
        assert u_star(C, 0.0, 0.3) == 0.0
        assert u_star(C, 0.1, 1.0) == 0.0  # kink convention

    def test_u_closed_form(self):
        # xi/p = 1.2, so u = (1.2 - 0.1) / (1 + 1.2 - 0.1) = 1.1/2.1
        assert u_star(C, 0.6, 0.5) == pytest.approx(1.1 / 2.1, rel=1e-14)

    def test_u_matches_grid_minimization(self):
        xi, p = 0.6, 0.5
        u_grid = grid_argmin(lambda u: C.l_eval(u) - u * xi / p, 0.0, 0.999, 10**6)
        assert u_star(C, xi, p) == pytest.approx(u_grid, abs=2e-6)

    def test_v_below_threshold(self):
        assert v_star(C, 1.0, 0.15) == 0.0
        assert v_star(C, 0.0, 5.0) == 0.0

    def test_v_closed_form(self):
        assert v_star(C, 4.0, 0.3) == pytest.approx(1.0, rel=1e-14)

    def test_v_matches_grid_minimization(self):
        x, xi = 4.0, 0.3
        v_grid = grid_argmin(lambda v: C.c_eval(v) - v * x * xi, 0.0, 50.0, 500001)
        assert v_star(C, x, xi) == pytest.approx(v_grid, abs=2e-4)

    def test_monotonicity(self):
        rng = np.random.default_rng(7)
        for _ in range(200):
            p = float(rng.uniform(0.2, 1.0))
            xi1 = float(rng.uniform(p * C.l_prime0 * 1.01, 2.0))
            xi2 = xi1 + float(rng.uniform(1e-6, 0.5))
            assert u_star(C, xi2, p) > u_star(C, xi1, p) + 1e-12
        for _ in range(200):
            xi = float(rng.uniform(0.05, 1.0))
            p1 = float(rng.uniform(max(0.05, xi / C.l_prime(0.999)), 1.0))
            if xi <= p1 * C.l_prime0:
                continue
            p2 = p1 * float(rng.uniform(0.5, 0.99))
            if xi <= p2 * C.l_prime0:
                continue
            assert u_star(C, xi, p2) > u_star(C, xi, p1) + 1e-12
        for _ in range(200):
            x = float(rng.uniform(0.5, 5.0))
            xi1 = float(rng.uniform(C.c_prime0 / x * 1.01, 3.0))
            xi2 = xi1 + float(rng.uniform(1e-6, 0.5))
            assert v_star(C, x, xi2) > v_star(C, x, xi1) + 1e-12
            assert v_star(C, x * 1.1, xi1) > v_star(C, x, xi1) + 1e-12


class TestConjugates:
    def test_conj_l_zero_below_threshold(self):
        for rho in (-1.0, 0.0, 0.05, 0.1):
            assert conj_l(C, rho) == 0.0

    def test_conj_c_closed_form(self):
        for rho in (0.3, 1.0, 5.0):
            assert conj_c(C, rho) == pytest.approx((rho - 0.2) ** 2 / 2, rel=1e-12)

    def test_conj_c_matches_grid_sup(self):
        rho = 1.3
        vs = np.linspace(0.0, 20.0, 400001)
        sup = float(np.max(rho * vs - (0.2 * vs + 0.5 * vs**2)))
        assert conj_c(C, rho) == pytest.approx(sup, abs=1e-8)

    def test_conj_l_upper_bound(self):
        for rho in np.linspace(-1.0, 10.0, 111):
            assert conj_l(C, float(rho)) <= max(0.0, float(rho)) + 1e-14

    def test_fenchel_young(self):
        rng = np.random.default_rng(11)
        for _ in range(300):
            rho = float(rng.uniform(0.0, 3.0))
            u = float(rng.uniform(0.0, 0.99))
            gap = conj_l(C, rho) + C.l_eval(u) - rho * u
            assert gap >= -1e-9
            u_opt = u_star(C, rho, 1.0)
            gap_opt = conj_l(C, rho) + C.l_eval(u_opt) - rho * u_opt
            assert abs(gap_opt) <= 1e-9
            if abs(u - u_opt) > 1e-4:
                assert gap > 0.0

    def test_conjugate_derivatives_vs_finite_differences(self):
        h = 1e-6
        for rho in np.linspace(0.15, 3.0, 40):
            rho = float(rho)
            if abs(rho - C.l_prime0) < 1e-4 or abs(rho - C.c_prime0) < 1e-4:
                continue
            dl = (conj_l(C, rho + h) - conj_l(C, rho - h)) / (2 * h)
            if rho > C.l_prime0:
                assert dl == pytest.approx(u_star(C, rho, 1.0), rel=1e-6)
            dc = (conj_c(C, rho + h) - conj_c(C, rho - h)) / (2 * h)
            if rho > C.c_prime0:
                assert dc == pytest.approx(C.c_prime_inv(rho), rel=1e-6)


class TestValidation:
    def test_reference_passes(self):
        report = validate(C)
        assert report.ok, report.violations

    def test_linear_repayment_cost_fails_curvature(self):
        bad = costs_from_derivatives(
            l_eval=lambda u: u, l_prime=lambda u: 1.0, l_second=lambda u: 0.0,
            c_eval=C.c_eval, c_prime=C.c_prime, c_second=C.c_second,
            delta0=1.0,
        )
        report = validate(bad)
        assert not report.ok
        assert any("L'' >= delta0" in msg for msg in report.violations)

    def test_quadratic_devaluation_without_linear_term_fails(self):
        bad = costs_from_derivatives(
            l_eval=C.l_eval, l_prime=C.l_prime, l_second=C.l_second,
            c_eval=lambda v: v * v, c_prime=lambda v: 2.0 * v,
            c_second=lambda v: 2.0, delta0=1.0,
        )
        report = validate(bad)
        assert not report.ok
        assert any("c'(0) > 0" in msg for msg in report.violations)

    def test_bisection_inverses_match_closed_forms(self):
        generic = costs_from_derivatives(
            l_eval=C.l_eval, l_prime=C.l_prime, l_second=C.l_second,
            c_eval=C.c_eval, c_prime=C.c_prime, c_second=C.c_second,
            delta0=1.0,
        )
        for rho in np.linspace(0.11, 5.0, 60):
            rho = float(rho)
            assert generic.l_prime_inv(rho) == pytest.approx(
                C.l_prime_inv(rho), abs=1e-11 * (1 + rho))
            assert generic.c_prime_inv(rho) == pytest.approx(
                C.c_prime_inv(rho), abs=1e-11 * (1 + rho))
