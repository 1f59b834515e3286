"""Tests for the fractional time calculus layer.

Frozen oracle constants were computed independently with mpmath (30 digits)
before the implementation existed; see the inline comments.
"""
import math

import numpy as np
import pytest

from mimfrac.fractime import (
    L1Weights,
    TimeGrid,
    TimeSeries,
    caputo_l1,
    convolve,
    l1_weights,
    rl_integral,
    simpson_weights,
    solve_volterra_mu,
    trapezoid_weights,
)

# mpmath oracles, 20 significant digits
C11_A05_T15_N20 = 0.30901936161855166427  # tau^0.5/Gamma(1.5), tau = 1.5/20
C21_A05_TAU1 = 0.46738995451021813786  # (sqrt 2 - 1)/Gamma(1.5)
C22_A05_TAU1 = 1.1283791670955125739  # 1/Gamma(1.5)
CAPUTO_T2_AT1 = 1.5045055561273500985  # 2/Gamma(2.5)
MU_CLOSED_AT1 = 0.42758357615580700441  # e * erfc(1)
MU_CLOSED_AT05 = 0.52315658373024674336  # e^0.5 * erfc(sqrt 0.5)


class TestTimeGrid:
    def test_nodes_span_interval(self):
        grid = TimeGrid(T=1.5, N=20)
        t = grid.nodes
        assert t[0] == 0.0
        assert abs(t[-1] - 1.5) <= 1e-14 * 1.5
        assert np.all(np.diff(t) > 0)
        assert abs(grid.tau * grid.N - grid.T) <= 1e-14 * grid.T

    def test_rejects_bad_parameters(self):
        with pytest.raises(ValueError):
            TimeGrid(T=0.0, N=10)
        with pytest.raises(ValueError):
            TimeGrid(T=1.0, N=0)


class TestL1Weights:
    def test_frozen_first_weight(self):
        """c_{1,1} = tau^{1-a}/Gamma(2-a) for alpha=0.5, T=1.5, N=20."""
        w = l1_weights(0.5, TimeGrid(T=1.5, N=20))
        assert w.table[1, 1] == pytest.approx(C11_A05_T15_N20, rel=1e-13)

    def test_frozen_second_row(self):
        """Row n=2 at tau=1 against the closed form."""
        w = l1_weights(0.5, TimeGrid(T=2.0, N=2))
        assert w.table[2, 1] == pytest.approx(C21_A05_TAU1, rel=1e-13)
        assert w.table[2, 2] == pytest.approx(C22_A05_TAU1, rel=1e-13)

    def test_backward_difference_limit(self):
        """As alpha -> 1 the scheme degenerates to a backward difference."""
        grid = TimeGrid(T=1.0, N=5)
        w = l1_weights(1.0 - 1e-9, grid)
        for n in range(1, 6):
            assert abs(w.table[n, n] - 1.0) <= 1e-6
            assert np.all(np.abs(w.table[n, 1:n]) <= 1e-6)

    def test_rejects_orders_outside_unit_interval(self):
        grid = TimeGrid(T=1.0, N=4)
        for alpha in (0.0, 1.0, -0.5, 1.5):
            with pytest.raises(ValueError):
                l1_weights(alpha, grid)

    def test_random_sweep_invariants(self):
        """Positivity, monotonicity in k, max weight, telescoping sum."""
        rng = np.random.default_rng(20260814)
        for _ in range(100):
            alpha = rng.uniform(0.01, 0.99)
            N = int(rng.integers(1, 201))
            T = rng.uniform(0.1, 10.0)
            grid = TimeGrid(T=T, N=N)
            w = l1_weights(alpha, grid)
            cap = grid.tau ** (1.0 - alpha) / math.gamma(2.0 - alpha)
            for n in range(1, N + 1):
                row = w.table[n, 1 : n + 1]
                assert np.all(row > 0)
                assert np.all(np.diff(row) > 0) or n == 1
                assert row[-1] == pytest.approx(cap, rel=1e-12)
                target = grid.nodes[n] ** (1.0 - alpha) / math.gamma(2.0 - alpha)
                assert row.sum() == pytest.approx(target, rel=1e-12)


class TestCaputoL1:
    def test_constant_history_is_flat(self):
        grid = TimeGrid(T=1.0, N=8)
        w = l1_weights(0.3, grid)
        hist = np.full(9, 7.0)
        assert caputo_l1(hist, w, 8) == 0.0

    def test_exact_on_linear_history(self):
        """u = t gives t^{1-a}/Gamma(2-a), exactly: the L1 sum telescopes."""
        grid = TimeGrid(T=2.0, N=16)
        w = l1_weights(0.5, grid)
        hist = grid.nodes
        for n in (1, 7, 16):
            expect = grid.nodes[n] ** 0.5 / math.gamma(1.5)
            assert caputo_l1(hist, w, n) == pytest.approx(expect, rel=1e-13)

    def test_quadratic_history_accuracy(self):
        """u = t^2: error against 2 t^{1.5}/Gamma(2.5) behaves as O(tau^{1.5})."""
        errs = []
        for N in (10, 40):
            grid = TimeGrid(T=1.0, N=N)
            w = l1_weights(0.5, grid)
            hist = grid.nodes**2
            errs.append(abs(caputo_l1(hist, w, N) - CAPUTO_T2_AT1))
        assert errs[0] / CAPUTO_T2_AT1 < 1e-2
        order = math.log(errs[0] / errs[1]) / math.log(4.0)
        assert order >= 1.3

    def test_rejects_bad_index_or_short_history(self):
        grid = TimeGrid(T=1.0, N=4)
        w = l1_weights(0.5, grid)
        hist = np.zeros(5)
        with pytest.raises(IndexError):
            caputo_l1(hist, w, 0)
        with pytest.raises(IndexError):
            caputo_l1(hist, w, 5)
        with pytest.raises(IndexError):
            caputo_l1(np.zeros(3), w, 4)

    def test_matches_rl_integral_of_difference_quotients(self):
        """Consistency with the composition J^{1-a} d/dt of the definition.

        The L1 value is J^{1-a} applied to the piecewise-constant difference
        quotients; rl_integral uses the piecewise-linear reconstruction.  The
        gap vanishes at first order as tau -> 0.
        """
        alpha = 0.5
        gaps = []
        for N in (20, 40, 80):
            grid = TimeGrid(T=1.0, N=N)
            w = l1_weights(alpha, grid)
            u = grid.nodes**2
            d = np.empty(N + 1)
            d[1:] = np.diff(u) / grid.tau
            d[0] = d[1]
            j = rl_integral(TimeSeries(grid, d), alpha)
            gaps.append(abs(caputo_l1(u, w, N) - j.values[N]))
        assert gaps[0] > gaps[1] > gaps[2]
        order = math.log(gaps[0] / gaps[2]) / math.log(4.0)
        assert order >= 0.9


class TestRLIntegral:
    def test_zero_stays_zero(self):
        grid = TimeGrid(T=1.0, N=12)
        out = rl_integral(TimeSeries(grid, np.zeros(13)), 0.4)
        assert np.all(out.values == 0.0)

    def test_exact_on_constants(self):
        """J^{1-a} 1 = t^{1-a}/Gamma(2-a), exact for product integration."""
        rng = np.random.default_rng(7)
        for alpha in (0.5, *rng.uniform(0.05, 0.95, size=5)):
            grid = TimeGrid(T=1.3, N=17)
            out = rl_integral(TimeSeries(grid, np.ones(18)), alpha)
            t = grid.nodes
            expect = t ** (1.0 - alpha) / math.gamma(2.0 - alpha)
            np.testing.assert_allclose(out.values, expect, rtol=1e-12, atol=1e-15)

    def test_exact_on_linears(self):
        """J^{0.5} t = t^{1.5}/Gamma(2.5), exact on the piecewise-linear class."""
        grid = TimeGrid(T=1.0, N=10)
        out = rl_integral(TimeSeries(grid, grid.nodes.copy()), 0.5)
        expect = grid.nodes**1.5 / math.gamma(2.5)
        np.testing.assert_allclose(out.values, expect, rtol=1e-12, atol=1e-15)


class TestVolterra:
    def test_vanishing_coupling_returns_rho(self):
        grid = TimeGrid(T=1.0, N=30)
        rho = TimeSeries(grid, np.sin(grid.nodes) + 2.0)
        mu = solve_volterra_mu(rho, 0.0, 0.5)
        np.testing.assert_array_equal(mu.values, rho.values)

    def test_constructed_constant_solution(self):
        """rho = 1 + q t^{1-a}/Gamma(2-a) has the solution mu = 1."""
        for q, alpha in ((1.0, 0.5), (2.5, 0.3), (0.7, 0.8)):
            grid = TimeGrid(T=2.0, N=50)
            t = grid.nodes
            rho = TimeSeries(
                grid, 1.0 + q * t ** (1.0 - alpha) / math.gamma(2.0 - alpha)
            )
            mu = solve_volterra_mu(rho, q, alpha)
            np.testing.assert_allclose(mu.values, 1.0, rtol=1e-12)

    def test_closed_form_kernel(self):
        """rho = 1, q = 1, alpha = 0.5: mu(t) = e^t erfc(sqrt t)."""
        grid = TimeGrid(T=1.0, N=1000)
        mu = solve_volterra_mu(TimeSeries(grid, np.ones(1001)), 1.0, 0.5)
        assert mu.values[1000] == pytest.approx(MU_CLOSED_AT1, rel=1e-4)
        assert mu.values[500] == pytest.approx(MU_CLOSED_AT05, rel=1e-4)

    def test_rejects_negative_coupling(self):
        grid = TimeGrid(T=1.0, N=4)
        with pytest.raises(ValueError):
            solve_volterra_mu(TimeSeries(grid, np.ones(5)), -1.0, 0.5)

    def test_backsubstitution_residual(self):
        """mu + q J^{1-a} mu - rho vanishes to 1e-10: same quadrature both ways."""
        rng = np.random.default_rng(123)
        for _ in range(10):
            alpha = rng.uniform(0.05, 0.95)
            q = rng.uniform(0.0, 5.0)
            N = int(rng.integers(5, 200))
            grid = TimeGrid(T=rng.uniform(0.5, 3.0), N=N)
            t = grid.nodes
            rho = TimeSeries(grid, 2.0 + np.cos(3.0 * t) + t**2)
            mu = solve_volterra_mu(rho, q, alpha)
            resid = mu.values + q * rl_integral(mu, alpha).values - rho.values
            assert np.max(np.abs(resid)) <= 1e-10


class TestConvolve:
    def test_zero_kernel(self):
        grid = TimeGrid(T=1.0, N=6)
        mu = TimeSeries(grid, np.zeros(7))
        frames = np.ones((7, 5))
        assert np.all(convolve(mu, frames) == 0.0)

    def test_unit_kernel_integrates_constant_field(self):
        grid = TimeGrid(T=1.0, N=8)
        mu = TimeSeries(grid, np.ones(9))
        w = np.array([1.0, -2.0, 3.0])
        frames = np.tile(w, (9, 1))
        out = convolve(mu, frames)
        for n in range(9):
            np.testing.assert_allclose(out[n], grid.nodes[n] * w, atol=1e-14)

    def test_scalar_series_ramp(self):
        """(1 * t)(t) = t^2/2; trapezoid is exact on linear integrands."""
        grid = TimeGrid(T=2.0, N=16)
        mu = TimeSeries(grid, np.ones(17))
        v = TimeSeries(grid, grid.nodes.copy())
        out = convolve(mu, v)
        np.testing.assert_allclose(out.values, grid.nodes**2 / 2.0, atol=1e-13)

    def test_grid_mismatch_rejected(self):
        mu = TimeSeries(TimeGrid(T=1.0, N=4), np.ones(5))
        with pytest.raises(ValueError):
            convolve(mu, TimeSeries(TimeGrid(T=1.0, N=5), np.ones(6)))
        with pytest.raises(ValueError):
            convolve(mu, np.ones((6, 3)))


class TestQuadratureWeights:
    def test_trapezoid_totals_and_pattern(self):
        grid = TimeGrid(T=1.5, N=20)
        w = trapezoid_weights(grid)
        assert w.shape == (21,)
        assert w[0] == w[-1] == pytest.approx(grid.tau / 2)
        np.testing.assert_allclose(w[1:-1], grid.tau)
        assert w.sum() == pytest.approx(1.5)

    @pytest.mark.parametrize("N", [2, 8, 20, 3, 5, 11])
    def test_simpson_exact_on_cubics(self, N):
        """Both the even pattern and the 3/8-closed odd pattern are exact."""
        grid = TimeGrid(T=2.0, N=N)
        w = simpson_weights(grid)
        t = grid.nodes
        for p in range(4):
            assert w @ t**p == pytest.approx(2.0 ** (p + 1) / (p + 1), rel=1e-13)

    def test_simpson_single_step_falls_back_to_trapezoid(self):
        grid = TimeGrid(T=1.0, N=1)
        np.testing.assert_array_equal(simpson_weights(grid), trapezoid_weights(grid))

    def test_simpson_weights_positive(self):
        for N in range(2, 30):
            assert simpson_weights(TimeGrid(T=1.0, N=N)).min() > 0.0
