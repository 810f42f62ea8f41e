import math

import numpy as np
import pytest
from scipy.linalg import expm

from oracles import kalman_negloglik_ou_em, omega_quadrature, rk4, sir_nonlinear_rhs
from sderobust.core import DomainError, Linear, Sir, TimeGrid, Trajectory
from sderobust.estimators import (OptimizerConfig, fit_ode_lse, fit_ou_mle, fit_partial_ukf,
                                  fit_sir_strang, fit_trajectory, minimize, sample_starts,
                                  strang_negloglik, ukf_negloglik)
from sderobust.experiments import simulate_with_restarts
from sderobust.models import ode_path
from sderobust.sim import SimulationPlan, simulate


def series(values, delta=1.0, labels=("x",)):
    v = np.asarray(values, dtype=float)
    v = v[:, None] if v.ndim == 1 else v
    return Trajectory(TimeGrid(0.0, delta, len(v) - 1), v, labels)


class TestMinimize:
    def test_quadratic_bowl(self):
        r = minimize(lambda x: (x[0] - 3.0) ** 2, [0.0], [(-10.0, 10.0)])
        assert r.x[0] == pytest.approx(3.0, abs=1e-8)

    def test_rosenbrock(self):
        f = lambda x: (1 - x[0]) ** 2 + 100 * (x[1] - x[0] ** 2) ** 2
        r = minimize(f, [-1.2, 1.0], [(-5.0, 5.0), (-5.0, 5.0)])
        assert np.allclose(r.x, [1.0, 1.0], atol=1e-5)

    def test_active_bound(self):
        r = minimize(lambda x: x[0] ** 2, [1.5], [(1.0, 2.0)])
        assert r.x[0] == pytest.approx(1.0, abs=1e-10)

    def test_non_finite_start(self):
        with pytest.raises(DomainError):
            minimize(lambda x: float("nan"), [1.0], [(0.5, 2.0)])

    def test_nelder_mead_option(self):
        r = minimize(lambda x: (x[0] - 0.3) ** 2, [1.0], [(0.01, 2.0)], OptimizerConfig(method="nm"))
        assert r.x[0] == pytest.approx(0.3, abs=1e-5)

    def test_starts_are_reproducible_and_inside_bounds(self):
        b = [(1e-3, 10.0), (-1.0, 1.0)]
        s = sample_starts(b, 50, seed=3)
        assert np.array_equal(s, sample_starts(b, 50, seed=3))
        assert np.all((s[:, 0] >= 1e-3) & (s[:, 0] <= 10) & (s[:, 1] >= -1) & (s[:, 1] <= 1))

    def test_config_validation(self):
        with pytest.raises(DomainError):
            OptimizerConfig(starts=0)
        with pytest.raises(DomainError):
            OptimizerConfig(param_bounds={"a": (1.0, 0.5)})


class TestOuMle:
    def test_noiseless_decay_is_recovered_exactly(self):
        rho, b = math.exp(-0.1), 1.5
        y = b + 3.5 * rho ** np.arange(51)
        m = fit_ou_mle(y, delta=2.0)
        assert m.rho_hat == pytest.approx(rho, rel=1e-12)
        assert m.b_hat == pytest.approx(b, rel=1e-12)
        assert m.a_hat == pytest.approx(0.05, rel=1e-10)

    def test_constant_data_rejected(self):
        with pytest.raises(DomainError):
            fit_ou_mle(np.full(10, 2.0), delta=1.0)

    def test_shift_equivariance(self):
        rng = np.random.default_rng(2)
        y = np.cumsum(rng.normal(size=60)) * 0.1 + rng.normal(size=60)
        a, b = fit_ou_mle(y, delta=1.0), fit_ou_mle(y + 7.25, delta=1.0)
        assert b.b_hat - a.b_hat == pytest.approx(7.25, abs=1e-9)
        assert b.rho_hat == pytest.approx(a.rho_hat, rel=1e-9)
        assert b.sigma2_hat == pytest.approx(a.sigma2_hat, rel=1e-8)

    def test_negative_rho_leaves_a_undefined(self):
        y = np.array([1.0, -1.0, 1.1, -0.9, 1.0, -1.2, 0.8, -1.0])
        m = fit_ou_mle(y, delta=1.0)
        assert m.rho_hat < 0 and m.a_hat is None and m.sigma2_hat is None
        assert not m.to_report().converged

    def test_fixed_point_solves_both_equations(self):
        rng = np.random.default_rng(5)
        y = 2.0 + np.cumsum(rng.normal(size=40)) * 0.2
        m = fit_ou_mle(y, delta=1.0)
        u = y - m.b_hat
        n = len(y) - 1
        assert m.rho_hat == pytest.approx(u[1:] @ u[:-1] / (u[:-1] @ u[:-1]), rel=1e-10)
        rhs = y[1:].mean() + m.rho_hat / (n * (1 - m.rho_hat)) * (y[-1] - y[0])
        assert m.b_hat == pytest.approx(rhs, rel=1e-10)

    def test_exact_sigma_concentrates_at_truth(self):
        # long exact OU path: the (1 - rho^2) form is consistent for sigma^2
        a, sigma, delta, n = 0.5, 0.3, 0.5, 40000
        rng = np.random.default_rng(8)
        r = math.exp(-a * delta)
        sd = sigma * math.sqrt((1 - r * r) / (2 * a))
        x = np.empty(n + 1)
        x[0] = 0.0
        for k in range(n):
            x[k + 1] = r * x[k] + sd * rng.standard_normal()
        m = fit_ou_mle(x, delta=delta)
        assert m.sigma2_hat_exact == pytest.approx(sigma**2, rel=0.03)
        assert m.a_hat == pytest.approx(a, rel=0.05)


class TestLse:
    def test_noise_free_linear(self):
        tr = ode_path(Linear(0.05, 1.0), [5.0], TimeGrid(0, 2.0, 50))
        rep = fit_ode_lse(series(tr[:, 0], 2.0), "linear", [5.0], OptimizerConfig(starts=3))
        assert rep.theta_hat["a"] == pytest.approx(0.05, abs=1e-6)
        assert rep.theta_hat["b"] == pytest.approx(1.0, abs=1e-6)
        assert rep.noise_hat["gamma2_x"] < 1e-14

    def test_partial_observation_of_sir(self):
        grid = TimeGrid.from_horizon(40, 0.5)
        path = ode_path(Sir(0.5, 0.3), [0.99, 0.01], grid)
        obs = Trajectory(grid, path[:, 1:], ("i",))
        rep = fit_ode_lse(obs, "sir", [0.99, 0.01], OptimizerConfig(starts=3))
        assert rep.theta_hat["alpha"] == pytest.approx(0.5, rel=1e-6)
        assert rep.theta_hat["beta"] == pytest.approx(0.3, rel=1e-6)

    def test_objective_minimal_at_truth_on_noise_free_data(self):
        from sderobust.estimators import lse_residuals
        grid = TimeGrid.from_horizon(40, 0.5)
        obs = Trajectory(grid, ode_path(Sir(0.5, 0.3), [0.99, 0.01], grid), ("s", "i"))
        ss = lambda th: float(np.sum(lse_residuals(th, "sir", obs, [0.99, 0.01]) ** 2))
        assert ss([0.5, 0.3]) < 1e-28
        for d in ([1e-3, 0], [0, 1e-3], [-1e-3, 1e-3]):
            assert ss(np.add([0.5, 0.3], d)) > ss([0.5, 0.3])

    def test_mask_ignores_rows(self):
        grid = TimeGrid(0, 2.0, 30)
        y = ode_path(Linear(0.05, 0.0), [5.0], grid)[:, 0].copy()
        y[7] = 100.0
        mask = np.ones(31, dtype=bool)
        mask[7] = False
        rep = fit_ode_lse(series(y, 2.0), "linear", [5.0], mask=mask)
        assert rep.theta_hat["a"] == pytest.approx(0.05, abs=1e-6)

    def test_too_few_points(self):
        with pytest.raises(DomainError):
            fit_ode_lse(series([5.0, 4.0]), "linear", [5.0])


class TestStrang:
    def _one_step_oracle(self, alpha, beta, s1, s2, x_prev, x_next, delta):
        # independent assembly: RK4 flows, quadrature Omega, scipy expm, FD Jacobian
        f = sir_nonlinear_rhs(alpha)
        half = delta / 2
        E = expm(np.array([[-alpha, 0.0], [alpha, -beta]]) * delta)
        z = rk4(f, x_next, -half, 1e-5) - E @ rk4(f, x_prev, half, 1e-5)
        om = omega_quadrature(alpha, beta, s1, s2, delta)
        eps = 1e-6
        J = np.column_stack([(rk4(f, x_next + e, -half, 1e-5) - rk4(f, x_next - e, -half, 1e-5)) / (2 * eps)
                             for e in (np.array([eps, 0]), np.array([0, eps]))])
        return (0.5 * math.log(np.linalg.det(om)) + 0.5 * z @ np.linalg.solve(om, z)
                - math.log(abs(np.linalg.det(J))))

    def test_single_transition_matches_hand_assembly(self):
        x = np.array([[0.9, 0.08], [0.87, 0.095]])
        got = strang_negloglik(0.5, 0.3, 5e-3, 1e-3, x, 0.5)
        want = self._one_step_oracle(0.5, 0.3, 5e-3, 1e-3, x[0], x[1], 0.5)
        assert got == pytest.approx(want, rel=1e-7)

    def test_sum_over_transitions(self):
        rng = np.random.default_rng(1)
        x = np.column_stack([np.linspace(0.95, 0.5, 12), 0.05 + 0.01 * rng.random(12)])
        total = strang_negloglik(0.5, 0.3, 5e-3, 1e-3, x, 0.5)
        parts = sum(strang_negloglik(0.5, 0.3, 5e-3, 1e-3, x[k:k + 2], 0.5) for k in range(11))
        assert total == pytest.approx(parts, rel=1e-12)

    def test_vanishing_noise_blows_up_off_the_flow(self):
        grid = TimeGrid.from_horizon(10, 0.5)
        x = ode_path(Sir(0.5, 0.3), [0.99, 0.01], grid) + 1e-4
        vals = [strang_negloglik(0.5, 0.3, s, s, x, 0.5) for s in (1e-3, 1e-5, 1e-7)]
        assert vals[0] < vals[1] < vals[2]

    def test_outside_domain_is_penalised(self):
        x = np.array([[0.9, 0.08], [0.9, 0.2], [0.95, 0.1]])
        assert strang_negloglik(8.0, 0.3, 5e-3, 1e-3, x, 10.0) >= 1e9

    def test_consistency_with_dense_observations(self):
        for r in range(5):
            plan = SimulationPlan(Sir(0.5, 0.3, 1e-3, 5e-4), (0.99, 0.01),
                                  TimeGrid.from_horizon(40, 0.02), fine_step=0.01, seed=12,
                                  replicate=r)
            tr, _ = simulate_with_restarts(lambda key: simulate(plan, key))
            rep = fit_sir_strang(tr, OptimizerConfig(starts=3))
            assert rep.theta_hat["alpha"] == pytest.approx(0.5, rel=0.02)
            assert rep.theta_hat["beta"] == pytest.approx(0.3, rel=0.02)

    def test_needs_both_components(self):
        with pytest.raises(DomainError):
            fit_sir_strang(series([0.1, 0.2, 0.3]))


class TestUkf:
    @pytest.mark.parametrize("a,b,sig,R,delta,sub", [(0.3, 2.0, 0.4, 0.05, 0.5, 4),
                                                     (0.05, 0.0, 0.05, 1e-3, 2.0, 1),
                                                     (1.0, -1.0, 1.0, 2.0, 0.1, 8)])
    def test_equals_exact_kalman_on_linear_model(self, a, b, sig, R, delta, sub):
        rng = np.random.default_rng(1)
        y = rng.normal(size=41) + b
        obs = series(y, delta)
        want = kalman_negloglik_ou_em(a, b, sig, R, y, delta, 1.5, sub)
        got = ukf_negloglik({"a": a, "b": b, "sigma": sig}, obs, "linear", [R], [1.5], substeps=sub)
        assert got == pytest.approx(want, rel=1e-6)

    def test_noise_free_data_prefer_truth(self):
        grid = TimeGrid(0, 1.0, 60)
        path = ode_path(Sir(0.5, 0.3), [0.99, 0.01], grid)
        obs = Trajectory(grid, path[:, 1:], ("i",))
        # the UKF transition is Euler; with many substeps its optimum sits at the truth
        nll = lambda al, be: ukf_negloglik({"alpha": al, "beta": be, "sigma1": 1e-7, "sigma2": 1e-7},
                                           obs, "sir", [1e-9], [0.99, 0.01], substeps=64)
        grid_vals = {(al, be): nll(al, be) for al in (0.49, 0.5, 0.51) for be in (0.29, 0.3, 0.31)}
        assert min(grid_vals, key=grid_vals.get) == (0.5, 0.3)

    def test_mask_drops_rows(self):
        rng = np.random.default_rng(3)
        y = rng.normal(size=21)
        full = ukf_negloglik({"a": 0.3, "b": 0.0, "sigma": 0.5}, series(y), "linear", [0.1], [0.0])
        y2 = y.copy()
        y2[5] = 1e6
        mask = np.ones(21, dtype=bool)
        mask[5] = False
        masked = ukf_negloglik({"a": 0.3, "b": 0.0, "sigma": 0.5}, series(y2), "linear", [0.1], [0.0],
                               mask=mask)
        assert np.isfinite(masked) and masked < full

    def test_label_mismatch(self):
        with pytest.raises(DomainError):
            ukf_negloglik({"alpha": 0.5, "beta": 0.3}, series([0.1, 0.2], labels=("p",)), "sir",
                          [1e-6], [0.99, 0.01])

    def test_single_start_agrees_with_many_on_linear_data(self):
        plan = SimulationPlan(Linear(0.3, 1.0, 0.2), (3.0,), TimeGrid(0, 0.5, 200), seed=4)
        obs = simulate(plan)
        one = fit_partial_ukf(obs, "linear", [3.0], OptimizerConfig(starts=1, seed=1))
        many = fit_partial_ukf(obs, "linear", [3.0], OptimizerConfig(starts=12, seed=1))
        assert one.objective == pytest.approx(many.objective, abs=1e-5)
        assert one.theta_hat["a"] == pytest.approx(many.theta_hat["a"], rel=1e-3)


class TestDispatch:
    def test_ou_mle_tag(self):
        rep = fit_trajectory("ou_mle", series(2 + np.exp(-0.1 * np.arange(20)), 1.0), "linear")
        assert rep.theta_hat["a"] == pytest.approx(0.1, rel=1e-10)

    @pytest.mark.parametrize("tag,family", [("ou_mle", "sir"), ("sir_strang", "linear"),
                                            ("bogus", "linear"), ("ode_lse", "linear")])
    def test_rejections(self, tag, family):
        with pytest.raises(DomainError):
            fit_trajectory(tag, series(np.arange(5.0)), family)
