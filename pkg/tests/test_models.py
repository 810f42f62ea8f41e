import math

import numpy as np
import pytest

from oracles import omega_quadrature, rk4, sir_nonlinear_rhs
from sderobust.core import DomainError, Linear, Seir, Sir, TimeGrid
from sderobust.models import (drift, ode_path, ode_solve, ou_transition, seir_conserved,
                              seir_reduce, sir_equilibrium, sir_flow, sir_flow_inverse,
                              sir_flow_logdet, sir_split)


def test_linear_drift():
    assert drift(Linear(0.5, 2.0), [3.0])[0] == pytest.approx(-0.5)


def test_sir_drift():
    d = drift(Sir(0.5, 0.3), [0.9, 0.1])
    assert d == pytest.approx([-0.045, 0.045 - 0.03])


def test_drift_shape_check():
    with pytest.raises(DomainError):
        drift(Sir(0.5, 0.3), [0.9])


class TestOuTransition:
    def test_values(self):
        t = ou_transition(0.05, 1.0, 0.2, 2.0)
        r = math.exp(-0.1)
        assert t.rho == pytest.approx(r, rel=1e-15)
        assert t.cond_var == pytest.approx(0.04 * (1 - r * r) / 0.1, rel=1e-14)
        assert t.cond_mean(3.0) == pytest.approx(r * 3 + (1 - r))

    def test_small_a_delta_keeps_precision(self):
        # sigma^2 (1 - e^{-2 a d}) / 2a -> sigma^2 d as a -> 0
        t = ou_transition(1e-12, 0.0, 1.0, 1.0)
        assert t.cond_var == pytest.approx(1.0, rel=1e-11)


class TestSirSplit:
    @pytest.mark.parametrize("alpha,beta", [(0.5, 0.3), (0.3, 0.5), (1.2, 0.05)])
    def test_omega_matches_quadrature(self, alpha, beta):
        sp = sir_split(alpha, beta, 0.03, 0.01, 0.5)
        q = omega_quadrature(alpha, beta, 0.03, 0.01, 0.5)
        assert np.max(np.abs(sp.omega - q)) < 1e-10 * max(1.0, np.max(np.abs(q))) + 1e-16

    def test_degenerate_rates_are_continuous(self):
        a = sir_split(0.4, 0.4, 0.03, 0.01, 0.5).omega
        b = sir_split(0.4, 0.4 + 1e-6, 0.03, 0.01, 0.5).omega
        assert np.allclose(a, b, rtol=1e-5, atol=0)
        q = omega_quadrature(0.4, 0.4, 0.03, 0.01, 0.5)
        assert np.max(np.abs(a - q)) < 1e-12

    @pytest.mark.parametrize("gap", [1e-9, 1e-7, 1e-4, 0.99, 1.01, 3.0])
    def test_near_equal_rates_keep_precision(self, gap):
        # both sides of the switch between the gap series and the closed form
        o = sir_split(0.4, 0.4 + gap, 0.03, 0.01, 0.5).omega
        q = omega_quadrature(0.4, 0.4 + gap, 0.03, 0.01, 0.5)
        assert np.max(np.abs(o - q) / np.abs(q)) < 1e-12

    def test_expm(self):
        from scipy.linalg import expm
        sp = sir_split(0.5, 0.3, 0.0, 0.0, 0.7)
        assert np.allclose(sp.expm, expm(sp.a_matrix * 0.7), atol=1e-14)


class TestSirFlow:
    @pytest.mark.parametrize("state", [(0.9, 0.05), (0.5, 0.2), (0.99, 0.01), (0.3, 0.7)])
    @pytest.mark.parametrize("h", [0.5, -0.5, 1.0, -2.0])
    def test_matches_rk4(self, state, h):
        ref = rk4(sir_nonlinear_rhs(0.8), state, h, 1e-4)
        assert np.max(np.abs(sir_flow(state, 0.8, h) - ref)) < 1e-8

    def test_inverse(self):
        x = np.array([[0.9, 0.05], [0.4, 0.3]])
        back = sir_flow_inverse(sir_flow(x, 0.8, 0.5), 0.8, 0.5)
        assert np.allclose(back, x, atol=1e-14)

    def test_conserves_sum(self):
        x = sir_flow([0.6, 0.2], 0.8, 1.3)
        assert x.sum() == pytest.approx(0.8, abs=1e-15)

    def test_logdet_matches_finite_difference(self):
        x = np.array([0.7, 0.1])
        eps = 1e-6
        J = np.empty((2, 2))
        for j in range(2):
            e = np.zeros(2); e[j] = eps
            J[:, j] = (sir_flow(x + e, 0.8, 0.5) - sir_flow(x - e, 0.8, 0.5)) / (2 * eps)
        assert sir_flow_logdet(x, 0.8, 0.5) == pytest.approx(math.log(abs(np.linalg.det(J))), abs=1e-8)

    def test_domain(self):
        with pytest.raises(DomainError):
            sir_flow([0.0, 0.5], 0.8, 0.5)
        with pytest.raises(DomainError):
            sir_flow([0.5], 0.8, 0.5)


class TestEquilibrium:
    def test_final_size_relation(self):
        s = sir_equilibrium(0.5, 0.3, 0.99)
        assert 0.5 / 0.3 * (1 - s) + math.log(s / 0.99) == pytest.approx(0, abs=1e-14)
        assert 0.3 - 0.5 * s > 0

    def test_matches_long_ode_run(self):
        path = ode_path(Sir(0.5, 0.3), [0.99, 0.01], TimeGrid(0, 10.0, 60))
        assert path[-1, 0] == pytest.approx(sir_equilibrium(0.5, 0.3, 0.99), abs=1e-6)


class TestSeir:
    def test_reduction(self):
        r = seir_reduce(0.6, 1.0, 0.25)
        assert r.alpha_prime == pytest.approx(0.6 / 1.25)
        assert r.beta_prime == pytest.approx(0.25 / 1.25)
        assert r.r0 == pytest.approx(0.6 / 0.25)

    def test_substitution_at_start(self):
        e, i, p = seir_conserved(0.98, 0.98, 0.01, 0.6, 1.0, 0.25)
        assert (float(e), float(i), float(p)) == pytest.approx((0.01, 0.01, 0.02), abs=1e-15)

    def test_infected_total_along_ode_path(self):
        # only p = e + i is an exact invariant; the e/i split is a representation
        alpha, lam, beta = 0.6, 1.0, 0.25
        s0, i0 = 0.98, 0.01
        x0 = [s0, 1 - s0 - i0, i0]
        path = ode_path(Seir(alpha, lam, beta), x0, TimeGrid(0, 0.5, 80))
        e, i, p = seir_conserved(path[:, 0], s0, i0, alpha, lam, beta)
        assert np.max(np.abs(p - path[:, 1] - path[:, 2])) < 1e-9
        assert np.allclose(e + i, p, atol=1e-15)

    def test_rejects_nonpositive_s(self):
        with pytest.raises(DomainError):
            seir_conserved(0.0, 0.98, 0.01, 0.6, 1.0, 0.25)


class TestOdeSolve:
    def test_linear_is_exact(self):
        tr = ode_solve(Linear(0.1, 2.0), [5.0], TimeGrid(0, 0.5, 10))
        assert tr.states[-1, 0] == pytest.approx(2 + 3 * math.exp(-0.5), rel=1e-15)

    def test_rejects_stochastic(self):
        with pytest.raises(DomainError):
            ode_solve(Sir(0.5, 0.3, 1e-3, 1e-3), [0.99, 0.01], TimeGrid(0, 1, 5))

    def test_sir_matches_generic_rk4(self):
        f = lambda x: np.array([-0.5 * x[0] * x[1], 0.5 * x[0] * x[1] - 0.3 * x[1]])
        ref = rk4(f, [0.99, 0.01], 20.0, 1e-3)
        got = ode_solve(Sir(0.5, 0.3), [0.99, 0.01], TimeGrid(0, 0.5, 40)).states[-1]
        assert np.max(np.abs(got - ref)) < 1e-9
