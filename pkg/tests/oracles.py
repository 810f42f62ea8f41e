"""Independent reference computations for the test suite.

Nothing here imports sderobust: every oracle is built from first principles
(Gaussian quadratic forms, dense matrices, generic integrators, brute force).
"""
from __future__ import annotations

import math

import numpy as np
from scipy import integrate, linalg


# ---------------------------------------------------------------------------
# Gaussian quadratic forms
# ---------------------------------------------------------------------------

def quadratic_form_moments(mean, cov, A, B):
    """Exact (E q1, E q2, V q1, V q2, Cov) for q = x'Ax, x'Bx with x ~ N(mean, cov)."""
    m, C = np.asarray(mean), np.asarray(cov)
    AC, BC = A @ C, B @ C
    e1 = np.trace(AC) + m @ A @ m
    e2 = np.trace(BC) + m @ B @ m
    v1 = 2 * np.trace(AC @ AC) + 4 * m @ A @ C @ A @ m
    v2 = 2 * np.trace(BC @ BC) + 4 * m @ B @ C @ B @ m
    c12 = 2 * np.trace(AC @ BC) + 4 * m @ A @ C @ B @ m
    return np.array([e1, e2, v1, v2, c12])


def lag_forms(n):
    """A, B with x'Ax = sum_{k=1..n} x_{k-1}^2 and x'Bx = sum_{k=1..n} x_k x_{k-1}."""
    A = np.zeros((n + 1, n + 1))
    B = np.zeros((n + 1, n + 1))
    for k in range(1, n + 1):
        A[k - 1, k - 1] = 1.0
        B[k, k - 1] = B[k - 1, k] = 0.5
    return A, B


def centred_mean(a, x0, b, n, delta, H=0.0, k=None):
    r = math.exp(-a * delta)
    idx = np.arange(n + 1)
    m = (x0 - b) * r**idx
    if k is not None:
        m = m + H * r**idx * (idx >= k)
    return m


def ou_yz_moments(a, b, sigma, x0, n, delta, H=0.0, k=None):
    """Moments of (Y, Z) for OU data from fixed x0; H is a jump carried back to t0 that
    is present from index k on."""
    r = math.exp(-a * delta)
    v = sigma**2 / (2 * a)
    idx = np.arange(n + 1)
    C = v * (r ** np.abs(idx[:, None] - idx[None, :]) - r ** (idx[:, None] + idx[None, :]))
    A, B = lag_forms(n)
    return quadratic_form_moments(centred_mean(a, x0, b, n, delta, H, k), C, A, B)


def noisy_ode_yz_moments(a, b, sigma0, x0, n, delta, H=0.0, k=None):
    """Moments of (Y, Z) for the exact decay path plus iid N(0, sigma0^2) noise."""
    A, B = lag_forms(n)
    return quadratic_form_moments(centred_mean(a, x0, b, n, delta, H, k),
                                  sigma0**2 * np.eye(n + 1), A, B)


# ---------------------------------------------------------------------------
# Monte Carlo samplers
# ---------------------------------------------------------------------------

def sample_ou(a, b, sigma, x0, n, delta, reps, rng, h=0.0, t_p=None):
    """Exact OU transitions, one row per replicate; a jump h is added at t_p."""
    r = math.exp(-a * delta)
    sd = math.sqrt(sigma**2 * (1 - r * r) / (2 * a))
    x = np.empty((reps, n + 1))
    x[:, 0] = x0
    for j in range(1, n + 1):
        x[:, j] = b + (x[:, j - 1] - b) * r + sd * rng.standard_normal(reps)
        if t_p is not None and (j - 1) * delta < t_p <= j * delta:
            # the jump happens inside the interval and decays until t_j
            x[:, j] += h * math.exp(-a * (j * delta - t_p))
    return x


def sample_noisy_ode(a, b, sigma0, x0, n, delta, reps, rng, h=0.0, t_p=None):
    t = np.arange(n + 1) * delta
    path = b + (x0 - b) * np.exp(-a * t)
    if t_p is not None:
        path = path + np.where(t >= t_p, h * np.exp(-a * (t - t_p)), 0.0)
    return path + sigma0 * rng.standard_normal((reps, n + 1))


def yz(x, b):
    u = x - b
    return np.sum(u[:, :-1] ** 2, axis=1), np.sum(u[:, 1:] * u[:, :-1], axis=1)


def mean_and_se(v):
    v = np.asarray(v, dtype=float)
    return float(v.mean()), float(v.std(ddof=1) / math.sqrt(len(v)))


def var_and_se(v):
    d = (np.asarray(v) - np.mean(v)) ** 2
    return float(d.mean() * len(d) / (len(d) - 1)), float(d.std(ddof=1) / math.sqrt(len(d)))


def cov_and_se(u, v):
    d = (np.asarray(u) - np.mean(u)) * (np.asarray(v) - np.mean(v))
    return float(d.mean() * len(d) / (len(d) - 1)), float(d.std(ddof=1) / math.sqrt(len(d)))


# ---------------------------------------------------------------------------
# filters, integrators, quadrature
# ---------------------------------------------------------------------------

def kalman_negloglik_ou_em(a, b, sigma, meas_var, y, delta, x0, substeps):
    """Exact Kalman filter for the linear model discretised by `substeps` Euler steps per delta."""
    h = delta / substeps
    F = (1 - a * h) ** substeps
    c = b * (1 - F)
    Q = sigma**2 * delta
    m, P, nll = x0, 0.0, 0.0
    for k in range(1, len(y)):
        m, P = F * m + c, F * F * P + Q
        S = P + meas_var
        v = y[k] - m
        nll += 0.5 * (math.log(2 * math.pi * S) + v * v / S)
        K = P / S
        m, P = m + K * v, (1 - K) * P
    return nll


def rk4(f, x0, t_end, h):
    """Classical RK4 for x' = f(x) from 0 to t_end (t_end may be negative)."""
    steps = int(round(abs(t_end) / h))
    hh = t_end / steps
    x = np.array(x0, dtype=float)
    for _ in range(steps):
        k1 = f(x)
        k2 = f(x + 0.5 * hh * k1)
        k3 = f(x + 0.5 * hh * k2)
        k4 = f(x + hh * k3)
        x = x + hh / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return x


def sir_nonlinear_rhs(alpha):
    """Right-hand side of the nonlinear SIR splitting subsystem."""
    def f(x):
        s, i = x
        g = alpha * s * (1 - i)
        return np.array([g, -g])
    return f


def omega_quadrature(alpha, beta, sigma1, sigma2, delta):
    """int_0^delta e^{Au} diag(sigma^2) e^{A'u} du by adaptive quadrature."""
    A = np.array([[-alpha, 0.0], [alpha, -beta]])
    S = np.diag([sigma1**2, sigma2**2])
    out = np.zeros((2, 2))
    for i in range(2):
        for j in range(2):
            f = lambda u, i=i, j=j: (linalg.expm(A * u) @ S @ linalg.expm(A * u).T)[i, j]
            out[i, j] = integrate.quad(f, 0.0, delta, epsabs=1e-15, epsrel=1e-13, limit=200)[0]
    return out


def rolling_sum_bruteforce(counts, window):
    counts = list(counts)
    return [sum(counts[t - window + 1: t + 1]) for t in range(window - 1, len(counts))]
