"""Bias and variance calculus for the OU autocorrelation and level estimators.

With b known, rho-hat is approximated by Z/Y where
    Y = sum_{k=1..n} (y_{k-1} - b)^2,   Z = sum_{k=1..n} (y_k - b)(y_{k-1} - b).
Means and variances of rho-hat follow from a second-order Taylor expansion of
the ratio around (E Z, E Y).

Perturbed moments are quadratic in the jump size.  They are stored as
coefficient triples (constant, linear, quadratic) in H = h e^{a (t_p - t0)},
the jump carried back to time t0, so the same numbers serve both the moment
functions and the series expansion of E(rho-hat) in h.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import DomainError

FIELDS = ("e_y", "e_z", "v_y", "v_z", "cov_yz")


@dataclass(frozen=True)
class MomentSet:
    e_y: float
    e_z: float
    v_y: float
    v_z: float
    cov_yz: float
    approximation: bool = False

    def as_array(self) -> np.ndarray:
        return np.array([self.e_y, self.e_z, self.v_y, self.v_z, self.cov_yz])

    def to_dict(self) -> dict:
        return {f: float(getattr(self, f)) for f in FIELDS} | {"approximation": self.approximation}

    def cauchy_schwarz_ok(self, slack: float = 1e-9) -> bool:
        return self.v_y >= -slack and self.v_z >= -slack and \
            abs(self.cov_yz) <= math.sqrt(max(self.v_y, 0) * max(self.v_z, 0)) * (1 + 1e-12) + slack


@dataclass(frozen=True)
class LinearScenario:
    """OU/linear design: rate a, level b, diffusion sigma, measurement sd sigma0."""

    a: float
    b: float = 0.0
    sigma: float = 0.0
    sigma0: float = 0.0
    x0: float = 5.0
    n: int = 50
    delta: float = 1.0
    t0: float = 0.0

    def __post_init__(self):
        if not self.a > 0:
            raise DomainError("a must be positive (rho = 1 is excluded)")
        if not self.delta > 0 or int(self.n) != self.n or self.n < 1:
            raise DomainError("need delta > 0 and an integer n >= 1")
        if self.sigma < 0 or self.sigma0 < 0:
            raise DomainError("noise scales must be non-negative")
        object.__setattr__(self, "n", int(self.n))

    @property
    def rho(self) -> float:
        return math.exp(-self.a * self.delta)

    def rho_pow(self, m: float) -> float:
        return math.exp(-m * self.a * self.delta)

    @property
    def one_minus_rho2(self) -> float:
        return -math.expm1(-2.0 * self.a * self.delta)

    @property
    def stationary_var(self) -> float:
        return self.sigma**2 / (2.0 * self.a)

    @property
    def psi2(self) -> float:
        if self.sigma == 0:
            raise DomainError("psi2 needs sigma > 0")
        return 2.0 * self.a * (self.x0 - self.b) ** 2 / self.sigma**2

    @property
    def phi_n(self) -> float:
        return (self.x0 - self.b) ** 2 * self.geometric_sum

    @property
    def geometric_sum(self) -> float:
        """sum_{k<n} rho^{2k} = (1 - rho^{2n}) / (1 - rho^2)."""
        return -math.expm1(-2.0 * self.n * self.a * self.delta) / self.one_minus_rho2

    @property
    def T(self) -> float:
        return self.n * self.delta

    def jump_index(self, t_p: float) -> int:
        """Smallest k with t_p <= t_k."""
        k = int(math.ceil((t_p - self.t0) / self.delta - 1e-9))
        if not (self.t0 < t_p and 1 <= k <= self.n):
            raise DomainError("jump time must lie in (t0, t_n]")
        return k

    def carried_jump(self, h: float, t_p: float) -> float:
        return h * math.exp(self.a * (t_p - self.t0))

    def replace(self, **kw) -> "LinearScenario":
        from dataclasses import replace
        return replace(self, **kw)

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in ("a", "b", "sigma", "sigma0", "x0", "n", "delta", "t0")}

    @classmethod
    def from_dict(cls, d) -> "LinearScenario":
        return cls(**{k: d[k] for k in ("a", "b", "sigma", "sigma0", "x0", "n", "delta", "t0") if k in d})


# ---------------------------------------------------------------------------
# ratio expansions
# ---------------------------------------------------------------------------

def ratio_mean_approx(e1, e2, cov12, v2):
    """Second-order Taylor approximation of E(X1/X2)."""
    if e2 == 0:
        raise DomainError("E(X2) must be non-zero")
    return e1 / e2 - cov12 / e2**2 + e1 * v2 / e2**3


def ratio_var_approx(e1, e2, v1, v2, cov12):
    """Taylor approximation of V(X1/X2)."""
    if e2 == 0:
        raise DomainError("E(X2) must be non-zero")
    return v1 / e2**2 - 2.0 * e1 * cov12 / e2**3 + e1**2 * v2 / e2**4


def _rho_mean(m: MomentSet) -> float:
    return ratio_mean_approx(m.e_z, m.e_y, m.cov_yz, m.v_y)


def _rho_var(m: MomentSet) -> float:
    return ratio_var_approx(m.e_z, m.e_y, m.v_z, m.v_y, m.cov_yz)


# ---------------------------------------------------------------------------
# unperturbed moments
# ---------------------------------------------------------------------------

def _powers(sc: LinearScenario):
    r = sc.rho
    return r, r * r, sc.rho_pow(2 * sc.n), sc.one_minus_rho2


def moments_yz_sde(sc: LinearScenario) -> MomentSet:
    """Exact moments of (Y, Z) for OU data started at a fixed x0."""
    r, r2, P, q = _powers(sc)
    v = sc.stationary_var
    c2 = (sc.x0 - sc.b) ** 2
    n = sc.n
    g = sc.geometric_sum
    p = c2 * g
    ey = p + (n - g) * v
    ez = r * ey
    vy = v * (4 * p * (r2 + P) / q - 8 * n * c2 * P / q) \
        + v * v * 2 * ((1 + r2 + 4 * P) * n / q - (1 - P) * (1 + 4 * r2 + P) / q**2)
    # (1 - rho^{2n}) cancels inside the phi(n) factor; written without it so n = 1 is safe
    vz = v * c2 * (((1 + r2) ** 2 - 4 * r2 * P * P) / q**2 - (q * P + 4 * n * P * (1 + r2)) / q) \
        + v * v * ((1 + 4 * r2 - r2 * r2 + 4 * P * (1 + r2)) * n / q
                   - (1 - P) * (1 + 8 * r2 + r2 * r2 + 2 * P * r2) / q**2)
    cov = 2 * v * c2 * r * ((1 + r2 - 2 * P * P) / q**2 - ((1 + 3 * r2) * n * P / r2 - P) / q) \
        + v * v * 2 * r * ((2 + (1 + 3 * r2) * P / r2) * n / q - (1 - P) * (3 + 2 * r2 + P) / q**2)
    return MomentSet(ey, ez, vy, vz, cov)


def moments_yz_ode(sc: LinearScenario) -> MomentSet:
    """Moments of (Y, Z) for the exact ODE path plus iid N(0, sigma0^2) noise on every y_k."""
    r, r2, P, q = _powers(sc)
    v0 = sc.sigma0**2
    n = sc.n
    c2 = (sc.x0 - sc.b) ** 2
    p = sc.phi_n
    ey = p + n * v0
    ez = r * p
    vy = 4 * v0 * p + 2 * n * v0**2
    # phi(n)/(1 - rho^{2n}) = c^2/(1 - rho^2)
    vz = v0 * c2 * (1 + 3 * r2 - 3 * P - P * r2) / q + n * v0**2
    cov = 2 * v0 * c2 * (2 * r - P / r - P * r) / q
    return MomentSet(ey, ez, vy, vz, cov)


# ---------------------------------------------------------------------------
# perturbed moments: coefficients in H
# ---------------------------------------------------------------------------

def _ode_jump_coeffs(sc: LinearScenario, k: int) -> np.ndarray:
    base = moments_yz_ode(sc).as_array()
    r, r2, P, q = _powers(sc)
    K = sc.rho_pow(2 * k)
    v0 = sc.sigma0**2
    c = sc.x0 - sc.b
    n = sc.n
    out = np.zeros((5, 3))
    out[:, 0] = base
    if k < n:
        g = (K - P) / q
        out[0, 1:] = 2 * c * g, g
        out[1, 1:] = (sc.rho_pow(2 * k - 1) * (1 + r2) - 2 * r * P) * c / q, r * (K - P) / q
        out[2, 1:] = 8 * v0 * g * c, 4 * v0 * g
        out[3, 1:] = 2 * v0 * c * (sc.rho_pow(2 * k - 2) * (1 + r2) ** 2 - 3 * P - P * r2) / q, \
            v0 * (2 * K * (1 + r2) - 3 * P - P * r2) / q
        out[4, 1:] = 4 * v0 * (1 + r2) * (K - P) / (r * q) * c, \
            2 * v0 * (2 * K * r2 - (1 + r2) * P) / (r * q)
    else:
        # only the last observation moves; it enters Z but not Y
        out[1, 1] = c * sc.rho_pow(2 * n - 1)
        out[3, 1:] = 2 * v0 * c * sc.rho_pow(2 * n - 2) * (1 + r2), v0 * P
        out[4, 1] = 2 * v0 * c * sc.rho_pow(2 * n - 1)
    if k == 1:
        # y_0 carries no jump, so its product with y_1 loses one cross term
        out[3, 1] -= 2 * v0 * c
    return out


def _sde_jump_coeffs(sc: LinearScenario, k: int) -> np.ndarray:
    base = moments_yz_sde(sc).as_array()
    r, r2, P, q = _powers(sc)
    K = sc.rho_pow(2 * k)
    v = sc.stationary_var
    c = sc.x0 - sc.b
    n = sc.n
    r4, r6 = r2 * r2, r2 * r2 * r2
    LY = 8 * (K - P) * (r2 + P) / q**2 + 8 * (k * (K + P) - 2 * n * P) / q
    QY = 4 * (K - P) * (1 + r2 - K + P) / q**2 - 8 * P * (n - k) / q
    X = 3 * K * P * r2 + K * P + K * r4 + 4 * K * r2 - K - 4 * P * P * r2 - P * r4 - 3 * P * r2
    LC = 2 / r * (X / q**2 + (k * (2 * K * (1 + r2) + P * (1 + 3 * r2)) - 2 * n * P * (1 + 3 * r2)) / q)
    QC = 2 / r * ((K - P) * (2 * r2 * (2 + P) - K * (1 + r2)) / q**2 - P * (n - k) * (1 + 3 * r2) / q)
    Yt = (2 * K * P * r4 + 2 * K * P * r2 + 3 * K * r4 + 2 * K * r2 - K - 4 * P * P * r4
          + P * r6 - 4 * P * r4 - P * r2)
    LZ = 2 * Yt / (r2 * q**2) + 2 * k * (1 + r2) * (K * (1 + r2) + 2 * P * r2) / (r2 * q) \
        - 8 * n * P * (1 + r2) / q
    W = (K * K * (1 + r2) ** 2 - 4 * K * P * r2 * (1 + r2) + 2 * K * r6 - 8 * K * r4 - 2 * K * r2
         + 4 * P * P * r4 - 3 * P * r6 + 10 * P * r4 + P * r2)
    QZ = -W / (r2 * q**2) - 4 * P * (n - k) * (1 + r2) / q
    out = np.zeros((5, 3))
    out[:, 0] = base
    out[0, 1:] = 2 * c * (K - P) / q, (K - P) / q
    out[1, 1:] = (sc.rho_pow(2 * k - 1) * (1 + r2) - 2 * r * P) * c / q, r * (K - P) / q
    out[2, 1:] = v * c * LY, v * QY
    out[3, 1:] = v * c * LZ, v * QZ
    out[4, 1:] = v * c * LC, v * QC
    return out


def _evaluate(coeffs: np.ndarray, H: float) -> MomentSet:
    return MomentSet(*(coeffs @ np.array([1.0, H, H * H])))


def moments_yz_ode_perturbed(sc: LinearScenario, h: float, t_p: float) -> MomentSet:
    """Moments of (Y1, Z1) for ODE data with a jump h at t_p."""
    return _evaluate(_ode_jump_coeffs(sc, sc.jump_index(t_p)), sc.carried_jump(h, t_p))


def moments_yz_sde_perturbed(sc: LinearScenario, h: float, t_p: float) -> MomentSet:
    """Moments of (Y1, Z1) for OU data with a jump h at t_p, all five exact."""
    return _evaluate(_sde_jump_coeffs(sc, sc.jump_index(t_p)), sc.carried_jump(h, t_p))


# ---------------------------------------------------------------------------
# rho-hat approximations
# ---------------------------------------------------------------------------

def expect_rho_sde(sc: LinearScenario) -> float:
    """Approximate E(rho-hat) for OU data (b known)."""
    return _rho_mean(moments_yz_sde(sc))


def var_rho_sde(sc: LinearScenario) -> float:
    return _rho_var(moments_yz_sde(sc))


def expect_rho_ode(sc: LinearScenario) -> float:
    """Approximate E(rho-hat) when the OU estimator meets noisy ODE data."""
    return _rho_mean(moments_yz_ode(sc))


def var_rho_ode(sc: LinearScenario) -> float:
    return _rho_var(moments_yz_ode(sc))


def relative_bias_sde_closed(sc: LinearScenario) -> float:
    """E(rho-hat)/rho for OU data written through psi^2 and n only."""
    r2n2 = sc.rho_pow(2 * sc.n - 2)
    g, psi2, n = sc.geometric_sum, sc.psi2, sc.n
    return 1 - (2 * n * (1 - (psi2 - 1) * r2n2) + g * 2 * (psi2 - 2)) / (n + g * (psi2 - 1)) ** 2


def relative_bias_ode_closed(sc: LinearScenario) -> float:
    """E(rho-hat)/rho for noisy ODE data in closed form."""
    p, v, n = sc.phi_n, sc.sigma0**2, sc.n
    P, P1 = sc.rho_pow(2 * n), sc.rho_pow(2 * (n - 1))
    den = p + n * v
    return p / den - 2 * v * p * (2 - P1 - P) / (1 - P) / den**2 + p * (4 * v * p + 2 * n * v * v) / den**3


def var_rho_ode_closed(sc: LinearScenario) -> float:
    p, v, n, r2 = sc.phi_n, sc.sigma0**2, sc.n, sc.rho**2
    P = sc.rho_pow(2 * n)
    den = p + n * v
    return ((v * p * (1 + 3 * r2 - 3 * P - P * r2) / (1 - P) + n * v * v) / den**2
            - 4 * v * p * p * (2 * r2 - P - P * r2) / (1 - P) / den**3
            + r2 * p * p * (4 * v * p + 2 * n * v * v) / den**4)


def relative_bias_ode_small_n(sc: LinearScenario) -> float:
    """E(rho-hat)/rho for noisy ODE data when n a delta is small."""
    c2, v, n = (sc.x0 - sc.b) ** 2, sc.sigma0**2, sc.n
    s = c2 + v
    return c2 / s * (1 - 2 * v / (n * s) + 2 * v * c2 / (n * s * s))


def var_rho_ode_small_n(sc: LinearScenario) -> float:
    c2, v, n, ad = (sc.x0 - sc.b) ** 2, sc.sigma0**2, sc.n, sc.a * sc.delta
    s = c2 + v
    return (v / (n * s) + (3 - 2 * ad) * v * c2 / (n * s**2) - 4 * v * c2**2 / (n * s**3)
            - (2 - 4 * ad) * v * v * c2 / (n * s**4))


def relative_bias_ode_large_n(sc: LinearScenario) -> float:
    """E(rho-hat)/rho for noisy ODE data when rho^{2n} is negligible."""
    w = (sc.x0 - sc.b) ** 2 / (2 * sc.a * sc.delta)
    return w / (w + sc.n * sc.sigma0**2)


def var_rho_ode_large_n(sc: LinearScenario) -> float:
    w = (sc.x0 - sc.b) ** 2 / (2 * sc.a * sc.delta)
    return sc.sigma0**2 / (w + sc.n * sc.sigma0**2)


# truncated power series (c0, c1, c2) in H

def _smul(x, y):
    return np.array([x[0] * y[0], x[0] * y[1] + x[1] * y[0], x[0] * y[2] + x[1] * y[1] + x[2] * y[0]])


def _sinv(x):
    return np.array([1 / x[0], -x[1] / x[0] ** 2, (x[1] ** 2 - x[0] * x[2]) / x[0] ** 3])


def _ratio_mean_series(co: np.ndarray) -> np.ndarray:
    ey, ez, vy, _, cov = co
    inv = _sinv(ey)
    inv2 = _smul(inv, inv)
    inv3 = _smul(inv2, inv)
    return _smul(ez, inv) - _smul(cov, inv2) + _smul(_smul(ez, vy), inv3)


def jump_sensitivity_ode(sc: LinearScenario, t_p: float) -> tuple[float, float]:
    """(A1, A2): linear and quadratic coefficients in h of E(rho-hat) for jumped ODE data."""
    series = _ratio_mean_series(_ode_jump_coeffs(sc, sc.jump_index(t_p)))
    e = math.exp(sc.a * (t_p - sc.t0))
    return float(series[1] * e), float(series[2] * e * e)


def jump_sensitivity_sde(sc: LinearScenario, t_p: float) -> tuple[float, float]:
    series = _ratio_mean_series(_sde_jump_coeffs(sc, sc.jump_index(t_p)))
    e = math.exp(sc.a * (t_p - sc.t0))
    return float(series[1] * e), float(series[2] * e * e)


def expect_rho_ode_perturbed(sc: LinearScenario, h: float, t_p: float) -> float:
    """E(rho-hat) to second order in h for jumped ODE data.

    When the jump only reaches the last observation (k = n) the linear
    last-observation impact formula is used.
    """
    k = sc.jump_index(t_p)
    if k == sc.n:
        return last_observation_impact_ode(sc, h, t_p)
    a1, a2 = jump_sensitivity_ode(sc, t_p)
    return expect_rho_ode(sc) + a1 * h + a2 * h * h


def expect_rho_sde_perturbed(sc: LinearScenario, h: float, t_p: float) -> float:
    """E(rho-hat) for jumped OU data from the ratio expansion of the exact moments."""
    return _rho_mean(moments_yz_sde_perturbed(sc, h, t_p))


def last_observation_impact_ode(sc: LinearScenario, h: float, t_p: float) -> float:
    m = moments_yz_ode(sc)
    c = sc.x0 - sc.b
    shift = h * math.exp(-sc.a * (sc.t0 + sc.n * sc.delta - t_p))
    slope = c / m.e_y * sc.rho_pow(sc.n - 1) * (1 - 2 * sc.sigma0**2 / m.e_y + m.v_y / m.e_y**2)
    return _rho_mean(m) + slope * shift


def last_observation_impact_sde(sc: LinearScenario, h: float, t_p: float) -> float:
    m = moments_yz_sde(sc)
    c, n = sc.x0 - sc.b, sc.n
    shift = h * math.exp(-sc.a * (sc.t0 + n * sc.delta - t_p))
    slope = c / m.e_y * sc.rho_pow(n - 1) * (
        1 - sc.sigma**2 / (sc.a * m.e_y) * (n - sc.geometric_sum) + m.v_y / m.e_y**2)
    return _rho_mean(m) + slope * shift


# ---------------------------------------------------------------------------
# level estimator and random-mean perturbation
# ---------------------------------------------------------------------------

def b_hat_moments(sc: LinearScenario, model_tag: str) -> tuple[float, float]:
    """(mean, variance) of b-hat with a at its true value."""
    r, n = sc.rho, sc.n
    if model_tag == "sde":
        return sc.b, sc.stationary_var * (1 + r) / (n * (1 - r))
    if model_tag == "ode":
        return sc.b, ((n - 1) / n**2 + (1 + r * r) / (n**2 * (1 - r) ** 2)) * sc.sigma0**2
    raise DomainError("model_tag must be 'ode' or 'sde'")


def b_hat_jump_bias(sc: LinearScenario, h: float, t_p: float) -> float:
    """Approximate E(b-hat) after a jump h at t_p."""
    k = sc.jump_index(t_p)
    tk = sc.t0 + k * sc.delta
    return sc.b + math.exp(-sc.a * (tk - t_p)) / (sc.n * (1 - sc.rho)) * h


def random_mean_cond_var(sc: LinearScenario, sigma_b: float, model_tag: str) -> float:
    """One-step conditional variance of x_{k+1} | x_k when b is redrawn every interval."""
    r = sc.rho
    extra = sigma_b**2 * (1 - r) ** 2
    if model_tag == "ode":
        return extra
    if model_tag == "sde":
        return sc.stationary_var * sc.one_minus_rho2 + extra
    raise DomainError("model_tag must be 'ode' or 'sde'")


def variance_decreases_in_a(sc: LinearScenario, sigma_b: float) -> bool:
    """True when a larger rate lowers the SDE conditional variance under a random mean."""
    ad, r = sc.a * sc.delta, sc.rho
    lhs = (1 - (1 + 2 * ad) * r * r) / (2 * ad * r * (1 - r))
    return lhs > sigma_b**2 / sc.stationary_var


# ---------------------------------------------------------------------------
# literal forms kept for comparison
# ---------------------------------------------------------------------------
# These reproduce closed forms as they were originally stated.  Where they
# differ from the exact moments above the difference is a typo-level slip;
# tests pin both the agreement and the size of each disagreement.

def moments_yz_sde_literal(sc: LinearScenario) -> MomentSet:
    r, r2, P, q = _powers(sc)
    v, n, c2 = sc.stationary_var, sc.n, (sc.x0 - sc.b) ** 2
    p, g = sc.phi_n, sc.geometric_sum
    ey = p + (n - g) * v
    vy = v * (4 * p * (r2 + P) / q - 8 * n * c2 * P / q) \
        + v * v * ((2 * (1 + r2) + 8 * P) / q * n - 2 * (1 - P) * (1 + 2 * r2 + P) / q**2)
    vz = v * p * (((1 + r2) ** 2 - 4 * r2 * P * P) / (q * (1 - P)) - (q * P + 4 * n * P * (1 + r2)) / (1 - P)) \
        + v * v * ((1 + 4 * r2 - r2 * r2 + 4 * P * (1 + r2)) / q * n
                   - ((1 + r2) ** 2 + 6 * r2 - P * q * q - 2 * r2 * P * P) / q**2)
    cov = 2 * v * p * r * ((1 + r2 - 2 * P * P) / (q * (1 - P)) - ((1 + 3 * r2) * n * P / r2 - P) / (1 - P)) \
        + v * v * 2 * r * ((2 + (1 + 3 * r2) * P / r2) / q * n - (1 - 2 * P - P * P) / q**2)
    return MomentSet(ey, r * ey, vy, vz, cov)


def var_rho_sde_literal(sc: LinearScenario) -> float:
    r, n, g, psi2 = sc.rho, sc.n, sc.geometric_sum, sc.psi2
    P = sc.rho_pow(2 * n)
    num = ((1 - r * (7 + r + r * r) + 4 * (psi2 - 1) * sc.rho_pow(2 * n - 1) * (1 + 3 * r * r)) * n / (1 + r)
           + ((psi2 - 1) * (1 - r * (3 + r + 5 * r * r + 8 * P)) - 4 * r * (2 + r * r - P)) * g / (1 + r))
    return num / (n + g * (psi2 - 1)) ** 2


def f1(n: int, k: int, rho: float) -> float:
    """Linear-in-h helper of the jumped OU covariance, literal form."""
    r = rho
    g = (r ** (2 * k) - r ** (2 * n)) / (1 - r**2)
    return (g * (3 * k * r + 4 * r**3 + (4 * (r - r ** (2 * k) + r ** (2 * n)) - 3 * r**2
                                         - r ** (2 * k - 1) + 4 * r ** (2 * k + 1)) / (1 - r**2))
            - (1 - r ** (2 * k)) * (r ** (2 * k - 1) - r ** (2 * n + 1)) / (1 - r**2) ** 2
            - 2 * (n - k) * r ** (2 * n - 1) * ((1 + r**2) / (1 - r**2) + 2 * r**2)
            + k * ((r ** (2 * k - 1) - r ** (2 * n + 1)) / (1 - r**2) + r ** (2 * k - 1) - r ** (2 * n - 1)))


def f2(n: int, k: int, rho: float) -> float:
    """Quadratic-in-h helper of the jumped OU covariance, literal form."""
    r = rho
    g = (r ** (2 * k) - r ** (2 * n)) / (1 - r**2)
    return (g * (2 * r / (1 - r) + 2 * r * (1 + r**2) - r ** (2 * k - 1)
                 - 2 * r * (r ** (2 * k) + r ** (2 * n)) / (1 + r**2))
            - (n - k) * (r ** (2 * n - 1) + 2 * r ** (2 * n + 1) * (2 - r**2) / (1 - r**2)))


def moments_yz_sde_perturbed_literal(sc: LinearScenario, h: float, t_p: float) -> MomentSet:
    """Literal jumped OU moments; V(Z1) is not available and falls back to V(Z)."""
    base = moments_yz_sde_literal(sc)
    r, n, v, c = sc.rho, sc.n, sc.stationary_var, sc.x0 - sc.b
    k = sc.jump_index(t_p)
    H = sc.carried_jump(h, t_p)
    if k == n:
        return MomentSet(base.e_y, base.e_z + c * H * r ** (2 * n - 1), base.v_y, base.v_z,
                         base.cov_yz + 2 * v * c * H * r ** (2 * n - 1) * (n - sc.geometric_sum),
                         approximation=True)
    g = (r ** (2 * k) - r ** (2 * n)) / (1 - r**2)
    qz = (r ** (2 * k - 1) * (1 + r**2) - 2 * r ** (2 * n + 1)) / (r ** (2 * k) - r ** (2 * n))
    t1 = (r ** (2 * k) - (2 * n - 2 * k + 1) * r ** (2 * n) * (1 - r**2) - r ** (4 * n - 2 * k + 2)) / (1 - r**2) ** 2
    t2 = ((1 - r**k) * r * (r**k - r ** (2 * n - k)) * (1 + r + r**2 - r ** (2 * n - 2 * k + 2) * (1 + r**k + r ** (2 * k)))
          / ((1 - r) ** 2 * (1 + r) * (1 + r + r**2)))
    t3 = r**4 * (1 - r ** (4 * k)) * (1 - r ** (2 * n - 2 * k)) ** 2 / ((1 - r**2) ** 2 * (1 + r**2))
    return MomentSet(base.e_y + g * (2 * c * H + H * H), base.e_z + g * (qz * c * H + r * H * H),
                     base.v_y + 8 * c * v * (t1 + t2) * H + 4 * v * (t3 + t1) * H * H, base.v_z,
                     base.cov_yz + 2 * c * v * f1(n, k, r) * H + 2 * v * f2(n, k, r) * H * H,
                     approximation=True)


def moments_yz_ode_perturbed_literal(sc: LinearScenario, h: float, t_p: float) -> MomentSet:
    base = moments_yz_ode(sc)
    r, n, v0, c = sc.rho, sc.n, sc.sigma0**2, sc.x0 - sc.b
    k = sc.jump_index(t_p)
    H = sc.carried_jump(h, t_p)
    if k == n:
        return MomentSet(base.e_y, base.e_z + c * H * r ** (2 * n - 1), base.v_y,
                         base.v_z + 2 * v0 * c * r ** (2 * n - 2) * (1 + r**2) * H + v0 * r ** (2 * n) * H * H,
                         base.cov_yz + 2 * v0 * c * r ** (2 * n - 1) * H)
    K, P, q = r ** (2 * k), r ** (2 * n), 1 - r**2
    g = (K - P) / q
    qz = (r ** (2 * k - 1) * (1 + r**2) - 2 * r ** (2 * n + 1)) / (K - P)
    vz = base.v_z + v0 * ((r ** (2 * k - 2) * (1 + r**2) ** 2 - 3 * P - P * r**2) / q * 2 * c * H
                          + (2 * K * (1 + r**2) - 3 * P - P * r**2) / q * H * H)
    cov = base.cov_yz + 2 * v0 * (2 * (1 + r**2) * (K - P) / (r * q) * c * H
                                  + (4 * K * r**2 - 2 * (1 + r**2) * P) / (r * q) * H * H)
    return MomentSet(base.e_y + g * (2 * c * H + H * H), base.e_z + g * (qz * c * H + r * H * H),
                     base.v_y + 4 * v0 * g * (2 * c * H + H * H), vz, cov)


def jump_sensitivity_ode_literal(sc: LinearScenario, t_p: float) -> tuple[float, float]:
    """(A1, A2) in their literal closed form (k < n)."""
    r, n, v0, c = sc.rho, sc.n, sc.sigma0**2, sc.x0 - sc.b
    k = sc.jump_index(t_p)
    if k >= n:
        raise DomainError("the closed form needs k < n")
    E = math.exp(sc.a * (t_p - sc.t0))
    m = moments_yz_ode(sc)
    EY, EZ, VY, C = m.e_y, m.e_z, m.v_y, m.cov_yz
    K, P = r ** (2 * k), r ** (2 * n)
    g = (K - P) / (1 - r**2)
    q = (r ** (2 * k - 1) * (1 + r**2) - 2 * r ** (2 * n + 1)) / (K - P)
    a1 = c * E / EY * g * (q - (2 * EZ + 4 * (1 + r**2) / r * v0) / EY
                           + (4 * C + q * VY + 8 * v0 * EZ) / EY**2 - 6 * EZ * VY / EY**3)
    a2 = (E**2 / EY * g * (r - (EZ + 4 * v0 * (2 * r ** (2 * k + 2) - (1 + r**2) * P) / (r * (K - P))) / EY
                           + (2 * C + r * VY + 4 * v0 * EZ) / EY**2 - 3 * EZ * VY / EY**3)
          - 2 * E**2 * (q - (2 * EZ + (8 * (1 + r**2) / r + (4 * r ** (2 * k - 1) * (1 + r**2)
                                                             - 8 * r ** (2 * n + 1)) / (K - P)) * v0) / EY
                        + (6 * C + (3 * r ** (2 * k - 1) * (1 + r**2) - 6 * r ** (2 * n + 1)) / (K - P) * VY
                           + 24 * v0) / EY**2
                        - 12 * EZ * VY / EY**3) * c**2 / EY**2 * g**2)
    return a1, a2


# ---------------------------------------------------------------------------
# sweeps
# ---------------------------------------------------------------------------

def moment_summary(sc: LinearScenario, h: float | None = None, t_p: float | None = None) -> dict:
    """Relative bias and variance of rho-hat for ODE and SDE data at one design point.

    With a jump (h, t_p) the perturbed relative biases are added.
    """
    out = {"T": sc.T, "n": sc.n, "delta": sc.delta, "a": sc.a,
           "relative_bias_ode": relative_bias_ode_closed(sc),
           "var_rho_ode": var_rho_ode_closed(sc)}
    if sc.sigma > 0:
        rho = sc.rho
        out["relative_bias_sde"] = expect_rho_sde(sc) / rho
        out["var_rho_sde"] = var_rho_sde(sc)
    if h is not None and t_p is not None:
        out["relative_bias_ode_jump"] = float(expect_rho_ode_perturbed(sc, h, t_p)) / sc.rho
        if sc.sigma > 0:
            out["relative_bias_sde_jump"] = float(expect_rho_sde_perturbed(sc, h, t_p)) / sc.rho
    return out


SWEEPABLE = ("T", "n", "delta", "a", "b", "sigma", "sigma0", "x0")


def sweep(sc: LinearScenario, param: str, values, h: float | None = None,
          t_p: float | None = None) -> list[dict]:
    """moment_summary over a range of one design parameter.

    Sweeping T keeps delta fixed and sets n = T / delta.
    """
    if param not in SWEEPABLE:
        raise DomainError(f"cannot sweep {param!r}; choose from {', '.join(SWEEPABLE)}")
    rows = []
    for v in values:
        if param == "T":
            n = v / sc.delta
            if abs(n - round(n)) > 1e-9 * max(1.0, n):
                raise DomainError(f"T={v} is not a multiple of delta={sc.delta}")
            point = sc.replace(n=int(round(n)))
        elif param == "n":
            point = sc.replace(n=int(v))
        else:
            point = sc.replace(**{param: float(v)})
        rows.append(moment_summary(point, h, t_p))
    return rows
