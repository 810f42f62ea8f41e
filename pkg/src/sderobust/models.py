"""Drifts, exact linear transitions, SIR splitting ingredients, SEIR reduction."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.optimize import brentq
from scipy.special import gammainc

from . import _kernels
from .core import DomainError, Linear, ModelSpec, Seir, Sir, TimeGrid, Trajectory, is_ode

SERIES_GAP = 0.5  # |beta - alpha| delta below this uses the gap series
SERIES_TERMS = 40
ODE_STEP = 0.01


def drift(model: ModelSpec, state) -> np.ndarray:
    x = np.atleast_1d(np.asarray(state, dtype=float))
    d = len(model.labels)
    if x.shape != (d,):
        raise DomainError(f"{model.family} state must have {d} components, got shape {x.shape}")
    out = np.empty(d)
    _kernels.drift_into(_kernels.FAMILY_CODE[model.family], _params(model), x, out)
    return out


def _params(model: ModelSpec) -> np.ndarray:
    return np.array(list(model.theta.values()), dtype=float)


# ---------------------------------------------------------------------------
# linear model
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OuTransition:
    rho: float
    b: float
    cond_var: float

    def cond_mean(self, x):
        return self.rho * np.asarray(x) + self.b * (1.0 - self.rho)

    @property
    def cond_mean_fn(self) -> Callable:
        return self.cond_mean


def ou_transition(a: float, b: float, sigma: float, delta: float) -> OuTransition:
    if not a > 0 or not delta > 0:
        raise DomainError("a and delta must be positive")
    rho = math.exp(-a * delta)
    # sigma^2 (1 - rho^2) / (2a), written with expm1 for small a*delta
    var = sigma**2 * -math.expm1(-2.0 * a * delta) / (2.0 * a)
    return OuTransition(rho, b, var)


# ---------------------------------------------------------------------------
# SIR splitting: linear part
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SirSplit:
    a_matrix: np.ndarray
    expm: np.ndarray
    omega: np.ndarray


def _decay_integral(c: float, delta: float) -> float:
    """Integral of exp(-c u) over [0, delta]."""
    return -math.expm1(-c * delta) / c if c != 0 else delta


def _gap_series(alpha: float, gap: float, delta: float) -> tuple[float, float]:
    """(o12, o22) sigma1-parts as power series in the rate gap.

    With phi(u) = (1 - e^{-gap u}) / gap the integrands are e^{-2 alpha u} phi
    and e^{-2 alpha u} phi^2; expanding phi in gap leaves the moments
    J_m = int_0^delta u^m e^{-cu} du = m! P(m + 1, c delta) / c^{m+1}.
    """
    c = 2.0 * alpha
    q = -gap / c
    m = np.arange(1, SERIES_TERMS + 1)
    p = gammainc(m + 1, c * delta)
    o12 = alpha * float(np.sum(q ** (m - 1) * p)) / c**2
    m2 = m[1:]
    o22 = alpha**2 * float(np.sum(q ** (m2 - 2) * (2.0**m2 - 2.0) * p[1:])) / c**3
    return o12, o22


def sir_split(alpha, beta, sigma1, sigma2, delta) -> SirSplit:
    """Drift matrix A, e^{A delta} and the exact covariance of the linear subsystem."""
    if not (alpha > 0 and beta > 0 and delta >= 0):
        raise DomainError("alpha, beta must be positive and delta non-negative")
    A = np.array([[-alpha, 0.0], [alpha, -beta]])
    ea, eb = math.exp(-alpha * delta), math.exp(-beta * delta)
    gap = beta - alpha
    i2a = _decay_integral(2 * alpha, delta)
    i2b = _decay_integral(2 * beta, delta)
    # alpha (e^{-a d} - e^{-b d}) / (b - a) without cancellation
    off = alpha * delta * ea if gap == 0 else alpha * ea * -math.expm1(-gap * delta) / gap
    if abs(gap) * delta < SERIES_GAP:
        # the closed form divides by gap^2 and cancels badly near alpha = beta
        s12, s22 = _gap_series(alpha, gap, delta)
        o12 = sigma1**2 * s12
        o22 = sigma1**2 * s22 + sigma2**2 * i2b
    else:
        iab = _decay_integral(alpha + beta, delta)
        r = alpha / gap
        o12 = sigma1**2 * r * (i2a - iab)
        o22 = sigma1**2 * r**2 * (i2a - 2.0 * iab + i2b) + sigma2**2 * i2b
    expm = np.array([[ea, 0.0], [off, eb]])
    omega = np.array([[sigma1**2 * i2a, o12], [o12, o22]])
    return SirSplit(A, expm, omega)


# ---------------------------------------------------------------------------
# SIR splitting: nonlinear part
# ---------------------------------------------------------------------------
# ds = alpha s (1 - i) dt, di = -alpha s (1 - i) dt with c1 = s + i conserved.
# With k = 1 - c1 the s-equation is ds = alpha s (k + s) dt, solved by
#   s' = s e^{alpha h k} / (1 - s g),  g = (e^{alpha h k} - 1) / k  (-> alpha h).

def _flow_parts(s, i, alpha, h):
    k = 1.0 - s - i
    x = alpha * h * k
    small = np.abs(k) < 1e-12
    safe_k = np.where(small, 1.0, k)
    g = np.where(small, alpha * h * (1.0 + 0.5 * x), np.expm1(x) / safe_k)
    den = 1.0 - s * g
    return x, den


def _as_states(state):
    x = np.asarray(state, dtype=float)
    if x.shape[-1] != 2:
        raise DomainError("SIR states have two components (s, i)")
    return x


def sir_flow(state, alpha: float, delta: float) -> np.ndarray:
    """Exact flow of the nonlinear SIR subsystem over time delta (negative allowed)."""
    x = _as_states(state)
    s, i = x[..., 0], x[..., 1]
    if np.any(s <= 0):
        raise DomainError("sir_flow requires s > 0")
    ex, den = _flow_parts(s, i, alpha, delta)
    if np.any(den <= 0):
        raise DomainError("state outside the domain of the nonlinear flow")
    s_new = s * np.exp(ex) / den
    return np.stack([s_new, s + i - s_new], axis=-1)


def sir_flow_inverse(state, alpha: float, delta: float) -> np.ndarray:
    """Inverse flow; time reversal of the autonomous subsystem."""
    return sir_flow(state, alpha, -delta)


def sir_flow_logdet(state, alpha: float, delta: float) -> np.ndarray:
    """log |det D_x F(x, delta)| for the closed-form flow."""
    x = _as_states(state)
    s, i = x[..., 0], x[..., 1]
    ex, den = _flow_parts(s, i, alpha, delta)
    if np.any(den <= 0) or np.any(s <= 0):
        raise DomainError("state outside the domain of the nonlinear flow")
    return ex - 2.0 * np.log(den)


# ---------------------------------------------------------------------------
# equilibrium and SEIR reduction
# ---------------------------------------------------------------------------

def _equilibrium_residual(s, alpha, beta, s0):
    return alpha / beta * (1.0 - s) + math.log(s / s0)


def sir_equilibrium(alpha: float, beta: float, s0: float) -> float:
    """Final susceptible fraction s* in (0, s0)."""
    if not (0 < s0 <= 1) or not (alpha > 0 and beta > 0):
        raise DomainError("need 0 < s0 <= 1 and positive rates")
    f = lambda s: _equilibrium_residual(s, alpha, beta, s0)
    lo, hi = 1e-12, s0
    if f(hi) <= 0:
        # no epidemic: the only admissible root is s0 itself
        return s0
    if f(lo) >= 0:
        raise DomainError("could not bracket the final-size root")
    s = brentq(f, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    for _ in range(3):  # Newton polish on f'(s) = 1/s - alpha/beta
        fp = 1.0 / s - alpha / beta
        if fp == 0:
            break
        s_new = s - f(s) / fp
        if not lo < s_new < hi or abs(f(s_new)) > abs(f(s)):
            break
        s = s_new
    return s


@dataclass(frozen=True)
class SeirReduction:
    alpha_prime: float
    beta_prime: float

    @property
    def r0(self) -> float:
        return self.alpha_prime / self.beta_prime


def seir_reduce(alpha: float, lam: float, beta: float) -> SeirReduction:
    if not (alpha > 0 and lam > 0 and beta > 0):
        raise DomainError("SEIR rates must be positive")
    w = lam / (lam + beta)
    return SeirReduction(w * alpha, w * beta)


def seir_conserved(s, s0, i0, alpha, lam, beta):
    """(e, i, p) expressed through s along the deterministic SEIR path."""
    s = np.asarray(s, dtype=float)
    if np.any(s <= 0):
        raise DomainError("s must be positive")
    w = lam / (lam + beta)
    log_ratio = np.log(s / s0)
    e = 1.0 - i0 - w * s0 - (beta / (lam + beta)) * (s - beta / alpha * log_ratio)
    i = i0 - w * (s - s0) + beta / alpha * w * log_ratio
    p = 1.0 - s + beta / alpha * log_ratio
    return e, i, p


# ---------------------------------------------------------------------------
# deterministic solutions
# ---------------------------------------------------------------------------

def substeps_for(delta: float, step: float = ODE_STEP) -> int:
    return max(1, int(math.ceil(delta / step - 1e-9)))


def ode_path(model: ModelSpec, x0, grid: TimeGrid) -> np.ndarray:
    """Deterministic states on the grid (no validation; used inside objectives)."""
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    if isinstance(model, Linear):
        t = grid.times - grid.t0
        return (model.b + (x0[0] - model.b) * np.exp(-model.a * t))[:, None]
    fam = _kernels.FAMILY_CODE[model.family]
    return _kernels.rk4_grid(fam, _params(model), x0, grid.n, grid.delta, substeps_for(grid.delta))


def ode_solve(model: ModelSpec, x0, grid: TimeGrid) -> Trajectory:
    """Solve the ODE variant: exact for the linear family, RK4 otherwise."""
    if not is_ode(model):
        raise DomainError("ode_solve expects a model with zero diffusion")
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    if x0.shape != (len(model.labels),):
        raise DomainError(f"initial state must have {len(model.labels)} components")
    states = ode_path(model, x0, grid)
    if not isinstance(model, Linear):
        low = states.min()
        excess = states.sum(axis=1).max() - max(1.0, x0.sum())
        if low < -1e-9 or excess > 1e-9 or not np.all(np.isfinite(states)):
            raise DomainError("deterministic path left the simplex; check the step size")
    return Trajectory(grid, states, model.labels)
