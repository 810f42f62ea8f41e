"""Estimators: ODE least squares, OU MLE, Strang splitting and UKF pseudo-likelihoods."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np
from numba import njit
from scipy import optimize

from . import _kernels
from .core import (OPTIMIZER, DomainError, EstimateReport, ModelSpec, Trajectory,
                   model_from_theta, rng_stream)
from .models import ode_path, sir_split, substeps_for

PENALTY = 1e10

PARAM_NAMES = {"linear": ("a", "b"), "sir": ("alpha", "beta"),
               "seir": ("alpha", "lambda", "beta")}
RATE_BOUNDS = (1e-3, 5.0)


# ---------------------------------------------------------------------------
# optimizer plumbing
# ---------------------------------------------------------------------------

@dataclass
class OptimizerConfig:
    max_evals: int = 4000
    gradient_tol: float = 1e-10
    param_bounds: dict[str, tuple[float, float]] | None = None
    starts: int = 5
    start_sampling: str = "bounds-uniform"
    method: str = "L-BFGS-B"
    seed: int = 0

    def __post_init__(self):
        if self.starts < 1:
            raise DomainError("starts must be >= 1")
        for name, (lo, hi) in (self.param_bounds or {}).items():
            if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
                raise DomainError(f"invalid bounds for {name}: {(lo, hi)}")

    def bounds_for(self, names: Sequence[str], defaults: dict) -> list[tuple[float, float]]:
        user = self.param_bounds or {}
        return [tuple(user.get(n, defaults[n])) for n in names]


@dataclass
class MinimizeResult:
    x: np.ndarray
    value: float
    converged: bool
    evaluations: int
    message: str = ""


class _Transform:
    """Log-transform for parameters with a non-negative lower bound."""

    def __init__(self, bounds):
        self.bounds = np.array(bounds, dtype=float)
        self.log = self.bounds[:, 0] >= 0

    def to_free(self, x):
        x = np.array(x, dtype=float)
        x[self.log] = np.log(x[self.log])
        return x

    def to_model(self, u):
        x = np.array(u, dtype=float)
        x[self.log] = np.exp(x[self.log])
        return x

    def free_bounds(self):
        lo, hi = self.bounds[:, 0].copy(), self.bounds[:, 1].copy()
        with np.errstate(divide="ignore"):
            lo[self.log] = np.where(lo[self.log] > 0, np.log(lo[self.log]), -np.inf)
            hi[self.log] = np.log(hi[self.log])
        return list(zip(np.where(np.isinf(lo), None, lo), hi))


def minimize(objective: Callable, x0, bounds, cfg: OptimizerConfig | None = None) -> MinimizeResult:
    """Bounded local minimisation; positive parameters are optimised on the log scale."""
    cfg = cfg or OptimizerConfig()
    tr = _Transform(bounds)
    x0 = np.clip(np.asarray(x0, dtype=float), tr.bounds[:, 0], tr.bounds[:, 1])
    if np.any(tr.log & (x0 <= 0)):
        raise DomainError("log-scaled parameters need a positive starting value")
    f0 = objective(x0)
    if not np.isfinite(f0):
        raise DomainError("objective is not finite at the starting point")
    count = [0]

    def free_obj(u):
        count[0] += 1
        v = objective(tr.to_model(u))
        return v if np.isfinite(v) else PENALTY

    method = cfg.method
    opts = {"maxfun": cfg.max_evals, "gtol": cfg.gradient_tol, "ftol": 1e-15}
    if method.upper() == "BFGS":
        opts = {"maxiter": cfg.max_evals, "gtol": cfg.gradient_tol}
        res = optimize.minimize(free_obj, tr.to_free(x0), method="BFGS", options=opts)
        u = np.clip(res.x, *np.array([[b[0] if b[0] is not None else -np.inf for b in tr.free_bounds()],
                                      [b[1] for b in tr.free_bounds()]]))
        x = tr.to_model(u)
        return MinimizeResult(x, float(objective(x)), bool(res.success), count[0], str(res.message))
    if method.lower() in ("nelder-mead", "nm"):
        method = "Nelder-Mead"
        opts = {"maxfev": cfg.max_evals, "xatol": 1e-10, "fatol": cfg.gradient_tol}
    res = optimize.minimize(free_obj, tr.to_free(x0), method=method,
                            bounds=tr.free_bounds(), options=opts)
    x = tr.to_model(res.x)
    return MinimizeResult(x, float(res.fun), bool(res.success), count[0], str(res.message))


def sample_starts(bounds, count: int, seed: int) -> np.ndarray:
    """Uniform draws inside the bounds, on the log scale for positive parameters."""
    tr = _Transform(bounds)
    lo, hi = tr.bounds[:, 0].copy(), tr.bounds[:, 1].copy()
    pos = tr.log & (lo > 0)
    lo[pos], hi[pos] = np.log(lo[pos]), np.log(hi[pos])
    u = rng_stream(seed, OPTIMIZER).uniform(lo, hi, size=(count, len(lo)))
    u[:, pos] = np.exp(u[:, pos])
    return u


def as_initial(initial, names: Sequence[str]):
    """Normalise a warm start: a name -> value map, one vector, or a list of vectors.

    Entries missing from a map are left to the random starts (returns None).
    """
    if initial is None:
        return None
    if isinstance(initial, Mapping):
        if not all(n in initial for n in names):
            return None
        return np.array([[float(initial[n]) for n in names]])
    arr = np.atleast_2d(np.asarray(initial, dtype=float))
    if arr.shape[1] != len(names):
        raise DomainError(f"initial points need {len(names)} entries ({', '.join(names)})")
    return arr


def multistart(objective: Callable, bounds, cfg: OptimizerConfig, initial=None,
               local: Callable | None = None):
    """Run local searches from `initial` plus random starts; best by (value, index)."""
    local = local or (lambda x0: minimize(objective, x0, bounds, cfg))
    starts = [] if initial is None else [np.asarray(x, dtype=float) for x in np.atleast_2d(initial)]
    extra = cfg.starts - len(starts)
    if extra > 0:
        starts += list(sample_starts(bounds, extra, cfg.seed))
    runs, diags = [], []
    for idx, x0 in enumerate(starts):
        try:
            r = local(x0)
        except DomainError as exc:
            diags.append({"start": idx, "x0": list(map(float, x0)), "error": str(exc)})
            continue
        runs.append((r.value if np.isfinite(r.value) else np.inf, idx, r))
        diags.append({"start": idx, "x0": list(map(float, x0)), "x": list(map(float, r.x)),
                      "value": float(r.value), "converged": r.converged,
                      "evaluations": r.evaluations})
    if not runs:
        return None, diags
    runs.sort(key=lambda t: (t[0], t[1]))
    return runs[0][2], diags


def _report(names, best, diags, starts, noise, message=""):
    if best is None:
        raise DomainError("all optimizer starts failed")
    theta = {n: float(v) for n, v in zip(names, best.x)}
    evals = sum(d.get("evaluations", 0) for d in diags)
    return EstimateReport(theta_hat=theta, noise_hat=noise, objective=float(best.value),
                          converged=best.converged, evaluations=evals, starts=starts,
                          message=message or ("" if best.converged else best.message),
                          diagnostics=diags)


# ---------------------------------------------------------------------------
# ODE least squares
# ---------------------------------------------------------------------------

def _default_theta_bounds(family: str, y: np.ndarray):
    if family == "linear":
        span = max(float(np.ptp(y)), 1e-6)
        return {"a": RATE_BOUNDS, "b": (float(y.min()) - 2 * span, float(y.max()) + 2 * span)}
    return {n: RATE_BOUNDS for n in PARAM_NAMES[family]}


def _component_index(model_labels, obs: Trajectory):
    try:
        return [model_labels.index(lbl) for lbl in obs.labels]
    except ValueError:
        raise DomainError(f"observation labels {obs.labels} do not match model {model_labels}") from None


def lse_residuals(theta, family, obs: Trajectory, x0, mask=None) -> np.ndarray:
    model = model_from_theta(family, dict(zip(PARAM_NAMES[family], theta)))
    comps = _component_index(model.labels, obs)
    path = ode_path(model, x0, obs.grid)[:, comps]
    r = obs.states - path
    if mask is not None:
        r = r[mask]
    return r.ravel()


def fit_ode_lse(obs: Trajectory, family: str, x0, cfg: OptimizerConfig | None = None,
                mask=None, initial=None) -> EstimateReport:
    """Nonlinear least squares of the ODE solution from a known initial state.

    Only the components present in `obs` (matched by label) enter the sum of
    squares; rows with mask False are ignored.
    """
    cfg = cfg or OptimizerConfig()
    names = PARAM_NAMES[family]
    y = obs.states if mask is None else obs.states[mask]
    p = len(names)
    if y.shape[0] <= p:
        raise DomainError(f"need more than {p} observations for {p} parameters")
    bounds = cfg.bounds_for(names, _default_theta_bounds(family, y))
    tr = _Transform(bounds)
    fb = tr.free_bounds()
    lo = np.array([-np.inf if b[0] is None else b[0] for b in fb])
    hi = np.array([b[1] for b in fb])
    x0 = np.asarray(x0, dtype=float)

    def resid(u):
        r = lse_residuals(tr.to_model(u), family, obs, x0, mask)
        return np.where(np.isfinite(r), r, 1e3)

    def local(start):
        u0 = np.clip(tr.to_free(start), lo + 1e-12, hi - 1e-12)
        res = optimize.least_squares(resid, u0, bounds=(lo, hi), method="trf", x_scale="jac",
                                     ftol=1e-15, xtol=1e-15, gtol=cfg.gradient_tol,
                                     max_nfev=cfg.max_evals)
        x = tr.to_model(res.x)
        return MinimizeResult(x, float(2 * res.cost), res.status > 0, int(res.nfev), res.message)

    best, diags = multistart(None, bounds, cfg, initial=as_initial(initial, names), local=local)
    noise = {}
    if best is not None:
        r = lse_residuals(best.x, family, obs, x0, mask).reshape(-1, obs.d)
        for j, lbl in enumerate(obs.labels):
            noise[f"gamma2_{lbl}"] = float(np.sum(r[:, j] ** 2) / (r.shape[0] - p))
    return _report(names, best, diags, cfg.starts, noise)


# ---------------------------------------------------------------------------
# OU maximum likelihood
# ---------------------------------------------------------------------------

@dataclass
class OuMle:
    a_hat: float | None
    b_hat: float
    rho_hat: float
    sigma2_hat: float | None
    sigma2_hat_exact: float | None = None
    iterations: int = 0
    message: str = ""

    def to_report(self) -> EstimateReport:
        ok = self.a_hat is not None
        theta = {"a": self.a_hat if ok else 0.0, "b": self.b_hat, "rho": self.rho_hat}
        noise = {"sigma2": self.sigma2_hat} if ok else {}
        return EstimateReport(theta, noise, float("nan"), ok, self.iterations, 1,
                              self.message or ("" if ok else "rho_hat <= 0: a_hat undefined"))


def _rho_given_b(y, b):
    u = y - b
    den = np.dot(u[:-1], u[:-1])
    if den <= 0:
        raise DomainError("degenerate data: sum of squared deviations is zero")
    return np.dot(u[1:], u[:-1]) / den


def fit_ou_mle(obs: Trajectory | np.ndarray, delta: float | None = None, tol=1e-12,
               max_iter=200) -> OuMle:
    """Closed-form OU MLE solved by fixed-point iteration between b-hat and rho-hat."""
    if isinstance(obs, Trajectory):
        y = obs.states[:, 0]
        delta = obs.grid.delta if delta is None else delta
    else:
        y = np.asarray(obs, dtype=float).ravel()
    n = len(y) - 1
    if n < 2:
        raise DomainError("need at least three observations")
    if delta is None or not delta > 0:
        raise DomainError("delta must be positive")
    if np.ptp(y) == 0:
        raise DomainError("constant data: rho-hat is undefined")
    mean1 = y[1:].mean()
    b = mean1
    it = 0
    for it in range(1, max_iter + 1):
        rho = _rho_given_b(y, b)
        b_new = mean1 + rho / (n * (1.0 - rho)) * (y[-1] - y[0])
        done = abs(b_new - b) < tol * max(1.0, abs(b))
        b = b_new
        if done:
            break
    else:
        b = _ou_regression(y)[1]
    rho = _rho_given_b(y, b)
    msg = "" if it < max_iter else "fixed-point iteration hit the cap; used the regression solution"
    if rho <= 0:
        return OuMle(None, b, rho, None, None, it, "rho_hat <= 0: a_hat undefined")
    a = -math.log(rho) / delta
    res = y[1:] - y[:-1] * rho - b * (1.0 - rho)
    ss = float(np.dot(res, res))
    sigma2 = 2.0 * a * ss / (n * (1.0 - rho))
    sigma2_exact = 2.0 * a * ss / (n * (1.0 - rho**2))
    return OuMle(a, b, rho, sigma2, sigma2_exact, it, msg)


def _ou_regression(y):
    """Least-squares regression of y_k on y_{k-1}; the same fixed point in closed form."""
    x0, x1 = y[:-1], y[1:]
    c0, c1 = x0 - x0.mean(), x1 - x1.mean()
    rho = np.dot(c1, c0) / np.dot(c0, c0)
    return rho, (x1.mean() - rho * x0.mean()) / (1.0 - rho)


def fit_ou_mle_fixed_b(obs: Trajectory | np.ndarray, b: float, delta: float) -> float:
    """rho-hat with the long-term level held at a known value."""
    y = obs.states[:, 0] if isinstance(obs, Trajectory) else np.asarray(obs, dtype=float)
    return float(_rho_given_b(y, b))


# ---------------------------------------------------------------------------
# Strang splitting pseudo-likelihood for the stochastic SIR model
# ---------------------------------------------------------------------------

@njit(cache=True)
def _flow(s, i, alpha, h):
    k = 1.0 - s - i
    x = alpha * h * k
    if abs(k) < 1e-12:
        g = alpha * h * (1.0 + 0.5 * x)
    else:
        g = math.expm1(x) / k
    den = 1.0 - s * g
    if den <= 0.0 or s <= 0.0:
        return 0.0, 0.0, 0.0, False
    s_new = s * math.exp(x) / den
    return s_new, s + i - s_new, x - 2.0 * math.log(den), True


@njit(cache=True)
def _strang_kernel(x, alpha, E, Oinv, logdet_omega, half):
    n = x.shape[0] - 1
    quad = 0.0
    jac = 0.0
    for k in range(1, n + 1):
        sf, if_, _, ok1 = _flow(x[k - 1, 0], x[k - 1, 1], alpha, half)
        sb, ib, ld, ok2 = _flow(x[k, 0], x[k, 1], alpha, -half)
        if not (ok1 and ok2):
            return np.inf
        z0 = sb - E[0, 0] * sf
        z1 = ib - E[1, 0] * sf - E[1, 1] * if_
        quad += Oinv[0, 0] * z0 * z0 + 2.0 * Oinv[0, 1] * z0 * z1 + Oinv[1, 1] * z1 * z1
        jac += ld
    return 0.5 * n * logdet_omega + 0.5 * quad - jac


def strang_negloglik(alpha, beta, sigma1, sigma2, obs: Trajectory | np.ndarray,
                     delta: float | None = None) -> float:
    """Strang splitting pseudo negative log-likelihood of fully observed (s, i) data.

    Returns PENALTY when a state lies outside the domain of the nonlinear flow.
    """
    x = obs.states if isinstance(obs, Trajectory) else np.asarray(obs, dtype=float)
    if delta is None:
        delta = obs.grid.delta
    split = sir_split(alpha, beta, sigma1, sigma2, delta)
    om = split.omega
    det = om[0, 0] * om[1, 1] - om[0, 1] ** 2
    if not det > 0:
        raise DomainError("Omega is not invertible")
    oinv = np.array([[om[1, 1], -om[0, 1]], [-om[0, 1], om[0, 0]]]) / det
    val = _strang_kernel(np.ascontiguousarray(x, dtype=float), alpha, split.expm, oinv,
                         math.log(det), 0.5 * delta)
    return val if np.isfinite(val) else PENALTY


def _safe(fn):
    def wrapped(*args, **kw):
        try:
            return fn(*args, **kw)
        except DomainError:
            return PENALTY
    return wrapped


def fit_sir_strang(obs: Trajectory, cfg: OptimizerConfig | None = None, initial=None) -> EstimateReport:
    """Multi-start minimisation of the Strang pseudo-likelihood over (alpha, beta, sigma1, sigma2)."""
    cfg = cfg or OptimizerConfig()
    if obs.d != 2:
        raise DomainError("Strang fitting needs both s and i observed")
    names = ("alpha", "beta", "sigma1", "sigma2")
    scale = float(np.max(np.abs(np.diff(obs.states, axis=0)))) / math.sqrt(obs.grid.delta)
    scale = max(scale, 1e-8)
    defaults = {"alpha": RATE_BOUNDS, "beta": RATE_BOUNDS,
                "sigma1": (1e-4 * scale, 10 * scale), "sigma2": (1e-4 * scale, 10 * scale)}
    bounds = cfg.bounds_for(names, defaults)
    x = np.ascontiguousarray(obs.states)
    obj = _safe(lambda th: strang_negloglik(th[0], th[1], th[2], th[3], x, obs.grid.delta))
    best, diags = multistart(obj, bounds, cfg, initial=as_initial(initial, names))
    report = _report(names[:2], best, diags, cfg.starts, {})
    report.noise_hat = {"sigma1": float(best.x[2]), "sigma2": float(best.x[3])}
    return report


# ---------------------------------------------------------------------------
# unscented Kalman filter pseudo-likelihood
# ---------------------------------------------------------------------------

UT_SPREAD, UT_SECONDARY, UT_TERTIARY = 1e-3, 2.0, 0.0
JITTER_START, JITTER_MAX = 1e-12, 1e-6


@njit(cache=True)
def _chol(A, out):
    """Cholesky of a small SPD matrix; returns False if not positive definite."""
    d = A.shape[0]
    for i in range(d):
        for j in range(d):
            out[i, j] = 0.0
    for j in range(d):
        s = A[j, j]
        for k in range(j):
            s -= out[j, k] * out[j, k]
        if not s > 0.0:
            return False
        out[j, j] = math.sqrt(s)
        for i in range(j + 1, d):
            t = A[i, j]
            for k in range(j):
                t -= out[i, k] * out[j, k]
            out[i, j] = t / out[j, j]
    return True


@njit(cache=True)
def _chol_jitter(A, out, work):
    d = A.shape[0]
    if _chol(A, out):
        return True
    scale = 0.0
    for i in range(d):
        scale = max(scale, abs(A[i, i]))
    if not scale > 0.0:
        return False
    # jitter relative to the largest variance, from JITTER_START up to JITTER_MAX
    eps = JITTER_START
    while eps <= JITTER_MAX * (1 + 1e-9):
        for i in range(d):
            for j in range(d):
                work[i, j] = A[i, j]
            work[i, i] += eps * scale
        if _chol(work, out):
            return True
        eps *= 10.0
    return False


@njit(cache=True)
def _ukf_kernel(fam, p, sig, y, mask, obs_idx, R, x0, P0, delta, substeps, ut_a, ut_b, ut_k):
    d = x0.shape[0]
    q = obs_idx.shape[0]
    n = y.shape[0] - 1
    lam = ut_a * ut_a * (d + ut_k) - d
    c = math.sqrt(d + lam)
    npts = 2 * d + 1
    wm = np.full(npts, 0.5 / (d + lam))
    wm[0] = lam / (d + lam)
    m = x0.copy()
    P = P0.copy()
    L = np.empty((d, d)); work = np.empty((d, d))
    X = np.empty((npts, d)); f = np.empty(d); xt = np.empty(d)
    dx = np.empty(d); df = np.empty(d); dm = np.empty(d)
    S = np.empty((q, q)); Ls = np.empty((q, q)); works = np.empty((q, q))
    dt = delta / substeps
    nll = 0.0
    for k in range(1, n + 1):
        # predict
        if not _chol_jitter(P, L, work):
            # zero or tiny covariance: points collapse onto the mean
            for i in range(d):
                for j in range(d):
                    L[i, j] = 0.0
            diag_ok = True
            for i in range(d):
                if P[i, i] < -1e-6:
                    diag_ok = False
            if not diag_ok:
                return np.inf
        # sigma points are carried as offsets from the centre point; with a
        # small spread the points sit very close together, and propagating
        # the offsets through exact drift differences avoids cancellation
        for j in range(d):
            xt[j] = m[j]
            X[0, j] = 0.0
        for a in range(d):
            for j in range(d):
                X[1 + a, j] = c * L[j, a]
                X[1 + d + a, j] = -c * L[j, a]
        for _ in range(substeps):
            _kernels.drift_into(fam, p, xt, f)
            for pt in range(1, npts):
                for j in range(d):
                    dx[j] = X[pt, j]
                _kernels.drift_diff_into(fam, p, xt, dx, df)
                for j in range(d):
                    X[pt, j] += df[j] * dt
            for j in range(d):
                xt[j] += f[j] * dt
        for j in range(d):
            s = 0.0
            for a in range(d):
                s += X[1 + a, j] + X[1 + d + a, j]
            dm[j] = wm[1] * s
            m[j] = xt[j] + dm[j]
        # sum_pt wc (X - m)(X - m)^T rewritten with the centre offset at zero
        for i in range(d):
            for j in range(i, d):
                s = 0.0
                for pt in range(1, npts):
                    s += X[pt, i] * X[pt, j]
                s = wm[1] * s + (ut_b - ut_a * ut_a) * dm[i] * dm[j]
                P[i, j] = s
                P[j, i] = s
            P[i, i] += sig[i] * sig[i] * delta
        if not mask[k]:
            continue
        # update on the observed components
        for a in range(q):
            for b in range(q):
                S[a, b] = P[obs_idx[a], obs_idx[b]]
            S[a, a] += R[a]
        if not _chol_jitter(S, Ls, works):
            return np.inf
        v = np.empty(q)
        for a in range(q):
            v[a] = y[k, a] - m[obs_idx[a]]
        # solve S^{-1} v via the Cholesky factor
        w = np.empty(q)
        for a in range(q):
            t = v[a]
            for b in range(a):
                t -= Ls[a, b] * w[b]
            w[a] = t / Ls[a, a]
        logdet = 0.0
        quad = 0.0
        for a in range(q):
            logdet += 2.0 * math.log(Ls[a, a])
            quad += w[a] * w[a]
        nll += 0.5 * (q * math.log(2.0 * math.pi) + logdet + quad)
        # gain K = P H^T S^{-1}
        Sinv = np.zeros((q, q))
        for col in range(q):
            e = np.zeros(q)
            e[col] = 1.0
            z = np.empty(q)
            for a in range(q):
                t = e[a]
                for b in range(a):
                    t -= Ls[a, b] * z[b]
                z[a] = t / Ls[a, a]
            for a in range(q - 1, -1, -1):
                t = z[a]
                for b in range(a + 1, q):
                    t -= Ls[b, a] * Sinv[b, col]
                Sinv[a, col] = t / Ls[a, a]
        K = np.zeros((d, q))
        for i in range(d):
            for a in range(q):
                s = 0.0
                for b in range(q):
                    s += P[i, obs_idx[b]] * Sinv[b, a]
                K[i, a] = s
        PHt = np.empty((d, q))
        for i in range(d):
            for a in range(q):
                PHt[i, a] = P[i, obs_idx[a]]
        for i in range(d):
            s = 0.0
            for a in range(q):
                s += K[i, a] * v[a]
            m[i] += s
        for i in range(d):
            for j in range(d):
                s = 0.0
                for a in range(q):
                    s += K[i, a] * PHt[j, a]
                work[i, j] = P[i, j] - s
        for i in range(d):
            for j in range(d):
                P[i, j] = 0.5 * (work[i, j] + work[j, i])
    return nll


def ukf_negloglik(params: dict | ModelSpec, obs: Trajectory, family: str | None = None,
                  meas_var=None, x0_mean=None, x0_cov=None, mask=None, substeps: int = 4,
                  model_labels: Sequence[str] | None = None) -> float:
    """Negative log innovation likelihood of a UKF over the Euler-discretised SDE.

    `params` is either a model spec (with its diffusion) or a dict holding the
    drift parameters plus sigma/sigma1.. entries. Observed components are
    matched to model components by label.
    """
    model = params if not isinstance(params, dict) else _model_from_flat(family, params)
    comps = np.array(_component_index(model.labels if model_labels is None else tuple(model_labels), obs))
    q = len(comps)
    R = np.broadcast_to(np.asarray(meas_var, dtype=float), (q,)).copy()
    if np.any(R < 0):
        raise DomainError("measurement variance must be non-negative")
    d = len(model.labels)
    m0 = np.asarray(x0_mean, dtype=float)
    P0 = np.zeros((d, d)) if x0_cov is None else np.asarray(x0_cov, dtype=float).reshape(d, d)
    msk = np.ones(obs.grid.n + 1, dtype=np.bool_) if mask is None else np.asarray(mask, dtype=np.bool_)
    fam = _kernels.FAMILY_CODE[model.family]
    p = np.array(list(model.theta.values()), dtype=float)
    val = _ukf_kernel(fam, p, model.diffusion, np.ascontiguousarray(obs.states), msk, comps, R, m0,
                      P0, obs.grid.delta, int(substeps), UT_SPREAD, UT_SECONDARY, UT_TERTIARY)
    if not np.isfinite(val):
        raise DomainError("innovation covariance singular even after jitter")
    return float(val)


def _model_from_flat(family: str, params: dict) -> ModelSpec:
    theta = {n: params[n] for n in PARAM_NAMES[family]}
    if family == "linear":
        return model_from_theta(family, theta, sigma=params.get("sigma", 0.0))
    keys = ("sigma1", "sigma2") if family == "sir" else ("sigma1", "sigma2", "sigma3")
    return model_from_theta(family, theta, **{k: params.get(k, 0.0) for k in keys})


def fit_partial_ukf(obs: Trajectory, family: str, x0_mean, cfg: OptimizerConfig | None = None,
                    mask=None, initial=None, tie_seir_diffusion: bool = True,
                    substeps: int = 4) -> EstimateReport:
    """Multi-start fit of drift parameters, diffusion and measurement variance with the UKF."""
    cfg = cfg or OptimizerConfig()
    theta_names = PARAM_NAMES[family]
    if family == "linear":
        sig_names = ("sigma",)
    elif family == "sir":
        sig_names = ("sigma1", "sigma2")
    else:
        sig_names = ("sigma1", "sigma23") if tie_seir_diffusion else ("sigma1", "sigma2", "sigma3")
    var_names = tuple(f"meas_var_{lbl}" for lbl in obs.labels)
    names = theta_names + sig_names + var_names
    y = obs.states if mask is None else obs.states[np.asarray(mask, dtype=bool)]
    scale = max(float(np.max(np.abs(y))), 1e-12)
    defaults = _default_theta_bounds(family, y)
    defaults.update({n: (1e-6 * scale, scale) for n in sig_names})
    defaults.update({n: ((1e-5 * scale) ** 2, scale**2) for n in var_names})
    bounds = cfg.bounds_for(names, defaults)
    nt, ns = len(theta_names), len(sig_names)

    def unpack(v):
        flat = dict(zip(theta_names, v[:nt]))
        sig = list(v[nt:nt + ns])
        if family == "seir" and tie_seir_diffusion:
            sig = [sig[0], sig[1], sig[1]]
        keys = ("sigma",) if family == "linear" else ("sigma1", "sigma2", "sigma3")[:len(sig)]
        flat.update(dict(zip(keys, sig)))
        return flat, v[nt + ns:]

    def obj(v):
        flat, R = unpack(v)
        return ukf_negloglik(flat, obs, family, R, x0_mean, mask=mask, substeps=substeps)

    best, diags = multistart(_safe(obj), bounds, cfg, initial=as_initial(initial, names))
    report = _report(theta_names, best, diags, cfg.starts, {})
    report.noise_hat = {n: float(v) for n, v in zip(sig_names + var_names, best.x[nt:])}
    return report


def initial_from_report(report: EstimateReport, names: Sequence[str]) -> np.ndarray:
    vals = {**report.theta_hat, **report.noise_hat}
    return np.array([vals[n] for n in names], dtype=float)


ESTIMATORS = ("ode_lse", "ou_mle", "sir_strang", "partial_ukf")


def fit_trajectory(tag: str, obs: Trajectory, family: str, x0=None,
                   cfg: OptimizerConfig | None = None, initial=None) -> EstimateReport:
    """Run the estimator named by `tag` on one data set."""
    if tag == "ou_mle":
        if family != "linear":
            raise DomainError("ou_mle fits the linear family only")
        return fit_ou_mle(obs).to_report()
    if tag == "sir_strang":
        if family != "sir":
            raise DomainError("sir_strang fits the SIR family only")
        return fit_sir_strang(obs, cfg, initial=initial)
    if tag not in ("ode_lse", "partial_ukf"):
        raise DomainError(f"unknown estimator {tag!r}; choose from {', '.join(ESTIMATORS)}")
    if x0 is None:
        raise DomainError(f"{tag} needs the initial state x0")
    fit = fit_ode_lse if tag == "ode_lse" else fit_partial_ukf
    return fit(obs, family, x0, cfg, initial=initial)
