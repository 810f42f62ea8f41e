"""Compiled inner loops: drifts, RK4, Euler-Maruyama.

Families are coded as integers so one kernel serves all of them:
0 = linear (a, b), 1 = SIR (alpha, beta), 2 = SEIR (alpha, lambda, beta).
"""
import numpy as np
from numba import njit

LINEAR, SIR, SEIR = 0, 1, 2
FAMILY_CODE = {"linear": LINEAR, "sir": SIR, "seir": SEIR}


@njit(cache=True)
def drift_into(fam, p, x, out):
    if fam == LINEAR:
        out[0] = -p[0] * (x[0] - p[1])
    elif fam == SIR:
        inc = p[0] * x[0] * x[1]
        out[0] = -inc
        out[1] = inc - p[1] * x[1]
    else:
        inc = p[0] * x[0] * x[2]
        out[0] = -inc
        out[1] = inc - p[1] * x[1]
        out[2] = p[1] * x[1] - p[2] * x[2]


@njit(cache=True)
def drift_diff_into(fam, p, x, dx, out):
    """f(x + dx) - f(x), expanded so that small offsets keep full precision."""
    if fam == LINEAR:
        out[0] = -p[0] * dx[0]
    elif fam == SIR:
        dinc = p[0] * (x[0] * dx[1] + dx[0] * x[1] + dx[0] * dx[1])
        out[0] = -dinc
        out[1] = dinc - p[1] * dx[1]
    else:
        dinc = p[0] * (x[0] * dx[2] + dx[0] * x[2] + dx[0] * dx[2])
        out[0] = -dinc
        out[1] = dinc - p[1] * dx[1]
        out[2] = p[1] * dx[1] - p[2] * dx[2]


@njit(cache=True)
def rk4_step(fam, p, x, h, k1, k2, k3, k4, tmp):
    d = x.shape[0]
    drift_into(fam, p, x, k1)
    for j in range(d):
        tmp[j] = x[j] + 0.5 * h * k1[j]
    drift_into(fam, p, tmp, k2)
    for j in range(d):
        tmp[j] = x[j] + 0.5 * h * k2[j]
    drift_into(fam, p, tmp, k3)
    for j in range(d):
        tmp[j] = x[j] + h * k3[j]
    drift_into(fam, p, tmp, k4)
    for j in range(d):
        x[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j])


@njit(cache=True)
def rk4_grid(fam, p, x0, n, delta, substeps):
    """RK4 with `substeps` equal steps per observation interval."""
    d = x0.shape[0]
    out = np.empty((n + 1, d))
    x = x0.copy()
    k1 = np.empty(d); k2 = np.empty(d); k3 = np.empty(d); k4 = np.empty(d); tmp = np.empty(d)
    h = delta / substeps
    out[0] = x
    for k in range(n):
        for _ in range(substeps):
            rk4_step(fam, p, x, h, k1, k2, k3, k4, tmp)
        out[k + 1] = x
    return out


@njit(cache=True)
def em_path(fam, p, sig, x0, n, substeps, dt, z, jump_step, jump, level, quad):
    """Euler-Maruyama on the fine grid, sampled every `substeps` steps.

    z: standard normals, shape (n*substeps, d).
    jump_step: fine index at which `jump` is added (-1 for none).
    level, quad: linear family only, per fine step long-term mean and
    quadratic-drift coefficient (level[j] replaces b, quad[j]*(x-b)^2 is added).
    Returns (states, premature) where premature flags a compartment <= 0.
    """
    d = x0.shape[0]
    out = np.empty((n + 1, d))
    x = x0.copy()
    f = np.empty(d)
    sq = np.sqrt(dt)
    out[0] = x
    premature = False
    j = 0
    for k in range(n):
        for _ in range(substeps):
            if fam == LINEAR:
                dev = x[0] - p[1]
                f[0] = -p[0] * (x[0] - level[j]) + quad[j] * dev * dev
            else:
                drift_into(fam, p, x, f)
            for c in range(d):
                x[c] += f[c] * dt + sig[c] * sq * z[j, c]
            j += 1
            if j == jump_step:
                for c in range(d):
                    x[c] += jump[c]
            if fam != LINEAR and not premature:
                for c in range(d):
                    if x[c] <= 0.0:
                        premature = True
        out[k + 1] = x
    return out, premature
