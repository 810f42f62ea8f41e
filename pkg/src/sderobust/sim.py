"""Euler-Maruyama trajectory generation with perturbations and measurement noise."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np

from . import _kernels
from .core import (BROWNIAN, MEASUREMENT, PERTURBATION, DomainError, Linear, MeasurementSpec,
                   ModelSpec, TimeGrid, Trajectory, model_from_dict, model_to_dict, rng_stream)

FINE_STEP = 0.01


class PrematureEpidemic(DomainError):
    """A compartment reached zero before the end of the simulation window."""


# ---------------------------------------------------------------------------
# perturbations
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NoPerturbation:
    kind = "none"

    def to_dict(self):
        return {"kind": self.kind}


@dataclass(frozen=True)
class Jump:
    """Deterministic additive shift h of the state at time t_p."""

    t_p: float
    h: tuple[float, ...]
    kind = "jump"

    def __post_init__(self):
        object.__setattr__(self, "h", tuple(float(v) for v in np.atleast_1d(self.h)))

    def to_dict(self):
        return {"kind": self.kind, "t_p": self.t_p, "h": list(self.h)}


@dataclass(frozen=True)
class RandomMean:
    """Long-term level redrawn as N(b, sigma_b^2) once per observation interval."""

    sigma_b: float
    per_step: bool = False
    kind = "random_mean"

    def __post_init__(self):
        if self.sigma_b < 0:
            raise DomainError("sigma_b must be non-negative")

    def to_dict(self):
        return {"kind": self.kind, "sigma_b": self.sigma_b, "per_step": self.per_step}


@dataclass(frozen=True)
class QuadraticDrift:
    """Drift error gamma_t (x - b)^2 with gamma_t ~ N(0, sigma_gamma^2) per interval."""

    sigma_gamma: float
    per_step: bool = False
    kind = "quadratic_drift"

    def __post_init__(self):
        if self.sigma_gamma < 0:
            raise DomainError("sigma_gamma must be non-negative")

    def to_dict(self):
        return {"kind": self.kind, "sigma_gamma": self.sigma_gamma, "per_step": self.per_step}


PerturbationSpec = NoPerturbation | Jump | RandomMean | QuadraticDrift


def perturbation_from_dict(d: Mapping[str, Any] | None) -> PerturbationSpec:
    if not d:
        return NoPerturbation()
    d = dict(d)
    kind = d.pop("kind", "none")
    table = {"none": NoPerturbation, "jump": Jump, "random_mean": RandomMean,
             "quadratic_drift": QuadraticDrift}
    if kind not in table:
        raise DomainError(f"unknown perturbation kind {kind!r}")
    return table[kind](**d)


# ---------------------------------------------------------------------------
# plans
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SimulationPlan:
    model: ModelSpec
    x0: tuple[float, ...]
    grid: TimeGrid
    fine_step: float = FINE_STEP
    perturbation: PerturbationSpec = field(default_factory=NoPerturbation)
    seed: int = 0
    replicate: int = 0

    def __post_init__(self):
        x0 = tuple(float(v) for v in np.atleast_1d(self.x0))
        if len(x0) != len(self.model.labels):
            raise DomainError(f"x0 must have {len(self.model.labels)} components")
        object.__setattr__(self, "x0", x0)
        if not 0 < self.fine_step <= self.grid.delta:
            raise DomainError("fine_step must lie in (0, delta]")
        ratio = self.grid.delta / self.fine_step
        if abs(ratio - round(ratio)) > 1e-9 * ratio:
            raise DomainError("delta must be an integer multiple of fine_step")
        p = self.perturbation
        if isinstance(p, Jump):
            if len(p.h) != len(x0):
                raise DomainError("jump vector must match the state dimension")
            if not self.grid.t0 < p.t_p <= self.grid.time_of(self.grid.n):
                raise DomainError("jump time must lie in (t0, T]")
        if isinstance(p, (RandomMean, QuadraticDrift)) and not isinstance(self.model, Linear):
            raise DomainError(f"{p.kind} perturbation applies to the linear family only")

    @property
    def substeps(self) -> int:
        return int(round(self.grid.delta / self.fine_step))

    def replace(self, **changes) -> "SimulationPlan":
        from dataclasses import replace
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return {"model": model_to_dict(self.model), "x0": list(self.x0),
                "grid": self.grid.to_dict(), "fine_step": self.fine_step,
                "perturbation": self.perturbation.to_dict(), "seed": self.seed,
                "replicate": self.replicate}

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "SimulationPlan":
        return cls(model=model_from_dict(d["model"]), x0=tuple(d["x0"]),
                   grid=TimeGrid.from_dict(d["grid"]), fine_step=d.get("fine_step", FINE_STEP),
                   perturbation=perturbation_from_dict(d.get("perturbation")),
                   seed=d.get("seed", 0), replicate=d.get("replicate", 0))


# ---------------------------------------------------------------------------
# simulation
# ---------------------------------------------------------------------------

def _brownian(plan: SimulationPlan, stream_key=()) -> np.ndarray:
    steps = plan.grid.n * plan.substeps
    rng = rng_stream(plan.seed, plan.replicate, BROWNIAN, *stream_key)
    return rng.standard_normal((steps, len(plan.x0)))


def _perturbation_arrays(plan: SimulationPlan, stream_key=()):
    steps = plan.grid.n * plan.substeps
    d = len(plan.x0)
    jump_step, jump = -1, np.zeros(d)
    level = np.zeros(steps)
    quad = np.zeros(steps)
    model, p = plan.model, plan.perturbation
    if isinstance(model, Linear):
        level[:] = model.b
    if isinstance(p, Jump):
        jump_step = max(1, int(math.ceil((p.t_p - plan.grid.t0) / plan.fine_step - 1e-9)))
        jump = np.array(p.h)
    elif isinstance(p, (RandomMean, QuadraticDrift)):
        rng = rng_stream(plan.seed, plan.replicate, PERTURBATION, *stream_key)
        count = steps if p.per_step else plan.grid.n
        scale = p.sigma_b if isinstance(p, RandomMean) else p.sigma_gamma
        draws = rng.standard_normal(count) * scale
        if not p.per_step:
            draws = np.repeat(draws, plan.substeps)
        if isinstance(p, RandomMean):
            level = model.b + draws
        else:
            quad = draws
    return jump_step, jump, level, quad


def simulate(plan: SimulationPlan, stream_key=()) -> Trajectory:
    """Fine-step Euler-Maruyama, subsampled onto the observation grid.

    `stream_key` selects an independent noise stream for the same seed and
    replicate; the harness uses it to restart premature epidemics.
    """
    model = plan.model
    z = _brownian(plan, stream_key)
    jump_step, jump, level, quad = _perturbation_arrays(plan, stream_key)
    fam = _kernels.FAMILY_CODE[model.family]
    params = np.array(list(model.theta.values()), dtype=float)
    if isinstance(plan.perturbation, Jump) and not isinstance(model, Linear) and sum(jump) > 0:
        _check_jump_on_ode_path(plan)
    states, premature = _kernels.em_path(
        fam, params, model.diffusion, np.array(plan.x0), plan.grid.n, plan.substeps,
        plan.fine_step, z, jump_step, jump, level, quad)
    if premature:
        raise PrematureEpidemic("a compartment reached zero before the end of the window")
    if not np.all(np.isfinite(states)):
        raise DomainError("simulation diverged")
    return Trajectory(plan.grid, states, model.labels)


def _check_jump_on_ode_path(plan: SimulationPlan):
    from .core import as_ode
    from .models import ode_path
    p = plan.perturbation
    k = plan.grid.first_index_at_or_after(p.t_p)
    x = ode_path(as_ode(plan.model), plan.x0, plan.grid)[k]
    if x.sum() + sum(p.h) > 1.0:
        raise DomainError("jump pushes the epidemic state outside s + i <= 1")


def with_common_noise(plan_a: SimulationPlan, plan_b: SimulationPlan, stream_key=()):
    """Simulate two plans on the same Brownian increments."""
    if plan_a.grid != plan_b.grid or plan_a.fine_step != plan_b.fine_step:
        raise DomainError("paired plans must share the grid and fine step")
    if (plan_a.seed, plan_a.replicate) != (plan_b.seed, plan_b.replicate):
        raise DomainError("paired plans must share the seed")
    return simulate(plan_a, stream_key), simulate(plan_b, stream_key)


def add_measurement_noise(traj: Trajectory, meas: MeasurementSpec, seed=0, replicate=0,
                          stream_key=()) -> Trajectory:
    """Add iid Gaussian noise to the observed components; drop the others."""
    comps = list(meas.observed_components)
    if max(comps) >= traj.d:
        raise DomainError("observed component index exceeds the state dimension")
    if isinstance(seed, np.random.Generator):
        rng = seed
    else:
        rng = rng_stream(seed, replicate, MEASUREMENT, *stream_key)
    sd = np.sqrt(np.array(meas.covariance))
    noise = rng.standard_normal((traj.grid.n + 1, len(comps))) * sd
    states = traj.states[:, comps] + noise
    return Trajectory(traj.grid, states, tuple(traj.labels[c] for c in comps))
