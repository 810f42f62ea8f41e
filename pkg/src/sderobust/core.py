"""Shared data types, time grids, RNG streams and serialization."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np


class DomainError(ValueError):
    """Raised when inputs are outside the domain of an operation."""


# ---------------------------------------------------------------------------
# time grid and trajectories
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TimeGrid:
    """Equidistant grid t_k = t0 + k*delta, k = 0..n."""

    t0: float
    delta: float
    n: int

    def __post_init__(self):
        if not (self.delta > 0 and math.isfinite(self.delta)):
            raise DomainError(f"delta must be positive, got {self.delta}")
        if int(self.n) != self.n or self.n < 1:
            raise DomainError(f"n must be an integer >= 1, got {self.n}")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "t0", float(self.t0))
        object.__setattr__(self, "delta", float(self.delta))

    @classmethod
    def from_horizon(cls, T: float, delta: float, t0: float = 0.0) -> "TimeGrid":
        n = T / delta
        if abs(n - round(n)) > 1e-9 * max(1.0, n):
            raise DomainError(f"T={T} is not a multiple of delta={delta}")
        return cls(t0, delta, int(round(n)))

    @property
    def T(self) -> float:
        return self.n * self.delta

    @property
    def times(self) -> np.ndarray:
        # never accumulate: t0 + k*delta
        return self.t0 + np.arange(self.n + 1) * self.delta

    def time_of(self, k: int) -> float:
        return self.t0 + k * self.delta

    def index_of(self, t: float) -> int:
        k = round((t - self.t0) / self.delta)
        if abs(self.time_of(k) - t) > 1e-9 * max(1.0, abs(t)) or not 0 <= k <= self.n:
            raise DomainError(f"time {t} is not on the grid")
        return int(k)

    def first_index_at_or_after(self, t: float) -> int:
        """Smallest k with t <= t_k (with a small tolerance for round-off)."""
        k = math.ceil((t - self.t0) / self.delta - 1e-9)
        return int(k)

    def to_dict(self) -> dict:
        return {"t0": self.t0, "delta": self.delta, "n": self.n}

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "TimeGrid":
        if "n" in d:
            return cls(d.get("t0", 0.0), d["delta"], d["n"])
        return cls.from_horizon(d["T"], d["delta"], d.get("t0", 0.0))


@dataclass(frozen=True, eq=False)
class Trajectory:
    grid: TimeGrid
    states: np.ndarray
    labels: tuple[str, ...]

    def __post_init__(self):
        x = np.array(self.states, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if x.shape[0] != self.grid.n + 1:
            raise DomainError(f"expected {self.grid.n + 1} rows, got {x.shape[0]}")
        if x.shape[1] not in (1, 2, 3):
            raise DomainError(f"state dimension must be 1..3, got {x.shape[1]}")
        if len(self.labels) != x.shape[1]:
            raise DomainError("one label per state column is required")
        if not np.all(np.isfinite(x)):
            raise DomainError("trajectory contains non-finite values")
        x.setflags(write=False)
        object.__setattr__(self, "states", x)
        object.__setattr__(self, "labels", tuple(self.labels))

    @property
    def times(self) -> np.ndarray:
        return self.grid.times

    @property
    def d(self) -> int:
        return self.states.shape[1]

    def column(self, label: str) -> np.ndarray:
        return self.states[:, self.labels.index(label)]

    def select(self, components: Sequence[int]) -> "Trajectory":
        comps = list(components)
        return Trajectory(self.grid, self.states[:, comps], tuple(self.labels[c] for c in comps))

    def slice(self, start: int, stop: int) -> "Trajectory":
        """Rows start..stop-1 as a new trajectory on the shifted grid."""
        g = TimeGrid(self.grid.time_of(start), self.grid.delta, stop - start - 1)
        return Trajectory(g, self.states[start:stop], self.labels)

    def __eq__(self, other):
        return (isinstance(other, Trajectory) and self.grid == other.grid
                and self.labels == other.labels and np.array_equal(self.states, other.states))

    def to_csv(self, path: str | Path | None = None) -> str:
        buf = io.StringIO()
        buf.write(",".join(("t",) + self.labels) + "\n")
        for t, row in zip(self.times, self.states):
            buf.write(",".join(format_float(v) for v in (t, *row)) + "\n")
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_csv(cls, source: str | Path) -> "Trajectory":
        text = Path(source).read_text() if _looks_like_path(source) else str(source)
        rows = list(csv.reader(io.StringIO(text)))
        header, body = rows[0], [r for r in rows[1:] if r]
        if header[0] != "t":
            raise DomainError("trajectory CSV must start with a 't' column")
        data = np.array([[float(v) for v in r] for r in body])
        t = data[:, 0]
        if len(t) < 2:
            raise DomainError("need at least two rows")
        delta = (t[-1] - t[0]) / (len(t) - 1)
        grid = TimeGrid(t[0], delta, len(t) - 1)
        if not np.allclose(grid.times, t, rtol=0, atol=1e-9 * max(1.0, abs(t[-1]))):
            raise DomainError("trajectory CSV times are not equidistant")
        return cls(grid, data[:, 1:], tuple(header[1:]))


def format_float(v: float) -> str:
    """17 significant digits: enough for a bit-exact round trip."""
    return format(float(v), ".17g")


def _looks_like_path(source) -> bool:
    if isinstance(source, Path):
        return True
    return "\n" not in source and Path(source).exists()


# ---------------------------------------------------------------------------
# model and measurement specifications
# ---------------------------------------------------------------------------

def _check_rates(**rates):
    for k, v in rates.items():
        if not (v > 0 and math.isfinite(v)):
            raise DomainError(f"{k} must be positive, got {v}")


def _check_diffusions(**sig):
    for k, v in sig.items():
        if not (v >= 0 and math.isfinite(v)):
            raise DomainError(f"{k} must be non-negative, got {v}")


@dataclass(frozen=True)
class Linear:
    a: float
    b: float = 0.0
    sigma: float = 0.0

    family = "linear"
    labels = ("x",)
    param_names = ("a", "b")

    def __post_init__(self):
        _check_rates(a=self.a)
        _check_diffusions(sigma=self.sigma)

    @property
    def diffusion(self) -> np.ndarray:
        return np.array([self.sigma])

    @property
    def theta(self) -> dict:
        return {"a": self.a, "b": self.b}


@dataclass(frozen=True)
class Sir:
    alpha: float
    beta: float
    sigma1: float = 0.0
    sigma2: float = 0.0

    family = "sir"
    labels = ("s", "i")
    param_names = ("alpha", "beta")

    def __post_init__(self):
        _check_rates(alpha=self.alpha, beta=self.beta)
        _check_diffusions(sigma1=self.sigma1, sigma2=self.sigma2)

    @property
    def diffusion(self) -> np.ndarray:
        return np.array([self.sigma1, self.sigma2])

    @property
    def theta(self) -> dict:
        return {"alpha": self.alpha, "beta": self.beta}


@dataclass(frozen=True)
class Seir:
    alpha: float
    lam: float
    beta: float
    sigma1: float = 0.0
    sigma2: float = 0.0
    sigma3: float = 0.0

    family = "seir"
    labels = ("s", "e", "i")
    param_names = ("alpha", "lambda", "beta")

    def __post_init__(self):
        _check_rates(alpha=self.alpha, lam=self.lam, beta=self.beta)
        _check_diffusions(sigma1=self.sigma1, sigma2=self.sigma2, sigma3=self.sigma3)

    @property
    def diffusion(self) -> np.ndarray:
        return np.array([self.sigma1, self.sigma2, self.sigma3])

    @property
    def theta(self) -> dict:
        return {"alpha": self.alpha, "lambda": self.lam, "beta": self.beta}


ModelSpec = Linear | Sir | Seir
FAMILIES = {"linear": Linear, "sir": Sir, "seir": Seir}


def is_ode(model: ModelSpec) -> bool:
    return not np.any(model.diffusion > 0)


def as_ode(model: ModelSpec) -> ModelSpec:
    zero = {k: 0.0 for k in ("sigma", "sigma1", "sigma2", "sigma3") if hasattr(model, k)}
    return type(model)(**{**asdict(model), **zero})


def model_from_theta(family: str, theta: Mapping[str, float], **diffusion) -> ModelSpec:
    if family == "linear":
        return Linear(theta["a"], theta["b"], diffusion.get("sigma", 0.0))
    if family == "sir":
        return Sir(theta["alpha"], theta["beta"], **diffusion)
    if family == "seir":
        return Seir(theta["alpha"], theta["lambda"], theta["beta"], **diffusion)
    raise DomainError(f"unknown family {family!r}")


def model_to_dict(model: ModelSpec) -> dict:
    d = asdict(model)
    if "lam" in d:
        d["lambda"] = d.pop("lam")
    return {"family": model.family, **d}


def model_from_dict(d: Mapping[str, Any]) -> ModelSpec:
    d = dict(d)
    family = d.pop("family", None)
    if family not in FAMILIES:
        raise DomainError(f"unknown model family {family!r}")
    if "lambda" in d:
        d["lam"] = d.pop("lambda")
    try:
        return FAMILIES[family](**d)
    except TypeError as exc:
        raise DomainError(str(exc)) from None


@dataclass(frozen=True)
class MeasurementSpec:
    """Diagonal Gaussian measurement noise on a subset of state components."""

    covariance: tuple[float, ...]
    observed_components: tuple[int, ...]

    def __post_init__(self):
        cov = tuple(float(c) for c in self.covariance)
        obs = tuple(int(c) for c in self.observed_components)
        if not obs:
            raise DomainError("observed_components must be non-empty")
        if len(set(obs)) != len(obs) or min(obs) < 0 or max(obs) > 2:
            raise DomainError(f"invalid observed_components {obs}")
        if len(cov) != len(obs):
            raise DomainError("one variance per observed component is required")
        if any(not (c >= 0 and math.isfinite(c)) for c in cov):
            raise DomainError("measurement variances must be non-negative")
        object.__setattr__(self, "covariance", cov)
        object.__setattr__(self, "observed_components", obs)

    @classmethod
    def full(cls, variances: Sequence[float]) -> "MeasurementSpec":
        return cls(tuple(variances), tuple(range(len(variances))))

    def to_dict(self) -> dict:
        return {"covariance": list(self.covariance),
                "observed_components": list(self.observed_components)}

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "MeasurementSpec":
        return cls(tuple(d["covariance"]), tuple(d["observed_components"]))


@dataclass
class EstimateReport:
    theta_hat: dict[str, float]
    noise_hat: dict[str, float]
    objective: float
    converged: bool
    evaluations: int
    starts: int
    message: str = ""
    diagnostics: list[dict] = field(default_factory=list)

    def __post_init__(self):
        if not all(math.isfinite(v) for v in self.theta_hat.values()):
            raise DomainError("estimate contains non-finite parameters")
        if not self.converged and not self.message:
            self.message = "optimizer did not report convergence"

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self, path: str | Path | None = None) -> str:
        text = json.dumps(self.to_dict(), indent=2, default=_json_default)
        if path is not None:
            Path(path).write_text(text)
        return text


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o).__name__)


def dumps(obj) -> str:
    return json.dumps(obj, indent=2, default=_json_default)


# ---------------------------------------------------------------------------
# noise matching
# ---------------------------------------------------------------------------

def noise_match_linear(a: float, sigma0: float) -> float:
    """Diffusion sigma whose stationary variance sigma^2/(2a) equals sigma0^2."""
    if not a > 0:
        raise DomainError(f"a must be positive, got {a}")
    if sigma0 < 0:
        raise DomainError("sigma0 must be non-negative")
    return sigma0 * math.sqrt(2.0 * a)


def noise_match_sir(alpha, beta, sigma1, sigma2, s0, T) -> tuple[float, float]:
    """Measurement std devs (gamma1, gamma2) comparable to the system noise at time T."""
    from .models import sir_equilibrium

    s_star = sir_equilibrium(alpha, beta, s0)
    slope = beta - alpha * s_star
    if slope <= 0:
        raise DomainError("equilibrium (s*, 0) is not attracting: beta - alpha*s* <= 0")
    return sigma1 * math.sqrt(T), sigma2 / math.sqrt(2.0 * slope)


# ---------------------------------------------------------------------------
# random streams
# ---------------------------------------------------------------------------

BROWNIAN, PERTURBATION, MEASUREMENT, RESTART, OPTIMIZER = range(5)


def rng_stream(seed: int, *key: int) -> np.random.Generator:
    """Independent counter-based generator for (seed, *key).

    The same key always yields the same stream, whatever order or thread
    it is requested from.
    """
    ss = np.random.SeedSequence(int(seed) % 2**64, spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))
