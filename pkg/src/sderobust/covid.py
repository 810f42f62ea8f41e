"""Epidemic case-count ingestion and wave fitting.

Daily positive tests become an infectious proportion through a trailing
9-day sum (an infected person is taken to stay infectious for 9 days).
"""
from __future__ import annotations

import csv
import datetime as dt
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import (DomainError, EstimateReport, ModelSpec, Seir, Sir, TimeGrid, Trajectory,
                   format_float, is_ode, model_from_theta)
from .estimators import OptimizerConfig, fit_ode_lse, fit_partial_ukf
from .experiments import StudyResult, deletion_study, simulate_with_restarts, truncation_study
from .models import ode_path
from .sim import SimulationPlan, simulate

DENMARK_POPULATION = 5_860_000
INFECTIOUS_DAYS = 9
EXPOSED_SHARE = 0.5


@dataclass(frozen=True)
class CaseSeries:
    dates: tuple[dt.date, ...]
    daily_positives: np.ndarray
    population: float = DENMARK_POPULATION

    def __post_init__(self):
        counts = np.asarray(self.daily_positives, dtype=float)
        if counts.ndim != 1 or len(counts) != len(self.dates):
            raise DomainError("one count per date is required")
        if np.any(counts < 0) or not np.all(np.isfinite(counts)):
            raise DomainError("daily counts must be finite and non-negative")
        if not self.population > 0:
            raise DomainError("population must be positive")
        dates = tuple(self.dates)
        for a, b in zip(dates, dates[1:]):
            if (b - a).days != 1:
                raise DomainError(f"dates must be consecutive days ({a} -> {b})")
        counts.setflags(write=False)
        object.__setattr__(self, "dates", dates)
        object.__setattr__(self, "daily_positives", counts)

    def index_of(self, date: dt.date | str) -> int:
        d = _as_date(date)
        k = (d - self.dates[0]).days
        if not 0 <= k < len(self.dates):
            raise DomainError(f"{d} is outside the series ({self.dates[0]} .. {self.dates[-1]})")
        return k

    @classmethod
    def from_csv(cls, source, population: float = DENMARK_POPULATION) -> "CaseSeries":
        """Read `date,positives` rows (header required, ISO dates)."""
        text = Path(source).read_text() if not str(source).lstrip().startswith("date") else str(source)
        reader = csv.DictReader(io.StringIO(text))
        if reader.fieldnames is None or not {"date", "positives"} <= set(reader.fieldnames):
            raise DomainError("case CSV needs a 'date,positives' header")
        dates, counts = [], []
        for row in reader:
            dates.append(_as_date(row["date"]))
            counts.append(float(row["positives"]))
        return cls(tuple(dates), np.array(counts), population)

    def to_csv(self, path=None) -> str:
        lines = ["date,positives"] + [f"{d.isoformat()},{format_float(c) if c != int(c) else int(c)}"
                                      for d, c in zip(self.dates, self.daily_positives)]
        text = "\n".join(lines) + "\n"
        if path is not None:
            Path(path).write_text(text)
        return text


def _as_date(d) -> dt.date:
    if isinstance(d, dt.date):
        return d
    try:
        return dt.date.fromisoformat(str(d).strip())
    except ValueError:
        raise DomainError(f"not an ISO date: {d!r}") from None


@dataclass(frozen=True)
class RollingSeries:
    dates: tuple[dt.date, ...]
    values: np.ndarray


def rolling_infectious(series: CaseSeries, window: int = INFECTIOUS_DAYS) -> RollingSeries:
    """Trailing window sums of daily positives divided by the population.

    The first window - 1 days have incomplete windows and are dropped.
    """
    counts = series.daily_positives
    if window < 1 or len(counts) < window:
        raise DomainError(f"need at least {window} days of data")
    csum = np.concatenate([[0.0], np.cumsum(counts)])
    sums = csum[window:] - csum[:-window]
    return RollingSeries(series.dates[window - 1:], sums / series.population)


@dataclass(frozen=True)
class EpidemicWindow:
    start_date: dt.date
    end_date: dt.date
    i_series: np.ndarray
    initial: tuple[float, ...]
    family: str

    @property
    def trajectory(self) -> Trajectory:
        """Observed infectious proportions on a daily grid starting at t = 0."""
        return Trajectory(TimeGrid(0.0, 1.0, len(self.i_series) - 1), self.i_series[:, None], ("i",))

    @property
    def state0(self) -> tuple[float, ...]:
        """Model initial state without the removed compartment."""
        return self.initial[:-1]

    @property
    def removed0(self) -> float:
        return self.initial[-1]


def build_window(series: CaseSeries, start, end, family: str = "sir",
                 window: int = INFECTIOUS_DAYS) -> EpidemicWindow:
    """Infectious series on [start, end] with initial conditions read from the data.

    i0 is the rolling value at `start`; r0 counts every positive before the
    infectious window ending at `start`. SEIR adds e0 = 0.5 i0.
    """
    if family not in ("sir", "seir"):
        raise DomainError("family must be 'sir' or 'seir'")
    k0, k1 = series.index_of(start), series.index_of(end)
    if k1 <= k0 + 2:
        raise DomainError("window must span more than three days")
    if k0 < window - 1:
        raise DomainError(f"need {window - 1} days of history before the start date")
    roll = rolling_infectious(series, window)
    i = roll.values[k0 - (window - 1): k1 - (window - 1) + 1]
    N = series.population
    r0 = float(series.daily_positives[: k0 - window + 1].sum()) / N
    i0 = float(i[0])
    if family == "sir":
        initial = (1.0 - i0 - r0, i0, r0)
    else:
        e0 = EXPOSED_SHARE * i0
        initial = (1.0 - e0 - i0 - r0, e0, i0, r0)
    if initial[0] <= 0:
        raise DomainError("no susceptibles left at the start date")
    return EpidemicWindow(series.dates[k0], series.dates[k1], np.array(i), initial, family)


def _observed_index(family: str) -> int:
    return 1 if family == "sir" else 2


def fit_wave(window: EpidemicWindow, family: str | None = None, variant: str = "sde",
             cfg: OptimizerConfig | None = None, mask=None, initial=None) -> EstimateReport:
    """Fit the ODE by least squares on i only, or the SDE by the unscented Kalman filter."""
    family = family or window.family
    if family != window.family:
        raise DomainError("window initial conditions were built for a different family")
    obs = window.trajectory
    cfg = cfg or OptimizerConfig(starts=20)
    if variant == "ode":
        rep = fit_ode_lse(obs, family, window.state0, cfg, mask=mask, initial=initial)
    elif variant == "sde":
        if initial is None:
            initial = ode_warm_start(window, family, cfg, mask)
        rep = fit_partial_ukf(obs, family, window.state0, cfg, mask=mask, initial=initial)
    else:
        raise DomainError("variant must be 'ode' or 'sde'")
    rep.theta_hat["r0"] = rep.theta_hat["alpha"] / rep.theta_hat["beta"]
    return rep


def ode_warm_start(window: EpidemicWindow, family: str, cfg: OptimizerConfig, mask=None) -> dict:
    """UKF starting point: the least-squares optimum plus noise levels read off its residuals.

    The residual increments give one diffusion level for every compartment and
    a small fraction of the residual variance seeds the measurement variance.
    """
    obs = window.trajectory
    rep = fit_ode_lse(obs, family, window.state0, cfg, mask=mask)
    model = model_from_theta(family, rep.theta_hat)
    path = ode_path(model, window.state0, obs.grid)[:, _observed_index(family)]
    resid = window.i_series - path
    keep = np.ones(len(resid), dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    steps = np.diff(resid[keep]) / np.sqrt(np.diff(obs.grid.times[keep]))
    sd = max(float(np.std(steps)), 1e-12)
    start = dict(rep.theta_hat)
    start.update({"sigma1": sd, "sigma2": sd, "sigma23": sd,
                  "meas_var_i": max(0.01 * float(np.var(resid[keep])), 1e-30)})
    return start


@dataclass
class PredictionBand:
    t: np.ndarray
    median: np.ndarray
    lo: np.ndarray
    hi: np.ndarray

    def to_csv(self, path=None) -> str:
        lines = ["t,median,lo,hi"] + [",".join(format_float(v) for v in row)
                                      for row in zip(self.t, self.median, self.lo, self.hi)]
        text = "\n".join(lines) + "\n"
        if path is not None:
            Path(path).write_text(text)
        return text


def predict_band(window: EpidemicWindow, family: str, params: ModelSpec, n_paths: int = 50,
                 seed: int = 0, horizon: int | None = None) -> PredictionBand:
    """Pointwise median and min-max envelope of the i component.

    A model without diffusion gives its single deterministic path.
    """
    if params.family != family:
        raise DomainError("params do not belong to the requested family")
    n = horizon or (len(window.i_series) - 1)
    grid = TimeGrid(0.0, 1.0, n)
    idx = _observed_index(family)
    if is_ode(params):
        path = ode_path(params, window.state0, grid)[:, idx]
        return PredictionBand(grid.times, path, path.copy(), path.copy())
    if n_paths < 1:
        raise DomainError("n_paths must be >= 1")
    paths = np.empty((n_paths, n + 1))
    for r in range(n_paths):
        plan = SimulationPlan(params, window.state0, grid, seed=seed, replicate=r)
        traj, _ = simulate_with_restarts(lambda key: simulate(plan, key))
        paths[r] = traj.states[:, idx]
    return PredictionBand(grid.times, np.median(paths, axis=0), paths.min(axis=0), paths.max(axis=0))


# ---------------------------------------------------------------------------
# robustness studies on a case series
# ---------------------------------------------------------------------------

@dataclass
class WaveTask:
    """Refits a wave after moving its start/end dates or deleting days.

    Head truncation moves the start date, so the initial conditions are
    rebuilt from the data exactly as for the full window.
    """

    series: CaseSeries
    start: dt.date
    end: dt.date
    family: str = "sir"
    ode_cfg: OptimizerConfig = field(default_factory=lambda: OptimizerConfig(starts=10))
    sde_cfg: OptimizerConfig = field(default_factory=lambda: OptimizerConfig(starts=10))
    warm_cfg: OptimizerConfig = field(default_factory=lambda: OptimizerConfig(starts=1))

    def __post_init__(self):
        self.start, self.end = _as_date(self.start), _as_date(self.end)

    @property
    def n_obs(self) -> int:
        return (self.end - self.start).days + 1

    def fit(self, tag, head, tail, mask, initial):
        s = self.start + dt.timedelta(days=head)
        e = self.end - dt.timedelta(days=tail)
        win = build_window(self.series, s, e, self.family)
        variant = {"ode_lse": "ode", "partial_ukf": "sde"}.get(tag)
        if variant is None:
            raise DomainError(f"estimator {tag!r} does not apply to partially observed waves")
        if initial is None:
            cfg = self.ode_cfg if variant == "ode" else self.sde_cfg
        else:
            cfg = self.warm_cfg
        return fit_wave(win, self.family, variant, cfg, mask=mask, initial=initial)


WAVE_TAGS = ("ode_lse", "partial_ukf")


def wave_truncation(series: CaseSeries, start, end, family="sir", max_drop_head=50,
                    max_drop_tail=70, step=1, task: WaveTask | None = None) -> StudyResult:
    task = task or WaveTask(series, start, end, family)
    return truncation_study(task, WAVE_TAGS, max_drop_head, max_drop_tail, step)


def wave_deletion(series: CaseSeries, start, end, family="sir", k_max=30, resamples=100, seed=0,
                  ks: Sequence[int] | None = None, task: WaveTask | None = None) -> StudyResult:
    task = task or WaveTask(series, start, end, family)
    return deletion_study(task, WAVE_TAGS, k_max, resamples, seed, ks)


# ---------------------------------------------------------------------------
# synthetic waves
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SyntheticWave:
    series: CaseSeries
    start: dt.date
    end: dt.date
    model: Sir
    i_path: np.ndarray


def synthetic_wave(model: Sir, i0: float = 1e-3, r0: float = 5e-3, days: int = 180,
                   start: dt.date | str = "2020-09-12", population: float = DENMARK_POPULATION,
                   seed: int = 0, history_days: int = 60, window: int = INFECTIOUS_DAYS) -> SyntheticWave:
    """Daily counts whose trailing window sums reproduce a simulated SIR infectious path.

    The path is simulated from (1 - i0 - r0, i0). Counts are integers: the
    rolling sums equal round(N i_t) exactly, so build_window recovers the
    path up to that rounding and r0 up to the spread of earlier counts.
    """
    start = _as_date(start)
    s0 = 1.0 - i0 - r0
    grid = TimeGrid(0.0, 1.0, days)
    plan = SimulationPlan(model, (s0, i0), grid, seed=seed)
    traj, _ = simulate_with_restarts(lambda key: simulate(plan, key))
    i_path = traj.states[:, 1]
    target = np.rint(population * i_path).astype(np.int64)
    # counts of day t follow from p_t = R_t - R_{t-1} + p_{t-window}; the first
    # window counts (ending at the start date) are chosen so none goes negative
    steps = np.diff(target)
    need = np.zeros(window, dtype=np.int64)
    for r in range(window):
        walk = np.cumsum(steps[r::window]) if len(steps[r::window]) else np.zeros(1, dtype=np.int64)
        need[r] = max(0, -int(walk.min()))
    slack = int(target[0]) - int(need.sum())
    if slack < 0:
        raise DomainError("path falls too fast for non-negative daily counts; "
                          "lower the noise or shorten the window")
    first = need + slack // window
    first[: slack % window] += 1
    counts = list(first)
    for t in range(1, days + 1):
        counts.append(int(target[t] - target[t - 1] + counts[t - 1]))
    total_before = int(round(r0 * population))
    hist = np.full(history_days, total_before // history_days, dtype=np.int64)
    hist[: total_before % history_days] += 1
    all_counts = np.concatenate([hist, np.array(counts, dtype=np.int64)])
    first_day = start - dt.timedelta(days=history_days + window - 1)
    dates = tuple(first_day + dt.timedelta(days=k) for k in range(len(all_counts)))
    series = CaseSeries(dates, all_counts.astype(float), population)
    return SyntheticWave(series, start, start + dt.timedelta(days=days), model, i_path)
