"""Monte Carlo replication harness and robustness studies.

Every replicate is a pure function of (config, replicate index): its random
streams are keyed by (master_seed, replicate), so results do not depend on how
replicates are spread over worker processes.
"""
from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from functools import partial
from pathlib import Path
from typing import Any, Callable, Iterable, Mapping, Protocol, Sequence

import numpy as np

from .core import (DomainError, EstimateReport, Linear, MeasurementSpec, ModelSpec, Seir, TimeGrid,
                   Trajectory, as_ode, dumps, format_float, model_from_dict, model_to_dict,
                   rng_stream)
from .estimators import (OptimizerConfig, fit_ode_lse, fit_ou_mle, fit_partial_ukf, fit_sir_strang)
from .sim import (NoPerturbation, PerturbationSpec, PrematureEpidemic, SimulationPlan,
                  add_measurement_noise, perturbation_from_dict, simulate)

FIT_TAGS = ("ode_lse", "ou_mle", "sir_strang", "partial_ukf")
COMPATIBLE = {"linear": {"ode_lse", "ou_mle", "partial_ukf"},
              "sir": {"ode_lse", "sir_strang", "partial_ukf"},
              "seir": {"ode_lse", "partial_ukf"}}
MAX_RESTARTS = 1000
DELETION_STREAM = 7


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

def _optimizer_to_dict(cfg: OptimizerConfig) -> dict:
    d = dict(cfg.__dict__)
    if d.get("param_bounds"):
        d["param_bounds"] = {k: list(v) for k, v in d["param_bounds"].items()}
    return d


@dataclass(frozen=True)
class ScenarioConfig:
    """A data-generating model crossed with a set of fitting procedures.

    `data_variants` lists which versions of `data_model` generate data: "ode"
    drops the diffusion and overlays `measurement` noise, "sde" uses the
    diffusion and no measurement noise. `fit_family` lets a simpler model be
    fitted (SEIR data are then reduced to (s, e + i)).
    """

    data_model: ModelSpec
    fit_models: tuple[str, ...]
    grid: TimeGrid
    x0: tuple[float, ...]
    measurement: MeasurementSpec | None = None
    perturbation: PerturbationSpec = field(default_factory=NoPerturbation)
    replicates: int = 100
    master_seed: int = 0
    data_variants: tuple[str, ...] = ("ode", "sde")
    fit_family: str | None = None
    fine_step: float = 0.01
    optimizer: OptimizerConfig = field(default_factory=lambda: OptimizerConfig(starts=3))
    start_at_truth: bool = True

    def __post_init__(self):
        object.__setattr__(self, "fit_models", tuple(self.fit_models))
        object.__setattr__(self, "data_variants", tuple(self.data_variants))
        object.__setattr__(self, "x0", tuple(float(v) for v in self.x0))
        if self.replicates < 1:
            raise DomainError("replicates must be >= 1")
        if not set(self.data_variants) <= {"ode", "sde"} or not self.data_variants:
            raise DomainError("data_variants must be a non-empty subset of {'ode', 'sde'}")
        fam = self.family
        if self.fit_family not in (None, fam) and not (self.data_model.family == "seir" and fam == "sir"):
            raise DomainError("only SEIR data can be fitted with a different family (SIR)")
        for tag in self.fit_models:
            if tag not in FIT_TAGS:
                raise DomainError(f"unknown estimator tag {tag!r}; choose from {FIT_TAGS}")
            if tag not in COMPATIBLE[fam]:
                raise DomainError(f"estimator {tag!r} cannot fit the {fam} family")
        if "ode" in self.data_variants and self.measurement is not None:
            if len(self.measurement.covariance) and max(self.measurement.observed_components) >= len(self.x0):
                raise DomainError("measurement components exceed the state dimension")

    @property
    def family(self) -> str:
        return self.fit_family or self.data_model.family

    def to_dict(self) -> dict:
        return {"data_model": model_to_dict(self.data_model), "fit_models": list(self.fit_models),
                "grid": self.grid.to_dict(), "x0": list(self.x0),
                "measurement": None if self.measurement is None else self.measurement.to_dict(),
                "perturbation": self.perturbation.to_dict(), "replicates": self.replicates,
                "master_seed": self.master_seed, "data_variants": list(self.data_variants),
                "fit_family": self.fit_family, "fine_step": self.fine_step,
                "optimizer": _optimizer_to_dict(self.optimizer), "start_at_truth": self.start_at_truth}

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "ScenarioConfig":
        grid = d["grid"]
        if "n" not in grid:
            grid = TimeGrid.from_horizon(grid["T"], grid["delta"], grid.get("t0", 0.0)).to_dict()
        opt = dict(d.get("optimizer") or {})
        if opt.get("param_bounds"):
            opt["param_bounds"] = {k: tuple(v) for k, v in opt["param_bounds"].items()}
        meas = d.get("measurement")
        return cls(data_model=model_from_dict(d["data_model"]), fit_models=tuple(d["fit_models"]),
                   grid=TimeGrid.from_dict(grid), x0=tuple(d["x0"]),
                   measurement=None if meas is None else MeasurementSpec.from_dict(meas),
                   perturbation=perturbation_from_dict(d.get("perturbation")),
                   replicates=int(d.get("replicates", 100)), master_seed=int(d.get("master_seed", 0)),
                   data_variants=tuple(d.get("data_variants", ("ode", "sde"))),
                   fit_family=d.get("fit_family"), fine_step=float(d.get("fine_step", 0.01)),
                   optimizer=OptimizerConfig(**opt) if opt else OptimizerConfig(starts=3),
                   start_at_truth=bool(d.get("start_at_truth", True)))

    @classmethod
    def from_json(cls, path) -> "ScenarioConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def replace(self, **kw) -> "ScenarioConfig":
        return replace(self, **kw)


# ---------------------------------------------------------------------------
# single replicate
# ---------------------------------------------------------------------------

def _plan(cfg: ScenarioConfig, variant: str, replicate: int, perturbation) -> SimulationPlan:
    model = as_ode(cfg.data_model) if variant == "ode" else cfg.data_model
    return SimulationPlan(model, cfg.x0, cfg.grid, cfg.fine_step, perturbation,
                          cfg.master_seed, replicate)


def _observe(cfg: ScenarioConfig, traj: Trajectory, variant: str, replicate: int, key) -> Trajectory:
    meas = cfg.measurement
    if variant == "ode" and meas is not None:
        traj = add_measurement_noise(traj, meas, cfg.master_seed, replicate, key)
    elif meas is not None:
        traj = traj.select(meas.observed_components)
    if cfg.data_model.family == "seir" and cfg.family == "sir":
        traj = _reduce_seir(traj)
    return traj


def _reduce_seir(traj: Trajectory) -> Trajectory:
    if traj.labels != ("s", "e", "i"):
        raise DomainError("SEIR reduction needs all of s, e, i observed")
    x = traj.states
    return Trajectory(traj.grid, np.column_stack([x[:, 0], x[:, 1] + x[:, 2]]), ("s", "i"))


def _fit_x0(cfg: ScenarioConfig) -> np.ndarray:
    x0 = np.array(cfg.x0)
    if cfg.data_model.family == "seir" and cfg.family == "sir":
        return np.array([x0[0], x0[1] + x0[2]])
    return x0


def _truth(cfg: ScenarioConfig) -> dict:
    m = cfg.data_model
    if m.family == "seir" and cfg.family == "sir":
        from .models import seir_reduce
        red = seir_reduce(m.alpha, m.lam, m.beta)
        return {"alpha": red.alpha_prime, "beta": red.beta_prime,
                "sigma1": m.sigma1, "sigma2": max(m.sigma2, m.sigma3)}
    out = dict(m.theta)
    sig = m.diffusion
    if m.family == "linear":
        out["sigma"] = float(sig[0])
    else:
        for j, s in enumerate(sig):
            out[f"sigma{j + 1}"] = float(s)
    return out


def simulate_with_restarts(make: Callable[[tuple], Any], cap: int = MAX_RESTARTS):
    """Call make(stream_key) until it stops raising PrematureEpidemic; returns (value, restarts)."""
    for attempt in range(cap + 1):
        try:
            return make(() if attempt == 0 else (attempt,)), attempt
        except PrematureEpidemic:
            continue
    raise DomainError(f"no complete epidemic after {cap} restarts")


def fit_one(tag: str, data: Trajectory, family: str, x0, cfg: OptimizerConfig,
            truth: Mapping[str, float] | None = None, mask=None) -> dict[str, float]:
    """Run one estimator and flatten its output to a name -> value map."""
    delta = data.grid.delta
    if tag == "ou_mle":
        m = fit_ou_mle(data)
        if m.a_hat is None:
            raise DomainError(m.message)
        return {"a": m.a_hat, "b": m.b_hat, "rho": m.rho_hat, "sigma2": m.sigma2_hat}
    if tag == "ode_lse":
        init = None
        if truth:
            names = ("a", "b") if family == "linear" else \
                ("alpha", "beta") if family == "sir" else ("alpha", "lambda", "beta")
            init = [[truth[n] for n in names]]
        rep = fit_ode_lse(data, family, x0, cfg, mask=mask, initial=init)
    elif tag == "sir_strang":
        init = None
        if truth:
            init = [[truth["alpha"], truth["beta"], max(truth.get("sigma1", 0), 1e-3),
                     max(truth.get("sigma2", 0), 1e-3)]]
        rep = fit_sir_strang(data, cfg, initial=init)
    elif tag == "partial_ukf":
        rep = fit_partial_ukf(data, family, x0, cfg, mask=mask)
    else:
        raise DomainError(f"unknown estimator tag {tag!r}")
    if not rep.converged and not math.isfinite(rep.objective):
        raise DomainError(rep.message)
    out = dict(rep.theta_hat)
    out.update(rep.noise_hat)
    if family == "linear":
        out["rho"] = math.exp(-out["a"] * delta)
    else:
        out["r0"] = out["alpha"] / out["beta"]
    return out


def _replicate(cfg: ScenarioConfig, r: int) -> dict:
    """All (variant, tag) estimates for replicate r."""
    out = {}
    truth = _truth(cfg) if cfg.start_at_truth else None
    for variant in cfg.data_variants:
        def make(key, variant=variant):
            traj = simulate(_plan(cfg, variant, r, cfg.perturbation), key)
            return _observe(cfg, traj, variant, r, key)
        data, restarts = simulate_with_restarts(make)
        for tag in cfg.fit_models:
            try:
                est = fit_one(tag, data, cfg.family, _fit_x0(cfg), cfg.optimizer, truth)
                out[(variant, tag)] = (est, restarts, "")
            except DomainError as exc:
                out[(variant, tag)] = (None, restarts, str(exc))
    return out


# ---------------------------------------------------------------------------
# results
# ---------------------------------------------------------------------------

def summarize(estimates: Sequence[float] | np.ndarray) -> dict:
    """Mean, variance (n-1), standard error and 5/25/50/75/95 percentiles."""
    x = np.asarray(estimates, dtype=float)
    if x.size == 0:
        return {"count": 0}
    var = float(x.var(ddof=1)) if x.size > 1 else 0.0
    q = np.quantile(x, [0.05, 0.25, 0.5, 0.75, 0.95])
    return {"count": int(x.size), "mean": float(x.mean()), "variance": var,
            "std_error": math.sqrt(var / x.size), "min": float(x.min()), "max": float(x.max()),
            "q05": float(q[0]), "q25": float(q[1]), "q50": float(q[2]), "q75": float(q[3]),
            "q95": float(q[4])}


@dataclass
class Cell:
    """Estimates of one (data variant, estimator) combination."""

    names: tuple[str, ...]
    replicates: list[int] = field(default_factory=list)
    rows: list[list[float]] = field(default_factory=list)
    failures: list[tuple[int, str]] = field(default_factory=list)
    restarts: int = 0

    def column(self, name: str) -> np.ndarray:
        return np.array([row[self.names.index(name)] for row in self.rows])

    def summary(self) -> dict:
        return {"estimates": {n: summarize(self.column(n)) for n in self.names},
                "non_converged": len(self.failures), "premature_restarts": self.restarts}

    def to_csv(self) -> str:
        lines = [",".join(("replicate",) + self.names)]
        for r, row in zip(self.replicates, self.rows):
            lines.append(",".join([str(r)] + [format_float(v) for v in row]))
        return "\n".join(lines) + "\n"


@dataclass
class ReplicationResult:
    cells: dict[str, Cell]
    config: dict

    def cell(self, data: str, fit: str) -> Cell:
        return self.cells[f"{data}-{fit}"]

    def summary(self) -> dict:
        return {name: c.summary() for name, c in self.cells.items()}

    def write(self, out_dir) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for name, c in self.cells.items():
            (out / f"{name}.csv").write_text(c.to_csv())
        (out / "summary.json").write_text(dumps({"config": self.config, "cells": self.summary()}))
        return out


def _parallel_map(fn: Callable, items: Iterable, workers: int | None):
    items = list(items)
    if workers is None or workers <= 1 or len(items) <= 1:
        return [fn(i) for i in items]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items, chunksize=max(1, len(items) // (4 * workers))))


def _collect(cfg_dict: dict, per_rep: list[dict], cell_keys) -> ReplicationResult:
    cells = {f"{v}-{t}": Cell(()) for v, t in cell_keys}
    for r, res in enumerate(per_rep):
        for v, t in cell_keys:
            est, restarts, msg = res[(v, t)]
            cell = cells[f"{v}-{t}"]
            cell.restarts += restarts
            if est is None:
                cell.failures.append((r, msg))
                continue
            if not cell.names:
                cell.names = tuple(est)
            cell.replicates.append(r)
            cell.rows.append([float(est[n]) for n in cell.names])
    return ReplicationResult(cells, cfg_dict)


def run_scenario(cfg: ScenarioConfig, workers: int | None = 1,
                 progress: Callable[[str], None] | None = None) -> ReplicationResult:
    """Simulate cfg.replicates data sets per variant and fit every requested estimator."""
    if progress:
        progress(f"running {cfg.replicates} replicates x {len(cfg.data_variants)} data models")
    per_rep = _parallel_map(partial(_replicate, cfg), range(cfg.replicates), workers)
    keys = [(v, t) for v in cfg.data_variants for t in cfg.fit_models]
    return _collect(cfg.to_dict(), per_rep, keys)


# ---------------------------------------------------------------------------
# paired contrasts on common random numbers
# ---------------------------------------------------------------------------

def _contrast_replicate(cfg: ScenarioConfig, perturbation, r: int) -> dict:
    out = {}
    truth = _truth(cfg) if cfg.start_at_truth else None
    for variant in cfg.data_variants:
        def make(key, variant=variant):
            base = simulate(_plan(cfg, variant, r, NoPerturbation()), key)
            pert = simulate(_plan(cfg, variant, r, perturbation), key)
            return _observe(cfg, base, variant, r, key), _observe(cfg, pert, variant, r, key)
        (d0, d1), restarts = simulate_with_restarts(make)
        for tag in cfg.fit_models:
            try:
                e0 = fit_one(tag, d0, cfg.family, _fit_x0(cfg), cfg.optimizer, truth)
                e1 = fit_one(tag, d1, cfg.family, _fit_x0(cfg), cfg.optimizer, truth)
            except DomainError as exc:
                out[(variant, tag)] = (None, restarts, str(exc))
                continue
            row = {}
            for name in e1:
                row[name] = e1[name]
                row[name + "_0"] = e0[name]
            if "rho" in e1:
                row["rho_ratio"] = e1["rho"] / e0["rho"]
                row["b_diff"] = e1["b"] - e0["b"]
            out[(variant, tag)] = (row, restarts, "")
    return out


def run_contrast(cfg: ScenarioConfig, perturbation: PerturbationSpec | None = None,
                 workers: int | None = 1) -> ReplicationResult:
    """Fit perturbed and unperturbed data simulated on the same random numbers.

    Linear cells carry rho_ratio = rho-hat / rho-hat_0 and b_diff = b-hat - b-hat_0;
    every cell carries each estimate with its unperturbed partner (suffix _0).
    """
    perturbation = cfg.perturbation if perturbation is None else perturbation
    if cfg.data_model.family not in ("linear", "sir"):
        raise DomainError("contrasts are defined for the linear and SIR families")
    fn = partial(_contrast_replicate, cfg, perturbation)
    per_rep = _parallel_map(fn, range(cfg.replicates), workers)
    keys = [(v, t) for v in cfg.data_variants for t in cfg.fit_models]
    d = cfg.to_dict()
    d["contrast_perturbation"] = perturbation.to_dict()
    return _collect(d, per_rep, keys)


# ---------------------------------------------------------------------------
# truncation and deletion studies
# ---------------------------------------------------------------------------

class FitTask(Protocol):
    """Refits a data set after truncation or deletion.

    head/tail: rows removed from the start/end; mask: boolean keep-mask over
    the remaining rows (None keeps all); initial: warm-start parameter map.
    """

    def fit(self, tag: str, head: int, tail: int, mask, initial: Mapping[str, float] | None
            ) -> EstimateReport: ...

    @property
    def n_obs(self) -> int: ...


@dataclass
class TrajectoryTask:
    """Fit task over a fully observed trajectory with a known initial state.

    After head truncation the first remaining observation serves as the
    initial state.
    """

    obs: Trajectory
    family: str
    x0: tuple[float, ...]
    optimizer: OptimizerConfig = field(default_factory=lambda: OptimizerConfig(starts=3))

    @property
    def n_obs(self) -> int:
        return self.obs.grid.n + 1

    def fit(self, tag, head, tail, mask, initial):
        data = self.obs.slice(head, self.n_obs - tail)
        x0 = self.x0 if head == 0 else tuple(data.states[0])
        if tag == "ode_lse":
            return fit_ode_lse(data, self.family, x0, self.optimizer, mask=mask, initial=initial)
        if tag == "sir_strang":
            if mask is not None:
                raise DomainError("the Strang estimator needs equidistant data")
            return fit_sir_strang(data, self.optimizer, initial=initial)
        if tag == "partial_ukf":
            return fit_partial_ukf(data, self.family, x0, self.optimizer, mask=mask, initial=initial)
        raise DomainError(f"estimator {tag!r} is not supported in robustness studies")


def _report_values(rep: EstimateReport) -> dict:
    vals = dict(rep.theta_hat)
    vals.update(rep.noise_hat)
    if "alpha" in vals and "beta" in vals:
        vals["r0"] = vals["alpha"] / vals["beta"]
    return vals


@dataclass
class StudyResult:
    """Long-format table: one row per (setting, estimator)."""

    key_names: tuple[str, ...]
    rows: list[dict] = field(default_factory=list)

    def values(self, tag: str, param: str, **where) -> np.ndarray:
        return np.array([r[param] for r in self.rows if r["fit"] == tag
                         and all(r.get(k) == v for k, v in where.items()) and param in r])

    def spread(self, tag: str, param: str, **where) -> float:
        v = self.values(tag, param, **where)
        return float(v.max() - v.min()) if v.size else float("nan")

    def to_csv(self) -> str:
        cols = list(self.key_names) + ["fit"]
        extra = sorted({k for r in self.rows for k in r} - set(cols))
        lines = [",".join(cols + extra)]
        for r in self.rows:
            lines.append(",".join(
                str(r.get(c, "")) if not isinstance(r.get(c), float) else format_float(r[c])
                for c in cols + extra))
        return "\n".join(lines) + "\n"


def _warm_fit(task, tag, head, tail, mask, initial):
    try:
        return _report_values(task.fit(tag, head, tail, mask, initial))
    except DomainError as exc:
        return {"error": str(exc)}


def truncation_study(task: FitTask, fit_tags: Sequence[str], max_drop_head: int,
                     max_drop_tail: int, step: int = 1) -> StudyResult:
    """Refit after dropping 0..max_drop_head leading and 0..max_drop_tail trailing rows.

    Every refit is warm-started from the full-data optimum of the same estimator.
    """
    if max_drop_head < 0 or max_drop_tail < 0:
        raise DomainError("drop depths must be non-negative")
    if max(max_drop_head, max_drop_tail) >= task.n_obs - 3:
        raise DomainError("truncation would leave too few observations")
    res = StudyResult(("side", "depth", "n_obs"))
    full = {}
    for tag in fit_tags:
        full[tag] = _report_values(task.fit(tag, 0, 0, None, None))
        res.rows.append({"side": "none", "depth": 0, "n_obs": task.n_obs, "fit": tag, **full[tag]})
    for side, depth_max in (("tail", max_drop_tail), ("head", max_drop_head)):
        for depth in range(step, depth_max + 1, step):
            head, tail = (depth, 0) if side == "head" else (0, depth)
            for tag in fit_tags:
                vals = _warm_fit(task, tag, head, tail, None, full[tag])
                res.rows.append({"side": side, "depth": depth, "n_obs": task.n_obs - depth,
                                 "fit": tag, **vals})
    return res


def deletion_study(task: FitTask, fit_tags: Sequence[str], k_max: int, resamples: int,
                   seed: int = 0, ks: Sequence[int] | None = None) -> StudyResult:
    """Refit after deleting k random observations (never the initial one), `resamples` times per k."""
    if "ou_mle" in fit_tags:
        raise DomainError("ou_mle needs equidistant data and is excluded from deletion studies")
    n = task.n_obs
    if k_max >= n - 3:
        raise DomainError("cannot delete that many observations")
    res = StudyResult(("k", "resample"))
    full = {tag: _report_values(task.fit(tag, 0, 0, None, None)) for tag in fit_tags}
    for tag in fit_tags:
        res.rows.append({"k": 0, "resample": 0, "fit": tag, **full[tag]})
    for k in (ks if ks is not None else range(1, k_max + 1)):
        for j in range(resamples):
            rng = rng_stream(seed, DELETION_STREAM, k, j)
            drop = rng.choice(np.arange(1, n), size=k, replace=False)
            mask = np.ones(n, dtype=bool)
            mask[drop] = False
            for tag in fit_tags:
                vals = _warm_fit(task, tag, 0, 0, mask, full[tag])
                res.rows.append({"k": k, "resample": j, "fit": tag, **vals})
    return res
