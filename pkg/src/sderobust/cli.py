"""Command-line entry point: `sderobust <subcommand> ...`.

Every subcommand forwards to one library operation. Machine output goes to
--out, progress to stderr. Exit codes: 0 ok, 1 domain error, 2 usage error.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .core import (DomainError, MeasurementSpec, TimeGrid, Trajectory, dumps, model_from_theta)
from .estimators import ESTIMATORS, OptimizerConfig, fit_trajectory
from .sim import (Jump, NoPerturbation, QuadraticDrift, RandomMean, SimulationPlan,
                  add_measurement_noise, perturbation_from_dict, simulate)


class UsageError(Exception):
    pass


def _floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _sweep_spec(text: str):
    try:
        name, rng = text.split("=", 1)
        start, stop, step = (float(v) for v in rng.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError("sweep must look like NAME=START:STOP:STEP, e.g. T=20:200:20") from None
    if step <= 0 or stop < start:
        raise argparse.ArgumentTypeError("sweep needs STEP > 0 and STOP >= START")
    count = int(np.floor((stop - start) / step + 1e-9)) + 1
    return name.strip(), [start + k * step for k in range(count)]


def _log(msg: str):
    print(msg, file=sys.stderr)


def _write(path: str | None, text: str):
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text)


def _load_json(path: str | None) -> dict:
    if not path:
        return {}
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise UsageError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path} is not valid JSON ({exc})") from None


def _optimizer(args, base: OptimizerConfig | None = None) -> OptimizerConfig:
    cfg = base or OptimizerConfig()
    changes = {}
    if getattr(args, "starts", None) is not None:
        changes["starts"] = args.starts
    if getattr(args, "optimizer_seed", None) is not None:
        changes["seed"] = args.optimizer_seed
    if not changes:
        return cfg
    from dataclasses import replace
    return replace(cfg, **changes)


# ---------------------------------------------------------------------------
# model flags
# ---------------------------------------------------------------------------

MODEL_FLAGS = {"linear": ("a", "b", "sigma"), "sir": ("alpha", "beta", "sigma1", "sigma2"),
               "seir": ("alpha", "lambda", "beta", "sigma1", "sigma2", "sigma3")}


def _add_model_flags(p: argparse.ArgumentParser):
    p.add_argument("--model", choices=sorted(MODEL_FLAGS), help="model family")
    for name in ("a", "b", "sigma", "alpha", "lambda", "beta", "sigma1", "sigma2", "sigma3"):
        p.add_argument(f"--{name}", type=float, dest=f"p_{name}")


def _model_from_args(args, base: dict | None = None):
    d = dict(base or {})
    family = args.model or d.pop("family", None)
    d.pop("family", None)
    if family is None:
        raise UsageError("--model is required (linear, sir or seir)")
    for name in MODEL_FLAGS[family]:
        v = getattr(args, f"p_{name}")
        if v is not None:
            d[name] = v
    drift = [n for n in MODEL_FLAGS[family] if not n.startswith("sigma")]
    missing = [n for n in drift if n not in d]
    if missing:
        raise UsageError(f"missing model parameter(s): {', '.join('--' + m for m in missing)}")
    theta = {n: d[n] for n in drift}
    sig = {n: d.get(n, 0.0) for n in MODEL_FLAGS[family] if n.startswith("sigma")}
    return model_from_theta(family, theta, **sig)


def _perturbation_from_args(args, base=None):
    if args.jump is not None:
        t_p, *h = args.jump
        if not h:
            raise UsageError("--jump needs T_P,H[,H2,...]")
        return Jump(t_p, tuple(h))
    if args.random_mean is not None:
        return RandomMean(args.random_mean, per_step=args.per_step)
    if args.quadratic_drift is not None:
        return QuadraticDrift(args.quadratic_drift, per_step=args.per_step)
    return perturbation_from_dict(base) if base else NoPerturbation()


def _add_perturbation_flags(p: argparse.ArgumentParser):
    g = p.add_mutually_exclusive_group()
    g.add_argument("--jump", type=_floats, metavar="T_P,H[,H2]", help="instantaneous jump")
    g.add_argument("--random-mean", type=float, metavar="SIGMA_B", help="randomly varying long-term mean")
    g.add_argument("--quadratic-drift", type=float, metavar="SIGMA_GAMMA", help="quadratic drift error")
    p.add_argument("--per-step", action="store_true",
                   help="redraw random-mean/drift coefficients at every fine step instead of every interval")


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_simulate(args) -> int:
    base = _load_json(args.config)
    model = _model_from_args(args, base.get("model"))
    grid = base.get("grid", {})
    T = args.T if args.T is not None else grid.get("T")
    delta = args.delta if args.delta is not None else grid.get("delta")
    if T is None or delta is None:
        raise UsageError("--T and --delta are required")
    x0 = args.x0 or tuple(base.get("x0", ()))
    if not x0:
        raise UsageError("--x0 is required")
    plan = SimulationPlan(model, x0, TimeGrid.from_horizon(T, delta),
                          fine_step=args.fine_step if args.fine_step is not None else base.get("fine_step", 0.01),
                          perturbation=_perturbation_from_args(args, base.get("perturbation")),
                          seed=args.seed if args.seed is not None else base.get("seed", 0),
                          replicate=args.replicate)
    traj = simulate(plan)
    if args.measurement_var:
        traj = add_measurement_noise(traj, MeasurementSpec.full(args.measurement_var), plan.seed, plan.replicate)
    _write(args.out, traj.to_csv())
    return 0


def cmd_fit(args) -> int:
    obs = Trajectory.from_csv(args.data)
    x0 = args.x0 if args.x0 else None
    report = fit_trajectory(args.estimator, obs, args.family, x0, _optimizer(args))
    _write(args.out, report.to_json() + "\n")
    return 0


def _scenario(args):
    from .experiments import ScenarioConfig
    d = _load_json(args.config)
    if not d:
        raise UsageError("--config scenario.json is required")
    if args.replicates is not None:
        d["replicates"] = args.replicates
    if args.seed is not None:
        d["master_seed"] = args.seed
    if args.starts is not None:
        d.setdefault("optimizer", {})["starts"] = args.starts
    try:
        return ScenarioConfig.from_dict(d)
    except KeyError as exc:
        raise UsageError(f"scenario config is missing {exc}") from None


def cmd_replicate(args) -> int:
    from .experiments import run_scenario
    cfg = _scenario(args)
    res = run_scenario(cfg, workers=args.workers, progress=_log)
    out = res.write(args.out)
    _log(f"wrote {len(res.cells)} cells to {out}")
    return 0


def cmd_contrast(args) -> int:
    from .experiments import run_contrast
    cfg = _scenario(args)
    pert = _perturbation_from_args(args, None)
    res = run_contrast(cfg, None if isinstance(pert, NoPerturbation) else pert, workers=args.workers)
    out = res.write(args.out)
    _log(f"wrote {len(res.cells)} contrast cells to {out}")
    return 0


def cmd_moments(args) -> int:
    from .moments import LinearScenario, moment_summary, sweep
    d = _load_json(args.scenario)
    for name in ("a", "b", "sigma", "sigma0", "x0", "delta"):
        v = getattr(args, f"s_{name}")
        if v is not None:
            d[name] = v
    if args.n is not None:
        d["n"] = args.n
    if "T" in d and "n" not in d:
        d["n"] = int(round(d["T"] / d.get("delta", 1.0)))
    if "a" not in d:
        raise UsageError("the scenario needs a rate a (--a or a scenario file)")
    sc = LinearScenario.from_dict(d)
    jump = args.jump
    h, t_p = (jump[1], jump[0]) if jump else (None, None)
    if args.sweep:
        name, values = args.sweep
        rows = sweep(sc, name, values, h, t_p)
    else:
        rows = [moment_summary(sc, h, t_p)]
    _write(args.out, dumps(rows) + "\n")
    return 0


def cmd_covid_fit(args) -> int:
    from .covid import CaseSeries, build_window, fit_wave, predict_band
    from .core import as_ode
    series = CaseSeries.from_csv(args.data, args.population)
    window = build_window(series, args.start, args.end, args.family)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    variants = ("ode", "sde") if args.variant == "both" else (args.variant,)
    for v in variants:
        _log(f"fitting {args.family} {v} on {window.start_date} .. {window.end_date}")
        rep = fit_wave(window, args.family, v, _optimizer(args, OptimizerConfig(starts=20)))
        rep.to_json(out / f"fit_{args.family}_{v}.json")
        sig = {k: val for k, val in rep.noise_hat.items() if k.startswith("sigma")}
        if "sigma23" in sig:
            s = sig.pop("sigma23")
            sig.update(sigma2=s, sigma3=s)
        theta = {k: val for k, val in rep.theta_hat.items() if k != "r0"}
        model = model_from_theta(args.family, theta, **sig)
        if v == "ode":
            model = as_ode(model)
        band = predict_band(window, args.family, model, args.band_paths, args.seed or 0)
        band.to_csv(out / f"band_{args.family}_{v}.csv")
    return 0


def cmd_covid_robustness(args) -> int:
    from .covid import CaseSeries, WaveTask, wave_deletion, wave_truncation, WAVE_TAGS
    series = CaseSeries.from_csv(args.data, args.population)
    task = WaveTask(series, args.start, args.end, args.family,
                    ode_cfg=_optimizer(args, OptimizerConfig(starts=10)),
                    sde_cfg=_optimizer(args, OptimizerConfig(starts=10)))
    if args.study == "truncation":
        res = wave_truncation(series, args.start, args.end, args.family, args.max_head,
                              args.max_tail, args.step, task=task)
    else:
        res = wave_deletion(series, args.start, args.end, args.family, args.k_max,
                            args.resamples, args.seed or 0, task=task)
    _write(args.out, res.to_csv())
    for tag in WAVE_TAGS:
        _log(f"{tag}: alpha range {res.spread(tag, 'alpha'):.4g}, beta range {res.spread(tag, 'beta'):.4g}")
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(prog="sderobust",
                                  description="ODE vs SDE estimation robustness experiments.")
    top.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = top.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def common(p, out_help="output path (default: stdout)"):
        p.add_argument("--seed", type=int, help="master seed")
        p.add_argument("--out", help=out_help)

    p = sub.add_parser("simulate", help="simulate one trajectory to CSV")
    _add_model_flags(p)
    p.add_argument("--config", help="JSON with model/x0/grid/perturbation fields; flags win")
    p.add_argument("--x0", type=_floats)
    p.add_argument("--T", type=float)
    p.add_argument("--delta", type=float)
    p.add_argument("--fine-step", type=float)
    p.add_argument("--replicate", type=int, default=0)
    p.add_argument("--measurement-var", type=_floats, help="add Gaussian noise with these variances")
    _add_perturbation_flags(p)
    common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="fit one estimator to a trajectory CSV")
    p.add_argument("--data", required=True, help="CSV with a t column and one column per component")
    p.add_argument("--family", required=True, choices=sorted(MODEL_FLAGS))
    p.add_argument("--estimator", required=True, choices=ESTIMATORS)
    p.add_argument("--x0", type=_floats, help="known initial state (ode_lse, partial_ukf)")
    p.add_argument("--starts", type=int)
    p.add_argument("--optimizer-seed", type=int)
    p.add_argument("--out", help="report JSON path (default: stdout)")
    p.set_defaults(func=cmd_fit)

    for name, fn, helptext in (("replicate", cmd_replicate, "Monte Carlo replication of a scenario"),
                               ("contrast", cmd_contrast, "paired perturbed/unperturbed replication")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", required=True, help="scenario JSON")
        p.add_argument("--replicates", type=int)
        p.add_argument("--starts", type=int)
        p.add_argument("--workers", type=int, default=os.cpu_count() or 1)
        if name == "contrast":
            _add_perturbation_flags(p)
        common(p, "output directory")
        p.set_defaults(func=fn)

    p = sub.add_parser("moments", help="closed-form moments of the rate estimator")
    p.add_argument("--scenario", help="JSON with a, b, sigma, sigma0, x0, n or T, delta")
    for name in ("a", "b", "sigma", "sigma0", "x0", "delta"):
        p.add_argument(f"--{name}", type=float, dest=f"s_{name}")
    p.add_argument("--n", type=int)
    p.add_argument("--sweep", type=_sweep_spec, metavar="NAME=START:STOP:STEP")
    p.add_argument("--jump", type=_floats, metavar="T_P,H", help="add jump-perturbed biases")
    p.add_argument("--out", help="JSON path (default: stdout)")
    p.set_defaults(func=cmd_moments)

    def wave_args(p):
        p.add_argument("--data", required=True, help="CSV with date,positives columns")
        p.add_argument("--start", required=True, help="first day of the wave (ISO date)")
        p.add_argument("--end", required=True, help="last day of the wave (ISO date)")
        p.add_argument("--family", choices=("sir", "seir"), default="sir")
        p.add_argument("--population", type=float, default=5_860_000)
        p.add_argument("--starts", type=int)

    p = sub.add_parser("covid-fit", help="fit a wave of daily case counts")
    wave_args(p)
    p.add_argument("--variant", choices=("ode", "sde", "both"), default="both")
    p.add_argument("--band-paths", type=int, default=50)
    common(p, "output directory")
    p.set_defaults(func=cmd_covid_fit)

    p = sub.add_parser("covid-robustness", help="truncation or deletion study on a wave")
    wave_args(p)
    p.add_argument("--study", choices=("truncation", "deletion"), required=True)
    p.add_argument("--max-head", type=int, default=50)
    p.add_argument("--max-tail", type=int, default=70)
    p.add_argument("--step", type=int, default=1)
    p.add_argument("--k-max", type=int, default=30)
    p.add_argument("--resamples", type=int, default=100)
    common(p, "CSV path (default: stdout)")
    p.set_defaults(func=cmd_covid_robustness)
    return top


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        _log(f"sderobust {args.command}: error: {exc}")
        return 2
    except (DomainError, OSError) as exc:
        _log(f"sderobust {args.command}: {exc}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
