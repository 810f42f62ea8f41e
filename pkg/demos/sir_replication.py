"""SIR data x fit table: ODE least squares vs Strang pseudo-likelihood.

Each replicate simulates deterministic data (plus matched measurement noise)
and stochastic data, then fits both. Least squares on stochastic data overshoots
alpha by around 15 percent; the Strang fit stays close to the truth.
"""
import argparse
from pathlib import Path

from sderobust.experiments import ScenarioConfig, run_scenario

ap = argparse.ArgumentParser()
ap.add_argument("--replicates", type=int, default=20)
ap.add_argument("--out", help="directory for per-cell CSVs")
args = ap.parse_args()

cfg = ScenarioConfig.from_json(Path(__file__).parent / "configs" / "table2.json").replace(
    replicates=args.replicates)
res = run_scenario(cfg, progress=print)
print(f"\ntruth alpha = 0.5, beta = 0.3; means (sd) over {args.replicates} replicates")
for data in ("ode", "sde"):
    for fit in ("ode_lse", "sir_strang"):
        s = res.cell(data, fit).summary()["estimates"]
        print(f"  {data} data, {fit:>10}: alpha {s['alpha']['mean']:.4f} ({s['alpha']['variance']**0.5:.4f})"
              f"  beta {s['beta']['mean']:.4f} ({s['beta']['variance']**0.5:.4f})")
if args.out:
    print("wrote", res.write(args.out))
