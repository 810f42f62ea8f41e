"""Linear model: the same decay seen through measurement noise and through system noise.

Simulates one noisy ODE path and one OU path with matched stationary spread,
then fits each with least squares (ODE view) and the closed-form OU MLE
(SDE view).
"""
import math

from sderobust.core import Linear, MeasurementSpec, TimeGrid, noise_match_linear
from sderobust.estimators import OptimizerConfig, fit_ode_lse, fit_ou_mle
from sderobust.sim import SimulationPlan, add_measurement_noise, simulate

a, b, x0, sigma0 = 0.05, 0.0, 5.0, 0.05
sigma = noise_match_linear(a, sigma0)
grid = TimeGrid.from_horizon(100, 2)
print(f"a = {a}, measurement sd {sigma0} <-> diffusion {sigma:.4f} (same stationary variance)")

ode = add_measurement_noise(simulate(SimulationPlan(Linear(a, b), (x0,), grid, seed=1)),
                            MeasurementSpec((sigma0**2,), (0,)), seed=1)
sde = simulate(SimulationPlan(Linear(a, b, sigma), (x0,), grid, seed=1))

print(f"\n{'data':>5} {'fit':>8} {'a-hat':>9} {'b-hat':>9} {'rho-hat':>9}")
for name, data in (("ode", ode), ("sde", sde)):
    lse = fit_ode_lse(data, "linear", (x0,), OptimizerConfig(starts=3)).theta_hat
    print(f"{name:>5} {'lse':>8} {lse['a']:9.5f} {lse['b']:9.5f} {math.exp(-2 * lse['a']):9.5f}")
    m = fit_ou_mle(data)
    a_hat = f"{m.a_hat:9.5f}" if m.a_hat is not None else "      n/a"
    print(f"{name:>5} {'ou mle':>8} {a_hat} {m.b_hat:9.5f} {m.rho_hat:9.5f}")
print(f"\ntrue rho = exp(-a delta) = {math.exp(-2 * a):.5f}")
