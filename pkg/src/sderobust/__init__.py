"""ODE versus SDE parameter estimation under model misspecification."""

__version__ = "0.1.0"

from .core import (DomainError, EstimateReport, Linear, MeasurementSpec, Seir, Sir, TimeGrid,
                   Trajectory, as_ode, model_from_theta, noise_match_linear, noise_match_sir,
                   rng_stream)
from .estimators import (OptimizerConfig, fit_ode_lse, fit_ou_mle, fit_partial_ukf,
                         fit_sir_strang, fit_trajectory, strang_negloglik, ukf_negloglik)
from .experiments import (ScenarioConfig, deletion_study, run_contrast, run_scenario,
                          truncation_study)
from .moments import LinearScenario, MomentSet, moment_summary
from .sim import (Jump, NoPerturbation, PrematureEpidemic, QuadraticDrift, RandomMean,
                  SimulationPlan, add_measurement_noise, simulate)

__all__ = [
    "DomainError", "EstimateReport", "Linear", "MeasurementSpec", "Seir", "Sir", "TimeGrid",
    "Trajectory", "as_ode", "model_from_theta", "noise_match_linear", "noise_match_sir",
    "rng_stream", "OptimizerConfig", "fit_ode_lse", "fit_ou_mle", "fit_partial_ukf",
    "fit_sir_strang", "fit_trajectory", "strang_negloglik", "ukf_negloglik", "ScenarioConfig",
    "deletion_study", "run_contrast", "run_scenario", "truncation_study", "LinearScenario",
    "MomentSet", "moment_summary", "Jump", "NoPerturbation", "PrematureEpidemic",
    "QuadraticDrift", "RandomMean", "SimulationPlan", "add_measurement_noise", "simulate",
]
