"""Data-driven robust MPC for greenhouse heating.

Submodules:
  thermal      lumped RC network, exact discretization, horizon lifting
  weather      truth/forecast ingestion, solar model, forecast-error samples
  uncertainty  SVC-based polytopic uncertainty sets with coverage calibration
  lp           standard-form LP contract over a HiGHS backend
  robust       affine-feedback robust counterparts via LP duality
  controllers  RBC / CEMPC / RMPC / DDRMPC / PB step controllers
  harness      closed-loop simulation, metrics, strategy comparison
  config       experiment configuration tree
  cli          command-line entry point
"""

from .config import ExperimentConfig, config_from_dict, config_to_dict, load_config
from .controllers import (CEMPC, DDRMPC, PB, RBC, RMPC, STRATEGIES,
                          ComfortSchedule, ControllerConfig, make_controller)
from .harness import SimulationReport, compare_strategies, run_closed_loop
from .thermal import (RcNetwork, ThermalModel, build_rc_model, lift,
                      reference_greenhouse_network, simulate_step)
from .uncertainty import (SvcModel, UncertaintySet, calibrate_theta,
                          required_calibration_count, train_svc)
from .weather import (SyntheticWeatherConfig, WeatherDataset, extract_errors,
                      make_synthetic_dataset, split_samples)

__version__ = "0.1.0"

__all__ = [
    "CEMPC", "DDRMPC", "PB", "RBC", "RMPC", "STRATEGIES",
    "ComfortSchedule", "ControllerConfig", "ExperimentConfig", "RcNetwork",
    "SimulationReport", "SvcModel", "SyntheticWeatherConfig", "ThermalModel",
    "UncertaintySet", "WeatherDataset",
    "build_rc_model", "calibrate_theta", "compare_strategies",
    "config_from_dict", "config_to_dict", "extract_errors", "lift",
    "load_config", "make_controller", "make_synthetic_dataset",
    "reference_greenhouse_network", "required_calibration_count",
    "run_closed_loop", "simulate_step", "split_samples", "train_svc",
]
