"""Experiment configuration: one nested dataclass tree, JSON on disk.

Loading is strict (unknown keys are rejected with their full path) and
round-trips exactly through to_dict/from_dict.  Dotted overrides such as
``controller.strategy=RMPC`` patch the dict form before re-validation.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

import numpy as np

from .controllers import ComfortSchedule, ConfigError, ControllerConfig
from .thermal import RcNetwork, ThermalModel, build_rc_model, reference_greenhouse_network
from .weather import (SyntheticWeatherConfig, WeatherDataset, load_forecast_csv,
                      load_weather_csv, make_synthetic_dataset, parse_timestamp)


@dataclass(frozen=True)
class UncertaintyConfig:
    eps: float = 0.05
    beta: float = 0.10
    nu: float | None = None            # None: reuse eps
    n_calib: int | None = None         # None: smallest count meeting (eps, beta)
    max_train_samples: int | None = None
    kkt_tol: float = 1e-6

    def validate(self) -> None:
        if not (0.0 < self.eps < 1.0) or not (0.0 < self.beta < 1.0):
            raise ConfigError("eps and beta must lie in (0, 1)")
        if self.nu is not None and not (0.0 < self.nu <= 1.0):
            raise ConfigError("nu must lie in (0, 1]")
        if self.n_calib is not None and self.n_calib < 1:
            raise ConfigError("n_calib must be >= 1")
        if self.max_train_samples is not None and self.max_train_samples < 2:
            raise ConfigError("max_train_samples must be >= 2")
        if self.kkt_tol <= 0.0:
            raise ConfigError("kkt_tol must be positive")


@dataclass(frozen=True)
class SyntheticDataConfig:
    start: str = "2018-01-01T00:00:00Z"
    days: int = 30
    temp_mean_c: float = 2.0
    temp_amplitude_c: float = 6.0
    temp_peak_hour_utc: float = 20.0
    cloud_mean_okta: float = 4.0
    cloud_amplitude_okta: float = 3.0
    cloud_period_h: float = 30.0
    ar1_rho: float = 0.6
    temp_sigma_c: float = 0.5
    temp_bias_c: float = 0.0
    temp_clip_c: float | None = None
    solar_sigma_wm2: float = 10.0
    solar_bias_wm2: float = 0.0
    solar_clip_wm2: float | None = None
    seed: int | None = None            # None: derived from the experiment seed

    def validate(self) -> None:
        parse_timestamp(self.start)
        if self.days < 1:
            raise ConfigError("synthetic data needs days >= 1")


@dataclass(frozen=True)
class DataConfig:
    kind: str = "synthetic"            # synthetic | csv
    synthetic: SyntheticDataConfig = field(default_factory=SyntheticDataConfig)
    truth_csv: str | None = None
    forecast_csv: str | None = None

    def validate(self) -> None:
        if self.kind not in ("synthetic", "csv"):
            raise ConfigError(f"data kind must be synthetic or csv, got {self.kind!r}")
        if self.kind == "csv" and not (self.truth_csv and self.forecast_csv):
            raise ConfigError("csv data needs both truth_csv and forecast_csv")
        if self.kind == "synthetic":
            self.synthetic.validate()


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 0
    latitude: float = 40.68
    longitude: float = -73.94
    dt_s: float = 3600.0
    ground_temp_c: float = 18.0
    initial_temp_c: float = 18.0
    network: dict | None = None        # None: reference greenhouse
    schedule: ComfortSchedule = field(default_factory=ComfortSchedule)
    controller: ControllerConfig = field(default_factory=ControllerConfig)
    uncertainty: UncertaintyConfig = field(default_factory=UncertaintyConfig)
    learning_data: DataConfig = field(default_factory=DataConfig)
    simulation_data: DataConfig = field(default_factory=lambda: DataConfig(
        synthetic=SyntheticDataConfig(start="2018-02-01T00:00:00Z", days=7)))
    sim_start: str | None = None       # None: start of the simulation data
    sim_hours: int | None = None       # None: longest covered stretch
    output_dir: str = "out"
    models_dir: str = "models"

    def validate(self) -> None:
        if self.dt_s <= 0.0:
            raise ConfigError("dt must be positive")
        self.schedule.validate()
        self.controller.validate()
        self.uncertainty.validate()
        self.learning_data.validate()
        self.simulation_data.validate()
        if self.sim_start is not None:
            parse_timestamp(self.sim_start)
        if self.sim_hours is not None and self.sim_hours < 1:
            raise ConfigError("sim_hours must be >= 1")
        if self.network is not None:
            RcNetwork.from_dict(self.network).validate()


_NESTED = {
    (ExperimentConfig, "schedule"): ComfortSchedule,
    (ExperimentConfig, "controller"): ControllerConfig,
    (ExperimentConfig, "uncertainty"): UncertaintyConfig,
    (ExperimentConfig, "learning_data"): DataConfig,
    (ExperimentConfig, "simulation_data"): DataConfig,
    (DataConfig, "synthetic"): SyntheticDataConfig,
}


def _from_dict(cls, data: dict, path: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{path or 'config'} must be an object, got {type(data).__name__}")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        where = f"{path}." if path else ""
        raise ConfigError(f"unknown config key(s): {', '.join(where + k for k in unknown)}")
    kwargs = {}
    for key, value in data.items():
        nested = _NESTED.get((cls, key))
        if nested is not None and value is not None:
            value = _from_dict(nested, value, f"{path}.{key}" if path else key)
        kwargs[key] = value
    return cls(**kwargs)


def config_from_dict(data: dict) -> ExperimentConfig:
    cfg = _from_dict(ExperimentConfig, data, "")
    cfg.validate()
    return cfg


def config_to_dict(cfg: ExperimentConfig) -> dict:
    return dataclasses.asdict(cfg)


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return config_from_dict(data)


def save_config(cfg: ExperimentConfig, path) -> None:
    with open(path, "w") as fh:
        json.dump(config_to_dict(cfg), fh, indent=2)
        fh.write("\n")


def _coerce(old, value):
    """Fit an override onto an existing value's type where unambiguous."""
    if isinstance(old, bool):
        if isinstance(value, bool):
            return value
        if isinstance(value, str) and value.lower() in ("true", "false"):
            return value.lower() == "true"
        raise ConfigError(f"expected true/false, got {value!r}")
    if isinstance(old, float) and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    if isinstance(old, int) and isinstance(value, float) and value.is_integer():
        return int(value)
    return value


def apply_overrides(cfg: ExperimentConfig, overrides: list[str]) -> ExperimentConfig:
    """Apply ``dotted.path=value`` patches; values parse as JSON, falling back
    to bare strings, and must address keys that already exist."""
    data = config_to_dict(cfg)
    for item in overrides:
        key, sep, raw = item.partition("=")
        if not sep:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = data
        parts = key.split(".")
        for part in parts[:-1]:
            if not isinstance(node, dict) or part not in node:
                raise ConfigError(f"unknown config key {key!r}")
            node = node[part]
        leaf = parts[-1]
        if not isinstance(node, dict) or leaf not in node:
            raise ConfigError(f"unknown config key {key!r}")
        node[leaf] = _coerce(node[leaf], value)
    return config_from_dict(data)


_DATA_ROLE_KEYS = {"learning": 11, "simulation": 23}


def derived_seed(seed: int, role: str) -> int:
    return int(np.random.SeedSequence(seed, spawn_key=(_DATA_ROLE_KEYS[role],))
               .generate_state(1)[0])


def build_model(cfg: ExperimentConfig) -> ThermalModel:
    network = (RcNetwork.from_dict(cfg.network) if cfg.network is not None
               else reference_greenhouse_network())
    return build_rc_model(network, cfg.dt_s)


def make_dataset(cfg: ExperimentConfig, role: str) -> WeatherDataset:
    """Materialize the learning or simulation weather data."""
    data = cfg.learning_data if role == "learning" else cfg.simulation_data
    if data.kind == "csv":
        truth = load_weather_csv(data.truth_csv, cfg.latitude, cfg.longitude)
        forecasts = load_forecast_csv(data.forecast_csv)
        return WeatherDataset(series=truth, forecasts=forecasts)
    syn = data.synthetic
    seed = syn.seed if syn.seed is not None else derived_seed(cfg.seed, role)
    wcfg = SyntheticWeatherConfig(
        start=parse_timestamp(syn.start), days=syn.days,
        latitude=cfg.latitude, longitude=cfg.longitude,
        horizon=cfg.controller.horizon,
        temp_mean_c=syn.temp_mean_c, temp_amplitude_c=syn.temp_amplitude_c,
        temp_peak_hour_utc=syn.temp_peak_hour_utc,
        cloud_mean_okta=syn.cloud_mean_okta,
        cloud_amplitude_okta=syn.cloud_amplitude_okta,
        cloud_period_h=syn.cloud_period_h, ar1_rho=syn.ar1_rho,
        temp_sigma_c=syn.temp_sigma_c, temp_bias_c=syn.temp_bias_c,
        temp_clip_c=syn.temp_clip_c, solar_sigma_wm2=syn.solar_sigma_wm2,
        solar_bias_wm2=syn.solar_bias_wm2, solar_clip_wm2=syn.solar_clip_wm2,
        seed=seed)
    return make_synthetic_dataset(wcfg)


def simulation_window(cfg: ExperimentConfig, dataset: WeatherDataset) -> tuple[int, int]:
    """Resolve (start, steps) for the closed loop against the data span."""
    timestamps = dataset.series.timestamps()
    if not timestamps:
        raise ConfigError("simulation data holds no truth records")
    start = (parse_timestamp(cfg.sim_start) if cfg.sim_start is not None
             else timestamps[0])
    if cfg.sim_hours is not None:
        return start, cfg.sim_hours
    dt = int(cfg.dt_s)
    horizon = cfg.controller.horizon
    steps = 0
    t = start
    while dataset.series.at(t + horizon * dt) is not None and dataset.series.covers(t, t + horizon * dt):
        steps += 1
        t += dt
    if steps == 0:
        raise ConfigError("simulation data does not cover the requested window")
    return start, steps
