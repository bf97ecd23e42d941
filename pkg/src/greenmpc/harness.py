"""Closed-loop simulation harness and post-run metrics.

The harness walks the true plant model hour by hour, asks a controller for
the heating input against the forecast stack, then propagates with the
realized weather.  Prediction interval k of an MPC step spans
[t + k*dt, t + (k+1)*dt) and is driven by the forecast value at the interval
end, so interval k's error is exactly the lead-(k+1) forecast error used to
train and calibrate the uncertainty sets.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, asdict

import numpy as np

from .controllers import (ComfortSchedule, Controller, ControllerConfig,
                          ControllerError, rbc_step)
from .thermal import ThermalModel, simulate_step, DISTURBANCE_NAMES
from .weather import WeatherDataError, WeatherDataset, forecast_solar

VIOLATION_TOL_K = 1e-6


class SimulationError(RuntimeError):
    pass


def stack_forecast(dataset: WeatherDataset, issued_at: int, horizon: int,
                   ground_c: float) -> np.ndarray:
    """Nominal disturbance stack [solar, ambient, ground] for leads 1..H."""
    entries = dataset.forecasts.leads(issued_at, horizon)
    if entries is None:
        raise SimulationError(f"no complete forecast issued at {issued_at}")
    v = np.empty(horizon * len(DISTURBANCE_NAMES))
    for k, entry in enumerate(entries):
        solar = forecast_solar(entry, dataset.series.latitude, dataset.series.longitude)
        v[3 * k:3 * k + 3] = (solar, entry.temp_forecast_c, ground_c)
    return v


def stack_truth(dataset: WeatherDataset, issued_at: int, horizon: int,
                ground_c: float, dt: float) -> np.ndarray:
    """Realized disturbance stack over the same leads; the oracle forecast."""
    v = np.empty(horizon * len(DISTURBANCE_NAMES))
    for k in range(horizon):
        ts = issued_at + int((k + 1) * dt)
        rec = dataset.series.at(ts)
        if rec is None:
            raise SimulationError(f"no truth record at {ts}")
        solar = dataset.series.solar_measured(ts)
        v[3 * k:3 * k + 3] = (solar, rec.temp_measured_c, ground_c)
    return v


def validate_coverage(dataset: WeatherDataset, start: int, steps: int,
                      dt: float, forecast_horizon: int, truth_horizon: int) -> None:
    """Fail fast if any step of the run would hit a data gap.

    forecast_horizon 0 skips the forecast check (rule-based runs); the truth
    horizon is 1 for simulation only, H when truth doubles as the forecast.
    """
    missing_fc, missing_truth = [], set()
    for i in range(steps):
        t = start + int(i * dt)
        if forecast_horizon and dataset.forecasts.leads(t, forecast_horizon) is None:
            missing_fc.append(t)
        for k in range(1, truth_horizon + 1):
            ts = t + int(k * dt)
            if dataset.series.at(ts) is None:
                missing_truth.add(ts)
    if missing_fc or missing_truth:
        raise SimulationError(
            f"dataset does not cover the run: {len(missing_fc)} issuances without "
            f"a full {forecast_horizon}-lead forecast, {len(missing_truth)} truth "
            f"timestamps missing")


@dataclass
class StepRecord:
    timestamp: int
    x: tuple[float, ...]
    u_w: float
    bound_c: float
    violation_k: float
    realized_v: tuple[float, ...]
    softened: bool = False
    flagged: bool = False
    solve_time_s: float = 0.0
    objective: float | None = None

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "StepRecord":
        d = dict(d)
        d["x"] = tuple(d["x"])
        d["realized_v"] = tuple(d["realized_v"])
        return cls(**d)


@dataclass
class SimulationReport:
    strategy: str
    start: int
    steps: int
    dt: float
    air_index: int
    records: list[StepRecord]
    metrics: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "strategy": self.strategy, "start": self.start, "steps": self.steps,
            "dt": self.dt, "air_index": self.air_index,
            "records": [r.to_dict() for r in self.records],
            "metrics": self.metrics, "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SimulationReport":
        return cls(strategy=d["strategy"], start=d["start"], steps=d["steps"],
                   dt=d["dt"], air_index=d["air_index"],
                   records=[StepRecord.from_dict(r) for r in d["records"]],
                   metrics=dict(d.get("metrics", {})), meta=dict(d.get("meta", {})))

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1)

    @classmethod
    def load(cls, path) -> "SimulationReport":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def digest(self) -> str:
        """Hash of the decision-relevant content.  Wall-clock timings are
        excluded so repeated runs of the same seed compare equal."""
        core = self.to_dict()
        for rec in core["records"]:
            rec.pop("solve_time_s", None)
        core["metrics"] = {k: v for k, v in core["metrics"].items()
                           if "time" not in k}
        core["meta"] = {k: v for k, v in core["meta"].items() if "time" not in k}
        blob = json.dumps(core, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def compute_metrics(records: list[StepRecord], dt: float) -> dict:
    n = len(records)
    dt_h = dt / 3600.0
    energy_mwh = math.fsum(r.u_w for r in records) * dt_h / 1e6
    violations = [r for r in records if r.violation_k > VIOLATION_TOL_K]
    solve_times = [r.solve_time_s for r in records]
    return {
        "n_steps": n,
        "energy_mwh": energy_mwh,
        "n_violations": len(violations),
        "violation_rate": len(violations) / n if n else 0.0,
        "violation_kh": math.fsum(r.violation_k for r in violations) * dt_h,
        "max_violation_k": max((r.violation_k for r in records), default=0.0),
        "n_softened": sum(r.softened for r in records),
        "n_flagged": sum(r.flagged for r in records),
        "mean_solve_time_s": math.fsum(solve_times) / n if n else 0.0,
        "max_solve_time_s": max(solve_times, default=0.0),
    }


def run_closed_loop(model: ThermalModel, controller: Controller,
                    schedule: ComfortSchedule, dataset: WeatherDataset,
                    start: int, steps: int, x0: np.ndarray, ground_c: float,
                    fallback_config: ControllerConfig | None = None,
                    meta: dict | None = None) -> SimulationReport:
    """Simulate `steps` hours.  A controller failure on a step falls back to
    the bang-bang rule (when a fallback config is given) and flags the record
    rather than aborting the run."""
    horizon = getattr(controller, "config", None)
    horizon = horizon.horizon if horizon is not None else 1
    needs_fc = controller.name != "RBC"
    truth_h = horizon if controller.uses_truth_forecast else 1
    validate_coverage(dataset, start, steps, model.dt,
                      horizon if needs_fc else 0, truth_h)

    air = model.state_index("air")
    x = np.asarray(x0, dtype=float).copy()
    if x.shape != (model.n,):
        raise SimulationError(f"x0 must have shape ({model.n},)")
    records: list[StepRecord] = []
    for i in range(steps):
        t = start + int(i * model.dt)
        bound = schedule.bound_at(t)
        violation = max(0.0, bound - float(x[air]))
        forecast_v = None
        if needs_fc:
            if controller.uses_truth_forecast:
                forecast_v = stack_truth(dataset, t, horizon, ground_c, model.dt)
            else:
                forecast_v = stack_forecast(dataset, t, horizon, ground_c)
        softened = flagged = False
        solve_time = 0.0
        objective = None
        try:
            result = controller.step(x, t, forecast_v)
            u, softened = result.u_w, result.softened
            solve_time, objective = result.solve_time_s, result.objective
        except ControllerError:
            if fallback_config is None:
                raise
            u = rbc_step(float(x[air]), t, fallback_config, schedule)
            flagged = True
        realized = stack_truth(dataset, t, 1, ground_c, model.dt)
        records.append(StepRecord(
            timestamp=t, x=tuple(float(s) for s in x), u_w=float(u),
            bound_c=bound, violation_k=violation,
            realized_v=tuple(float(s) for s in realized),
            softened=softened, flagged=flagged, solve_time_s=solve_time,
            objective=objective))
        x = simulate_step(model, x, np.array([u]), realized)
    report = SimulationReport(
        strategy=controller.name, start=start, steps=steps, dt=model.dt,
        air_index=air, records=records, meta=dict(meta or {}))
    report.metrics = compute_metrics(records, model.dt)
    return report


def compare_strategies(reports: list[SimulationReport]) -> list[dict]:
    """Metric rows for runs over an identical period, PB last if present."""
    if not reports:
        return []
    key = (reports[0].start, reports[0].steps, reports[0].dt)
    for rep in reports[1:]:
        if (rep.start, rep.steps, rep.dt) != key:
            raise SimulationError("cannot compare runs over different periods")
    ordered = sorted(reports, key=lambda r: r.strategy == "PB")
    pb = next((r for r in ordered if r.strategy == "PB"), None)
    rows = []
    for rep in ordered:
        row = {"strategy": rep.strategy}
        row.update(rep.metrics)
        if pb is not None and pb.metrics["energy_mwh"] > 0.0:
            row["energy_vs_pb_pct"] = 100.0 * (
                rep.metrics["energy_mwh"] / pb.metrics["energy_mwh"] - 1.0)
        rows.append(row)
    return rows


TRADEOFF_FIELDS = ("strategy", "energy_mwh", "violation_rate", "violation_kh",
                   "n_violations", "max_violation_k", "energy_vs_pb_pct")


def write_tradeoff_csv(path, rows: list[dict]) -> None:
    with open(path, "w") as fh:
        fh.write(",".join(TRADEOFF_FIELDS) + "\n")
        for row in rows:
            fh.write(",".join(
                (repr(row[k]) if isinstance(row.get(k), float) else str(row.get(k, "")))
                for k in TRADEOFF_FIELDS) + "\n")


def write_steps_csv(path, report: SimulationReport) -> None:
    names = DISTURBANCE_NAMES
    with open(path, "w") as fh:
        fh.write("timestamp,air_c," + ",".join(f"x{i}" for i in range(len(report.records[0].x)))
                 + ",u_w,bound_c,violation_k," + ",".join(names)
                 + ",softened,flagged\n")
        for r in report.records:
            fields = [str(r.timestamp), repr(r.x[report.air_index])]
            fields += [repr(v) for v in r.x]
            fields += [repr(r.u_w), repr(r.bound_c), repr(r.violation_k)]
            fields += [repr(v) for v in r.realized_v]
            fields += [str(int(r.softened)), str(int(r.flagged))]
            fh.write(",".join(fields) + "\n")


def detect_cycle(values, tol: float = 1e-9, max_period: int | None = None) -> int | None:
    """Smallest period p such that the tail of `values` repeats with period p
    at least twice; None when no such period exists."""
    vals = list(values)
    n = len(vals)
    limit = max_period or n // 2
    for p in range(1, limit + 1):
        if n < 2 * p:
            break
        if all(abs(vals[n - k] - vals[n - k - p]) <= tol for k in range(1, p + 1)):
            return p
    return None
