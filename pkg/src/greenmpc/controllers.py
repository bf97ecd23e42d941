"""Heating controllers: rule-based, certainty-equivalent, and robust MPC.

All controllers expose the same step interface: given the current state, the
step's timestamp and a stacked nominal disturbance forecast, return the first
heating input.  The MPC family shares one robust-program pipeline; they only
differ in the uncertainty sets handed to it (a single point for the
certainty-equivalent and perfect-information variants, an L1 ball for the
fixed-budget robust variant, calibrated data-driven sets otherwise).
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .lp import LpError, solve_lp
from .robust import AdfPolicy, RobustError, RobustLpTemplate, RobustProgram
from .thermal import ThermalModel, lift
from .uncertainty import UncertaintyError, UncertaintySet, l1_ball_set, point_set

RBC = "RBC"
CEMPC = "CEMPC"
RMPC = "RMPC"
DDRMPC = "DDRMPC"
PB = "PB"
STRATEGIES = (RBC, CEMPC, RMPC, DDRMPC, PB)


class ControllerError(RuntimeError):
    """A controller step failed; the caller may fall back and flag the step."""


class ConfigError(ValueError):
    """Invalid controller or schedule configuration."""


@dataclass(frozen=True)
class ComfortSchedule:
    """Lower comfort bound: day level inside [day_start, day_end) local hours."""

    day_start_hour: float = 6.0
    day_end_hour: float = 22.0
    day_min_c: float = 25.0
    night_min_c: float = 18.0
    utc_offset_hours: float = 0.0

    def validate(self) -> None:
        if not (0.0 <= self.day_start_hour < self.day_end_hour <= 24.0):
            raise ConfigError("need 0 <= day_start < day_end <= 24")
        if self.day_min_c < self.night_min_c:
            raise ConfigError("day bound must be >= night bound")

    def bound_at(self, timestamp: int | float) -> float:
        local = ((timestamp / 3600.0 + self.utc_offset_hours) % 24.0)
        if self.day_start_hour <= local < self.day_end_hour:
            return self.day_min_c
        return self.night_min_c

    def bounds_ahead(self, timestamp: int, horizon: int, dt: float) -> np.ndarray:
        """Bounds applying to predicted states 1..H."""
        return np.array([self.bound_at(timestamp + (k + 1) * dt) for k in range(horizon)])


@dataclass(frozen=True)
class ControllerConfig:
    strategy: str = DDRMPC
    horizon: int = 5
    u_max_w: float = 300_000.0
    rbc_power_w: float = 60_000.0
    rbc_deadband_k: float = 7.0
    omega: float = 6.0
    input_cost: float = 1.0
    slack_penalty_per_kh: float = 1e6

    def validate(self) -> None:
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"unknown strategy {self.strategy!r}; expected {STRATEGIES}")
        if self.horizon < 1:
            raise ConfigError("horizon must be >= 1")
        if self.u_max_w <= 0.0:
            raise ConfigError("u_max must be positive")
        if not (0.0 <= self.rbc_power_w <= self.u_max_w):
            raise ConfigError("RBC power must lie in [0, u_max]")
        if self.rbc_deadband_k < 0.0:
            raise ConfigError("RBC deadband must be >= 0")
        if self.omega < 0.0:
            raise ConfigError("omega must be >= 0")
        if self.input_cost < 0.0 or self.slack_penalty_per_kh <= 0.0:
            raise ConfigError("costs must be nonnegative, slack penalty positive")


@dataclass
class StepResult:
    u_w: float
    objective: float | None = None
    softened: bool = False
    slack_total: float = 0.0
    solve_time_s: float = 0.0
    policy: AdfPolicy | None = None


class Controller:
    name: str = "base"
    uses_truth_forecast: bool = False

    def step(self, x: np.ndarray, timestamp: int, forecast_v: np.ndarray | None) -> StepResult:
        raise NotImplementedError


class RbcController(Controller):
    """Bang-bang heating: full configured power whenever the air temperature
    sits at or below the current target plus the deadband, else off."""

    def __init__(self, config: ControllerConfig, model: ThermalModel,
                 schedule: ComfortSchedule):
        config.validate()
        schedule.validate()
        self.name = RBC
        self.config = config
        self.schedule = schedule
        self._air = model.state_index("air")

    def step(self, x: np.ndarray, timestamp: int, forecast_v=None) -> StepResult:
        target = self.schedule.bound_at(timestamp)
        on = x[self._air] <= target + self.config.rbc_deadband_k
        u = self.config.rbc_power_w if on else 0.0
        return StepResult(u_w=float(min(u, self.config.u_max_w)))


def rbc_step(x_air_c: float, timestamp: int, config: ControllerConfig,
             schedule: ComfortSchedule) -> float:
    """Stateless form of the rule, handy as a fallback inside the simulator."""
    target = schedule.bound_at(timestamp)
    if x_air_c <= target + config.rbc_deadband_k:
        return float(min(config.rbc_power_w, config.u_max_w))
    return 0.0


class MpcController(Controller):
    """Receding-horizon controller over the shared robust pipeline.

    Holds a hard-constraint LP template and lazily a soft-constraint variant;
    an infeasible hard program is retried with penalized state slack and the
    step marked as softened.
    """

    def __init__(self, name: str, config: ControllerConfig, model: ThermalModel,
                 schedule: ComfortSchedule, sets: list[UncertaintySet]):
        config.validate()
        schedule.validate()
        self.name = name
        self.config = config
        self.schedule = schedule
        self.model = model
        self.lifted = lift(model, config.horizon)
        H, n, m = config.horizon, model.n, model.m
        air = model.state_index("air")
        F_x = np.zeros((H, H * n))
        for k in range(H):
            F_x[k, k * n + air] = -1.0   # x_air at step k+1 >= bound
        F_u = np.vstack([np.eye(H * m), -np.eye(H * m)])
        self._F_x, self._F_u = F_x, F_u
        self._f_u = np.concatenate([np.full(H * m, config.u_max_w), np.zeros(H * m)])
        cost = np.full(H * m, config.input_cost)
        prototype = RobustProgram(
            lifted=self.lifted, F_x=F_x, f_x=np.zeros(H), F_u=F_u, f_u=self._f_u,
            sets=sets, v=np.zeros(H * model.p), x0=np.zeros(n), cost=cost,
            soften=False, slack_penalty=config.slack_penalty_per_kh,
        )
        self._sets = sets
        self._cost = cost
        self._hard = RobustLpTemplate(prototype)
        self._soft: RobustLpTemplate | None = None

    def _soft_template(self) -> RobustLpTemplate:
        if self._soft is None:
            H, n, m = self.config.horizon, self.model.n, self.model.m
            prototype = RobustProgram(
                lifted=self.lifted, F_x=self._F_x, f_x=np.zeros(H),
                F_u=self._F_u, f_u=self._f_u, sets=self._sets,
                v=np.zeros(H * self.model.p), x0=np.zeros(n), cost=self._cost,
                soften=True, slack_penalty=self.config.slack_penalty_per_kh,
            )
            self._soft = RobustLpTemplate(prototype)
        return self._soft

    def step(self, x: np.ndarray, timestamp: int, forecast_v: np.ndarray) -> StepResult:
        if forecast_v is None:
            raise ControllerError(f"{self.name} requires a disturbance forecast")
        bounds = self.schedule.bounds_ahead(timestamp, self.config.horizon, self.model.dt)
        f_x = -bounds
        started = time.perf_counter()
        softened = False
        slack_total = 0.0
        try:
            template = self._hard
            sol = solve_lp(template.lp_for(x, forecast_v, f_x, self._f_u))
            if sol.status == "infeasible":
                template = self._soft_template()
                sol = solve_lp(template.lp_for(x, forecast_v, f_x, self._f_u))
                softened = True
            if sol.status != "optimal":
                raise ControllerError(f"{self.name} LP ended with status {sol.status}")
            policy = template.extract_policy(sol)
            if softened:
                slack_total = template.slack_total(sol)
        except (LpError, RobustError, UncertaintyError) as exc:
            raise ControllerError(f"{self.name} step failed: {exc}") from exc
        elapsed = time.perf_counter() - started
        u = float(policy.first_input[0])
        u = min(max(u, 0.0), self.config.u_max_w)
        return StepResult(u_w=u, objective=sol.objective, softened=softened,
                          slack_total=slack_total, solve_time_s=elapsed, policy=policy)


def make_controller(config: ControllerConfig, model: ThermalModel,
                    schedule: ComfortSchedule,
                    uncertainty_sets: list[UncertaintySet] | None = None) -> Controller:
    """Instantiate a strategy by name.

    DDRMPC requires calibrated uncertainty sets; the certainty-equivalent and
    perfect-information variants run the same pipeline against the degenerate
    point set at zero, and the fixed-budget variant against one L1 ball over
    the whole stacked error vector.
    """
    config.validate()
    H, q = config.horizon, model.q
    if config.strategy == RBC:
        return RbcController(config, model, schedule)
    if config.strategy in (CEMPC, PB):
        sets = [point_set("joint", np.zeros(H * q))]
        ctrl = MpcController(config.strategy, config, model, schedule, sets)
        ctrl.uses_truth_forecast = config.strategy == PB
        return ctrl
    if config.strategy == RMPC:
        sets = [l1_ball_set("joint", config.omega, H * q)]
        return MpcController(RMPC, config, model, schedule, sets)
    if config.strategy == DDRMPC:
        if not uncertainty_sets:
            raise ConfigError("DDRMPC needs calibrated uncertainty sets (run learn first)")
        return MpcController(DDRMPC, config, model, schedule, uncertainty_sets)
    raise ConfigError(f"unknown strategy {config.strategy!r}")
