"""
Closed-loop mission simulation.

Each control period the stage-1 controller turns guidance and the current
into setpoints, the two MPCs turn setpoints into thrusts, and the plant is
integrated with RK4 substeps while the thrusts are held. Telemetry is
recorded once per control period and reduced to energy, travel time and
cross-track metrics at the end.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass, asdict, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import guidance as gd
from .mpc import MpcConfig, TrackingMpc
from .optimizer import (
    NoFeasibleSetpointError,
    OptimizerSettings,
    SetpointCommand,
    SetpointProblem,
    optimize_setpoints,
    optimize_surge_benchmark,
)
from .vehicle import (
    CurrentField,
    ThrustCommand,
    VehicleParams,
    VehicleState,
    current_in_body,
    energy_decompose,
    rk4_step,
    thrust_power,
    thrusts_to_tau,
    wrap_angle,
)

__all__ = [
    "TELEMETRY_COLUMNS",
    "SimulationError",
    "SimConfig",
    "RunMetrics",
    "RunResult",
    "ProposedController",
    "LosBenchmarkController",
    "Simulation",
    "initial_state",
    "run_mission",
    "compute_metrics",
    "make_controller",
]

TELEMETRY_COLUMNS = (
    "t", "x", "y", "z", "phi", "theta", "psi", "u_r", "v_r", "w_r", "p", "q", "r",
    "u_rs", "w_rs", "theta_s", "psi_s", "T1", "T2", "T3", "T4", "P_inst",
)
_COL = {name: i for i, name in enumerate(TELEMETRY_COLUMNS)}
CONTROLLERS = ("proposed", "los")


class SimulationError(RuntimeError):
    """A run aborted; ``stage`` names the failing part of the loop."""

    def __init__(self, stage: str, time: float, cause: Exception):
        super().__init__(f"[{stage}] at t={time:.2f} s: {cause}")
        self.stage = stage
        self.time = time
        self.cause = cause


@dataclass(frozen=True)
class SimConfig:
    controller: str = "proposed"
    substep: float = 0.02
    control_period: float = 0.1
    max_time: Optional[float] = None
    telemetry_decimation: int = 1

    def __post_init__(self):
        if self.controller not in CONTROLLERS:
            raise ValueError(f"controller must be one of {CONTROLLERS}, got {self.controller!r}")
        if self.substep <= 0 or self.control_period <= 0:
            raise ValueError("substep and control period must be positive")
        ratio = self.control_period / self.substep
        if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
            raise ValueError("control period must be a positive integer multiple of the substep")
        if self.max_time is not None and self.max_time <= 0:
            raise ValueError("max_time must be positive")
        if self.telemetry_decimation < 1:
            raise ValueError("telemetry_decimation must be >= 1")

    @property
    def substeps(self) -> int:
        return int(round(self.control_period / self.substep))


# Share of the relative sway fed into the yaw law's sideslip term. Full
# feedback (1.0) sets up a yaw limit cycle under cross currents; 0.6 to 0.9
# all settle, 0.7 is mid-band.
SWAY_FEEDBACK = 0.7


def _guidance_state(state: VehicleState) -> VehicleState:
    """Copy with the relative sway scaled by ``SWAY_FEEDBACK``.

    Relative sway is a turning transient that decays on a straight run, so the
    steady crab angle is unchanged.
    """
    s = state.copy()
    s.nu_r[1] *= SWAY_FEEDBACK
    return s


def _stage_context(state: VehicleState, mission: gd.Mission, target: int, current: CurrentField):
    seg = mission.segment(target)
    nu_c = current_in_body(state.eta, current)
    wp = mission.waypoints[target]
    pos = state.eta[:3]
    d_h = math.hypot(wp[0] - pos[0], wp[1] - pos[1])
    d_z = wp[2] - pos[2]
    los = gd.los_position(pos, seg, mission.lookahead_h)
    psi_d = math.atan2(los[1] - pos[1], los[0] - pos[0])
    psi_cd = float(wrap_angle(current.direction - psi_d))
    return seg, nu_c, d_h, d_z, psi_cd


class ProposedController:
    """LOS yaw plus energy-optimal surge, heave and pitch setpoints."""

    kind = "proposed"

    def __init__(self, params: VehicleParams, settings: OptimizerSettings = OptimizerSettings()):
        self.params = params
        self.settings = settings
        self._last: Optional[SetpointCommand] = None
        self._calls = 0

    def __call__(self, state, mission, target, current) -> SetpointCommand:
        seg, nu_c, d_h, d_z, psi_cd = _stage_context(state, mission, target, current)
        psi_s = gd.los_yaw_setpoint(_guidance_state(state), seg, mission.lookahead_h, nu_c)
        last = self._last
        hold = last is not None and (d_h < mission.switch_radius or self._calls % self.settings.decimation)
        self._calls += 1
        if hold:
            sp = SetpointCommand(last.u_rs, last.w_rs, last.theta_s, psi_s, last.energy, last.time)
        else:
            prob = SetpointProblem(self.params, d_h, d_z, current.speed, psi_cd, self.settings)
            try:
                opt = optimize_setpoints(prob, warm_start=last)
                sp = SetpointCommand(opt.u_rs, opt.w_rs, opt.theta_s, psi_s, opt.energy, opt.time)
            except NoFeasibleSetpointError as exc:
                warnings.warn(f"{exc}; falling back to full speed on the LOS pitch", RuntimeWarning)
                theta = gd.los_pitch_setpoint(state, seg, mission.lookahead_v, nu_c, self.settings.theta_max)
                sp = SetpointCommand(self.settings.u_max, 0.0, theta, psi_s)
        self._last = sp
        return sp


class LosBenchmarkController:
    """3D LOS: LOS yaw and pitch, zero heave rate, energy-optimal surge."""

    kind = "los"

    def __init__(self, params: VehicleParams, settings: OptimizerSettings = OptimizerSettings()):
        self.params = params
        self.settings = settings

    def __call__(self, state, mission, target, current) -> SetpointCommand:
        seg, nu_c, d_h, _, psi_cd = _stage_context(state, mission, target, current)
        psi_s = gd.los_yaw_setpoint(_guidance_state(state), seg, mission.lookahead_h, nu_c)
        theta_s = gd.los_pitch_setpoint(state, seg, mission.lookahead_v, nu_c, self.settings.theta_max)
        d_h = max(d_h, 1e-3)
        try:
            opt = optimize_surge_benchmark(theta_s, current.speed, psi_cd, d_h, self.params, self.settings)
            return SetpointCommand(opt.u_rs, 0.0, theta_s, psi_s, opt.energy, opt.time)
        except NoFeasibleSetpointError as exc:
            warnings.warn(f"{exc}; falling back to full speed", RuntimeWarning)
            return SetpointCommand(self.settings.u_max, 0.0, theta_s, psi_s)


def make_controller(kind: str, params: VehicleParams, settings: OptimizerSettings = OptimizerSettings()):
    if kind == "proposed":
        return ProposedController(params, settings)
    if kind == "los":
        return LosBenchmarkController(params, settings)
    raise ValueError(f"unknown controller {kind!r}; expected one of {CONTROLLERS}")


def initial_state(mission: gd.Mission) -> VehicleState:
    """At WP_0, level, heading toward WP_1, at rest relative to the water."""
    wp0, wp1 = mission.waypoints[0], mission.waypoints[1]
    psi = math.atan2(wp1[1] - wp0[1], wp1[0] - wp0[0])
    return VehicleState([wp0[0], wp0[1], wp0[2], 0.0, 0.0, psi], np.zeros(6))


@dataclass
class RunMetrics:
    total_energy: float
    energy_surge: float
    energy_yaw: float
    energy_heave: float
    energy_pitch: float
    travel_time: float
    mean_cross_track: float
    completed: bool
    waypoints_reached: int
    n_waypoints: int

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class RunResult:
    telemetry: np.ndarray
    metrics: RunMetrics
    controller: str
    mission: str
    current: tuple
    segments: np.ndarray = field(repr=False, default=None)
    error: Optional[str] = None

    def column(self, name: str) -> np.ndarray:
        return self.telemetry[:, _COL[name]]

    def metrics_dict(self) -> dict:
        out = {
            "controller": self.controller,
            "mission": self.mission,
            "current": list(self.current),
        }
        out.update(self.metrics.to_dict())
        out["error"] = self.error
        return out

    def write_telemetry_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(TELEMETRY_COLUMNS)
            for row in self.telemetry:
                w.writerow([repr(float(v)) for v in row])

    def write_metrics_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.metrics_dict(), indent=2) + "\n")

    def write_energy_csv(self, path) -> None:
        m = self.metrics
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["dof", "energy_J"])
            for dof in ("surge", "yaw", "heave", "pitch"):
                w.writerow([dof, repr(getattr(m, f"energy_{dof}"))])
            w.writerow(["total", repr(m.total_energy)])


class Simulation:
    """Mutable closed-loop simulation of one mission run."""

    def __init__(self, mission: gd.Mission, current: CurrentField, params: VehicleParams,
                 sim: SimConfig = SimConfig(), optimizer: OptimizerSettings = OptimizerSettings(),
                 mpc: MpcConfig = MpcConfig(), state: Optional[VehicleState] = None,
                 controller=None):
        if abs(mpc.dt - sim.control_period) > 1e-12:
            raise ValueError("MPC step must equal the control period")
        current.check_speed(optimizer.u_max)
        self.mission = mission
        self.current = current
        self.params = params
        self.sim = sim
        self.optimizer = optimizer
        # any callable (state, mission, target, current) -> SetpointCommand
        self.controller = controller or make_controller(sim.controller, params, optimizer)
        self.mpc = TrackingMpc(params, mpc)
        self.state = initial_state(mission) if state is None else state.copy()
        self.target = 1
        self.k = 0
        self.complete = False
        self.rows: list = []
        self.row_targets: list = []
        self.energy = 0.0

    @property
    def time(self) -> float:
        return self.k * self.sim.control_period

    def control(self, sp: SetpointCommand) -> ThrustCommand:
        hsol, vsol = self.mpc(self.state, sp.u_rs, sp.w_rs, sp.theta_s, sp.psi_s)
        return ThrustCommand(hsol.thrusts[0], hsol.thrusts[1], vsol.thrusts[0], vsol.thrusts[1]).clipped(self.params)

    def step(self) -> None:
        """Advance one control period."""
        if self.complete:
            raise RuntimeError("mission already complete")
        t = self.time
        try:
            sp = self.controller(self.state, self.mission, self.target, self.current)
        except Exception as exc:
            raise SimulationError("setpoint", t, exc) from exc
        try:
            cmd = self.control(sp)
        except Exception as exc:
            raise SimulationError("mpc", t, exc) from exc
        power = float(np.sum(thrust_power(np.array(cmd), self.params.alpha)))
        self.rows.append([t, *self.state.eta, *self.state.nu_r,
                          sp.u_rs, sp.w_rs, sp.theta_s, sp.psi_s, *cmd, power])
        self.row_targets.append(self.target)

        tau = thrusts_to_tau(cmd, self.params)
        x = np.concatenate([self.state.eta, self.state.nu_r])
        try:
            for _ in range(self.sim.substeps):
                x = rk4_step(x, tau, self.current, self.params, self.sim.substep)
            self.state = VehicleState(x[:6], x[6:])
        except Exception as exc:
            raise SimulationError("plant", t, exc) from exc
        self.energy += power * self.sim.control_period  # thrust held over the period
        self.k += 1

        if gd.waypoint_switch(self.state.eta, self.mission.waypoints[self.target], self.mission.switch_radius):
            if self.target == self.mission.n_segments:
                self.complete = True
            else:
                self.target += 1

    def run(self) -> RunResult:
        max_time = self.sim.max_time or 4.0 * self.mission.path_length / self.optimizer.u_min
        n_max = int(math.ceil(max_time / self.sim.control_period - 1e-9))
        error = None
        try:
            while not self.complete and self.k < n_max:
                self.step()
        except SimulationError as exc:
            error = str(exc)
        return self.result(error)

    def result(self, error: Optional[str] = None) -> RunResult:
        tel = np.array(self.rows, dtype=float).reshape(-1, len(TELEMETRY_COLUMNS))
        targets = np.array(self.row_targets, dtype=int)
        if len(tel) == 0:
            metrics = RunMetrics(0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, False, 0, self.mission.n_segments)
            return RunResult(tel, metrics, self.sim.controller, self.mission.name,
                             (self.current.vx, self.current.vy), targets, error)
        metrics = compute_metrics(tel, self.mission, targets, self.params, self.sim.control_period)
        metrics.travel_time = self.time
        metrics.completed = bool(self.complete)
        metrics.waypoints_reached = self.target if self.complete else self.target - 1
        if self.sim.telemetry_decimation > 1:
            tel = tel[::self.sim.telemetry_decimation]
            targets = targets[::self.sim.telemetry_decimation]
        return RunResult(tel, metrics, self.sim.controller, self.mission.name,
                         (self.current.vx, self.current.vy), targets, error)


def compute_metrics(telemetry: np.ndarray, mission: gd.Mission, targets, params: VehicleParams,
                    dt: float) -> RunMetrics:
    """Energy, per-DOF energy and mean 3D cross-track error from telemetry.

    Power is held over each control period, so each period contributes the
    trapezoid of a constant. Cross-track samples within the switch radius of
    their target waypoint are left out of the mean.
    """
    tel = np.asarray(telemetry, dtype=float)
    targets = np.asarray(targets, dtype=int)
    if len(tel) == 0:
        raise ValueError("empty telemetry")
    thrusts = tel[:, _COL["T1"]:_COL["T4"] + 1]
    shares = np.array(energy_decompose(thrusts.T, params))
    per_dof = shares.sum(axis=1) * dt
    total = float(np.sum(tel[:, _COL["P_inst"]]) * dt)

    pos = tel[:, _COL["x"]:_COL["z"] + 1]
    errs = []
    for p, i in zip(pos, targets):
        if np.linalg.norm(p - mission.waypoints[i]) > mission.switch_radius:
            errs.append(gd.cross_track_3d(p, mission.segment(i)))
    mean_xt = float(np.mean(errs)) if errs else 0.0
    return RunMetrics(
        total_energy=total,
        energy_surge=float(per_dof[0]),
        energy_yaw=float(per_dof[1]),
        energy_heave=float(per_dof[2]),
        energy_pitch=float(per_dof[3]),
        travel_time=float(len(tel) * dt),
        mean_cross_track=mean_xt,
        completed=False,
        waypoints_reached=0,
        n_waypoints=mission.n_segments,
    )


def run_mission(mission: gd.Mission, current: CurrentField, params: VehicleParams,
                sim: SimConfig = SimConfig(), optimizer: OptimizerSettings = OptimizerSettings(),
                mpc: MpcConfig = MpcConfig()) -> RunResult:
    return Simulation(mission, current, params, sim, optimizer, mpc).run()
