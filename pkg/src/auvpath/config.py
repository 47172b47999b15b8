"""
Run configuration files.

A run config is a JSON object::

    {
      "vehicle": "vehicle.json",          # optional, built-in default otherwise
      "mission": "lawnmower",             # built-in name or path to a mission file
      "controller": "proposed",           # or "los"
      "current": [0.0417, 0.0963],
      "currents": [[0.0417, 0.0963], ...],  # compare; defaults to the five reference currents
      "missions": ["lawnmower", "inspection"],  # compare
      "sweep_grid": {"vx": [...], "vy": [...]},  # sweep
      "optimizer": {...}, "mpc": {...}, "sim": {...},
      "output_dir": "out",
      "workers": 1
    }

Relative paths resolve against the config file's directory. The output
directory can be overridden with the ``AUVPATH_OUTPUT_DIR`` environment
variable.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Optional

from . import guidance as gd
from .engine import SimConfig, CONTROLLERS
from .mpc import MpcConfig
from .optimizer import OptimizerSettings
from .vehicle import CurrentField, VehicleParams, default_vehicle_params, load_vehicle_params

__all__ = ["ConfigError", "RunConfig", "load_run_config", "resolve_mission", "REFERENCE_CURRENTS"]

OUTPUT_ENV = "AUVPATH_OUTPUT_DIR"

REFERENCE_CURRENTS = (
    (0.0417, 0.0963),
    (0.0841, -0.1718),
    (-0.0342, -0.0678),
    (-0.0541, 0.1382),
    (0.0, 0.0),
)

_TOP_KEYS = {"vehicle", "mission", "missions", "controller", "current", "currents", "sweep_grid",
             "optimizer", "mpc", "sim", "output_dir", "workers"}


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending file and key."""


def resolve_mission(spec, base: Optional[Path] = None) -> gd.Mission:
    """Built-in mission by name, or a mission file path."""
    if isinstance(spec, gd.Mission):
        return spec
    if spec in gd.BUILTIN_MISSIONS:
        return gd.BUILTIN_MISSIONS[spec]()
    path = Path(spec)
    if base is not None and not path.is_absolute():
        path = base / path
    if not path.exists():
        raise ConfigError(
            f"mission {spec!r} is neither a built-in ({', '.join(gd.BUILTIN_MISSIONS)}) nor an existing file"
        )
    try:
        return gd.load_mission(path)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _section(cls, data, where):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected an object")
    names = {f.name for f in fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}; allowed {sorted(names)}")
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def _current(value, where) -> CurrentField:
    try:
        vx, vy = (float(v) for v in value)
    except (TypeError, ValueError):
        raise ConfigError(f"{where}: current must be a pair [vx, vy], got {value!r}") from None
    return CurrentField(vx, vy)


@dataclass
class RunConfig:
    params: VehicleParams = field(default_factory=default_vehicle_params)
    mission: gd.Mission = field(default_factory=gd.lawnmower_mission)
    missions: tuple = ("lawnmower", "inspection")
    controller: str = "proposed"
    current: CurrentField = field(default_factory=CurrentField)
    currents: tuple = REFERENCE_CURRENTS
    sweep_grid: Optional[dict] = None
    optimizer: OptimizerSettings = field(default_factory=OptimizerSettings)
    mpc: MpcConfig = field(default_factory=MpcConfig)
    sim: SimConfig = field(default_factory=SimConfig)
    output_dir: Path = Path("out")
    workers: int = 1
    source: Optional[Path] = None

    def __post_init__(self):
        if self.controller not in CONTROLLERS:
            raise ConfigError(f"controller must be one of {CONTROLLERS}, got {self.controller!r}")
        if self.sim.controller != self.controller:
            self.sim = replace(self.sim, controller=self.controller)
        if abs(self.mpc.dt - self.sim.control_period) > 1e-12:
            raise ConfigError("mpc.dt must equal sim.control_period")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        self.check_current(self.current)

    def check_current(self, current: CurrentField) -> None:
        try:
            current.check_speed(self.optimizer.u_max)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def with_overrides(self, mission=None, controller=None, current=None, output_dir=None) -> "RunConfig":
        cfg = replace(self)
        if mission is not None:
            cfg.mission = resolve_mission(mission)
            cfg.missions = (mission,)
        if controller is not None:
            if controller not in CONTROLLERS:
                raise ConfigError(f"controller must be one of {CONTROLLERS}, got {controller!r}")
            cfg.controller = controller
            cfg.sim = replace(cfg.sim, controller=controller)
        if current is not None:
            cfg.current = current
            cfg.currents = ((current.vx, current.vy),)
            cfg.check_current(current)
        if output_dir is not None:
            cfg.output_dir = Path(output_dir)
        return cfg


def load_run_config(path=None) -> RunConfig:
    """Parse and validate a run config; ``None`` gives the defaults."""
    if path is None:
        cfg = RunConfig()
    else:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"{path}: config file not found")
        try:
            data = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: malformed JSON ({exc.msg})") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: expected a JSON object")
        unknown = set(data) - _TOP_KEYS
        if unknown:
            raise ConfigError(f"{path}: unknown keys {sorted(unknown)}")
        base = path.parent

        kw = {"source": path}
        if "vehicle" in data:
            vpath = Path(data["vehicle"])
            vpath = vpath if vpath.is_absolute() else base / vpath
            if not vpath.exists():
                raise ConfigError(f"{path}: vehicle file {vpath} not found")
            try:
                kw["params"] = load_vehicle_params(vpath)
            except ValueError as exc:
                raise ConfigError(str(exc)) from exc
        if "mission" in data:
            kw["mission"] = resolve_mission(data["mission"], base)
        if "missions" in data:
            for m in data["missions"]:
                resolve_mission(m, base)
            kw["missions"] = tuple(m if m in gd.BUILTIN_MISSIONS else str(base / m) for m in data["missions"])
        if "controller" in data:
            kw["controller"] = data["controller"]
        elif isinstance(data.get("sim"), dict) and "controller" in data["sim"]:
            kw["controller"] = data["sim"]["controller"]
        if "current" in data:
            kw["current"] = _current(data["current"], f"{path}: current")
        if "currents" in data:
            kw["currents"] = tuple(
                (c.vx, c.vy) for c in (_current(v, f"{path}: currents") for v in data["currents"])
            )
        if "sweep_grid" in data:
            grid = data["sweep_grid"]
            if not isinstance(grid, dict) or set(grid) != {"vx", "vy"}:
                raise ConfigError(f"{path}: sweep_grid must be an object with 'vx' and 'vy' lists")
            kw["sweep_grid"] = {k: [float(v) for v in grid[k]] for k in ("vx", "vy")}
        kw["optimizer"] = _section(OptimizerSettings, data.get("optimizer"), f"{path}: optimizer")
        kw["mpc"] = _section(MpcConfig, data.get("mpc"), f"{path}: mpc")
        kw["sim"] = _section(SimConfig, data.get("sim"), f"{path}: sim")
        if "output_dir" in data:
            out = Path(data["output_dir"])
            kw["output_dir"] = out if out.is_absolute() else base / out
        if "workers" in data:
            kw["workers"] = int(data["workers"])
        try:
            cfg = RunConfig(**kw)
        except ConfigError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        for vx, vy in cfg.currents:
            try:
                cfg.check_current(CurrentField(vx, vy))
            except ConfigError as exc:
                raise ConfigError(f"{path}: currents: {exc}") from exc
    env_out = os.environ.get(OUTPUT_ENV)
    if env_out:
        cfg.output_dir = Path(env_out)
    return cfg
