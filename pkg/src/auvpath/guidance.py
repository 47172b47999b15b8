"""
Waypoint paths and line-of-sight (LOS) guidance.

Straight segments join consecutive waypoints. The horizontal LOS law gives a
yaw setpoint with sideslip compensation; the vertical LOS law gives a pitch
setpoint with attack-angle compensation and is used by the benchmark
controller only.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .vehicle import VehicleState, wrap_angle

__all__ = [
    "DegenerateSegmentError",
    "UndefinedAngleError",
    "Mission",
    "PathSegment",
    "horizontal_cross_track",
    "vertical_cross_track",
    "cross_track_3d",
    "sideslip_angle",
    "attack_angle",
    "los_position",
    "los_yaw_setpoint",
    "los_pitch_setpoint",
    "waypoint_switch",
    "lawnmower_mission",
    "inspection_mission",
    "load_mission",
]

MIN_SPEED = 1e-6


class DegenerateSegmentError(ValueError):
    """Segment has no horizontal extent."""


class UndefinedAngleError(ValueError):
    """Flow angle requested at (near) zero total speed."""


@dataclass(frozen=True)
class PathSegment:
    start: np.ndarray
    end: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "start", np.asarray(self.start, dtype=float))
        object.__setattr__(self, "end", np.asarray(self.end, dtype=float))
        if self.horizontal_length <= 0.0:
            raise DegenerateSegmentError(
                f"segment {self.start.tolist()} -> {self.end.tolist()} has no horizontal extent"
            )

    @property
    def horizontal_length(self) -> float:
        return math.hypot(self.end[0] - self.start[0], self.end[1] - self.start[1])

    @property
    def gamma_h(self) -> float:
        """Horizontal path-tangential angle."""
        return math.atan2(self.end[1] - self.start[1], self.end[0] - self.start[0])

    @property
    def gamma_v(self) -> float:
        """Vertical path-tangential angle (negative when the path descends)."""
        return math.atan2(self.start[2] - self.end[2], self.horizontal_length)


@dataclass(frozen=True)
class Mission:
    """Ordered waypoints WP_0..WP_N (WP_0 is the start position)."""

    waypoints: np.ndarray
    switch_radius: float = 2.0
    lookahead_h: float = 2.0
    lookahead_v: float = 2.0
    name: str = "custom"

    def __post_init__(self):
        wp = np.asarray(self.waypoints, dtype=float)
        object.__setattr__(self, "waypoints", wp)
        if wp.ndim != 2 or wp.shape[1] != 3:
            raise ValueError("waypoints must be a list of (x, y, z) triples")
        if len(wp) < 2:
            raise ValueError("a mission needs at least two waypoints")
        if self.switch_radius <= 0 or self.lookahead_h <= 0 or self.lookahead_v <= 0:
            raise ValueError("switch radius and lookahead distances must be positive")
        for i in range(1, len(wp)):
            sep = math.hypot(*(wp[i, :2] - wp[i - 1, :2]))
            if sep <= self.switch_radius:
                raise DegenerateSegmentError(
                    f"waypoints {i - 1} and {i} are {sep:.3f} m apart horizontally; "
                    f"need more than the switch radius {self.switch_radius} m"
                )

    @property
    def n_segments(self) -> int:
        return len(self.waypoints) - 1

    def segment(self, i: int) -> PathSegment:
        """Segment ending at target waypoint ``i`` (1-based)."""
        return PathSegment(self.waypoints[i - 1], self.waypoints[i])

    @property
    def path_length(self) -> float:
        return float(np.sum(np.linalg.norm(np.diff(self.waypoints, axis=0), axis=1)))

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "waypoints": self.waypoints.tolist(),
            "switch_radius": self.switch_radius,
            "lookahead_h": self.lookahead_h,
            "lookahead_v": self.lookahead_v,
        }


def horizontal_cross_track(pos, seg: PathSegment) -> float:
    g = seg.gamma_h
    return -(pos[0] - seg.start[0]) * math.sin(g) + (pos[1] - seg.start[1]) * math.cos(g)


def vertical_cross_track(pos, seg: PathSegment) -> float:
    g = seg.gamma_v
    rho = math.hypot(pos[0] - seg.start[0], pos[1] - seg.start[1])
    return rho * math.sin(g) + (pos[2] - seg.start[2]) * math.cos(g)


def cross_track_3d(pos, seg: PathSegment) -> float:
    """Distance from ``pos`` to the infinite 3D line through the segment."""
    d = seg.end - seg.start
    r = np.asarray(pos, dtype=float) - seg.start
    return float(np.linalg.norm(np.cross(r, d)) / np.linalg.norm(d))


def _total_velocity(state: VehicleState, nu_c):
    return state.nu_r[:3] + np.asarray(nu_c)[:3]


def sideslip_angle(state: VehicleState, nu_c) -> float:
    u, v, w = _total_velocity(state, nu_c)
    theta = state.eta[4]
    x = u * math.cos(theta) + w * math.sin(theta)
    if math.hypot(x, v) < MIN_SPEED:
        raise UndefinedAngleError("sideslip undefined at zero planar speed")
    return math.atan2(v, x)


def attack_angle(state: VehicleState, nu_c) -> float:
    u, _, w = _total_velocity(state, nu_c)
    if math.hypot(u, w) < MIN_SPEED:
        raise UndefinedAngleError("attack angle undefined at zero speed")
    return math.atan2(w, u)


def los_position(pos, seg: PathSegment, lookahead: float) -> np.ndarray:
    """Horizontal LOS point: the vehicle's projection on the path moved ``lookahead`` ahead."""
    g = seg.gamma_h
    t = np.array([math.cos(g), math.sin(g)])
    along = float(np.dot(np.asarray(pos[:2]) - seg.start[:2], t))
    return seg.start[:2] + (along + lookahead) * t


def _safe_angle(fn, state, nu_c, label):
    try:
        return fn(state, nu_c)
    except UndefinedAngleError:
        warnings.warn(f"{label} undefined at zero speed; using 0", RuntimeWarning, stacklevel=3)
        return 0.0


def los_yaw_setpoint(state: VehicleState, seg: PathSegment, lookahead: float, nu_c) -> float:
    """Yaw setpoint ``gamma_h - atan(y_e / lookahead) - beta``, wrapped."""
    if lookahead <= 0:
        raise ValueError("lookahead must be positive")
    y_e = horizontal_cross_track(state.eta, seg)
    beta = _safe_angle(sideslip_angle, state, nu_c, "sideslip")
    return float(wrap_angle(seg.gamma_h - math.atan(y_e / lookahead) - beta))


def los_pitch_setpoint(state: VehicleState, seg: PathSegment, lookahead: float, nu_c,
                       theta_max: float = math.radians(45.0)) -> float:
    """Benchmark pitch setpoint ``gamma_v + atan(z_e / lookahead) + alpha``, clamped."""
    if lookahead <= 0:
        raise ValueError("lookahead must be positive")
    z_e = vertical_cross_track(state.eta, seg)
    a = _safe_angle(attack_angle, state, nu_c, "attack angle")
    theta = float(wrap_angle(seg.gamma_v + math.atan(z_e / lookahead) + a))
    return min(max(theta, -theta_max), theta_max)


def waypoint_switch(pos, target, radius: float = 2.0) -> bool:
    return float(np.linalg.norm(np.asarray(pos[:3], dtype=float) - np.asarray(target, dtype=float))) < radius


def lawnmower_mission(**kwargs) -> Mission:
    wps = [(0, 0, 0), (30, 0, 10), (30, 10, 7), (0, 10, 1),
           (0, 20, 2), (30, 20, 6), (30, 30, 5), (0, 30, 3)]
    return Mission(np.array(wps, dtype=float), name="lawnmower", **kwargs)


def inspection_mission(**kwargs) -> Mission:
    """Helical waypoints around a 7 m radius column, descending 2 m per waypoint."""
    i = np.arange(13)
    ang = np.pi * (2 * i + 9) / 6
    wps = np.column_stack([7 * np.cos(ang) + 7, 7 * np.sin(ang) + 7, 2.0 * i])
    return Mission(wps, name="inspection", **kwargs)


BUILTIN_MISSIONS = {"lawnmower": lawnmower_mission, "inspection": inspection_mission}


def load_mission(path) -> Mission:
    """Load a mission from JSON.

    Accepts either a bare list of ``[x, y, z]`` triples or an object with a
    ``waypoints`` list and optional ``switch_radius``, ``lookahead_h``,
    ``lookahead_v`` and ``name``.
    """
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}:{exc.lineno}: malformed JSON ({exc.msg})") from exc
    if isinstance(data, list):
        data = {"waypoints": data}
    allowed = {"waypoints", "switch_radius", "lookahead_h", "lookahead_v", "name"}
    unknown = set(data) - allowed
    if unknown:
        raise ValueError(f"{path}: unknown mission keys: {', '.join(sorted(unknown))}")
    if "waypoints" not in data:
        raise ValueError(f"{path}: mission has no 'waypoints'")
    data.setdefault("name", path.stem)
    try:
        return Mission(**data)
    except ValueError as exc:
        raise ValueError(f"{path}: {exc}") from exc
