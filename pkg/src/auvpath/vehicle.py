"""
Six-DOF plant model of a four-thruster, positively buoyant AUV.

The vehicle has two horizontal thrusters (T1 left, T2 right) acting in surge
and yaw, and two vertical thrusters (T3 fore, T4 aft) acting in heave and
pitch. Sway and roll are unactuated.

Conventions
-----------
- Earth frame is NED (z positive down), Euler angles are Z-Y-X.
- Velocities are relative to a constant, irrotational, horizontal current.
- Added mass entries follow the usual hydrodynamic-derivative sign, so
  ``m - X_udot > 0``. Linear damping entries are positive.
- Positive buoyancy means ``W - B < 0``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, fields, asdict
from functools import cached_property
from pathlib import Path
from typing import NamedTuple

import numpy as np

__all__ = [
    "SingularityError",
    "VehicleParams",
    "VehicleState",
    "CurrentField",
    "ThrustCommand",
    "wrap_angle",
    "rotation_matrix",
    "body_to_earth_transform",
    "current_in_body",
    "thrusts_to_tau",
    "thrust_power",
    "dynamics_derivative",
    "energy_decompose",
    "load_vehicle_params",
    "default_vehicle_params",
    "state_derivative",
    "rk4_step",
]

THETA_GUARD = 1e-6
DEFAULT_PARAMS_PATH = Path(__file__).parent / "data" / "default_vehicle.json"


class SingularityError(ValueError):
    """Pitch too close to +-pi/2 for the Euler-angle kinematics."""


def wrap_angle(a):
    """Wrap an angle (or array of angles) to (-pi, pi]."""
    return np.pi - np.mod(np.pi - a, 2.0 * np.pi)


@dataclass(frozen=True)
class VehicleParams:
    """Physical constants of the vehicle.

    Units are SI. Added masses are hydrodynamic derivatives (negative),
    damping coefficients are positive and enter as ``-X_u * u_r`` etc.
    """

    m: float
    X_udot: float
    Y_vdot: float
    Z_wdot: float
    K_pdot: float
    M_qdot: float
    N_rdot: float
    X_u: float
    Y_v: float
    Z_w: float
    K_p: float
    M_q: float
    N_r: float
    W: float
    B: float
    z_g: float
    z_b: float
    l_v: float
    l_h: float
    I_xx: float
    I_yy: float
    I_zz: float
    alpha: float
    T_min: float
    T_max: float

    def __post_init__(self):
        problems = []
        for name in ("m", "I_xx", "I_yy", "I_zz", "alpha", "l_v", "l_h"):
            if not getattr(self, name) > 0:
                problems.append(f"{name} must be > 0")
        if not self.T_min < 0 < self.T_max:
            problems.append("thrust limits must satisfy T_min < 0 < T_max")
        if self.B < self.W:
            problems.append("vehicle must not be negatively buoyant (B >= W)")
        for name in ("X_u", "Y_v", "Z_w", "K_p", "M_q", "N_r"):
            if not getattr(self, name) > 0:
                problems.append(f"damping {name} must be > 0")
        for name, val in zip(("surge", "sway", "heave", "roll", "pitch", "yaw"), self.inertia_diag):
            if not val > 0:
                problems.append(f"effective {name} inertia must be > 0")
        if problems:
            raise ValueError("invalid vehicle parameters: " + "; ".join(problems))

    @cached_property
    def inertia_diag(self) -> np.ndarray:
        """Diagonal of the total (rigid body + added) mass matrix."""
        return np.array([
            self.m - self.X_udot, self.m - self.Y_vdot, self.m - self.Z_wdot,
            self.I_xx - self.K_pdot, self.I_yy - self.M_qdot, self.I_zz - self.N_rdot,
        ])

    @cached_property
    def damping_diag(self) -> np.ndarray:
        return np.array([self.X_u, self.Y_v, self.Z_w, self.K_p, self.M_q, self.N_r])

    @property
    def restoring_moment(self) -> float:
        """``z_g W - z_b B``; positive for a vehicle that is stable in pitch and roll."""
        return self.z_g * self.W - self.z_b * self.B

    @classmethod
    def from_dict(cls, data: dict) -> "VehicleParams":
        names = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - names)
        missing = sorted(names - set(data))
        if unknown or missing:
            msg = []
            if unknown:
                msg.append("unknown keys: " + ", ".join(unknown))
            if missing:
                msg.append("missing keys: " + ", ".join(missing))
            raise ValueError("vehicle parameter file: " + "; ".join(msg))
        return cls(**{k: float(v) for k, v in data.items()})

    def to_dict(self) -> dict:
        return asdict(self)


def load_vehicle_params(path) -> VehicleParams:
    """Load a flat JSON vehicle parameter file, rejecting unknown or missing keys."""
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}:{exc.lineno}: malformed JSON ({exc.msg})") from exc
    if not isinstance(data, dict):
        raise ValueError(f"{path}: expected a JSON object of parameter values")
    try:
        params = VehicleParams.from_dict(data)
    except ValueError as exc:
        raise ValueError(f"{path}: {exc}") from exc
    # neutral buoyancy is only for analysis; mission vehicles must float
    if not params.B > params.W:
        raise ValueError(f"{path}: vehicle must be positively buoyant (B > W)")
    return params


def default_vehicle_params() -> VehicleParams:
    return load_vehicle_params(DEFAULT_PARAMS_PATH)


@dataclass
class VehicleState:
    """Pose ``eta`` (x, y, z, phi, theta, psi) and relative velocity ``nu_r``."""

    eta: np.ndarray
    nu_r: np.ndarray

    def __post_init__(self):
        self.eta = np.asarray(self.eta, dtype=float).copy()
        self.nu_r = np.asarray(self.nu_r, dtype=float).copy()
        if self.eta.shape != (6,) or self.nu_r.shape != (6,):
            raise ValueError("eta and nu_r must be 6-vectors")
        self.eta[3:] = wrap_angle(self.eta[3:])
        if abs(self.eta[4]) >= np.pi / 2 - THETA_GUARD:
            raise SingularityError(f"pitch {self.eta[4]:.6f} rad at the Euler singularity")

    @property
    def position(self) -> np.ndarray:
        return self.eta[:3]

    def copy(self) -> "VehicleState":
        return VehicleState(self.eta, self.nu_r)


@dataclass(frozen=True)
class CurrentField:
    """Constant horizontal ocean current in the earth frame."""

    vx: float = 0.0
    vy: float = 0.0

    @property
    def speed(self) -> float:
        return math.hypot(self.vx, self.vy)

    @property
    def direction(self) -> float:
        return math.atan2(self.vy, self.vx)

    @property
    def earth_velocity(self) -> np.ndarray:
        return np.array([self.vx, self.vy, 0.0])

    def check_speed(self, max_relative_speed: float) -> None:
        if not self.speed < max_relative_speed:
            raise ValueError(
                f"current speed {self.speed:.4f} m/s must be below the maximum "
                f"relative vehicle speed {max_relative_speed:.4f} m/s"
            )


class ThrustCommand(NamedTuple):
    """Thruster forces in N: left/right horizontal, fore/aft vertical."""

    t1: float
    t2: float
    t3: float
    t4: float

    def clipped(self, params: VehicleParams) -> "ThrustCommand":
        return ThrustCommand(*np.clip(self, params.T_min, params.T_max).tolist())

    def within(self, params: VehicleParams) -> bool:
        return all(params.T_min <= t <= params.T_max for t in self)


def rotation_matrix(phi: float, theta: float, psi: float) -> np.ndarray:
    """Body-to-earth rotation for Z-Y-X Euler angles."""
    cphi, sphi = math.cos(phi), math.sin(phi)
    cth, sth = math.cos(theta), math.sin(theta)
    cpsi, spsi = math.cos(psi), math.sin(psi)
    return np.array([
        [cpsi * cth, -spsi * cphi + cpsi * sth * sphi, spsi * sphi + cpsi * cphi * sth],
        [spsi * cth, cpsi * cphi + sphi * sth * spsi, -cpsi * sphi + sth * spsi * cphi],
        [-sth, cth * sphi, cth * cphi],
    ])


def _euler_rate_matrix(phi: float, theta: float) -> np.ndarray:
    cphi, sphi = math.cos(phi), math.sin(phi)
    cth, tth = math.cos(theta), math.tan(theta)
    return np.array([
        [1.0, sphi * tth, cphi * tth],
        [0.0, cphi, -sphi],
        [0.0, sphi / cth, cphi / cth],
    ])


def _check_pitch(theta: float) -> None:
    if abs(theta) >= np.pi / 2 - THETA_GUARD:
        raise SingularityError(f"pitch {theta:.6f} rad at the Euler singularity")


def body_to_earth_transform(eta) -> np.ndarray:
    """6x6 block-diagonal transform J(eta) mapping body velocities to pose rates."""
    phi, theta, psi = eta[3], eta[4], eta[5]
    _check_pitch(theta)
    J = np.zeros((6, 6))
    J[:3, :3] = rotation_matrix(phi, theta, psi)
    J[3:, 3:] = _euler_rate_matrix(phi, theta)
    return J


def current_in_body(eta, current: CurrentField) -> np.ndarray:
    """Body-frame current velocity nu_c = (u_c, v_c, w_c, 0, 0, 0)."""
    _check_pitch(eta[4])
    R = rotation_matrix(eta[3], eta[4], eta[5])
    nu_c = np.zeros(6)
    nu_c[:3] = R.T @ current.earth_velocity
    return nu_c


def thrusts_to_tau(cmd, params: VehicleParams) -> np.ndarray:
    """Generalized force from the four thrusts.

    The pitch moment is ``(T4 - T3) * l_v`` so that the fore thruster pushing
    down pitches the nose down.
    """
    t1, t2, t3, t4 = cmd
    return np.array([t1 + t2, 0.0, t3 + t4, 0.0, (t4 - t3) * params.l_v, (t1 - t2) * params.l_h])


def thrust_power(T, alpha: float):
    """Electrical power drawn to produce thrust ``T``."""
    return alpha * np.square(T)


def _restoring_forces(eta, p: VehicleParams) -> np.ndarray:
    phi, theta = eta[3], eta[4]
    sphi, cphi = math.sin(phi), math.cos(phi)
    sth, cth = math.sin(theta), math.cos(theta)
    dwb = p.W - p.B
    bg = p.restoring_moment
    return np.array([
        dwb * sth,
        -dwb * cth * sphi,
        -dwb * cth * cphi,
        bg * cth * sphi,
        bg * sth,
        0.0,
    ])


def _cross(a0, a1, a2, b0, b1, b2):
    return a1 * b2 - a2 * b1, a2 * b0 - a0 * b2, a0 * b1 - a1 * b0


def _coriolis_forces(nu_r: np.ndarray, p: VehicleParams) -> np.ndarray:
    # rigid body (origin at CG) plus diagonal added mass, both skew-symmetric
    u, v, w, pr, q, r = (float(c) for c in nu_r)
    mu, mv, mw, jp, jq, jr = p.inertia_diag
    lin = _cross(pr, q, r, mu * u, mv * v, mw * w)
    rot = _cross(pr, q, r, jp * pr, jq * q, jr * r)
    # v x (-added_lin * v): the added-mass Munk moment
    munk = _cross(u, v, w, -p.X_udot * u, -p.Y_vdot * v, -p.Z_wdot * w)
    return np.array([lin[0], lin[1], lin[2], rot[0] + munk[0], rot[1] + munk[1], rot[2] + munk[2]])


def _nu_r_dot(eta, nu_r, tau, p: VehicleParams) -> np.ndarray:
    rhs = tau - _coriolis_forces(nu_r, p) - p.damping_diag * nu_r - _restoring_forces(eta, p)
    return rhs / p.inertia_diag


def dynamics_derivative(state: VehicleState, cmd, current: CurrentField, params: VehicleParams):
    """Time derivatives ``(eta_dot, nu_r_dot)`` of the plant."""
    eta, nu_r = state.eta, state.nu_r
    J = body_to_earth_transform(eta)
    eta_dot = J @ nu_r
    eta_dot[:3] += current.earth_velocity
    nu_r_dot = _nu_r_dot(eta, nu_r, thrusts_to_tau(cmd, params), params)
    return eta_dot, nu_r_dot


def energy_decompose(cmd, params: VehicleParams):
    """Split thruster power into surge, yaw, heave and pitch shares.

    Common and differential modes of each thruster pair carry the
    translational and rotational shares; their sum equals the total power.
    """
    t1, t2, t3, t4 = cmd
    a = params.alpha
    p_surge = 2.0 * a * (0.5 * (t1 + t2)) ** 2
    p_yaw = 2.0 * a * (0.5 * (t1 - t2)) ** 2
    p_heave = 2.0 * a * (0.5 * (t3 + t4)) ** 2
    p_pitch = 2.0 * a * (0.5 * (t3 - t4)) ** 2
    return p_surge, p_yaw, p_heave, p_pitch


def state_derivative(x: np.ndarray, tau: np.ndarray, current: CurrentField, params: VehicleParams) -> np.ndarray:
    """Derivative of the stacked 12-vector ``[eta, nu_r]`` for integrators."""
    eta, nu_r = x[:6], x[6:]
    J = body_to_earth_transform(eta)
    eta_dot = J @ nu_r
    eta_dot[:3] += current.earth_velocity
    return np.concatenate([eta_dot, _nu_r_dot(eta, nu_r, tau, params)])


def rk4_step(x: np.ndarray, tau: np.ndarray, current: CurrentField, params: VehicleParams, h: float) -> np.ndarray:
    """One classical Runge-Kutta step with the generalized force held constant."""
    k1 = state_derivative(x, tau, current, params)
    k2 = state_derivative(x + 0.5 * h * k1, tau, current, params)
    k3 = state_derivative(x + 0.5 * h * k2, tau, current, params)
    k4 = state_derivative(x + h * k3, tau, current, params)
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
