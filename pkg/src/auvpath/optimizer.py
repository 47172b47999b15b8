"""
Energy-optimal surge, heave and pitch setpoints.

The steady-state thrusts needed to hold (u_r, w_r, theta) give a propulsion
power; dividing by the speed made good toward the LOS point turns it into an
energy-to-waypoint estimate. The proposed controller minimizes that estimate
over (u_r, w_r, theta) while requiring the horizontal and vertical legs to
take the same time. The benchmark keeps w_r = 0, takes theta from the
vertical LOS law and optimizes surge only.

Infeasible candidates are reported as NaN rather than raised, so the
functions vectorize over numpy arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize, minimize_scalar

from .vehicle import VehicleParams

__all__ = [
    "NoFeasibleSetpointError",
    "OptimizerSettings",
    "SetpointProblem",
    "SetpointCommand",
    "approx_thrusts",
    "approx_power",
    "speed_toward_los",
    "energy_estimate",
    "solve_vertical_rate",
    "optimize_setpoints",
    "optimize_surge_benchmark",
]


class NoFeasibleSetpointError(RuntimeError):
    pass


@dataclass(frozen=True)
class OptimizerSettings:
    u_min: float = 0.05
    u_max: float = 1.5
    w_max: float = 0.5
    theta_max: float = math.radians(45.0)
    grid_n: int = 40
    nm_maxiter: int = 200
    nm_tol: float = 1e-8
    eps_z: float = 0.05
    bisect_tol: float = 1e-10
    decimation: int = 1

    def __post_init__(self):
        if not 0 < self.u_min < self.u_max:
            raise ValueError("need 0 < u_min < u_max")
        if self.w_max <= 0 or not 0 < self.theta_max < math.pi / 2:
            raise ValueError("w_max must be positive and theta_max in (0, pi/2)")
        if self.grid_n < 2 or self.decimation < 1:
            raise ValueError("grid_n >= 2 and decimation >= 1 required")


@dataclass(frozen=True)
class SetpointProblem:
    params: VehicleParams
    d_h: float
    d_z: float
    U_c: float = 0.0
    psi_cd: float = 0.0
    settings: OptimizerSettings = field(default_factory=OptimizerSettings)

    def __post_init__(self):
        if not self.d_h > 0:
            raise ValueError("horizontal distance d_h must be positive")


@dataclass(frozen=True)
class SetpointCommand:
    u_rs: float
    w_rs: float
    theta_s: float
    psi_s: float = 0.0
    energy: float = math.nan
    time: float = math.nan


def approx_thrusts(u_r, w_r, theta, params: VehicleParams):
    """Steady-state thrusts ``(T1 = T2, T3, T4)`` holding (u_r, w_r, theta).

    Solves the surge, heave and pitch rows of the plant at rest in roll, sway
    and all rotation rates, with the two vertical thrusters splitting the
    pitch restoring moment.
    """
    p = params
    dwb = p.W - p.B
    sth, cth = np.sin(theta), np.cos(theta)
    t1 = 0.5 * (dwb * sth + p.X_u * u_r)
    heave = p.Z_w * w_r - dwb * cth
    diff = p.restoring_moment * sth / p.l_v
    return t1, 0.5 * heave - 0.5 * diff, 0.5 * heave + 0.5 * diff


def approx_power(u_r, w_r, theta, params: VehicleParams):
    t1, t3, t4 = approx_thrusts(u_r, w_r, theta, params)
    return params.alpha * (2.0 * t1 * t1 + t3 * t3 + t4 * t4)


def speed_toward_los(u_r, w_r, theta, U_c, psi_cd):
    """Speed made good toward the LOS point; NaN when infeasible."""
    v_uw = np.cos(theta) * u_r + np.sin(theta) * w_r
    v_perp = U_c * np.sin(psi_cd)
    v_along = U_c * np.cos(psi_cd)
    disc = v_uw * v_uw - v_perp * v_perp
    with np.errstate(invalid="ignore"):
        u_h = np.sqrt(disc) + v_along
    ok = (disc >= 0) & (v_uw > 0) & (u_h > 0)
    return np.where(ok, u_h, np.nan) if np.ndim(ok) else (float(u_h) if ok else math.nan)


def energy_estimate(u_r, w_r, theta, U_c, psi_cd, d_h, params: VehicleParams):
    """Energy to cover ``d_h`` at constant setpoints; NaN when infeasible."""
    return approx_power(u_r, w_r, theta, params) * d_h / speed_toward_los(u_r, w_r, theta, U_c, psi_cd)


def _vertical_residual(w, u_r, theta, d_h, d_z, U_c, psi_cd):
    zdot = -np.sin(theta) * u_r + np.cos(theta) * w
    return d_h * zdot - d_z * speed_toward_los(u_r, w, theta, U_c, psi_cd)


def solve_vertical_rate(u_r, theta, d_h, d_z, U_c, psi_cd, w_min=-0.5, w_max=0.5,
                        eps_z=0.05, tol=1e-10, n_scan=64):
    """Heave rate that makes the vertical and horizontal legs take equal time.

    Returns NaN when no root lies in ``[w_min, w_max]``. Among several roots
    the one of smallest magnitude is returned.
    """
    if abs(math.cos(theta)) <= 1e-6:
        raise ValueError("pitch too close to +-pi/2")
    if abs(d_z) < eps_z:
        w = math.tan(theta) * u_r
        return w if w_min <= w <= w_max else math.nan

    def res(w):
        return _vertical_residual(w, u_r, theta, d_h, d_z, U_c, psi_cd)

    ws = np.linspace(w_min, w_max, n_scan + 1)
    f = res(ws)
    roots = []
    for k in range(n_scan):
        a, b = ws[k], ws[k + 1]
        fa, fb = f[k], f[k + 1]
        ok_a, ok_b = np.isfinite(fa), np.isfinite(fb)
        if ok_a != ok_b:
            # feasibility edge inside the interval: shrink onto the finite side
            good, bad = (a, b) if ok_a else (b, a)
            while abs(good - bad) > tol:
                mid = 0.5 * (good + bad)
                if np.isfinite(res(mid)):
                    good = mid
                else:
                    bad = mid
            if ok_a:
                b, fb = good, res(good)
            else:
                a, fa = good, res(good)
        elif not ok_a:
            continue
        if fa == 0.0:
            roots.append(a)
            continue
        if fa * fb > 0:
            continue
        while b - a > tol:
            mid = 0.5 * (a + b)
            fm = res(mid)
            if fm * fa > 0:
                a, fa = mid, fm
            else:
                b = mid
        roots.append(0.5 * (a + b))
    if np.isfinite(f[-1]) and f[-1] == 0.0:
        roots.append(ws[-1])
    roots = [w for w in roots if (-math.sin(theta) * u_r + math.cos(theta) * w) * d_z > 0]
    if not roots:
        return math.nan
    return float(min(roots, key=abs))


def _candidates(V, theta, prob: SetpointProblem):
    """Map (V_uw, theta) to (u_r, w_r) on the equal-time manifold.

    With the horizontal speed through water V_uw fixed, the equal-time
    condition fixes the depth rate; (u_r, w_r) is then the body-frame
    rotation of (V_uw, z_dot). Returns u_r, w_r, energy (NaN if infeasible).
    """
    s = prob.settings
    v_perp = prob.U_c * math.sin(prob.psi_cd)
    v_along = prob.U_c * math.cos(prob.psi_cd)
    with np.errstate(invalid="ignore"):
        u_h = np.sqrt(V * V - v_perp * v_perp) + v_along
    zdot = prob.d_z * u_h / prob.d_h if abs(prob.d_z) >= s.eps_z else 0.0 * u_h
    sth, cth = np.sin(theta), np.cos(theta)
    u = cth * V - sth * zdot
    w = sth * V + cth * zdot
    power = approx_power(u, w, theta, prob.params)
    ok = (
        (V > 0) & (V * V >= v_perp * v_perp) & (u_h > 0)
        & (u >= s.u_min) & (u <= s.u_max) & (np.abs(w) <= s.w_max)
        & (np.abs(theta) <= s.theta_max)
    )
    with np.errstate(invalid="ignore", divide="ignore"):
        energy = np.where(ok, power * prob.d_h / u_h, np.nan)
    return u, w, energy


def _candidate_energy(V, theta, prob: SetpointProblem, v_perp, v_along) -> float:
    """Scalar version of :func:`_candidates`; returns energy or +inf."""
    s = prob.settings
    if not (V > 0 and V * V >= v_perp * v_perp and abs(theta) <= s.theta_max):
        return math.inf
    u_h = math.sqrt(V * V - v_perp * v_perp) + v_along
    if u_h <= 0:
        return math.inf
    zdot = prob.d_z * u_h / prob.d_h if abs(prob.d_z) >= s.eps_z else 0.0
    sth, cth = math.sin(theta), math.cos(theta)
    u = cth * V - sth * zdot
    w = sth * V + cth * zdot
    if not (s.u_min <= u <= s.u_max and abs(w) <= s.w_max):
        return math.inf
    p = prob.params
    dwb = p.W - p.B
    t1 = 0.5 * (dwb * sth + p.X_u * u)
    heave = p.Z_w * w - dwb * cth
    diff = p.restoring_moment * sth / p.l_v
    power = p.alpha * (2.0 * t1 * t1 + 0.5 * (heave * heave + diff * diff))
    return power * prob.d_h / u_h


def optimize_setpoints(prob: SetpointProblem, warm_start=None) -> SetpointCommand:
    """Minimum-energy (u_r, w_r, theta) satisfying the equal-time constraint.

    A coarse grid over (V_uw, theta) picks a start point, Nelder-Mead polishes
    it. ``warm_start`` is a previous command whose (u_r, w_r, theta) is
    offered as an extra start point.
    """
    s = prob.settings
    v_perp = abs(prob.U_c * math.sin(prob.psi_cd))
    v_hi = math.hypot(s.u_max, s.w_max)
    Vs = np.linspace(v_perp, v_hi, s.grid_n + 1)[1:]
    thetas = np.linspace(-s.theta_max, s.theta_max, s.grid_n)
    VV, TT = np.meshgrid(Vs, thetas, indexing="ij")
    _, _, E = _candidates(VV, TT, prob)
    if not np.any(np.isfinite(E)):
        raise NoFeasibleSetpointError(
            f"no feasible setpoint (d_h={prob.d_h:.3f}, d_z={prob.d_z:.3f}, "
            f"U_c={prob.U_c:.3f}, psi_cd={prob.psi_cd:.3f})"
        )
    k = np.nanargmin(E)
    x0, e0 = np.array([VV.flat[k], TT.flat[k]]), E.flat[k]

    if warm_start is not None:
        V_w = math.cos(warm_start.theta_s) * warm_start.u_rs + math.sin(warm_start.theta_s) * warm_start.w_rs
        _, _, e_w = _candidates(np.array(V_w), np.array(warm_start.theta_s), prob)
        if np.isfinite(e_w) and e_w < e0:
            x0, e0 = np.array([V_w, warm_start.theta_s]), float(e_w)

    v_perp_s = prob.U_c * math.sin(prob.psi_cd)
    v_along = prob.U_c * math.cos(prob.psi_cd)

    def objective(x):
        e = _candidate_energy(float(x[0]), float(x[1]), prob, v_perp_s, v_along)
        return e if e < math.inf else 1e30

    dV = Vs[1] - Vs[0] if len(Vs) > 1 else 0.1
    dT = thetas[1] - thetas[0]
    simplex = np.array([x0, x0 + [0.5 * dV, 0.0], x0 + [0.0, 0.5 * dT]])
    res = minimize(objective, x0, method="Nelder-Mead",
                   options={"maxiter": s.nm_maxiter, "xatol": s.nm_tol, "fatol": s.nm_tol * max(e0, 1.0),
                            "initial_simplex": simplex})
    x = res.x if res.fun < e0 else x0
    u, w, e = _candidates(np.array(x[0]), np.array(x[1]), prob)
    theta = float(x[1])
    u, w, e = float(u), float(w), float(e)
    t_hat = prob.d_h / speed_toward_los(u, w, theta, prob.U_c, prob.psi_cd)
    return SetpointCommand(u_rs=u, w_rs=w, theta_s=theta, energy=e, time=t_hat)


def optimize_surge_benchmark(theta_s, U_c, psi_cd, d_h, params: VehicleParams,
                             settings: OptimizerSettings = OptimizerSettings(), w_rs: float = 0.0,
                             n_scan: int = 64) -> SetpointCommand:
    """Minimum-energy surge setpoint for fixed heave rate and pitch."""
    s = settings

    def energy(u):
        return energy_estimate(u, w_rs, theta_s, U_c, psi_cd, d_h, params)

    us = np.linspace(s.u_min, s.u_max, n_scan)
    E = energy(us)
    if not np.any(np.isfinite(E)):
        raise NoFeasibleSetpointError(
            f"no feasible surge setpoint (theta={theta_s:.3f}, U_c={U_c:.3f}, psi_cd={psi_cd:.3f})"
        )
    k = int(np.nanargmin(E))
    best_u, best_e = us[k], E[k]
    lo, hi = us[max(k - 1, 0)], us[min(k + 1, n_scan - 1)]
    if hi > lo:
        res = minimize_scalar(lambda u: float(energy(u)) if np.isfinite(energy(u)) else 1e30,
                              bounds=(lo, hi), method="bounded", options={"xatol": 1e-9})
        if res.fun < best_e:
            best_u, best_e = float(res.x), float(res.fun)
    best_u = float(best_u)
    t_hat = d_h / speed_toward_los(best_u, w_rs, theta_s, U_c, psi_cd)
    return SetpointCommand(u_rs=best_u, w_rs=w_rs, theta_s=float(theta_s), energy=float(best_e), time=t_hat)
