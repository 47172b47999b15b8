"""
Receding-horizon setpoint tracking.

Two decoupled MPCs share one structure: a three-state linear (affine) model
discretized with forward Euler, a tracking cost on one velocity and one
angle, and box limits on the two thrusters of the plane. States are
eliminated (condensed form) and the resulting box-constrained QP over the
2N thrusts is solved by a primal active-set method.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .vehicle import VehicleParams, VehicleState, THETA_GUARD, SingularityError, wrap_angle

__all__ = [
    "QPError",
    "MpcConfig",
    "LinearPredictionModel",
    "MpcSolution",
    "qp_solve",
    "kkt_residual",
    "condensed_qp",
    "build_horizontal_model",
    "build_vertical_model",
    "solve_horizontal_mpc",
    "solve_vertical_mpc",
    "TrackingMpc",
]

QP_REGULARIZATION = 1e-10
MAX_REFINE = 5  # ridge refinement passes per face


class QPError(RuntimeError):
    def __init__(self, msg, iterations):
        super().__init__(f"{msg} after {iterations} iterations")
        self.iterations = iterations


@dataclass(frozen=True)
class MpcConfig:
    horizon: int = 10
    dt: float = 0.1
    lambda_h: float = 50.0
    lambda_v: float = 50.0
    qp_tol: float = 1e-8
    qp_max_iter: int = 500

    def __post_init__(self):
        if self.horizon < 1 or self.dt <= 0:
            raise ValueError("horizon >= 1 and dt > 0 required")
        if not (self.lambda_h > 1 and self.lambda_v > 1):
            raise ValueError("tracking weights lambda_h and lambda_v must exceed 1")


def kkt_residual(H, g, lo, hi, x) -> float:
    """Infinity norm of the projected gradient of 0.5 x'Hx + g'x on the box."""
    grad = H @ x + g
    proj = np.clip(x - grad, lo, hi) - x
    return float(np.max(np.abs(proj))) if len(x) else 0.0


def qp_solve(H, g, lo, hi, x0=None, tol=1e-8, max_iter=500):
    """Minimize ``0.5 x'Hx + g'x`` subject to ``lo <= x <= hi``.

    Primal active-set method on bound constraints. ``H`` must be symmetric
    positive semidefinite; a diagonal term of relative size 1e-10 is added
    so the free-variable systems stay solvable, and each face solve is
    refined against the unregularized gradient.
    """
    H = np.asarray(H, dtype=float)
    g = np.asarray(g, dtype=float)
    n = len(g)
    lo = np.broadcast_to(np.asarray(lo, dtype=float), (n,))
    hi = np.broadcast_to(np.asarray(hi, dtype=float), (n,))
    if np.any(lo > hi):
        raise ValueError("empty box: lo > hi")
    scale = float(np.max(np.abs(np.diag(H)))) if n else 0.0
    Hr = H + QP_REGULARIZATION * (scale if scale > 0 else 1.0) * np.eye(n)

    x = np.zeros(n) if x0 is None else np.clip(np.asarray(x0, dtype=float), lo, hi)
    grad = H @ x + g
    at_lo = (x <= lo) & (grad > 0)
    at_hi = (x >= hi) & (grad < 0)
    x[at_lo] = lo[at_lo]
    x[at_hi] = hi[at_hi]

    refine = 0
    for _ in range(max_iter):
        free = ~(at_lo | at_hi)
        grad = H @ x + g
        d = np.zeros(n)
        if free.any():
            idx = np.flatnonzero(free)
            d[idx] = np.linalg.solve(Hr[np.ix_(idx, idx)], -grad[idx])

        with np.errstate(divide="ignore", invalid="ignore"):
            step_hi = np.where(free & (d > 0), (hi - x) / d, np.inf)
            step_lo = np.where(free & (d < 0), (lo - x) / d, np.inf)
        steps = np.minimum(step_hi, step_lo)
        j = int(np.argmin(steps))
        if steps[j] < 1.0:
            x = np.clip(x + steps[j] * d, lo, hi)
            if d[j] > 0:
                x[j] = hi[j]
                at_hi[j] = True
            else:
                x[j] = lo[j]
                at_lo[j] = True
            continue

        x = np.clip(x + d, lo, hi)
        grad = H @ x + g
        # the ridge biases each face solve slightly; re-solve to wash it out
        if free.any() and refine < MAX_REFINE and np.max(np.abs(grad[free])) > tol:
            refine += 1
            continue
        refine = 0
        # minimizer on the current face: release the worst wrong-signed bound
        viol = np.where(at_lo, -grad, 0.0) + np.where(at_hi, grad, 0.0)
        j = int(np.argmax(viol))
        if viol[j] <= tol:
            return x
        at_lo[j] = at_hi[j] = False
    raise QPError("box QP did not converge", max_iter)


@dataclass
class LinearPredictionModel:
    """``x_{k+1} = A x_k + B u_k + c`` and its horizon-stacked form.

    ``Phi``, ``Gamma`` and ``offset`` give ``X = Phi x0 + Gamma U + offset``
    for ``X = [x_1; ...; x_N]`` and ``U = [u_0; ...; u_{N-1}]``.
    """

    A: np.ndarray
    B: np.ndarray
    c: np.ndarray
    x0: np.ndarray
    horizon: int

    def __post_init__(self):
        n, m, N = self.A.shape[0], self.B.shape[1], self.horizon
        self.Phi = np.zeros((n * N, n))
        self.Gamma = np.zeros((n * N, m * N))
        self.offset = np.zeros(n * N)
        powers = [np.eye(n)]
        for _ in range(N):
            powers.append(self.A @ powers[-1])
        acc = np.zeros(n)
        for k in range(N):
            self.Phi[k * n:(k + 1) * n] = powers[k + 1]
            acc = self.A @ acc + self.c
            self.offset[k * n:(k + 1) * n] = acc
            for j in range(k + 1):
                self.Gamma[k * n:(k + 1) * n, j * m:(j + 1) * m] = powers[k - j] @ self.B

    def predict(self, U) -> np.ndarray:
        """Stacked trajectory as an (N, n) array."""
        X = self.Phi @ self.x0 + self.Gamma @ np.asarray(U, dtype=float) + self.offset
        return X.reshape(self.horizon, -1)

    def rollout(self, U) -> np.ndarray:
        U = np.asarray(U, dtype=float).reshape(self.horizon, -1)
        x = self.x0.copy()
        out = []
        for u in U:
            x = self.A @ x + self.B @ u + self.c
            out.append(x)
        return np.array(out)


def _check_theta(theta):
    if abs(theta) >= math.pi / 2 - THETA_GUARD:
        raise SingularityError(f"pitch {theta:.6f} rad at the Euler singularity")


def build_horizontal_model(state: VehicleState, params: VehicleParams, cfg: MpcConfig) -> LinearPredictionModel:
    """Surge/yaw-rate/yaw model with pitch and sway velocity frozen at their measured values."""
    p, dt = params, cfg.dt
    theta0, v0 = state.eta[4], state.nu_r[1]
    _check_theta(theta0)
    Mu = p.m - p.X_udot
    Mr = p.I_zz - p.N_rdot
    A = np.array([
        [1.0 - dt * p.X_u / Mu, dt * p.m * v0 / Mu, 0.0],
        [0.0, 1.0 - dt * p.N_r / Mr, 0.0],
        [0.0, dt / math.cos(theta0), 1.0],
    ])
    B = np.array([
        [dt / Mu, dt / Mu],
        [dt * p.l_h / Mr, -dt * p.l_h / Mr],
        [0.0, 0.0],
    ])
    c = np.array([-dt * (p.W - p.B) * math.sin(theta0) / Mu, 0.0, 0.0])
    x0 = np.array([state.nu_r[0], state.nu_r[5], state.eta[5]])
    return LinearPredictionModel(A, B, c, x0, cfg.horizon)


def build_vertical_model(state: VehicleState, params: VehicleParams, cfg: MpcConfig) -> LinearPredictionModel:
    """Heave/pitch-rate/pitch model, hydrostatics linearized about the measured pitch."""
    p, dt = params, cfg.dt
    th0 = state.eta[4]
    _check_theta(th0)
    s0, c0 = math.sin(th0), math.cos(th0)
    Mw = p.m - p.Z_wdot
    Mq = p.I_yy - p.M_qdot
    dwb = p.W - p.B
    R = -p.restoring_moment  # z_b B - z_g W
    A = np.array([
        [1.0 - dt * p.Z_w / Mw, 0.0, -dt * dwb * s0 / Mw],
        [0.0, 1.0 - dt * p.M_q / Mq, dt * R * c0 / Mq],
        [0.0, dt, 1.0],
    ])
    B = np.array([
        [dt / Mw, dt / Mw],
        [-dt * p.l_v / Mq, dt * p.l_v / Mq],
        [0.0, 0.0],
    ])
    c = np.array([
        dt * dwb * (c0 + s0 * th0) / Mw,
        dt * R * (s0 - c0 * th0) / Mq,
        0.0,
    ])
    x0 = np.array([state.nu_r[2], state.nu_r[4], th0])
    return LinearPredictionModel(A, B, c, x0, cfg.horizon)


@dataclass
class MpcSolution:
    thrusts: tuple
    sequence: np.ndarray
    predicted: np.ndarray
    cost: float
    iterations: int = 0


def condensed_qp(model: LinearPredictionModel, weights, reference):
    """Hessian and linear term of ``sum_k (x_k - ref)' Q (x_k - ref)`` in the thrusts.

    Returned in the ``0.5 U'HU + g'U`` convention together with the constant
    term, so that cost = 0.5 U'HU + g'U + const.
    """
    N = model.horizon
    q = np.tile(np.asarray(weights, dtype=float), N)
    ref = np.tile(np.asarray(reference, dtype=float), N)
    free = model.Phi @ model.x0 + model.offset - ref
    G = model.Gamma
    H = 2.0 * (G.T * q) @ G
    H = 0.5 * (H + H.T)
    g = 2.0 * G.T @ (q * free)
    const = float(free @ (q * free))
    return H, g, const


def _solve_tracking(model, weights, reference, params: VehicleParams, cfg: MpcConfig, warm=None):
    H, g, const = condensed_qp(model, weights, reference)
    U = qp_solve(H, g, params.T_min, params.T_max, x0=warm, tol=cfg.qp_tol, max_iter=cfg.qp_max_iter)
    cost = max(0.5 * U @ H @ U + g @ U + const, 0.0)
    return MpcSolution(
        thrusts=(float(U[0]), float(U[1])),
        sequence=U.reshape(-1, 2),
        predicted=model.predict(U),
        cost=float(cost),
    )


def solve_horizontal_mpc(state: VehicleState, u_rs: float, psi_s: float, model: LinearPredictionModel,
                         params: VehicleParams, cfg: MpcConfig, warm=None) -> MpcSolution:
    """Left/right thrusts tracking surge and yaw setpoints.

    The yaw setpoint is unwrapped to lie within pi of the current heading, so
    the tracked error never jumps by 2 pi.
    """
    psi = state.eta[5]
    psi_ref = psi + float(wrap_angle(psi_s - psi))
    return _solve_tracking(model, (cfg.lambda_h, 0.0, 1.0), (u_rs, 0.0, psi_ref), params, cfg, warm)


def solve_vertical_mpc(state: VehicleState, w_rs: float, theta_s: float, model: LinearPredictionModel,
                       params: VehicleParams, cfg: MpcConfig, warm=None) -> MpcSolution:
    """Fore/aft thrusts tracking heave-rate and pitch setpoints."""
    return _solve_tracking(model, (cfg.lambda_v, 0.0, 1.0), (w_rs, 0.0, theta_s), params, cfg, warm)


class TrackingMpc:
    """Pair of horizontal and vertical MPCs with shifted warm starts."""

    def __init__(self, params: VehicleParams, cfg: MpcConfig = MpcConfig()):
        self.params = params
        self.cfg = cfg
        self._warm_h = None
        self._warm_v = None

    @staticmethod
    def _shift(seq):
        return np.concatenate([seq[1:], seq[-1:]]).ravel()

    def __call__(self, state: VehicleState, u_rs, w_rs, theta_s, psi_s):
        hmodel = build_horizontal_model(state, self.params, self.cfg)
        vmodel = build_vertical_model(state, self.params, self.cfg)
        hsol = solve_horizontal_mpc(state, u_rs, psi_s, hmodel, self.params, self.cfg, self._warm_h)
        vsol = solve_vertical_mpc(state, w_rs, theta_s, vmodel, self.params, self.cfg, self._warm_v)
        self._warm_h = self._shift(hsol.sequence)
        self._warm_v = self._shift(vsol.sequence)
        return hsol, vsol
