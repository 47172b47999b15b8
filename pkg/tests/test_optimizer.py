import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from auvpath.optimizer import (
    NoFeasibleSetpointError, OptimizerSettings, SetpointProblem, approx_power, approx_thrusts,
    energy_estimate, optimize_setpoints, optimize_surge_benchmark, solve_vertical_rate, speed_toward_los,
)
from oracles import grid_oracle, surge_oracle, vertical_rate_closed_form


def rel_residual(sol, prob):
    zdot = -math.sin(sol.theta_s) * sol.u_rs + math.cos(sol.theta_s) * sol.w_rs
    uh = speed_toward_los(sol.u_rs, sol.w_rs, sol.theta_s, prob.U_c, prob.psi_cd)
    a, b = prob.d_h * zdot, prob.d_z * uh
    return abs(a - b) / max(abs(a) + abs(b), 1e-300)


def random_problem(rng, params, dz_min=0.0):
    dz = rng.uniform(dz_min, 10.0) * rng.choice([-1.0, 1.0])
    return SetpointProblem(params, rng.uniform(5, 30), dz, rng.uniform(0, 0.2), rng.uniform(-math.pi, math.pi))


# --- steady-state thrust and power model ---------------------------------

def test_thrusts_at_rest(params):
    t1, t3, t4 = approx_thrusts(0.0, 0.0, 0.0, params)
    assert t1 == 0
    # thrust pushes down to hold the floating vehicle: (B - W)/2 each
    assert t3 == t4 == pytest.approx(0.5 * (params.B - params.W))


def test_thrusts_surge_only(params):
    t1, t3, t4 = approx_thrusts(1.0, 0.0, 0.0, params)
    assert t1 == pytest.approx(params.X_u / 2)
    assert (t3, t4) == approx_thrusts(0.0, 0.0, 0.0, params)[1:]


def test_thrusts_hand_values(params):
    # evaluated by hand from the default parameter file
    t1, t3, t4 = approx_thrusts(0.8, 0.1, 0.2, params)
    assert t1 == pytest.approx(2.8026613384098775, rel=1e-12)
    assert t3 == pytest.approx(0.8785566212783142, rel=1e-12)
    assert t4 == pytest.approx(3.841709690086652, rel=1e-12)
    assert approx_power(0.8, 0.1, 0.2, params) == pytest.approx(1562.020811766627, rel=1e-12)


def test_power_examples(params, neutral):
    assert approx_power(0.0, 0.0, 0.0, neutral) == 0
    assert approx_power(0.0, 0.0, 0.0, params) == pytest.approx(params.alpha * (params.W - params.B) ** 2 / 2)


@given(st.floats(0, 1.5), st.floats(0, 1.5), st.floats(-0.5, 0.5))
def test_power_monotone_in_surge(a, b, w):
    from auvpath.vehicle import default_vehicle_params
    p = default_vehicle_params()
    lo, hi = sorted((a, b))
    assert approx_power(lo, w, 0.0, p) <= approx_power(hi, w, 0.0, p) + 1e-12
    assert approx_power(-hi, w, 0.0, p) == pytest.approx(approx_power(hi, w, 0.0, p))


def test_speed_toward_los_examples():
    assert speed_toward_los(0.7, 0.0, 0.0, 0.0, 1.0) == pytest.approx(0.7)
    assert speed_toward_los(1.0, 0.0, 0.0, 0.6, math.pi / 2) == pytest.approx(0.8)
    assert math.isnan(speed_toward_los(0.5, 0.0, 0.0, 0.6, math.pi / 2))
    # head current faster than the vehicle: no progress
    assert math.isnan(speed_toward_los(0.1, 0.0, 0.0, 0.2, math.pi))


def test_energy_linear_in_distance(params):
    e1 = energy_estimate(0.6, 0.1, 0.1, 0.1, 0.3, 10.0, params)
    assert energy_estimate(0.6, 0.1, 0.1, 0.1, 0.3, 20.0, params) == pytest.approx(2 * e1)


def test_energy_closed_form_neutral(neutral):
    for u in (0.1, 0.5, 1.2):
        e = energy_estimate(u, 0.0, 0.0, 0.0, 0.0, 12.0, neutral)
        assert e == pytest.approx(neutral.alpha * neutral.X_u ** 2 * 12.0 * u / 2)


def test_energy_is_composition(params):
    rng = np.random.default_rng(10)
    for _ in range(100):
        u, w, th = rng.uniform(0.05, 1.5), rng.uniform(-0.5, 0.5), rng.uniform(-0.7, 0.7)
        uc, psi, dh = rng.uniform(0, 0.2), rng.uniform(-3, 3), rng.uniform(1, 30)
        uh = speed_toward_los(u, w, th, uc, psi)
        if math.isnan(uh):
            continue
        assert energy_estimate(u, w, th, uc, psi, dh, params) == pytest.approx(
            approx_power(u, w, th, params) * dh / uh, rel=1e-14)


# --- equal-time heave rate -----------------------------------------------

def test_vertical_rate_level():
    assert solve_vertical_rate(0.8, 0.0, 10.0, 0.0, 0.0, 0.0) == 0.0
    # within the depth dead band the depth rate is zeroed
    assert solve_vertical_rate(0.8, 0.1, 10.0, 0.01, 0.0, 0.0) == pytest.approx(math.tan(0.1) * 0.8)


def test_vertical_rate_no_current_closed_form():
    assert solve_vertical_rate(1.0, 0.0, 10.0, 5.0, 0.0, 0.0) == pytest.approx(0.5, abs=1e-9)


def test_vertical_rate_matches_quadratic_root():
    rng = np.random.default_rng(11)
    checked = 0
    for _ in range(400):
        u, th = rng.uniform(0.05, 1.5), rng.uniform(-0.7, 0.7)
        dh, dz = rng.uniform(5, 30), rng.uniform(0.05, 10) * rng.choice([-1, 1])
        uc, psi = rng.uniform(0, 0.2), rng.uniform(-3, 3)
        w = solve_vertical_rate(u, th, dh, dz, uc, psi)
        ref = vertical_rate_closed_form(u, th, dh, dz, uc, psi)
        if math.isnan(ref):
            assert math.isnan(w)
            continue
        checked += 1
        assert w == pytest.approx(ref, abs=1e-8)
        zdot = -math.sin(th) * u + math.cos(th) * w
        uh = speed_toward_los(u, w, th, uc, psi)
        assert abs(dh * zdot - dz * uh) <= 1e-8 * (abs(dh * zdot) + abs(dz * uh))
        assert zdot * dz > 0
    assert checked > 100


def test_vertical_rate_infeasible_returns_nan():
    # 10 m of climb over 5 m at 1.5 m/s cannot be done with |w| <= 0.05
    assert math.isnan(solve_vertical_rate(1.5, 0.0, 5.0, -10.0, 0.0, 0.0, w_min=-0.05, w_max=0.05))


# --- full setpoint optimization --------------------------------------------

def test_neutral_level_optimum_is_slowest(neutral):
    s = OptimizerSettings()
    sol = optimize_setpoints(SetpointProblem(neutral, 15.0, 0.0, 0.0, 0.0, s))
    assert sol.u_rs == pytest.approx(s.u_min, abs=1e-4)
    assert sol.w_rs == pytest.approx(0.0, abs=1e-4)
    assert sol.theta_s == pytest.approx(0.0, abs=1e-3)


def test_optimizer_matches_grid_oracle(params):
    rng = np.random.default_rng(12)
    for _ in range(10):
        prob = random_problem(rng, params)
        sol = optimize_setpoints(prob)
        e_ref, _ = grid_oracle(prob)
        assert sol.energy <= 1.01 * e_ref
        assert rel_residual(sol, prob) <= 1e-6
        assert sol.time == pytest.approx(prob.d_h / speed_toward_los(sol.u_rs, sol.w_rs, sol.theta_s,
                                                                     prob.U_c, prob.psi_cd))


def test_returned_time_equals_vertical_time(params):
    prob = SetpointProblem(params, 20.0, 6.0, 0.1, 0.4)
    sol = optimize_setpoints(prob)
    zdot = -math.sin(sol.theta_s) * sol.u_rs + math.cos(sol.theta_s) * sol.w_rs
    assert sol.time == pytest.approx(prob.d_z / zdot, rel=1e-6)


def test_climb_uses_heave(params):
    prob = SetpointProblem(params, 10.0, -5.0, 0.0, 0.0)
    sol = optimize_setpoints(prob)
    assert sol.w_rs < -1e-3
    theta_b = math.atan2(5.0, 10.0)
    bench = optimize_surge_benchmark(theta_b, 0.0, 0.0, 10.0, params)
    assert sol.energy < bench.energy


def test_scale_coherence(params):
    base = SetpointProblem(params, 12.0, 3.0, 0.1, 0.7)
    a = optimize_setpoints(base)
    b = optimize_setpoints(dataclasses.replace(base, d_h=36.0, d_z=9.0))
    assert (b.u_rs, b.w_rs, b.theta_s) == pytest.approx((a.u_rs, a.w_rs, a.theta_s), abs=1e-4)
    assert b.energy == pytest.approx(3 * a.energy, rel=1e-6)


def test_no_feasible_point(params):
    with pytest.raises(NoFeasibleSetpointError):
        optimize_setpoints(SetpointProblem(params, 10.0, 0.0, 2.0, math.pi))


def test_warm_start_never_hurts(params):
    prob = SetpointProblem(params, 18.0, -4.0, 0.15, 2.0)
    cold = optimize_setpoints(prob)
    warm = optimize_setpoints(prob, warm_start=cold)
    assert warm.energy <= cold.energy * (1 + 1e-9)


def test_problem_validation(params):
    with pytest.raises(ValueError):
        SetpointProblem(params, 0.0, 1.0)
    with pytest.raises(ValueError):
        OptimizerSettings(u_min=0.0)


# --- benchmark surge ----------------------------------------------------------

def test_benchmark_neutral_slowest(neutral):
    sol = optimize_surge_benchmark(0.0, 0.0, 0.0, 10.0, neutral)
    assert sol.u_rs == pytest.approx(OptimizerSettings().u_min, abs=1e-6)


def test_benchmark_adverse_current_speeds_up(params):
    calm = optimize_surge_benchmark(0.0, 0.0, 0.0, 10.0, params)
    head = optimize_surge_benchmark(0.0, 0.15, math.pi, 10.0, params)
    assert head.u_rs > calm.u_rs
    assert speed_toward_los(head.u_rs, 0.0, 0.0, 0.15, math.pi) > 0


def test_benchmark_matches_scan_oracle(params):
    rng = np.random.default_rng(13)
    for _ in range(30):
        th, uc, psi, dh = rng.uniform(-0.7, 0.7), rng.uniform(0, 0.2), rng.uniform(-3, 3), rng.uniform(2, 30)
        sol = optimize_surge_benchmark(th, uc, psi, dh, params)
        u_ref, e_ref = surge_oracle(th, uc, psi, dh, params)
        assert sol.u_rs == pytest.approx(u_ref, abs=1e-4)
        assert sol.energy <= e_ref * (1 + 1e-9)
        assert sol.w_rs == 0.0 and sol.theta_s == th
