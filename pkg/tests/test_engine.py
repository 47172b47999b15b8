import math
import warnings

import numpy as np
import pytest

from auvpath import guidance as gd
from auvpath.engine import (
    TELEMETRY_COLUMNS, SimConfig, Simulation, SimulationError, compute_metrics, initial_state, run_mission,
)
from auvpath.mpc import MpcConfig
from auvpath.optimizer import SetpointCommand, approx_power
from auvpath.vehicle import CurrentField, ThrustCommand, VehicleState, energy_decompose, thrust_power

STRAIGHT = gd.Mission(np.array([[0.0, 0, 0], [200.0, 0, 0]]))
SHORT = gd.Mission(np.array([[0.0, 0, 0], [20.0, 0, 0]]))
DIVE = gd.Mission(np.array([[0.0, 0, 0], [15.0, 0, 3.0], [15.0, 12.0, 1.0]]), name="dive")


@pytest.fixture(autouse=True)
def _quiet():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        yield


def zero_setpoints(*_):
    return SetpointCommand(0.0, 0.0, 0.0, 0.0)


@pytest.fixture(scope="module")
def cruise(params):
    return Simulation(STRAIGHT, CurrentField(0.05, 0.05), params, SimConfig(controller="los", max_time=60.0)).run()


@pytest.fixture(scope="module")
def dive_run(params):
    return run_mission(DIVE, CurrentField(0.03, -0.04), params, SimConfig(controller="proposed"))


# --- step -----------------------------------------------------------------

def test_neutral_vehicle_at_rest_stays_put(neutral):
    sim = Simulation(STRAIGHT, CurrentField(), neutral, controller=zero_setpoints)
    x0 = sim.state.copy()
    for _ in range(20):
        sim.step()
    np.testing.assert_allclose(sim.state.eta, x0.eta, atol=1e-12)
    np.testing.assert_allclose(sim.state.nu_r, 0.0, atol=1e-12)
    assert sim.energy == pytest.approx(0.0, abs=1e-18)


def test_step_advances_exactly_one_period(params):
    sim = Simulation(STRAIGHT, CurrentField(), params, SimConfig(control_period=0.2, substep=0.05),
                     mpc=MpcConfig(dt=0.2))
    sim.step()
    sim.step()
    assert sim.time == pytest.approx(0.4)
    assert [r[0] for r in sim.rows] == [0.0, 0.2]


def test_determinism(params):
    a = run_mission(SHORT, CurrentField(0.04, -0.02), params, SimConfig(max_time=20.0))
    b = run_mission(SHORT, CurrentField(0.04, -0.02), params, SimConfig(max_time=20.0))
    assert a.telemetry.tobytes() == b.telemetry.tobytes()
    assert a.metrics == b.metrics


def test_rk4_step_halving(params):
    runs = [
        Simulation(STRAIGHT, CurrentField(0.05, 0.05), params,
                   SimConfig(controller="los", substep=h, max_time=60.0)).run()
        for h in (0.02, 0.01)
    ]
    gap = np.linalg.norm(runs[0].telemetry[-1, 1:4] - runs[1].telemetry[-1, 1:4])
    assert gap < 1e-4


def test_controller_failure_is_labeled(params):
    def broken(*_):
        raise ValueError("no setpoint")

    res = Simulation(SHORT, CurrentField(), params, controller=broken).run()
    assert res.error.startswith("[setpoint] at t=0.00 s")
    assert not res.metrics.completed
    assert len(res.telemetry) == 0


def test_stepping_a_finished_run_raises(params):
    sim = Simulation(SHORT, CurrentField(), params, SimConfig(controller="los"))
    sim.run()
    assert sim.complete
    with pytest.raises(RuntimeError):
        sim.step()


def test_simulation_error_carries_stage():
    err = SimulationError("plant", 1.5, ValueError("x"))
    assert err.stage == "plant" and err.time == 1.5 and "[plant] at t=1.50 s" in str(err)


# --- run_mission ----------------------------------------------------------

@pytest.mark.parametrize("kind", ["proposed", "los"])
def test_single_segment_completes_on_path(params, kind):
    res = run_mission(SHORT, CurrentField(), params, SimConfig(controller=kind))
    assert res.metrics.completed
    assert res.metrics.waypoints_reached == 1
    assert abs(res.column("y")[-1]) < 0.1


def test_initial_state_faces_first_waypoint():
    s = initial_state(gd.Mission(np.array([[1.0, 1, 2], [1.0, 11, 5]])))
    np.testing.assert_array_equal(s.eta[:3], [1, 1, 2])
    assert s.eta[5] == pytest.approx(math.pi / 2)
    assert s.eta[3] == s.eta[4] == 0
    assert not s.nu_r.any()


def test_timeout_gives_partial_result(params):
    res = run_mission(STRAIGHT, CurrentField(), params, SimConfig(max_time=5.0))
    assert not res.metrics.completed
    assert res.metrics.travel_time == pytest.approx(5.0)
    assert res.metrics.waypoints_reached == 0
    assert res.metrics.total_energy > 0


def test_multi_segment_run(dive_run):
    m = dive_run.metrics
    assert m.completed and m.waypoints_reached == m.n_waypoints == 2
    assert set(np.unique(dive_run.segments)) == {1, 2}
    end = dive_run.telemetry[-1, 1:4]
    assert np.linalg.norm(end - DIVE.waypoints[-1]) < 2.0 + 0.1  # last sample precedes the final step


def test_timestamps_are_multiples_of_period(dive_run):
    t = dive_run.column("t")
    np.testing.assert_array_equal(t, np.arange(len(t)) * 0.1)


def test_thrusts_stay_in_box(dive_run, params):
    T = dive_run.telemetry[:, TELEMETRY_COLUMNS.index("T1"):TELEMETRY_COLUMNS.index("T4") + 1]
    assert all(ThrustCommand(*row).within(params) for row in T)


def test_energy_accumulator_non_decreasing(dive_run):
    P = dive_run.column("P_inst")
    assert np.all(P >= 0)
    assert np.all(np.diff(np.cumsum(P * 0.1)) >= 0)


def test_energy_identity(dive_run):
    m = dive_run.metrics
    parts = m.energy_surge + m.energy_yaw + m.energy_heave + m.energy_pitch
    assert parts == pytest.approx(m.total_energy, rel=1e-9)


def test_telemetry_decimation(params):
    full = run_mission(SHORT, CurrentField(), params, SimConfig(max_time=10.0))
    thin = run_mission(SHORT, CurrentField(), params, SimConfig(max_time=10.0, telemetry_decimation=4))
    np.testing.assert_array_equal(thin.telemetry, full.telemetry[::4])
    assert thin.metrics == full.metrics


def test_steady_cruise_power_matches_model(cruise, params):
    late = cruise.column("t") >= 30.0
    sim_p = cruise.column("P_inst")[late].mean()
    model = np.mean([approx_power(u, w, th, params) for u, w, th in zip(
        cruise.column("u_rs")[late], cruise.column("w_rs")[late], cruise.column("theta_s")[late])])
    assert sim_p == pytest.approx(model, rel=0.1)


def test_setpoint_tracking_after_transient(cruise):
    late = cruise.column("t") >= 10.0
    assert np.max(np.abs(cruise.column("u_r")[late] - cruise.column("u_rs")[late])) < 0.05
    assert np.max(np.abs(cruise.column("theta")[late] - cruise.column("theta_s")[late])) < math.radians(2)


def test_cross_current_settles(cruise):
    late = cruise.column("t") >= 30.0
    assert np.std(cruise.column("psi")[late]) < 0.01
    assert np.max(np.abs(cruise.column("y")[late])) < 0.05


# --- compute_metrics ------------------------------------------------------

def synthetic(positions, thrusts, params):
    rows = []
    for k, (pos, T) in enumerate(zip(positions, thrusts)):
        row = np.zeros(len(TELEMETRY_COLUMNS))
        row[0] = 0.1 * k
        row[1:4] = pos
        row[17:21] = T
        row[21] = np.sum(thrust_power(np.asarray(T), params.alpha))
        rows.append(row)
    return np.array(rows)


def test_metrics_on_path_zero_cross_track(params):
    pos = [(x, 0, 0) for x in np.linspace(0, 15, 30)]
    tel = synthetic(pos, [(1, 1, 1, 1)] * 30, params)
    m = compute_metrics(tel, SHORT, np.ones(30, int), params, 0.1)
    assert m.mean_cross_track == 0


def test_metrics_constant_power(params):
    tel = synthetic([(5, 1, 0)] * 50, [(2, -1, 0.5, 3)] * 50, params)
    m = compute_metrics(tel, SHORT, np.ones(50, int), params, 0.1)
    P = params.alpha * (4 + 1 + 0.25 + 9)
    assert m.total_energy == pytest.approx(P * 5.0, rel=1e-12)
    assert m.travel_time == pytest.approx(5.0)


def test_metrics_decomposition_sums(params):
    rng = np.random.default_rng(3)
    T = rng.uniform(-params.T_max, params.T_max, size=(40, 4))
    tel = synthetic([(3, 0.5, 0.2)] * 40, T, params)
    m = compute_metrics(tel, SHORT, np.ones(40, int), params, 0.1)
    parts = m.energy_surge + m.energy_yaw + m.energy_heave + m.energy_pitch
    assert parts == pytest.approx(m.total_energy, rel=1e-9)
    expect = np.array(energy_decompose(T.T, params)).sum(axis=1) * 0.1
    assert m.energy_heave == pytest.approx(expect[2])


def test_metrics_skip_samples_near_waypoint(params):
    pos = [(19.0, 1.0, 0), (10.0, 1.0, 0)]  # first is within 2 m of the target
    tel = synthetic(pos, [(0, 0, 0, 0)] * 2, params)
    m = compute_metrics(tel, SHORT, np.ones(2, int), params, 0.1)
    assert m.mean_cross_track == pytest.approx(1.0)


def test_metrics_cross_track_is_3d_line_distance(params):
    tel = synthetic([(5, 3, 4)], [(0, 0, 0, 0)], params)
    m = compute_metrics(tel, SHORT, [1], params, 0.1)
    assert m.mean_cross_track == pytest.approx(5.0)


def test_metrics_reject_empty(params):
    with pytest.raises(ValueError):
        compute_metrics(np.zeros((0, len(TELEMETRY_COLUMNS))), SHORT, [], params, 0.1)


# --- missions and config ----------------------------------------------------

def test_lawnmower_waypoints():
    wp = gd.lawnmower_mission().waypoints
    expect = [(0, 0, 0), (30, 0, 10), (30, 10, 7), (0, 10, 1), (0, 20, 2), (30, 20, 6), (30, 30, 5), (0, 30, 3)]
    np.testing.assert_array_equal(wp, expect)


def test_inspection_waypoints():
    wp = gd.inspection_mission().waypoints
    assert len(wp) == 13
    np.testing.assert_allclose(wp[0], (7, 0, 0), atol=1e-12)
    np.testing.assert_allclose(wp[3], (7, 14, 6), atol=1e-12)


@pytest.mark.parametrize("kw", [
    {"controller": "pid"},
    {"substep": 0.03},
    {"substep": 0.0},
    {"max_time": -1.0},
    {"telemetry_decimation": 0},
])
def test_sim_config_validation(kw):
    with pytest.raises(ValueError):
        SimConfig(**kw)


def test_mpc_period_must_match(params):
    with pytest.raises(ValueError):
        Simulation(SHORT, CurrentField(), params, SimConfig(), mpc=MpcConfig(dt=0.2))


def test_over_cap_current_rejected(params):
    with pytest.raises(ValueError):
        Simulation(SHORT, CurrentField(2.0, 0.0), params)


def test_explicit_start_state(params):
    st = VehicleState([0, 3, 0, 0, 0, 0], np.zeros(6))
    sim = Simulation(STRAIGHT, CurrentField(), params, state=st)
    assert sim.state.eta[1] == 3 and sim.state is not st
