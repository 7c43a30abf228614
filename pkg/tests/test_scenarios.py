import dataclasses
import math

import numpy as np
import pytest

from adaptive_mpc.mpc import MpcParams
from adaptive_mpc.scenarios import (LOG_COLUMNS, Constant, PiecewiseLinear, Pulses, Scenario,
                                    SimLog, SimulationDiverged, SineTrajectory, SmoothStep,
                                    builtin_scenario, compute_mse, logistic_ramp,
                                    run_closed_loop, summarize, triple_lane_change_ref)


def test_triple_lane_change_values():
    assert triple_lane_change_ref(0.0) == 0.0
    assert triple_lane_change_ref(9.0) == pytest.approx(3.5)
    assert triple_lane_change_ref(15.0) == pytest.approx(7.0)
    assert triple_lane_change_ref(25.0) == pytest.approx(3.5)


def test_logistic_ramp_is_smooth_and_flat_outside():
    t = np.linspace(0, 10, 10001)
    r = logistic_ramp(t, 5.0, 4.0)
    assert np.all(r[t <= 3.0] == 0.0) and np.all(r[t >= 7.0] == 1.0)
    assert logistic_ramp(5.0, 5.0, 4.0) == pytest.approx(0.5)
    assert np.all(np.diff(r) >= 0)
    d = np.diff(r) / np.diff(t)
    assert np.max(np.abs(np.diff(d))) < 1e-3  # no slope jumps


def test_smooth_step_limits():
    s = SmoothStep(10.0, t0=1.0, a_max=2.0, v_max=1.0)
    t = np.linspace(0, 40, 40001)
    y = s(t)
    v = np.gradient(y, t)
    a = np.gradient(v, t)
    assert y[0] == 0.0 and y[-1] == pytest.approx(10.0)
    assert np.max(np.abs(v)) <= 1.0 + 1e-3 and np.max(np.abs(a)) <= 2.0 + 1e-2


def test_profiles():
    assert PiecewiseLinear((0, 10), (10, 20))(5.0) == 15.0
    p = Pulses(((1.0, 2.0, 5.0),), base=0.9)
    np.testing.assert_array_equal(p(np.array([0.5, 1.0, 1.5, 2.0])), [0.9, 5.0, 5.0, 0.9])
    assert Constant(3.0)(np.zeros(4)).tolist() == [3.0] * 4
    assert SineTrajectory()(0.0) == 0.0
    with pytest.raises(ValueError):
        PiecewiseLinear((1, 0), (0, 0))


def test_compute_mse_hand_cases():
    assert compute_mse([0.0, 0.0]) == 0.0
    assert compute_mse([0.1, -0.1]) == pytest.approx(0.01)
    assert compute_mse([0.3] * 7) == pytest.approx(0.09)
    assert compute_mse([0.1, 0.2] * 3) == compute_mse([0.1, 0.2])
    with pytest.raises(ValueError):
        compute_mse([])


def test_scenario_validation():
    with pytest.raises(ValueError):
        Scenario("x", 0.0, Constant(0.0), Constant(10.0))
    with pytest.raises(ValueError):
        builtin_scenario("regulation-zero", mode="bogus")
    with pytest.raises(ValueError):
        run_closed_loop(builtin_scenario("regulation-zero", "nn-adaptive"))
    with pytest.raises(ValueError):
        run_closed_loop(Scenario("fast", 1.0, Constant(0.0), Constant(40.0)))


def test_regulation_stays_at_equilibrium():
    log = run_closed_loop(builtin_scenario("regulation-zero"))
    assert np.max(np.abs(log["y"])) < 1e-3
    assert summarize(log, "regulation-zero", "fixed")["mse"] < 1e-6


def test_log_schema_and_uniform_grid(tmp_path):
    log = run_closed_loop(builtin_scenario("triple-lane-change"))
    assert tuple(log.columns) == LOG_COLUMNS and len(log) == 500
    np.testing.assert_allclose(np.diff(log["t"]), 0.05, atol=1e-12)
    assert np.all(np.abs(log["u"]) <= math.pi / 6)
    assert np.all(np.abs(log["du"]) <= math.pi / 12)
    assert np.all(log["np"] == 35) and np.all(log["q"] == 10.0)
    log.to_csv(tmp_path / "log.csv")
    back = SimLog.read_csv(tmp_path / "log.csv")
    np.testing.assert_allclose(back["y"], log["y"], rtol=1e-5, atol=1e-12)
    assert (tmp_path / "log.csv").read_text().splitlines()[0] == ",".join(LOG_COLUMNS)


def test_mirror_symmetry():
    sc = builtin_scenario("triple-lane-change")
    neg = dataclasses.replace(sc, reference=lambda t: -sc.reference(t), wind=lambda t: -sc.wind(t))
    p = MpcParams(20, 8, 100.0, 0.001)
    a, b = run_closed_loop(sc, params=p), run_closed_loop(neg, params=p)
    np.testing.assert_allclose(a["y"], -b["y"], atol=1e-9)
    np.testing.assert_allclose(a["u"], -b["u"], atol=1e-9)


def test_determinism():
    sc = builtin_scenario("general-trajectory")
    a, b = run_closed_loop(sc), run_closed_loop(sc)
    for c in LOG_COLUMNS:
        np.testing.assert_array_equal(a[c], b[c])


class _Switching:
    def predict(self, vx, wind, mu, y_ref):
        return MpcParams(20, 8, 100.0, 0.001) if mu < 0.7 else MpcParams(35, 8, 10.0, 0.01)


def test_adaptive_mode_changes_parameters_and_respects_cadence():
    sc = builtin_scenario("triple-lane-change", "nn-adaptive")
    log = run_closed_loop(sc, adapter=_Switching())
    assert set(np.unique(log["np"])) == {20.0, 35.0}
    slow = run_closed_loop(sc, adapter=_Switching(), adapter_every=1000)
    assert np.all(slow["np"] == 35)


def test_divergence_returns_partial_log():
    sc = Scenario("cliff", 10.0, Constant(40.0), Constant(25.0), mu=Constant(0.2))
    with pytest.raises(SimulationDiverged) as info:
        run_closed_loop(sc, params=MpcParams(10, 10, 100.0, 0.001))
    assert 0 < len(info.value.log) < 200
