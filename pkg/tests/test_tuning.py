import math

import numpy as np
import pytest

from adaptive_mpc.mpc import MpcParams
from adaptive_mpc.pso import PsoConfig
from adaptive_mpc.tuning import (DATASET_COLUMNS, OperatingCondition, candidate_params,
                                 condition_grid, dataset_arrays, evaluate_fitness,
                                 fitness_scenario, generate_dataset, params_from_prediction,
                                 read_dataset, tune_condition, write_dataset)


def test_candidate_rounding():
    assert candidate_params([20.4, 25.0, 3.0, 0.2]) == MpcParams(20, 20, 3.0, 0.2)
    assert candidate_params([10.6, 2.5, 1.0, 0.01]).np == 11


def test_params_from_prediction_clamps():
    assert params_from_prediction([100, 100, 1e3, 5]) == MpcParams(60, 15, 100.0, 1.0)
    assert params_from_prediction([math.nan, -1, -1, math.inf]) == MpcParams(10, 2, 0.1, 0.001)


def test_condition_validation_and_grid():
    with pytest.raises(ValueError):
        OperatingCondition(40.0, 0.0, 0.9, 0.0)
    grid = condition_grid()
    assert len(grid) == 6400 and len(set(grid)) == 6400
    assert grid[0] == OperatingCondition(3.0, -30.0, 0.5, -15.0)
    assert condition_grid(1, 1, 1, 1) == [OperatingCondition(15.0, 0.0, 0.7, 0.0)]


def test_fitness_reference_reaches_setpoint_at_highway_speed():
    sc = fitness_scenario(OperatingCondition(20.0, 0.0, 0.9, 3.5))
    assert sc.reference(10.0) == pytest.approx(3.5)


def test_fitness_is_finite_mse_for_defaults():
    f = evaluate_fitness([35, 8, 10.0, 0.01], OperatingCondition(15.0, 10.0, 0.9, 3.5))
    assert 0.0 < f < 1e-2


def _quadratic(cond):
    target = np.array([20 + cond.vx, 5.0, cond.q if hasattr(cond, "q") else 50.0, 0.1])

    def f(x):
        return float(np.sum(((np.asarray(x) - target) / [50, 13, 100, 1]) ** 2))
    return f


def test_tune_condition_never_worse_than_seeded_default():
    cond = OperatingCondition(10.0, 0.0, 0.9, 2.0)
    rec = tune_condition(cond, PsoConfig(n_gen=5, n_pop=6), fitness_factory=_quadratic)
    assert rec.achieved_mse <= _quadratic(cond)([35, 8, 10.0, 0.01])


def test_dataset_roundtrip_and_worker_independence(tmp_path):
    conds = condition_grid(2, 2, 1, 2)
    cfg = PsoConfig(n_gen=3, n_pop=5)
    a = generate_dataset(conds, cfg, fitness_factory=_quadratic)
    b = generate_dataset(conds, cfg, fitness_factory=_quadratic, workers=3)
    assert a == b
    write_dataset(a, tmp_path / "d.csv")
    back = read_dataset(tmp_path / "d.csv")
    assert back == a
    assert (tmp_path / "d.csv").read_text().splitlines()[0] == ",".join(DATASET_COLUMNS)
    x, y = dataset_arrays(back)
    assert x.shape == (8, 4) and y.shape == (8, 4)


def test_read_dataset_rejects_wrong_header(tmp_path):
    (tmp_path / "bad.csv").write_text("a,b\n1,2\n")
    with pytest.raises(ValueError):
        read_dataset(tmp_path / "bad.csv")
