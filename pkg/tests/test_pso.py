import math

import numpy as np
import pytest

from adaptive_mpc.pso import (PsoConfig, inertia_weight, init_swarm, optimize, particle_rng,
                              pso_step, update_accelerations)

SPHERE = PsoConfig(lower=(-5.12,) * 10, upper=(5.12,) * 10, seed=0)


def sphere(x):
    return float(np.sum(np.asarray(x) ** 2))


def test_inertia_endpoints():
    cfg = PsoConfig()
    assert inertia_weight(0, cfg) == pytest.approx(0.1 + math.exp(0.99) / 3.0, abs=1e-12)
    assert abs(inertia_weight(0, cfg) - 0.99708) < 1e-5
    assert abs(inertia_weight(cfg.n_gen, cfg) - 0.1) < 1e-9
    with pytest.raises(ValueError):
        inertia_weight(cfg.n_gen + 1, cfg)


def test_inertia_is_decreasing():
    cfg = PsoConfig()
    w = [inertia_weight(g, cfg) for g in range(cfg.n_gen + 1)]
    assert all(b < a for a, b in zip(w, w[1:]))


def test_acceleration_bands_and_conservation():
    cfg = PsoConfig(n_gen=20)
    c1, c2 = cfg.c1_init, cfg.c2_init
    steps = []
    for g in range(1, cfg.n_gen + 1):
        n1, n2 = update_accelerations(c1, c2, g, cfg)
        steps.append(round(n1 - c1, 12))
        assert n1 + n2 == pytest.approx(c1 + c2, abs=1e-12)
        c1, c2 = n1, n2
    # g/G = 0.05..0.15 -> +0.05, 0.20..0.30 -> +0.02, 0.35..0.70 -> -0.035, 0.75.. -> -0.0015
    assert steps[:3] == [0.05] * 3
    assert steps[3:6] == [0.02] * 3
    assert steps[6:14] == [-0.035] * 8
    assert steps[14:] == [-0.0015] * 6


def test_config_validation():
    with pytest.raises(ValueError):
        PsoConfig(w_max=0.1, w_min=0.5)
    with pytest.raises(ValueError):
        PsoConfig(lower=(0.0,), upper=(0.0,))


def test_global_best_non_increasing_and_in_bounds():
    cfg = PsoConfig()

    def f(x):
        return float((x[0] - 30) ** 2 + (x[1] - 5) ** 2 + (x[2] - 50) ** 2 + (x[3] - 0.5) ** 2)

    swarm = init_swarm(f, cfg)
    for g in range(1, cfg.n_gen + 1):
        prev = swarm.gbest_cost
        pso_step(swarm, f, g, cfg)
        assert swarm.gbest_cost <= prev
        assert np.all(swarm.position >= np.array(cfg.lower)) and np.all(swarm.position <= np.array(cfg.upper))
        assert swarm.c1 + swarm.c2 == pytest.approx(cfg.c1_init + cfg.c2_init)
    assert len(swarm.history) == cfg.n_gen + 1


def test_velocity_clamp():
    cfg = SPHERE
    swarm = optimize(sphere, cfg)
    vmax = cfg.velocity_clamp * (np.array(cfg.upper) - np.array(cfg.lower))
    assert np.all(np.abs(swarm.velocity) <= vmax + 1e-15)


def test_sphere_improves_hundredfold():
    swarm = optimize(sphere, SPHERE)
    assert swarm.history[0] / swarm.history[-1] >= 100.0


def test_seeded_particle_is_evaluated():
    cfg = PsoConfig()
    seen = []

    def f(x):
        seen.append(tuple(x))
        return 0.0 if tuple(x) == (35.0, 8.0, 10.0, 0.01) else 1.0

    swarm = init_swarm(f, cfg, seeds=[(35.0, 8.0, 10.0, 0.01)])
    assert swarm.gbest_cost == 0.0 and tuple(swarm.gbest_pos) == (35.0, 8.0, 10.0, 0.01)


def test_nan_fitness_is_skipped(caplog):
    cfg = PsoConfig(n_gen=2, n_pop=4)
    swarm = optimize(lambda x: math.nan if x[0] > 35 else sphere(x), cfg)
    assert math.isfinite(swarm.gbest_cost)
    assert "skipped" in caplog.text


def test_determinism_and_order_independence():
    a = optimize(sphere, SPHERE, stream=3)
    b = optimize(sphere, SPHERE, stream=3)
    c = optimize(sphere, SPHERE, stream=3,
                 evaluate=lambda f, xs: [f(x) for x in xs[::-1]][::-1])
    assert a.history == b.history == c.history
    np.testing.assert_array_equal(a.gbest_pos, c.gbest_pos)
    assert optimize(sphere, SPHERE, stream=4).history != a.history


def test_particle_streams_are_independent():
    a = particle_rng(0, 0, 1, 2).uniform(size=3)
    b = particle_rng(0, 0, 2, 1).uniform(size=3)
    assert not np.array_equal(a, b)
