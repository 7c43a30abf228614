"""Particle swarm optimizer with an exponentially decaying inertia weight and
generation-banded cognitive/social accelerations."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

log = logging.getLogger(__name__)

# (upper edge of g/G band, alpha); beta = -alpha in every band
ACCELERATION_BANDS = ((0.20, 0.05), (0.35, 0.02), (0.75, -0.035), (math.inf, -0.0015))


@dataclass(frozen=True)
class PsoConfig:
    n_gen: int = 15
    n_pop: int = 20
    w_max: float = 0.99
    w_min: float = 0.1
    c1_init: float = 2.0
    c2_init: float = 2.0
    lambda1: float = 30.0
    lambda2: float = 3.0
    lower: tuple[float, ...] = (10.0, 2.0, 0.1, 0.001)
    upper: tuple[float, ...] = (60.0, 15.0, 100.0, 1.0)
    seed: int = 0
    velocity_clamp: float = 0.2

    def __post_init__(self):
        if not self.w_max > self.w_min > 0:
            raise ValueError("need w_max > w_min > 0")
        if self.n_gen < 1 or self.n_pop < 1:
            raise ValueError("need at least one generation and one particle")
        if len(self.lower) != len(self.upper):
            raise ValueError("search bounds differ in dimension")
        if any(lo >= hi for lo, hi in zip(self.lower, self.upper)):
            raise ValueError("every search bound needs lower < upper")
        if self.lambda2 == 0:
            raise ValueError("lambda2 must be non-zero")

    @property
    def dim(self) -> int:
        return len(self.lower)


def inertia_weight(g: int, cfg: PsoConfig) -> float:
    if not 0 <= g <= cfg.n_gen:
        raise ValueError(f"generation {g} outside [0, {cfg.n_gen}]")
    frac = g / cfg.n_gen
    return cfg.w_min + math.exp(cfg.w_max - cfg.lambda1 * (cfg.w_max + cfg.w_min) * frac) / cfg.lambda2


def acceleration_step(g: int, cfg: PsoConfig) -> float:
    frac = g / cfg.n_gen
    for upper, alpha in ACCELERATION_BANDS:
        if frac < upper:
            return alpha
    return ACCELERATION_BANDS[-1][1]


def update_accelerations(c1: float, c2: float, g: int, cfg: PsoConfig) -> tuple[float, float]:
    if not 0 <= g <= cfg.n_gen:
        raise ValueError(f"generation {g} outside [0, {cfg.n_gen}]")
    alpha = acceleration_step(g, cfg)
    return c1 + alpha, c2 - alpha


@dataclass
class Swarm:
    position: np.ndarray
    velocity: np.ndarray
    pbest_pos: np.ndarray
    pbest_cost: np.ndarray
    gbest_pos: np.ndarray
    gbest_cost: float
    c1: float
    c2: float
    history: list[float] = field(default_factory=list)

    def copy(self) -> "Swarm":
        return Swarm(self.position.copy(), self.velocity.copy(), self.pbest_pos.copy(),
                     self.pbest_cost.copy(), self.gbest_pos.copy(), self.gbest_cost,
                     self.c1, self.c2, list(self.history))


def particle_rng(seed: int, stream: int, particle: int, generation: int) -> np.random.Generator:
    """Independent stream per (seed, stream, particle, generation); generation 0 is initialisation."""
    return np.random.default_rng([seed, stream, particle, generation])


def _sanitize(value, x: np.ndarray) -> float:
    value = float(value)
    if math.isnan(value) or value == -math.inf:
        log.warning("fitness returned %r at %s; particle skipped", value, x)
        return math.inf
    return value


def _update_bests(swarm: Swarm, costs: np.ndarray) -> None:
    improved = costs < swarm.pbest_cost
    swarm.pbest_cost[improved] = costs[improved]
    swarm.pbest_pos[improved] = swarm.position[improved]
    i = int(np.argmin(swarm.pbest_cost))
    if swarm.pbest_cost[i] < swarm.gbest_cost:
        swarm.gbest_cost = float(swarm.pbest_cost[i])
        swarm.gbest_pos = swarm.pbest_pos[i].copy()


def init_swarm(fitness: Callable[[np.ndarray], float], cfg: PsoConfig, stream: int = 0,
               seeds: Sequence[Sequence[float]] = (),
               evaluate: Callable | None = None) -> Swarm:
    """Uniform random swarm inside the bounds; ``seeds`` overwrite the first particles."""
    lo, hi = np.asarray(cfg.lower, float), np.asarray(cfg.upper, float)
    vmax = cfg.velocity_clamp * (hi - lo)
    pos = np.empty((cfg.n_pop, cfg.dim))
    vel = np.empty((cfg.n_pop, cfg.dim))
    for i in range(cfg.n_pop):
        rng = particle_rng(cfg.seed, stream, i, 0)
        pos[i] = rng.uniform(lo, hi)
        vel[i] = rng.uniform(-vmax, vmax)
    for i, s in enumerate(seeds[:cfg.n_pop]):
        pos[i] = np.clip(np.asarray(s, dtype=float), lo, hi)
    costs = _evaluate_all(fitness, pos, evaluate)
    swarm = Swarm(pos, vel, pos.copy(), np.full(cfg.n_pop, math.inf), pos[0].copy(), math.inf,
                  cfg.c1_init, cfg.c2_init)
    _update_bests(swarm, costs)
    swarm.history.append(swarm.gbest_cost)
    return swarm


def _evaluate_all(fitness, positions: np.ndarray, evaluate: Callable | None) -> np.ndarray:
    if evaluate is not None:
        values = evaluate(fitness, positions)
    else:
        values = [fitness(x) for x in positions]
    return np.array([_sanitize(v, x) for v, x in zip(values, positions)])


def pso_step(swarm: Swarm, fitness: Callable[[np.ndarray], float], g: int, cfg: PsoConfig,
             stream: int = 0, evaluate: Callable | None = None,
             w: float | None = None) -> Swarm:
    """Advance the swarm by one generation (``g`` in 1..G) in place and return it.

    ``evaluate(fitness, positions) -> costs`` may be supplied to batch or
    parallelise fitness calls; results must not depend on evaluation order.
    """
    lo, hi = np.asarray(cfg.lower, float), np.asarray(cfg.upper, float)
    vmax = cfg.velocity_clamp * (hi - lo)
    w = inertia_weight(g, cfg) if w is None else w
    for i in range(cfg.n_pop):
        rng = particle_rng(cfg.seed, stream, i, g)
        r1 = rng.uniform(size=cfg.dim)
        r2 = rng.uniform(size=cfg.dim)
        v = (w * swarm.velocity[i]
             + swarm.c1 * r1 * (swarm.pbest_pos[i] - swarm.position[i])
             + swarm.c2 * r2 * (swarm.gbest_pos - swarm.position[i]))
        swarm.velocity[i] = np.clip(v, -vmax, vmax)
        swarm.position[i] = np.clip(swarm.position[i] + swarm.velocity[i], lo, hi)
    costs = _evaluate_all(fitness, swarm.position, evaluate)
    _update_bests(swarm, costs)
    swarm.history.append(swarm.gbest_cost)
    swarm.c1, swarm.c2 = update_accelerations(swarm.c1, swarm.c2, g, cfg)
    return swarm


def optimize(fitness: Callable[[np.ndarray], float], cfg: PsoConfig, stream: int = 0,
             seeds: Sequence[Sequence[float]] = (), evaluate: Callable | None = None) -> Swarm:
    swarm = init_swarm(fitness, cfg, stream, seeds, evaluate)
    for g in range(1, cfg.n_gen + 1):
        pso_step(swarm, fitness, g, cfg, stream, evaluate)
    return swarm
