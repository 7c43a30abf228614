"""Offline MPC tuning: closed-loop fitness, PSO per operating condition, and the
optimal-parameter dataset both adapters learn from."""
from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .mpc import DEFAULT_TS, MpcConstraints, MpcParams
from .pso import PsoConfig, optimize
from .scenarios import Constant, Scenario, SimulationDiverged, SmoothStep, compute_mse, run_closed_loop
from .vehicle import VehicleParams

log = logging.getLogger(__name__)

DATASET_COLUMNS = ("vx", "wind", "mu", "y_ref", "np", "nc", "q", "r", "mse")
DEFAULT_PARAMS = MpcParams(35, 8, 10.0, 0.01)
EPISODE_DURATION = 10.0
STEP_TIME = 1.0
# heading the tuning reference may ask for; bounds its lateral speed at low vx
REFERENCE_HEADING = 0.3

RANGES = {"vx": (3.0, 27.0), "y_ref": (-15.0, 15.0), "mu": (0.5, 0.9), "wind": (-30.0, 30.0)}


@dataclass(frozen=True)
class OperatingCondition:
    vx: float
    wind: float
    mu: float
    y_ref: float

    def __post_init__(self):
        for name, (lo, hi) in RANGES.items():
            value = getattr(self, name)
            if not lo <= value <= hi:
                raise ValueError(f"{name}={value} outside [{lo}, {hi}]")

    def as_array(self) -> np.ndarray:
        return np.array([self.vx, self.wind, self.mu, self.y_ref])


@dataclass(frozen=True)
class TuningRecord:
    condition: OperatingCondition
    optimal: MpcParams
    achieved_mse: float

    def row(self) -> list:
        c, p = self.condition, self.optimal
        return [c.vx, c.wind, c.mu, c.y_ref, p.np, p.nc, p.q, p.r, self.achieved_mse]


def candidate_params(candidate: Sequence[float]) -> MpcParams:
    """Round a continuous PSO position to valid MPC parameters."""
    np_raw, nc_raw, q, r = (float(v) for v in candidate)
    n_p = max(1, int(round(np_raw)))
    n_c = min(max(1, int(round(nc_raw))), n_p)
    return MpcParams(n_p, n_c, q, r)


def fitness_scenario(cond: OperatingCondition) -> Scenario:
    v_max = cond.vx * math.tan(REFERENCE_HEADING)
    return Scenario("tuning-step", EPISODE_DURATION, SmoothStep(cond.y_ref, STEP_TIME, v_max=v_max),
                    Constant(cond.vx), Constant(cond.wind), Constant(cond.mu))


def evaluate_fitness(candidate: Sequence[float], cond: OperatingCondition,
                     vehicle: VehicleParams | None = None,
                     constraints: MpcConstraints | None = None, ts: float = DEFAULT_TS) -> float:
    """Closed-loop tracking MSE of ``candidate`` on the tuning episode; +inf if the car is lost."""
    params = candidate_params(candidate)
    try:
        sim = run_closed_loop(fitness_scenario(cond), vehicle, params, constraints, ts=ts)
    except SimulationDiverged:
        return math.inf
    return compute_mse(sim)


def condition_grid(n_vx: int = 8, n_yref: int = 8, n_mu: int = 10, n_wind: int = 10,
                   ranges: dict | None = None) -> list[OperatingCondition]:
    """Uniform grid over the tuning ranges, ordered vx, y_ref, mu, wind (wind fastest)."""
    ranges = {**RANGES, **(ranges or {})}

    def axis(name, n):
        lo, hi = ranges[name]
        return np.linspace(lo, hi, n) if n > 1 else np.array([(lo + hi) / 2.0])

    return [OperatingCondition(float(vx), float(w), float(mu), float(yr))
            for vx in axis("vx", n_vx) for yr in axis("y_ref", n_yref)
            for mu in axis("mu", n_mu) for w in axis("wind", n_wind)]


FitnessFactory = Callable[[OperatingCondition], Callable[[np.ndarray], float]]


def tune_condition(cond: OperatingCondition, cfg: PsoConfig, stream: int = 0,
                   fitness_factory: FitnessFactory | None = None,
                   seed_default: bool = True, warm_start: Sequence[float] | None = None,
                   **sim_kwargs) -> TuningRecord:
    if fitness_factory is None:
        def fitness(x):
            return evaluate_fitness(x, cond, **sim_kwargs)
    else:
        fitness = fitness_factory(cond)
    seeds = []
    if seed_default:
        d = DEFAULT_PARAMS
        seeds.append((d.np, d.nc, d.q, d.r))
    if warm_start is not None:
        seeds.append(tuple(warm_start))
    swarm = optimize(fitness, cfg, stream=stream, seeds=seeds)
    best = candidate_params(swarm.gbest_pos)
    return TuningRecord(cond, best, swarm.gbest_cost)


def generate_dataset(conditions: Iterable[OperatingCondition], cfg: PsoConfig | None = None,
                     fitness_factory: FitnessFactory | None = None, workers: int = 1,
                     seed_default: bool = True, warm_start: bool = False,
                     progress: Callable[[int, TuningRecord], None] | None = None,
                     **sim_kwargs) -> list[TuningRecord]:
    """Run one PSO per condition. Grid index is the RNG stream, so results do not
    depend on ``workers``. Warm starting chains grid points and forces serial runs."""
    cfg = cfg or PsoConfig()
    conditions = list(conditions)

    def job(i):
        return tune_condition(conditions[i], cfg, i, fitness_factory, seed_default, None,
                              **sim_kwargs)

    records: list[TuningRecord] = []
    if warm_start:
        prev = None
        for i, cond in enumerate(conditions):
            rec = tune_condition(cond, cfg, i, fitness_factory, seed_default, prev, **sim_kwargs)
            o = rec.optimal
            prev = (o.np, o.nc, o.q, o.r)
            records.append(rec)
            if progress:
                progress(i, rec)
        return records
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            for i, rec in enumerate(pool.map(job, range(len(conditions)))):
                records.append(rec)
                if progress:
                    progress(i, rec)
    else:
        for i in range(len(conditions)):
            rec = job(i)
            records.append(rec)
            if progress:
                progress(i, rec)
    return records


def write_dataset(records: Sequence[TuningRecord], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(DATASET_COLUMNS)
        for rec in records:
            writer.writerow([repr(float(v)) if isinstance(v, float) else v for v in rec.row()])


def read_dataset(path) -> list[TuningRecord]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != DATASET_COLUMNS:
            raise ValueError(f"{path}: expected columns {DATASET_COLUMNS}, got {reader.fieldnames}")
        return [TuningRecord(
            OperatingCondition(float(r["vx"]), float(r["wind"]), float(r["mu"]), float(r["y_ref"])),
            MpcParams(int(r["np"]), int(r["nc"]), float(r["q"]), float(r["r"])),
            float(r["mse"])) for r in reader]


def dataset_arrays(records: Sequence[TuningRecord]) -> tuple[np.ndarray, np.ndarray]:
    """Inputs (vx, wind, mu, y_ref) and targets (np, nc, q, r) as float arrays."""
    x = np.array([r.condition.as_array() for r in records], dtype=float)
    y = np.array([[r.optimal.np, r.optimal.nc, r.optimal.q, r.optimal.r] for r in records],
                 dtype=float)
    return x, y


PARAM_NAMES = ("np", "nc", "q", "r")


def params_from_prediction(raw: Sequence[float], cfg: PsoConfig | None = None) -> MpcParams:
    """Round and clamp a raw (np, nc, q, r) regression output onto valid MPC parameters.

    Non-finite entries fall back to the lower search bound, so any adapter output
    yields 2 <= nc <= np and positive weights.
    """
    cfg = cfg or PsoConfig()
    lo, hi = cfg.lower, cfg.upper
    vals = []
    for v, a, b in zip(raw, lo, hi):
        v = float(v)
        vals.append(min(max(v, a), b) if math.isfinite(v) else a)
    n_p = int(min(max(round(vals[0]), math.ceil(lo[0])), math.floor(hi[0])))
    n_c = int(min(max(round(vals[1]), math.ceil(lo[1])), n_p))
    return MpcParams(n_p, n_c, vals[2], vals[3])
