"""Closed-loop episodes: reference paths, disturbance profiles, logging, metrics."""
from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Protocol, Sequence

import numpy as np

from .mpc import DEFAULT_TS, MpcConstraints, MpcController, MpcParams
from .vehicle import Disturbance, LateralState, NonlinearPlant, PacejkaParams, VehicleParams

LANE_WIDTH = 3.5
MODES = ("fixed", "nn-adaptive", "anfis-adaptive")
LOG_COLUMNS = ("t", "y_ref", "y", "error", "u", "du", "psi_dot", "vx", "wind", "mu",
               "np", "nc", "q", "r", "qp_iterations")
# a vehicle turned sideways or this far off the path is treated as lost
MAX_HEADING = math.pi / 2
MAX_TRACKING_ERROR = 50.0


class SimulationDiverged(RuntimeError):
    def __init__(self, message: str, step: int, log: "SimLog"):
        super().__init__(message)
        self.step = step
        self.log = log


class ParameterAdapter(Protocol):
    def predict(self, vx: float, wind: float, mu: float, y_ref: float) -> MpcParams: ...


def logistic_ramp(t, center: float, width: float):
    """0 -> 1 transition over [center - width/2, center + width/2].

    A logistic of a warped time coordinate, so it is exactly flat outside the
    window and smooth (all derivatives continuous) at its ends.
    """
    t = np.asarray(t, dtype=float)
    x = np.atleast_1d(np.clip((t - center) / width + 0.5, 0.0, 1.0))
    out = (x >= 1.0).astype(float)
    inner = (x > 0.0) & (x < 1.0)
    xi = x[inner]
    with np.errstate(over="ignore"):  # exp -> inf near the left edge gives the right limit 0
        out[inner] = 1.0 / (1.0 + np.exp(1.0 / xi - 1.0 / (1.0 - xi)))
    return float(out[0]) if t.ndim == 0 else out


@dataclass(frozen=True)
class TripleLaneChange:
    lane: float = LANE_WIDTH
    centers: tuple[float, float, float] = (5.0, 12.0, 19.0)
    ramp: float = 4.0

    def __call__(self, t):
        c1, c2, c3 = self.centers
        return self.lane * (logistic_ramp(t, c1, self.ramp) + logistic_ramp(t, c2, self.ramp)
                            - logistic_ramp(t, c3, self.ramp))


def triple_lane_change_ref(t: float) -> float:
    return float(TripleLaneChange()(t))


@dataclass(frozen=True)
class SineTrajectory:
    """Sum of two sinusoids, faded in over the first ``fade`` seconds."""

    amplitudes: tuple[float, float] = (4.0, 2.0)
    frequencies: tuple[float, float] = (0.08 * math.pi, 0.2 * math.pi)
    fade: float = 4.0

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        y = sum(a * np.sin(w * t) for a, w in zip(self.amplitudes, self.frequencies))
        out = logistic_ramp(t, self.fade / 2.0, self.fade) * y
        return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class SmoothStep:
    """Step of ``amplitude`` starting at ``t0``, shaped as a half-cosine.

    The transition lasts long enough that the reference's lateral acceleration
    stays below ``a_max`` and its lateral speed below ``v_max``.
    """

    amplitude: float
    t0: float = 1.0
    a_max: float = 2.0
    v_max: float = math.inf
    min_duration: float = 2.0

    @property
    def duration(self) -> float:
        a = abs(self.amplitude)
        return max(self.min_duration, math.pi * math.sqrt(a / (2.0 * self.a_max)),
                   math.pi * a / (2.0 * self.v_max))

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        x = np.clip((t - self.t0) / self.duration, 0.0, 1.0)
        out = self.amplitude * 0.5 * (1.0 - np.cos(math.pi * x))
        return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class Constant:
    value: float

    def __call__(self, t):
        return np.full(np.shape(t), self.value, dtype=float) if np.ndim(t) else float(self.value)


@dataclass(frozen=True)
class PiecewiseLinear:
    times: tuple[float, ...]
    values: tuple[float, ...]

    def __post_init__(self):
        if len(self.times) != len(self.values) or not self.times:
            raise ValueError("piecewise profile needs matching, non-empty times and values")
        if any(b <= a for a, b in zip(self.times, self.times[1:])):
            raise ValueError("piecewise profile times must be increasing")

    def __call__(self, t):
        out = np.interp(t, self.times, self.values)
        return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class Pulses:
    """Base value plus rectangular pulses given as (start, end, value)."""

    pulses: tuple[tuple[float, float, float], ...] = ()
    base: float = 0.0

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        out = np.full(t.shape, self.base)
        for start, end, value in self.pulses:
            out = np.where((t >= start) & (t < end), value, out)
        return float(out) if out.ndim == 0 else out


@dataclass
class Scenario:
    name: str
    duration: float
    reference: Callable
    velocity: Callable
    wind: Callable = field(default_factory=lambda: Constant(0.0))
    mu: Callable = field(default_factory=lambda: Constant(0.9))
    mode: str = "fixed"

    def __post_init__(self):
        if self.duration <= 0:
            raise ValueError("scenario duration must be > 0")
        if self.mode not in MODES:
            raise ValueError(f"unknown controller mode {self.mode!r}; expected one of {MODES}")


def builtin_scenario(name: str, mode: str = "fixed") -> Scenario:
    if name == "triple-lane-change":
        return Scenario(
            name, 25.0, TripleLaneChange(),
            velocity=PiecewiseLinear((0.0, 8.0, 16.0, 25.0), (12.0, 24.0, 24.0, 16.0)),
            wind=Pulses(((6.0, 10.0, 20.0), (15.0, 18.0, -20.0))),
            mu=Pulses(((11.0, 25.0, 0.5),), base=0.9),
            mode=mode,
        )
    if name == "general-trajectory":
        return Scenario(
            name, 40.0, SineTrajectory(),
            velocity=PiecewiseLinear((0.0, 10.0, 25.0, 40.0), (10.0, 20.0, 20.0, 14.0)),
            wind=Pulses(((8.0, 14.0, 20.0), (24.0, 30.0, -20.0))),
            mu=Pulses(((18.0, 40.0, 0.5),), base=0.9),
            mode=mode,
        )
    if name == "regulation-zero":
        return Scenario(name, 10.0, Constant(0.0), Constant(15.0), Constant(0.0), Constant(0.9),
                        mode=mode)
    raise KeyError(f"unknown scenario {name!r}")


BUILTIN_SCENARIOS = ("triple-lane-change", "general-trajectory", "regulation-zero")


@dataclass
class SimLog:
    columns: dict[str, np.ndarray]

    def __len__(self) -> int:
        return len(self.columns["t"])

    def __getitem__(self, key: str) -> np.ndarray:
        return self.columns[key]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(LOG_COLUMNS)
            for row in zip(*(self.columns[c] for c in LOG_COLUMNS)):
                writer.writerow([f"{v:.6g}" for v in row])

    @classmethod
    def read_csv(cls, path) -> "SimLog":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        header, body = rows[0], rows[1:]
        data = np.array(body, dtype=float).reshape(len(body), len(header))
        return cls({name: data[:, i] for i, name in enumerate(header)})


def compute_mse(log: SimLog | Sequence[float]) -> float:
    errors = np.asarray(log["error"] if isinstance(log, SimLog) else log, dtype=float)
    if errors.size == 0:
        raise ValueError("cannot compute MSE of an empty log")
    return float(np.mean(errors**2))


def summarize(log: SimLog, scenario: str, mode: str, latency_us: float | None = None) -> dict:
    return {
        "scenario": scenario,
        "mode": mode,
        "mse": compute_mse(log),
        "max_abs_error": float(np.max(np.abs(log["error"]))),
        "mean_qp_iterations": float(np.mean(log["qp_iterations"])),
        "adapter_latency_us": latency_us,
    }


def write_summary(summary: dict, path) -> None:
    with open(path, "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _finish(cols: dict[str, list], n: int) -> SimLog:
    return SimLog({k: np.asarray(v[:n], dtype=float) for k, v in cols.items()})


def run_closed_loop(scenario: Scenario, vehicle: VehicleParams | None = None,
                    params: MpcParams | None = None, constraints: MpcConstraints | None = None,
                    adapter: ParameterAdapter | None = None, ts: float = DEFAULT_TS,
                    adapter_every: int = 1, tire: PacejkaParams | None = None,
                    initial_state: LateralState | None = None,
                    timings: list | None = None) -> SimLog:
    """Run one episode and return its per-step log.

    In adaptive modes the adapter is queried every ``adapter_every`` steps with
    the current speed, wind, adhesion and reference setpoint. Wall-clock query
    times (microseconds) are appended to ``timings`` when a list is given.
    """
    adaptive = scenario.mode != "fixed"
    if adaptive and adapter is None:
        raise ValueError(f"mode {scenario.mode!r} needs a parameter adapter")
    if adapter_every < 1:
        raise ValueError("adapter_every must be >= 1")
    vehicle = vehicle or VehicleParams()
    params = params or MpcParams()
    controller = MpcController(vehicle, params, constraints, ts)
    plant = NonlinearPlant(vehicle, tire)
    cons = controller.constraints

    n = int(round(scenario.duration / ts))
    horizon_pad = 128
    grid = np.arange(n + horizon_pad + 1) * ts
    ref = np.asarray(scenario.reference(grid), dtype=float)
    vx = np.asarray(scenario.velocity(grid[:n]), dtype=float)
    wind = np.asarray(scenario.wind(grid[:n]), dtype=float)
    mu = np.asarray(scenario.mu(grid[:n]), dtype=float)
    if np.any(vx < 1.0) or np.any(vx > 30.0):
        raise ValueError("velocity profile leaves [1, 30] m/s")

    cols: dict[str, list] = {c: [0.0] * n for c in LOG_COLUMNS}
    state = initial_state or LateralState()
    current = params
    for k in range(n):
        if adaptive and k % adapter_every == 0:
            t0 = time.perf_counter()
            try:
                current = adapter.predict(vx[k], wind[k], mu[k], ref[k])
            except Exception as exc:
                raise RuntimeError(f"adapter failed at step {k}: {exc}") from exc
            if timings is not None:
                timings.append((time.perf_counter() - t0) * 1e6)
        p = current
        end = k + 1 + max(p.np, 1)
        window = ref[k + 1:end] if end <= ref.size else ref[k + 1:]
        u_before = controller.u_prev
        try:
            u = controller.step(state, vx[k], window, p)
        except Exception as exc:
            raise RuntimeError(f"controller failed at step {k}: {exc}") from exc
        sol = controller.last_solution
        row = cols
        row["t"][k] = grid[k]
        row["y_ref"][k] = ref[k]
        row["y"][k] = state.y
        row["error"][k] = ref[k] - state.y
        row["u"][k] = u
        row["du"][k] = u - u_before
        row["psi_dot"][k] = state.psi_dot
        row["vx"][k] = vx[k]
        row["wind"][k] = wind[k]
        row["mu"][k] = mu[k]
        row["np"][k] = p.np
        row["nc"][k] = p.nc
        row["q"][k] = p.q
        row["r"][k] = p.r
        row["qp_iterations"][k] = sol.iterations if sol is not None else 0
        try:
            state = plant.step(state, u, vx[k], Disturbance(wind[k], mu[k]), ts)
        except FloatingPointError as exc:
            raise SimulationDiverged(str(exc), k, _finish(cols, k + 1)) from exc
        if (not state.is_finite() or abs(state.psi) > MAX_HEADING
                or abs(ref[k + 1] - state.y) > MAX_TRACKING_ERROR):
            raise SimulationDiverged(f"vehicle lost the path at step {k}", k, _finish(cols, k + 1))
    return _finish(cols, n)
