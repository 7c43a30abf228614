"""Velocity-scheduled linear MPC for lateral path tracking.

The prediction model is the linear single-track model rebuilt at the current
longitudinal speed, discretized with a zero-order hold and augmented with an
output integrator so the controller optimizes steering increments.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .qp import QpProblem, QpSolution, check_positive_definite, hildreth_solve
from .vehicle import ContinuousStateSpace, LateralState, VehicleParams, linear_lateral_matrices

DEFAULT_TS = 0.05
# move weight r applies to steering increments expressed in degrees
MOVE_WEIGHT_SCALE = (180.0 / math.pi) ** 2


@dataclass(frozen=True)
class DiscreteStateSpace:
    a_d: np.ndarray
    b_d: np.ndarray
    c_d: np.ndarray
    ts: float

    def __post_init__(self):
        if self.ts <= 0:
            raise ValueError("sample time must be > 0")


@dataclass(frozen=True)
class AugmentedModel:
    a_aug: np.ndarray
    b_aug: np.ndarray
    c_aug: np.ndarray


@dataclass(frozen=True)
class PredictionMatrices:
    f: np.ndarray
    phi: np.ndarray


@dataclass(frozen=True)
class MpcParams:
    np: int = 35
    nc: int = 8
    q: float = 10.0
    r: float = 0.01

    def __post_init__(self):
        if int(self.np) != self.np or int(self.nc) != self.nc:
            raise ValueError("horizons must be integers")
        object.__setattr__(self, "np", int(self.np))
        object.__setattr__(self, "nc", int(self.nc))
        if not 1 <= self.nc <= self.np:
            raise ValueError(f"need 1 <= nc <= np, got nc={self.nc}, np={self.np}")
        if not (self.q > 0 and self.r > 0):
            raise ValueError("weights q and r must be > 0")


@dataclass(frozen=True)
class MpcConstraints:
    du_max: float = math.pi / 12
    u_max: float = math.pi / 6
    y_max: float | None = None

    def __post_init__(self):
        if self.du_max <= 0 or self.u_max <= 0:
            raise ValueError("steering bounds must be > 0")
        if self.y_max is not None and self.y_max <= 0:
            raise ValueError("output bound must be > 0")


def _expm(mat: np.ndarray, terms: int = 13) -> np.ndarray:
    """Matrix exponential by scaling and squaring of a truncated Taylor series."""
    norm = np.linalg.norm(mat, ord=1)
    s = max(0, int(math.ceil(math.log2(norm / 0.5)))) if norm > 0.5 else 0
    scaled = mat / (2.0 ** s)
    result = np.eye(mat.shape[0])
    term = np.eye(mat.shape[0])
    for k in range(1, terms + 1):
        term = term @ scaled / k
        result = result + term
    for _ in range(s):
        result = result @ result
    if not np.all(np.isfinite(result)):
        raise FloatingPointError("matrix exponential did not converge")
    return result


def discretize(css: ContinuousStateSpace, ts: float) -> DiscreteStateSpace:
    if ts <= 0:
        raise ValueError("sample time must be > 0")
    n, m = css.b.shape
    block = np.zeros((n + m, n + m))
    block[:n, :n] = css.a
    block[:n, n:] = css.b
    phi = _expm(block * ts)
    return DiscreteStateSpace(phi[:n, :n], phi[:n, n:], css.c.copy(), ts)


def augment(dss: DiscreteStateSpace) -> AugmentedModel:
    a, b, c = dss.a_d, dss.b_d, dss.c_d
    n, q = a.shape[0], c.shape[0]
    a_aug = np.zeros((n + q, n + q))
    a_aug[:n, :n] = a
    a_aug[n:, :n] = c @ a
    a_aug[n:, n:] = np.eye(q)
    b_aug = np.vstack([b, c @ b])
    c_aug = np.hstack([np.zeros((q, n)), np.eye(q)])
    return AugmentedModel(a_aug, b_aug, c_aug)


def build_prediction(aug: AugmentedModel, np_: int, nc: int) -> PredictionMatrices:
    if not 1 <= nc <= np_:
        raise ValueError(f"need 1 <= nc <= np, got nc={nc}, np={np_}")
    a, b, c = aug.a_aug, aug.b_aug, aug.c_aug
    f = np.zeros((np_, a.shape[0]))
    markov = np.zeros(np_)  # markov[i] = C A^i B
    ca = c.copy()
    for i in range(np_):
        markov[i] = (ca @ b).item()
        ca = ca @ a
        f[i] = ca[0]
    phi = np.zeros((np_, nc))
    for j in range(nc):
        phi[j:, j] = markov[:np_ - j]
    return PredictionMatrices(f, phi)


def constraint_matrix(nc: int, np_: int, phi: np.ndarray | None = None,
                      with_output: bool = False) -> np.ndarray:
    """Rows: +du, -du, +u, -u and, optionally, +y, -y."""
    eye = np.eye(nc)
    lower = np.tril(np.ones((nc, nc)))
    blocks = [eye, -eye, lower, -lower]
    if with_output:
        blocks += [phi, -phi]
    return np.vstack(blocks)


def constraint_bounds(nc: int, cons: MpcConstraints, u_prev: float,
                      free_response: np.ndarray | None = None) -> np.ndarray:
    parts = [
        np.full(nc, cons.du_max),
        np.full(nc, cons.du_max),
        np.full(nc, cons.u_max - u_prev),
        np.full(nc, cons.u_max + u_prev),
    ]
    if cons.y_max is not None:
        parts += [cons.y_max - free_response, cons.y_max + free_response]
    return np.concatenate(parts)


def hessian(phi: np.ndarray, params: MpcParams, move_scale: float = MOVE_WEIGHT_SCALE) -> np.ndarray:
    nc = phi.shape[1]
    return params.q * phi.T @ phi + params.r * move_scale * np.eye(nc)


def assemble_qp(pred: PredictionMatrices, x_aug: np.ndarray, r_s: np.ndarray, params: MpcParams,
                cons: MpcConstraints, u_prev: float,
                move_scale: float = MOVE_WEIGHT_SCALE) -> QpProblem:
    np_, nc = pred.phi.shape
    r_s = np.asarray(r_s, dtype=float).reshape(-1)
    if r_s.size != np_:
        raise ValueError(f"reference window has {r_s.size} samples, expected {np_}")
    free = pred.f @ np.asarray(x_aug, dtype=float).reshape(-1)
    e = hessian(pred.phi, params, move_scale)
    k = -params.q * pred.phi.T @ (r_s - free)
    with_y = cons.y_max is not None
    m = constraint_matrix(nc, np_, pred.phi, with_y)
    gamma = constraint_bounds(nc, cons, u_prev, free if with_y else None)
    return QpProblem(e, k, m, gamma)


def reference_window(ref, np_: int) -> np.ndarray:
    """Truncate to ``np_`` samples or pad by holding the last value."""
    ref = np.asarray(ref, dtype=float).reshape(-1)
    if ref.size == 0:
        raise ValueError("empty reference window")
    if ref.size >= np_:
        return ref[:np_]
    return np.concatenate([ref, np.full(np_ - ref.size, ref[-1])])


class MpcController:
    """Receding-horizon lateral controller.

    Holds the previous command and measurement (for the increment form) and a
    cache of the prediction/QP matrices, rebuilt when the speed moves more than
    ``rebuild_tol`` from the cached value or the tuning parameters change.
    """

    def __init__(self, vehicle: VehicleParams | None = None, params: MpcParams | None = None,
                 constraints: MpcConstraints | None = None, ts: float = DEFAULT_TS,
                 rebuild_tol: float = 0.1, tol: float = 1e-8, max_iter: int = 200,
                 move_scale: float = MOVE_WEIGHT_SCALE):
        self.vehicle = vehicle or VehicleParams()
        self.params = params or MpcParams()
        self.constraints = constraints or MpcConstraints()
        self.ts = ts
        self.rebuild_tol = rebuild_tol
        self.tol = tol
        self.max_iter = max_iter
        self.move_scale = move_scale
        self._cache = None
        self.reset()

    def reset(self, u_prev: float = 0.0):
        self.u_prev = u_prev
        self.x_prev: np.ndarray | None = None
        self.last_solution: QpSolution | None = None
        self.rebuilds = 0

    def _matrices(self, vx: float):
        c = self._cache
        if c is not None and c["params"] == self.params and abs(vx - c["vx"]) <= self.rebuild_tol:
            return c
        p = self.params
        aug = augment(discretize(linear_lateral_matrices(self.vehicle, vx), self.ts))
        pred = build_prediction(aug, p.np, p.nc)
        phi_t_q = p.q * pred.phi.T
        e = hessian(pred.phi, p, self.move_scale)
        check_positive_definite(e)
        e_inv = np.linalg.inv(e)
        m = constraint_matrix(p.nc, p.np, pred.phi, self.constraints.y_max is not None)
        self._cache = c = {
            "vx": vx, "params": p, "pred": pred, "e": e, "e_inv": e_inv, "phi_t_q": phi_t_q,
            "m": m, "h": m @ e_inv @ m.T,
        }
        self.rebuilds += 1
        return c

    def augmented_state(self, measurement: LateralState) -> np.ndarray:
        x = measurement.as_array()
        dx = np.zeros(4) if self.x_prev is None else x - self.x_prev
        return np.concatenate([dx, [measurement.y]])

    def step(self, measurement: LateralState, vx: float, ref_window,
             params: MpcParams | None = None) -> float:
        if not measurement.is_finite():
            raise FloatingPointError("non-finite measurement")
        if params is not None:
            self.params = params
        p, cons = self.params, self.constraints
        c = self._matrices(vx)
        pred = c["pred"]
        x_aug = self.augmented_state(measurement)
        free = pred.f @ x_aug
        k = -c["phi_t_q"] @ (reference_window(ref_window, p.np) - free)
        gamma = constraint_bounds(p.nc, cons, self.u_prev, free if cons.y_max is not None else None)
        qp = QpProblem(c["e"], k, c["m"], gamma)
        sol = hildreth_solve(qp, self.tol, self.max_iter, e_inv=c["e_inv"], h=c["h"])
        self.last_solution = sol
        du = min(max(float(sol.x[0]), -cons.du_max), cons.du_max)
        u = min(max(self.u_prev + du, -cons.u_max), cons.u_max)
        self.x_prev = measurement.as_array()
        self.u_prev = u
        return u


def mpc_step(controller: MpcController, measurement: LateralState, vx: float, ref_window,
             params: MpcParams | None = None, constraints: MpcConstraints | None = None) -> float:
    if constraints is not None and constraints != controller.constraints:
        controller.constraints = constraints
        controller._cache = None
    return controller.step(measurement, vx, ref_window, params)
