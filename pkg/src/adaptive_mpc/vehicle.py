"""Lateral vehicle dynamics.

Two models live here: the linear single-track model the controller predicts
with, and a nonlinear single-track plant with magic-formula tires, lateral
wind and adhesion scaling that stands in for the real car in simulation.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

GRAVITY = 9.81
AIR_DENSITY = 1.225
VX_MIN = 1.0


@dataclass(frozen=True)
class VehicleParams:
    m: float = 1575.0
    iz: float = 2875.0
    lf: float = 1.2
    lr: float = 1.6
    cyf: float = 19000.0
    cyr: float = 33000.0

    def __post_init__(self):
        for name in ("m", "iz", "lf", "lr", "cyf", "cyr"):
            value = getattr(self, name)
            if not math.isfinite(value) or value <= 0:
                raise ValueError(f"vehicle parameter {name} must be finite and > 0, got {value!r}")


@dataclass(frozen=True)
class LateralState:
    """Body lateral velocity, heading, yaw rate and inertial lateral position."""

    vy: float = 0.0
    psi: float = 0.0
    psi_dot: float = 0.0
    y: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array([self.vy, self.psi, self.psi_dot, self.y])

    @classmethod
    def from_array(cls, x) -> "LateralState":
        return cls(float(x[0]), float(x[1]), float(x[2]), float(x[3]))

    def is_finite(self) -> bool:
        return all(math.isfinite(v) for v in (self.vy, self.psi, self.psi_dot, self.y))


@dataclass(frozen=True)
class ContinuousStateSpace:
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        if self.a.shape != (4, 4) or self.b.shape != (4, 1) or self.c.shape != (1, 4):
            raise ValueError("continuous model must be 4x4 / 4x1 / 1x4")
        if not (np.all(np.isfinite(self.a)) and np.all(np.isfinite(self.b))):
            raise ValueError("continuous model has non-finite entries")


@dataclass(frozen=True)
class PacejkaParams:
    """Magic-formula coefficients for one axle pair plus static wheel loads.

    ``b_front``/``b_rear`` default to the stiffness factor that reproduces the
    linear cornering stiffness at mu = 1 (B = Cy / (C * Fz)), so the plant and
    the control model agree for small slip on a dry road.
    """

    b_front: float
    b_rear: float
    c_shape: float
    e_curv: float
    fz_front: float
    fz_rear: float

    def __post_init__(self):
        if self.b_front <= 0 or self.b_rear <= 0:
            raise ValueError("magic-formula stiffness factor must be > 0")
        if not 1.0 <= self.c_shape <= 2.0:
            raise ValueError("magic-formula shape factor must lie in [1, 2]")
        if self.e_curv > 1.0:
            raise ValueError("magic-formula curvature factor must be <= 1")
        if self.fz_front <= 0 or self.fz_rear <= 0:
            raise ValueError("static wheel loads must be > 0")

    @classmethod
    def for_vehicle(cls, params: VehicleParams, c_shape: float = 1.3, e_curv: float = 0.97,
                    b_stiff: float | None = None) -> "PacejkaParams":
        wheelbase = params.lf + params.lr
        # per wheel; the model doubles each axle force
        fz_front = params.m * GRAVITY * params.lr / (2.0 * wheelbase)
        fz_rear = params.m * GRAVITY * params.lf / (2.0 * wheelbase)
        if b_stiff is None:
            b_front = params.cyf / (c_shape * fz_front)
            b_rear = params.cyr / (c_shape * fz_rear)
        else:
            b_front = b_rear = b_stiff
        return cls(b_front, b_rear, c_shape, e_curv, fz_front, fz_rear)


@dataclass(frozen=True)
class WindModel:
    """Quadratic side-force from lateral wind applied at the CG."""

    drag_area: float = 2.0
    rho: float = AIR_DENSITY

    def force(self, wind_speed: float) -> float:
        return 0.5 * self.rho * self.drag_area * wind_speed * abs(wind_speed)


@dataclass(frozen=True)
class Disturbance:
    wind_speed: float = 0.0
    mu: float = 0.9

    def __post_init__(self):
        if not math.isfinite(self.wind_speed):
            raise ValueError("wind speed must be finite")
        if not (0.0 < self.mu <= 1.2):
            raise ValueError(f"adhesion coefficient must lie in (0, 1.2], got {self.mu!r}")


def clamp_speed(vx: float) -> float:
    if vx < VX_MIN:
        warnings.warn(f"longitudinal speed {vx} below {VX_MIN} m/s, clamped", RuntimeWarning,
                      stacklevel=3)
        return VX_MIN
    return vx


def linear_lateral_matrices(params: VehicleParams, vx: float) -> ContinuousStateSpace:
    """Linear single-track model with state [vy, psi, psi_dot, y] and input delta_f."""
    vx = clamp_speed(vx)
    m, iz, lf, lr, cf, cr = params.m, params.iz, params.lf, params.lr, params.cyf, params.cyr
    a = np.array([
        [-2.0 * (cf + cr) / (m * vx), 0.0, -vx - 2.0 * (cf * lf - cr * lr) / (m * vx), 0.0],
        [0.0, 0.0, 1.0, 0.0],
        [-2.0 * (cf * lf - cr * lr) / (iz * vx), 0.0, -2.0 * (cf * lf**2 + cr * lr**2) / (iz * vx), 0.0],
        [1.0, vx, 0.0, 0.0],
    ])
    b = np.array([[2.0 * cf / m], [0.0], [2.0 * cf * lf / iz], [0.0]])
    c = np.array([[0.0, 0.0, 0.0, 1.0]])
    return ContinuousStateSpace(a, b, c)


def tire_slip_angles(state: LateralState, vx: float, delta_f: float,
                     params: VehicleParams) -> tuple[float, float]:
    vx = clamp_speed(vx)
    alpha_f = delta_f - math.atan((state.vy + params.lf * state.psi_dot) / vx)
    alpha_r = -math.atan((state.vy - params.lr * state.psi_dot) / vx)
    return alpha_f, alpha_r


def pacejka_lateral_force(alpha: float, fz: float, mu: float, b_stiff: float,
                          c_shape: float, e_curv: float) -> float:
    if fz <= 0:
        raise ValueError("normal load must be > 0")
    ba = b_stiff * alpha
    return mu * fz * math.sin(c_shape * math.atan(ba - e_curv * (ba - math.atan(ba))))


class NonlinearPlant:
    """Single-track plant integrated with classic RK4.

    Longitudinal speed is prescribed by the caller at every step.
    """

    def __init__(self, params: VehicleParams | None = None, tire: PacejkaParams | None = None,
                 wind: WindModel | None = None):
        self.params = params or VehicleParams()
        self.tire = tire or PacejkaParams.for_vehicle(self.params)
        self.wind = wind or WindModel()

    def derivatives(self, x: tuple, delta_f: float, vx: float, dist: Disturbance) -> tuple:
        vy, psi, psi_dot, _ = x
        p, t = self.params, self.tire
        alpha_f = delta_f - math.atan((vy + p.lf * psi_dot) / vx)
        alpha_r = -math.atan((vy - p.lr * psi_dot) / vx)
        fyf = pacejka_lateral_force(alpha_f, t.fz_front, dist.mu, t.b_front, t.c_shape, t.e_curv)
        fyr = pacejka_lateral_force(alpha_r, t.fz_rear, dist.mu, t.b_rear, t.c_shape, t.e_curv)
        fw = self.wind.force(dist.wind_speed)
        vy_dot = (2.0 * fyf + 2.0 * fyr + fw) / p.m - vx * psi_dot
        psi_ddot = (2.0 * p.lf * fyf - 2.0 * p.lr * fyr) / p.iz
        y_dot = vx * math.sin(psi) + vy * math.cos(psi)
        return (vy_dot, psi_dot, psi_ddot, y_dot)

    def step(self, state: LateralState, delta_f: float, vx: float, dist: Disturbance,
             dt: float) -> LateralState:
        if not 0.0 < dt <= 0.1:
            raise ValueError(f"plant step dt must lie in (0, 0.1], got {dt!r}")
        if not state.is_finite():
            raise FloatingPointError("plant state is not finite (simulation diverged)")
        vx = clamp_speed(vx)
        x = (state.vy, state.psi, state.psi_dot, state.y)
        f = self.derivatives
        k1 = f(x, delta_f, vx, dist)
        k2 = f(tuple(xi + 0.5 * dt * ki for xi, ki in zip(x, k1)), delta_f, vx, dist)
        k3 = f(tuple(xi + 0.5 * dt * ki for xi, ki in zip(x, k2)), delta_f, vx, dist)
        k4 = f(tuple(xi + dt * ki for xi, ki in zip(x, k3)), delta_f, vx, dist)
        new = [xi + dt / 6.0 * (a + 2.0 * b + 2.0 * c + d)
               for xi, a, b, c, d in zip(x, k1, k2, k3, k4)]
        return LateralState(*new)


def plant_step(state: LateralState, delta_f: float, vx: float, dist: Disturbance, dt: float,
               params: VehicleParams | None = None) -> LateralState:
    return NonlinearPlant(params).step(state, delta_f, vx, dist, dt)


def linear_plant_step(state: LateralState, delta_f: float, vx: float, dt: float,
                      params: VehicleParams | None = None) -> LateralState:
    """One RK4 step of the linear model; used as a reference plant in tests and offset checks."""
    css = linear_lateral_matrices(params or VehicleParams(), vx)
    a, b = css.a, css.b[:, 0]
    x = state.as_array()

    def f(z):
        return a @ z + b * delta_f

    k1 = f(x)
    k2 = f(x + 0.5 * dt * k1)
    k3 = f(x + 0.5 * dt * k2)
    k4 = f(x + dt * k3)
    return LateralState.from_array(x + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4))
