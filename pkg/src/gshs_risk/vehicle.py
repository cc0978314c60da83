"""Stochastic single-track vehicle model with a PD lane-keeping law.

State ``(x, y, heading, v_lat, yaw_rate)`` with constant longitudinal speed
``v_long``.  Lateral tire forces are linear in the slip angles.  Position
is driven by one Brownian channel and one Poisson channel, both acting on
``x`` and ``y`` alike.

The ``*_core`` functions take plain floats or numpy arrays and are also
compiled for the scenario kernels; the dataclass wrappers are the
readable entry points.
"""

from __future__ import annotations

import math
from dataclasses import astuple, dataclass, fields

import numpy as np

from ._backend import jit


@dataclass(frozen=True)
class VehicleState:
    x: float = 0.0
    y: float = 0.0
    heading: float = 0.0
    v_lat: float = 0.0
    yaw_rate: float = 0.0

    def __post_init__(self):
        if not all(math.isfinite(v) for v in astuple(self)):
            raise ValueError(f"non-finite vehicle state {self}")

    def as_array(self) -> np.ndarray:
        return np.array(astuple(self), dtype=np.float64)

    @classmethod
    def from_array(cls, a) -> "VehicleState":
        return cls(*(float(v) for v in a))


@dataclass(frozen=True)
class VehicleParams:
    v_long: float = 20.0
    mass: float = 2000.0
    yaw_inertia: float = 2000.0
    stiffness_front: float = 6.0e4
    stiffness_rear: float = 6.0e4
    dist_front: float = 2.0
    dist_rear: float = 2.0
    length: float = 4.508
    width: float = 1.61
    jump_magnitude: float = 1.0e-6
    diffusion_magnitude: float = 1.0e-2
    jump_rate: float = 0.5

    def __post_init__(self):
        for name in ("v_long", "mass", "yaw_inertia", "stiffness_front", "stiffness_rear",
                     "dist_front", "dist_rear", "length", "width"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        for name in ("jump_magnitude", "diffusion_magnitude", "jump_rate"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")

    def dynamics_vector(self) -> np.ndarray:
        """``(v_long, mass, yaw_inertia, C_f, C_r, L_f, L_r)`` for the cores."""
        return np.array([self.v_long, self.mass, self.yaw_inertia, self.stiffness_front,
                         self.stiffness_rear, self.dist_front, self.dist_rear])


@dataclass(frozen=True)
class PdGains:
    kp: float = 1.5e-3
    kd: float = 1.0e-2
    y_target: float = 0.0
    max_steer: float = 0.5

    def __post_init__(self):
        if self.kp < 0 or self.kd < 0:
            raise ValueError("PD gains must be nonnegative")
        if not self.max_steer > 0:
            raise ValueError("max_steer must be positive")


# -- cores --------------------------------------------------------------------

@jit
def lateral_speed_core(heading, v_lat, v_long):
    return v_long * np.sin(heading) + v_lat * np.cos(heading)


@jit
def pd_steer_core(y, heading, v_lat, y_target, v_long, kp, kd, max_steer):
    dy = v_long * np.sin(heading) + v_lat * np.cos(heading)
    u = kp * (y_target - y) - kd * dy
    return np.minimum(np.maximum(u, -max_steer), max_steer)


@jit
def slip_core(v_lat, yaw_rate, steer, v_long, dist_front, dist_rear):
    front = (v_lat + dist_front * yaw_rate) / v_long - steer
    rear = (v_lat - dist_rear * yaw_rate) / v_long
    return front, rear


@jit
def lateral_forces_core(v_lat, yaw_rate, steer, p):
    front, rear = slip_core(v_lat, yaw_rate, steer, p[0], p[5], p[6])
    return -p[3] * front, -p[4] * rear


@jit
def lateral_accels_core(v_lat, yaw_rate, steer, p):
    """``(dv_lat/dt, dyaw_rate/dt)`` for dynamics vector ``p``."""
    f_front, f_rear = lateral_forces_core(v_lat, yaw_rate, steer, p)
    c = np.cos(steer)
    a_lat = (f_front * c + f_rear) / p[1] - p[0] * yaw_rate
    a_yaw = (p[5] * f_front * c - p[6] * f_rear) / p[2]
    return a_lat, a_yaw


@jit
def position_rates_core(heading, v_lat, v_long):
    c = np.cos(heading)
    s = np.sin(heading)
    return v_long * c - v_lat * s, v_long * s + v_lat * c


# -- public wrappers ----------------------------------------------------------

def slip_angles(state: VehicleState, steer: float, params: VehicleParams) -> tuple[float, float]:
    return slip_core(state.v_lat, state.yaw_rate, steer, params.v_long,
                     params.dist_front, params.dist_rear)


def tire_forces(state: VehicleState, steer: float, params: VehicleParams) -> tuple[float, float]:
    front, rear = slip_angles(state, steer, params)
    return -params.stiffness_front * front, -params.stiffness_rear * rear


def vehicle_drift(state: VehicleState, steer: float, params: VehicleParams) -> np.ndarray:
    """Time derivative of ``(x, y, heading, v_lat, yaw_rate)``."""
    dx, dy = position_rates_core(state.heading, state.v_lat, params.v_long)
    a_lat, a_yaw = lateral_accels_core(state.v_lat, state.yaw_rate, steer, params.dynamics_vector())
    return np.array([dx, dy, state.yaw_rate, a_lat, a_yaw], dtype=np.float64)


def vehicle_diffusion(params: VehicleParams) -> np.ndarray:
    """5x1 diffusion matrix: one Brownian channel on ``x`` and ``y``."""
    g = np.zeros((5, 1))
    g[:2, 0] = params.diffusion_magnitude
    return g


def vehicle_jumps(params: VehicleParams) -> np.ndarray:
    """5x1 Poisson jump matrix: one channel adding ``jump_magnitude`` to ``x`` and ``y``."""
    j = np.zeros((5, 1))
    j[:2, 0] = params.jump_magnitude
    return j


def lateral_rate(state: VehicleState, params: VehicleParams) -> float:
    return float(lateral_speed_core(state.heading, state.v_lat, params.v_long))


def pd_steering(state: VehicleState, gains: PdGains, params: VehicleParams | None = None) -> float:
    """Front steering angle from the PD law on lateral position, clamped."""
    v_long = (params or VehicleParams()).v_long
    return float(pd_steer_core(state.y, state.heading, state.v_lat, gains.y_target, v_long,
                               gains.kp, gains.kd, gains.max_steer))


def param_names() -> list[str]:
    return [f.name for f in fields(VehicleParams)]
