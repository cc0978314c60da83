"""Two automated vehicles merging into the same lane.

ER (ego, right) drives in the lower lane and changes lanes to the left;
EL (ego, left) drives two lanes up and changes to the right, so both aim
at the lane in between.  ER carries situation awareness (SA) about EL:
once their awareness ellipses touch, ER tracks estimates of EL's position,
heading and lateral speed and knows EL's driving mode.  After a Rayleigh
reaction delay ER re-plans: it computes its time-to-collision against the
estimate and returns to its own lane if that time is below a threshold.

The joint system is a single hybrid model.  Its continuous state has the
layout given by the ``I_*`` indices below and its discrete mode packs
ER's mode, EL's mode, ER's belief about EL's mode and two "lane change
started" flags into one integer.  Collision means the two circumscribed
ellipses intersect.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .shs import GshsModel
from .splitting import LevelSchedule
from .ttc import RootPolicy, pair_ttc_core
from .vehicle import (VehicleParams, VehicleState, lateral_accels_core,
                      pd_steer_core)
from ._backend import jit

# continuous state layout
I_ER = 0          # x, y, heading, v_lat, yaw_rate
I_SA = 5          # est x, est y, est heading, est v_lat
I_ETA = 9         # time since awareness onset
I_EL = 10         # x, y, heading, v_lat, yaw_rate
I_ER_TARGET = 15  # PD target lateral position of ER
I_EL_TARGET = 16
I_TIME = 17       # scenario time
DIM = 18

# ER modes
ER_STRAIGHT, ER_CHANGING, ER_AWARE, ER_REVERTING, ER_HIT = range(5)
# EL modes
EL_STRAIGHT, EL_CHANGING, EL_HIT = range(3)
N_ER, N_EL, N_BELIEF = 5, 3, 4
STARTED_ER, STARTED_EL = 1, 2
N_MODES = N_ER * N_EL * N_BELIEF * 4

# packed parameter vector layout (shared with the compiled kernel)
P_VX, P_MASS, P_IZ, P_CF, P_CR, P_LF, P_LR = range(7)
(P_LENGTH, P_WIDTH, P_EPS1, P_EPS2, P_LAM1, P_KP, P_KD, P_UMAX, P_LANE, P_HOME,
 P_TLC_ER, P_TLC_EL, P_MU_R, P_MU_D, P_TTC_TH, P_SETTLE, P_ORDER, P_ALL_POS,
 P_REAR_TOL, P_SAME_LANE, P_SAMPLE_DT, P_RX, P_RY) = range(7, 30)
N_PARAMS = 30


class Phase(enum.Enum):
    STRAIGHT = 0
    CHANGING = 1
    AWARE = 2
    REVERTING = -1
    HIT = "hit"


class Intent(enum.Enum):
    OFF = "off"
    RIGHT = "1+"
    LEFT = "1-"
    ANY = "*"


@dataclass(frozen=True)
class DrivingMode:
    phase: Phase
    intent: Intent

    def __str__(self):
        ph = "Hit" if self.phase is Phase.HIT else str(self.phase.value)
        return f"({ph},{self.intent.value})"


ER_MODES = (DrivingMode(Phase.STRAIGHT, Intent.OFF), DrivingMode(Phase.CHANGING, Intent.LEFT),
            DrivingMode(Phase.AWARE, Intent.LEFT), DrivingMode(Phase.REVERTING, Intent.RIGHT),
            DrivingMode(Phase.HIT, Intent.ANY))
EL_MODES = (DrivingMode(Phase.STRAIGHT, Intent.OFF), DrivingMode(Phase.CHANGING, Intent.RIGHT),
            DrivingMode(Phase.HIT, Intent.ANY))


class ModeMachineError(ValueError):
    """A driving mode outside the declared mode sets."""


def encode_mode(er: int, el: int, belief: int = 0, started: int = 0):
    return er + N_ER * (el + N_EL * (belief + N_BELIEF * started))


def decode_mode(mode):
    """``(er, el, belief, started)``; works on ints and arrays."""
    er = mode % N_ER
    rest = mode // N_ER
    el = rest % N_EL
    rest = rest // N_EL
    return er, el, rest % N_BELIEF, rest // N_BELIEF


def er_index(mode: DrivingMode) -> int:
    try:
        return ER_MODES.index(mode)
    except ValueError:
        raise ModeMachineError(f"{mode} is not a driving mode of ER") from None


def el_index(mode: DrivingMode) -> int:
    try:
        return EL_MODES.index(mode)
    except ValueError:
        raise ModeMachineError(f"{mode} is not a driving mode of EL") from None


# -- ellipses -----------------------------------------------------------------

def ellipse_ratios(first: float = 2.0, decline: float = 0.2, count: int = 6) -> tuple:
    return tuple(round(first - decline * k, 12) for k in range(count))


@dataclass(frozen=True)
class EllipseFamily:
    """Nested axis-aligned ellipses ``ratio * (base_x, base_y)`` around each vehicle."""

    radius_ratios: tuple = ellipse_ratios()
    base_x: float = math.sqrt(2.0) / 2.0 * 4.508
    base_y: float = math.sqrt(2.0) / 2.0 * 1.61
    awareness_ratio: float = 1.5825

    def __post_init__(self):
        r = tuple(float(v) for v in self.radius_ratios)
        object.__setattr__(self, "radius_ratios", r)
        if not r or any(b >= a for a, b in zip(r, r[1:])):
            raise ValueError("radius ratios must be strictly decreasing")
        if abs(r[-1] - 1.0) > 1e-12:
            raise ValueError("the last ratio must be 1 (the circumscribed ellipse)")
        if self.base_x <= 0 or self.base_y <= 0:
            raise ValueError("ellipse semi-axes must be positive")

    @classmethod
    def for_vehicle(cls, params: VehicleParams, radius_ratios=ellipse_ratios(),
                    awareness_ratio: float = 1.5825) -> "EllipseFamily":
        s = math.sqrt(2.0) / 2.0
        return cls(tuple(radius_ratios), s * params.length, s * params.width, awareness_ratio)

    def __len__(self):
        return len(self.radius_ratios)


def ellipses_intersect(center_a, center_b, rx: float, ry: float) -> bool:
    """Whether two identical axis-aligned closed ellipses intersect."""
    if rx <= 0 or ry <= 0:
        raise ValueError("semi-axes must be positive")
    dx = (center_a[0] - center_b[0]) / rx
    dy = (center_a[1] - center_b[1]) / ry
    return dx * dx + dy * dy <= 4.0


def _touching(cont, ratio, base_x, base_y):
    dx = (cont[..., I_ER] - cont[..., I_EL]) / (ratio * base_x)
    dy = (cont[..., I_ER + 1] - cont[..., I_EL + 1]) / (ratio * base_y)
    return dx * dx + dy * dy <= 4.0


@dataclass(frozen=True)
class EllipseLevel:
    """Level set "the ``ratio`` ellipses intersect, or the vehicles have collided"."""

    ratio: float
    base_x: float
    base_y: float

    def __call__(self, mode, cont):
        mode = np.asarray(mode)
        return (mode % N_ER == ER_HIT) | _touching(np.asarray(cont), self.ratio, self.base_x, self.base_y)


def level_predicate(k: int, family: EllipseFamily) -> EllipseLevel:
    """Predicate of level ``k`` (1-based); the last level is the collision."""
    if not 1 <= k <= len(family):
        raise ValueError(f"level must be in 1..{len(family)}, got {k}")
    return EllipseLevel(family.radius_ratios[k - 1], family.base_x, family.base_y)


# -- reaction delay -----------------------------------------------------------

def delay_rate(timer: float, er_mode: DrivingMode, mu_d: float,
               est_mode: Optional[DrivingMode] = None) -> float:
    """Hazard of ER's reaction after ``timer`` seconds of awareness.

    The Rayleigh hazard ``timer / mu_d**2``, switched on only while ER is
    changing lanes to the left (and, if given, while it believes EL is
    changing lanes to the right).
    """
    if timer < 0 or mu_d <= 0:
        raise ValueError("timer must be nonnegative and mu_d positive")
    if er_mode != ER_MODES[ER_CHANGING]:
        return 0.0
    if est_mode is not None and est_mode != EL_MODES[EL_CHANGING]:
        return 0.0
    return timer / (mu_d * mu_d)


# -- configuration ------------------------------------------------------------

@dataclass(frozen=True)
class ScenarioConfig:
    vehicle: VehicleParams = field(default_factory=VehicleParams)
    kp: float = 1.5e-3
    kd: float = 1.0e-2
    max_steer: float = 0.5
    lane_width: float = 3.5
    er_start: tuple = (0.0, 0.0)
    el_start: tuple = (3.25, 7.0)
    lane_change_time_er: float = 0.0
    lane_change_time_el: float = 0.0
    awareness_ratio: float = 1.5825
    mean_delay: float = 0.6
    ttc_threshold: float = 10.0
    settle_tolerance: float = 0.05
    ttc_order: int = 1
    ttc_policy: RootPolicy = RootPolicy.MIN_POSITIVE
    rear_end_tolerance_deg: float = 10.0
    same_lane_width: Optional[float] = None
    sample_interval: float = 0.01
    horizon: float = 10.0
    radius_ratios: tuple = ellipse_ratios()

    def __post_init__(self):
        if self.mean_delay <= 0:
            raise ValueError("mean_delay must be positive")
        if self.ttc_order < 1:
            raise ValueError("ttc_order must be at least 1")
        if self.sample_interval <= 0:
            raise ValueError("sample_interval must be positive")
        if self.horizon <= 0:
            raise ValueError("horizon must be positive")

    @property
    def shared_lane(self) -> float:
        """Lateral position of the lane both vehicles merge into."""
        return self.er_start[1] + self.lane_width

    def family(self) -> EllipseFamily:
        return EllipseFamily.for_vehicle(self.vehicle, self.radius_ratios, self.awareness_ratio)

    def packed(self) -> np.ndarray:
        v = self.vehicle
        fam = self.family()
        p = np.zeros(N_PARAMS)
        p[:7] = v.dynamics_vector()
        p[P_LENGTH], p[P_WIDTH] = v.length, v.width
        p[P_EPS1], p[P_EPS2], p[P_LAM1] = v.jump_magnitude, v.diffusion_magnitude, v.jump_rate
        p[P_KP], p[P_KD], p[P_UMAX] = self.kp, self.kd, self.max_steer
        p[P_LANE], p[P_HOME] = self.shared_lane, self.er_start[1]
        p[P_TLC_ER], p[P_TLC_EL] = self.lane_change_time_er, self.lane_change_time_el
        p[P_MU_R], p[P_MU_D], p[P_TTC_TH] = self.awareness_ratio, self.mean_delay, self.ttc_threshold
        p[P_SETTLE], p[P_ORDER] = self.settle_tolerance, self.ttc_order
        p[P_ALL_POS] = 1.0 if self.ttc_policy is RootPolicy.ALL_POSITIVE else 0.0
        p[P_REAR_TOL] = math.radians(self.rear_end_tolerance_deg)
        p[P_SAME_LANE] = v.width if self.same_lane_width is None else self.same_lane_width
        p[P_SAMPLE_DT] = self.sample_interval
        p[P_RX], p[P_RY] = fam.base_x, fam.base_y
        return p

    def with_awareness(self, ratio: float) -> "ScenarioConfig":
        return replace(self, awareness_ratio=ratio)


# -- scalar cores (shared by the numpy path and the compiled kernel) -----------

@jit
def scenario_ttc_core(c, p):
    """ER's TTC against its SA estimate of EL."""
    vx = p[P_VX]
    k = int(p[P_ORDER])
    delta = p[P_SAMPLE_DT]

    th, vy, om = c[I_ER + 2], c[I_ER + 3], c[I_ER + 4]
    u = pd_steer_core(c[I_ER + 1], th, vy, c[I_ER_TARGET], vx, p[P_KP], p[P_KD], p[P_UMAX])
    a_lat, _ = lateral_accels_core(vy, om, u, p)
    s_dx = np.zeros(k)
    s_dy = np.zeros(k)
    cs, sn = math.cos(th), math.sin(th)
    s_dx[0] = vx * cs - vy * sn
    s_dy[0] = vx * sn + vy * cs
    if k >= 2:
        s_dx[1] = -vx * sn * om - a_lat * sn - vy * cs * om
        s_dy[1] = vx * cs * om + a_lat * cs - vy * sn * om

    th_h, vy_h = c[I_SA + 2], c[I_SA + 3]
    el_vy, el_om = c[I_EL + 3], c[I_EL + 4]
    u_el = pd_steer_core(c[I_EL + 1], c[I_EL + 2], el_vy, c[I_EL_TARGET], vx, p[P_KP], p[P_KD], p[P_UMAX])
    a_hat, _ = lateral_accels_core(el_vy, el_om, u_el, p)
    c_dx = np.zeros(k)
    c_dy = np.zeros(k)
    cs, sn = math.cos(th_h), math.sin(th_h)
    c_dx[0] = vx * cs - vy_h * sn
    c_dy[0] = vx * sn + vy_h * cs
    if k >= 2:
        c_dx[1] = -vx * sn * el_om - a_hat * sn - vy_h * cs * el_om
        c_dy[1] = vx * cs * el_om + a_hat * cs - vy_h * sn * el_om

    sx, sy = c[I_ER], c[I_ER + 1]
    cx, cy = c[I_SA], c[I_SA + 1]
    same_lane = abs(sy - cy) < p[P_SAME_LANE]
    t, _ = pair_ttc_core(sx - delta * s_dx[0], sy - delta * s_dy[0], sx, sy, s_dx, s_dy, p[P_LENGTH],
                         cx - delta * c_dx[0], cy - delta * c_dy[0], cx, cy, c_dx, c_dy, p[P_LENGTH],
                         same_lane, k, p[P_ALL_POS] > 0.5, p[P_REAR_TOL], 1e-9)
    return t


@jit
def guards_core(mode, c, spontaneous, p):
    """Apply every enabled discrete transition to one particle.

    ``c`` is updated in place; returns ``(new_mode, changed)``.  Order:
    collision, reaction jump, lane-change start, lane settle, awareness
    onset or belief refresh, re-planning on TTC.
    """
    er = mode % N_ER
    el = (mode // N_ER) % N_EL
    belief = (mode // (N_ER * N_EL)) % N_BELIEF
    started = mode // (N_ER * N_EL * N_BELIEF)
    if er == ER_HIT:
        return mode, False
    changed = False
    dx = (c[I_ER] - c[I_EL]) / p[P_RX]
    dy = (c[I_ER + 1] - c[I_EL + 1]) / p[P_RY]
    if dx * dx + dy * dy <= 4.0:
        return ER_HIT + N_ER * (EL_HIT + N_EL * (belief + N_BELIEF * started)), True

    if spontaneous and er == ER_CHANGING:
        er = ER_AWARE
        changed = True

    t = c[I_TIME]
    if (started & STARTED_ER) == 0 and t >= p[P_TLC_ER] - 1e-9:
        started |= STARTED_ER
        if er == ER_STRAIGHT:
            er = ER_CHANGING
        c[I_ER_TARGET] = p[P_LANE]
        changed = True
    if (started & STARTED_EL) == 0 and t >= p[P_TLC_EL] - 1e-9:
        started |= STARTED_EL
        if el == EL_STRAIGHT:
            el = EL_CHANGING
        c[I_EL_TARGET] = p[P_LANE]
        changed = True

    tol = p[P_SETTLE]
    if er != ER_STRAIGHT and abs(c[I_ER + 1] - c[I_ER_TARGET]) < tol:
        er = ER_STRAIGHT
        changed = True
    if el == EL_CHANGING and abs(c[I_EL + 1] - c[I_EL_TARGET]) < tol:
        el = EL_STRAIGHT
        changed = True

    refresh = False
    if belief == 0:
        mu = p[P_MU_R]
        if mu > 0.0:
            ax = dx / mu
            ay = dy / mu
            if ax * ax + ay * ay <= 4.0:
                refresh = True
                c[I_ETA] = 0.0
    elif belief - 1 != el:
        refresh = True
    if refresh:
        belief = el + 1
        for j in range(4):
            c[I_SA + j] = c[I_EL + j]
        changed = True

    if er == ER_AWARE and scenario_ttc_core(c, p) <= p[P_TTC_TH]:
        er = ER_REVERTING
        c[I_ER_TARGET] = p[P_HOME]
        changed = True

    return er + N_ER * (el + N_EL * (belief + N_BELIEF * started)), changed


@jit
def drift_core(mode, c, p, out):
    """Time derivative of one particle's continuous state into ``out``."""
    for j in range(DIM):
        out[j] = 0.0
    er = mode % N_ER
    if er == ER_HIT:
        return
    belief = (mode // (N_ER * N_EL)) % N_BELIEF
    vx = p[P_VX]
    for base, target in ((I_ER, I_ER_TARGET), (I_EL, I_EL_TARGET)):
        th, vy, om = c[base + 2], c[base + 3], c[base + 4]
        u = pd_steer_core(c[base + 1], th, vy, c[target], vx, p[P_KP], p[P_KD], p[P_UMAX])
        a_lat, a_yaw = lateral_accels_core(vy, om, u, p)
        cs, sn = math.cos(th), math.sin(th)
        out[base] = vx * cs - vy * sn
        out[base + 1] = vx * sn + vy * cs
        out[base + 2] = om
        out[base + 3] = a_lat
        out[base + 4] = a_yaw
        if base == I_EL and belief > 0:
            th_h, vy_h = c[I_SA + 2], c[I_SA + 3]
            cs, sn = math.cos(th_h), math.sin(th_h)
            out[I_SA] = vx * cs - vy_h * sn
            out[I_SA + 1] = vx * sn + vy_h * cs
            out[I_SA + 2] = om
            out[I_SA + 3] = a_lat
            out[I_ETA] = 1.0
    out[I_TIME] = 1.0


@jit
def jump_rate_core(mode, c, p):
    er = mode % N_ER
    belief = (mode // (N_ER * N_EL)) % N_BELIEF
    if er == ER_CHANGING and belief == EL_CHANGING + 1:
        return c[I_ETA] / (p[P_MU_D] * p[P_MU_D])
    return 0.0


# -- vectorized numpy model ---------------------------------------------------

def _drift_numpy(mode, cont, p):
    out = np.zeros_like(cont)
    er, el, belief, _ = decode_mode(mode)
    vx = p[P_VX]
    for base, target in ((I_ER, I_ER_TARGET), (I_EL, I_EL_TARGET)):
        th, vy, om = cont[:, base + 2], cont[:, base + 3], cont[:, base + 4]
        u = pd_steer_core(cont[:, base + 1], th, vy, cont[:, target], vx, p[P_KP], p[P_KD], p[P_UMAX])
        a_lat, a_yaw = lateral_accels_core(vy, om, u, p)
        cs, sn = np.cos(th), np.sin(th)
        out[:, base] = vx * cs - vy * sn
        out[:, base + 1] = vx * sn + vy * cs
        out[:, base + 2] = om
        out[:, base + 3] = a_lat
        out[:, base + 4] = a_yaw
        if base == I_EL:
            aware = belief > 0
            th_h, vy_h = cont[:, I_SA + 2], cont[:, I_SA + 3]
            cs, sn = np.cos(th_h), np.sin(th_h)
            out[:, I_SA] = np.where(aware, vx * cs - vy_h * sn, 0.0)
            out[:, I_SA + 1] = np.where(aware, vx * sn + vy_h * cs, 0.0)
            out[:, I_SA + 2] = np.where(aware, om, 0.0)
            out[:, I_SA + 3] = np.where(aware, a_lat, 0.0)
            out[:, I_ETA] = aware
    out[:, I_TIME] = 1.0
    out[er == ER_HIT] = 0.0
    return out


def _guards_numpy(mode, cont, spontaneous, p):
    """Vectorized twin of :func:`guards_core`; returns ``(mode, cont, changed)``."""
    cont = cont.copy()
    er, el, belief, started = (a.copy() for a in decode_mode(np.asarray(mode, dtype=np.int64)))
    live = er != ER_HIT
    changed = np.zeros(er.shape, dtype=bool)
    dx = (cont[:, I_ER] - cont[:, I_EL]) / p[P_RX]
    dy = (cont[:, I_ER + 1] - cont[:, I_EL + 1]) / p[P_RY]
    crash = live & (dx * dx + dy * dy <= 4.0)
    er[crash] = ER_HIT
    el[crash] = EL_HIT
    changed |= crash
    go = live & ~crash

    s = go & spontaneous & (er == ER_CHANGING)
    er[s] = ER_AWARE
    changed |= s

    t = cont[:, I_TIME]
    s = go & ((started & STARTED_ER) == 0) & (t >= p[P_TLC_ER] - 1e-9)
    started[s] |= STARTED_ER
    er[s & (er == ER_STRAIGHT)] = ER_CHANGING
    cont[s, I_ER_TARGET] = p[P_LANE]
    changed |= s
    s = go & ((started & STARTED_EL) == 0) & (t >= p[P_TLC_EL] - 1e-9)
    started[s] |= STARTED_EL
    el[s & (el == EL_STRAIGHT)] = EL_CHANGING
    cont[s, I_EL_TARGET] = p[P_LANE]
    changed |= s

    tol = p[P_SETTLE]
    s = go & (er != ER_STRAIGHT) & (np.abs(cont[:, I_ER + 1] - cont[:, I_ER_TARGET]) < tol)
    er[s] = ER_STRAIGHT
    changed |= s
    s = go & (el == EL_CHANGING) & (np.abs(cont[:, I_EL + 1] - cont[:, I_EL_TARGET]) < tol)
    el[s] = EL_STRAIGHT
    changed |= s

    mu = p[P_MU_R]
    onset = go & (belief == 0)
    if mu > 0.0:
        onset &= (dx / mu) ** 2 + (dy / mu) ** 2 <= 4.0
    else:
        onset[:] = False
    cont[onset, I_ETA] = 0.0
    refresh = onset | (go & (belief > 0) & (belief - 1 != el))
    belief[refresh] = el[refresh] + 1
    cont[refresh, I_SA:I_SA + 4] = cont[refresh, I_EL:I_EL + 4]
    changed |= refresh

    for i in np.flatnonzero(go & (er == ER_AWARE)):
        if scenario_ttc_core(cont[i], p) <= p[P_TTC_TH]:
            er[i] = ER_REVERTING
            cont[i, I_ER_TARGET] = p[P_HOME]
            changed[i] = True

    return encode_mode(er, el, belief, started), cont, changed


class LaneChangeScenario:
    """The joint model, its level schedule and its compiled kernel."""

    def __init__(self, config: ScenarioConfig = ScenarioConfig()):
        self.config = config
        self.params = config.packed()
        self.family = config.family()

    def initial_state(self) -> tuple[int, np.ndarray]:
        cfg = self.config
        c = np.zeros(DIM)
        c[I_ER], c[I_ER + 1] = cfg.er_start
        c[I_EL], c[I_EL + 1] = cfg.el_start
        c[I_ER_TARGET] = cfg.er_start[1]
        c[I_EL_TARGET] = cfg.el_start[1]
        mode, c, _ = _guards_numpy(np.zeros(1, dtype=np.int64), c[None, :], np.zeros(1, bool), self.params)
        return int(mode[0]), c[0]

    def model(self) -> GshsModel:
        p = self.params
        mode0, cont0 = self.initial_state()
        v = self.config.vehicle
        jumps = np.zeros((DIM, 2))
        jumps[I_ER:I_ER + 2, 0] = v.jump_magnitude
        jumps[I_EL:I_EL + 2, 1] = v.jump_magnitude

        def init(draws, n):
            return np.full(n, mode0, dtype=np.int64), np.tile(cont0, (n, 1))

        def drift(mode, cont):
            return _drift_numpy(mode, cont, p)

        def diffusion(mode, cont):
            g = np.zeros((len(mode), DIM, 2))
            live = (np.asarray(mode) % N_ER != ER_HIT) * p[P_EPS2]
            g[:, I_ER, 0] = g[:, I_ER + 1, 0] = live
            g[:, I_EL, 1] = g[:, I_EL + 1, 1] = live
            return g

        def jump_rate(mode, cont):
            er, _, belief, _ = decode_mode(np.asarray(mode))
            on = (er == ER_CHANGING) & (belief == EL_CHANGING + 1)
            return np.where(on, cont[:, I_ETA] / (p[P_MU_D] ** 2), 0.0)

        def boundary(mode, cont):
            return _guards_numpy(mode, cont, np.zeros(len(mode), bool), p)[2]

        def reset(mode, cont, draws, spontaneous):
            m, c, _ = _guards_numpy(mode, cont, np.asarray(spontaneous, bool), p)
            return m, c

        from ._kernels import LaneChangeKernel

        return GshsModel(
            modes=tuple(range(N_MODES)), dim=DIM, drift=drift, diffusion=diffusion,
            jump_rate=jump_rate, reset=reset, init=init, brownian_dim=2, boundary=boundary,
            poisson_rates=(v.jump_rate, v.jump_rate), poisson_jumps=jumps,
            kernel=LaneChangeKernel(p, self.family), name="lane-change",
        )

    def levels(self) -> tuple:
        return tuple(level_predicate(k, self.family) for k in range(1, len(self.family) + 1))

    def schedule(self) -> LevelSchedule:
        return LevelSchedule(self.levels(), self.config.horizon)

    def collision(self) -> EllipseLevel:
        return level_predicate(len(self.family), self.family)


# -- value-level views ----------------------------------------------------------

@dataclass(frozen=True)
class SaVector:
    est_x: float
    est_y: float
    est_heading: float
    est_v_lat: float
    awareness_timer: float
    est_mode: Optional[DrivingMode]


@dataclass(frozen=True)
class ScenarioState:
    er: VehicleState
    el: VehicleState
    er_mode: DrivingMode
    el_mode: DrivingMode
    sa: SaVector
    clock: float
    er_target: float = 0.0
    el_target: float = 7.0
    started: int = 0

    @property
    def aware(self) -> bool:
        return self.sa.est_mode is not None

    def pack(self) -> tuple[int, np.ndarray]:
        c = np.zeros(DIM)
        c[I_ER:I_ER + 5] = self.er.as_array()
        c[I_EL:I_EL + 5] = self.el.as_array()
        s = self.sa
        c[I_SA:I_SA + 4] = (s.est_x, s.est_y, s.est_heading, s.est_v_lat)
        c[I_ETA] = s.awareness_timer
        c[I_ER_TARGET], c[I_EL_TARGET], c[I_TIME] = self.er_target, self.el_target, self.clock
        belief = 0 if s.est_mode is None else el_index(s.est_mode) + 1
        return int(encode_mode(er_index(self.er_mode), el_index(self.el_mode), belief, self.started)), c

    @classmethod
    def unpack(cls, mode: int, c) -> "ScenarioState":
        er, el, belief, started = decode_mode(int(mode))
        c = np.asarray(c, dtype=float)
        sa = SaVector(*(float(v) for v in c[I_SA:I_SA + 5]),
                      None if belief == 0 else EL_MODES[belief - 1])
        return cls(VehicleState.from_array(c[I_ER:I_ER + 5]), VehicleState.from_array(c[I_EL:I_EL + 5]),
                   ER_MODES[er], EL_MODES[el], sa, float(c[I_TIME]), float(c[I_ER_TARGET]),
                   float(c[I_EL_TARGET]), int(started))


def step_discrete(state: ScenarioState, config: ScenarioConfig = ScenarioConfig(),
                  reaction: bool = False) -> ScenarioState:
    """Apply every enabled guard transition once.

    ``reaction`` fires ER's rate-driven reaction jump first.
    """
    mode, c = state.pack()
    m, c2, _ = _guards_numpy(np.array([mode]), c[None, :], np.array([reaction]), config.packed())
    return ScenarioState.unpack(int(m[0]), c2[0])


def copy_sa(state: ScenarioState) -> SaVector:
    """ER's SA record refreshed from EL's true state and mode."""
    if not state.aware:
        raise ModeMachineError("ER has no situation awareness before its ellipses touch EL's")
    el = state.el
    return SaVector(el.x, el.y, el.heading, el.v_lat, state.sa.awareness_timer, state.el_mode)


def scenario_ttc(state: ScenarioState, config: ScenarioConfig = ScenarioConfig()) -> float:
    """ER's TTC against its current estimate of EL (inf when none is predicted)."""
    _, c = state.pack()
    return float(scenario_ttc_core(c, config.packed()))
