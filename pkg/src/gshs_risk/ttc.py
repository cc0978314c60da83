"""Time-to-collision between two vehicles.

Each vehicle is described by a :class:`MotionSample`: its position now and
one interval earlier (which fixes the direction of motion) and its per-axis
time derivatives up to order ``k``.  Future positions are the order-``k``
Taylor expansions of those derivatives.

Two conflict types are handled.  Vehicles in the same lane whose directions
differ by at most 10 degrees are in a *rear-end* conflict: the TTC is the
smallest positive root of the gap-closing polynomial.  Otherwise the
conflict is *angular*: the heading lines are intersected, the point is kept
only if both vehicles reach each of its coordinates at some positive time,
and the TTC is the time the subject needs to cover its distance to it.

The ``*_core`` functions are scalar and numba-compatible; the scenario
kernel calls them directly.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ._backend import jit

IMAG_TOL = 1e-9
REAR_END_TOL_DEG = 10.0
_TWO_PI = 2.0 * math.pi

# point status codes from the collision-point core
POINT_OK = 0
POINT_PARALLEL = 1
POINT_COINCIDENT = 2
POINT_UNREACHABLE = 3

CONFLICT_NONE = 0
CONFLICT_REAR_END = 1
CONFLICT_ANGULAR = 2


class Conflict(enum.Enum):
    NONE = CONFLICT_NONE
    REAR_END = CONFLICT_REAR_END
    ANGULAR = CONFLICT_ANGULAR


class TtcKind(enum.Enum):
    FINITE = "finite"
    NO_COLLISION = "no_collision"


class RootPolicy(enum.Enum):
    """How the angular TTC treats roots that are not positive reals.

    ``MIN_POSITIVE`` keeps the smallest positive real root and ignores the
    rest.  ``ALL_POSITIVE`` declares no collision as soon as any root is
    negative, zero or complex.
    """

    MIN_POSITIVE = "min_positive"
    ALL_POSITIVE = "all_positive"


class DegenerateMotionError(ValueError):
    """Input motion does not determine the requested quantity."""


@dataclass(frozen=True)
class MotionSample:
    prev: tuple
    curr: tuple
    derivatives: tuple  # ((dx, dy), (d2x, d2y), ...)

    def __post_init__(self):
        object.__setattr__(self, "prev", tuple(float(v) for v in self.prev))
        object.__setattr__(self, "curr", tuple(float(v) for v in self.curr))
        ders = tuple(tuple(float(v) for v in d) for d in self.derivatives)
        if not ders:
            raise ValueError("a motion sample needs at least the velocity")
        if any(len(d) != 2 for d in ders):
            raise ValueError("each derivative must be an (x, y) pair")
        object.__setattr__(self, "derivatives", ders)

    @property
    def order(self) -> int:
        return len(self.derivatives)

    @classmethod
    def from_velocity(cls, curr, velocity, dt: float = 0.01, accel=None) -> "MotionSample":
        """Sample whose previous position is ``curr - dt * velocity``."""
        prev = (curr[0] - dt * velocity[0], curr[1] - dt * velocity[1])
        ders = [tuple(velocity)] + ([tuple(accel)] if accel is not None else [])
        return cls(prev, tuple(curr), tuple(ders))

    def axis(self, k: int) -> tuple[np.ndarray, np.ndarray]:
        """Derivative arrays ``(x, y)`` truncated or zero-padded to order ``k``."""
        d = np.zeros((k, 2))
        m = min(k, self.order)
        d[:m] = np.asarray(self.derivatives[:m])
        return np.ascontiguousarray(d[:, 0]), np.ascontiguousarray(d[:, 1])


@dataclass(frozen=True)
class CollisionPoint:
    x: float
    y: float
    times: tuple  # (sub x, sub y, col x, col y) earliest positive time per equation


@dataclass(frozen=True)
class TtcOutcome:
    kind: TtcKind
    seconds: float
    conflict: Conflict
    point: Optional[tuple] = None

    @classmethod
    def finite(cls, seconds, conflict, point=None) -> "TtcOutcome":
        return cls(TtcKind.FINITE, float(seconds), conflict, point)

    @classmethod
    def none(cls, conflict) -> "TtcOutcome":
        return cls(TtcKind.NO_COLLISION, math.inf, conflict, None)

    @property
    def is_finite(self) -> bool:
        return self.kind is TtcKind.FINITE


# -- numeric cores ------------------------------------------------------------

@jit
def taylor_poly_core(offset, ders, k):
    """Ascending coefficients of ``offset + sum_n ders[n-1] t^n / n!``."""
    c = np.zeros(k + 1)
    c[0] = offset
    fact = 1.0
    for n in range(1, k + 1):
        fact *= n
        c[n] = ders[n - 1] / fact
    return c


@jit
def poly_roots_core(c):
    """Roots of the polynomial with ascending coefficients ``c``.

    Closed form up to degree 2, companion-matrix eigenvalues above.
    Trailing zero coefficients lower the degree; a constant has no roots.
    """
    n = c.size - 1
    while n >= 0 and c[n] == 0.0:
        n -= 1
    if n <= 0:
        return np.empty(0, dtype=np.complex128)
    if n == 1:
        out = np.empty(1, dtype=np.complex128)
        out[0] = -c[0] / c[1]
        return out
    if n == 2:
        a, b, cc = c[2], c[1], c[0]
        out = np.empty(2, dtype=np.complex128)
        disc = b * b - 4.0 * a * cc
        if disc >= 0.0:
            s = math.sqrt(disc)
            q = -0.5 * (b + s) if b >= 0.0 else -0.5 * (b - s)
            out[0] = q / a
            out[1] = cc / q if q != 0.0 else 0.0
        else:
            s = math.sqrt(-disc)
            out[0] = complex(-b / (2.0 * a), s / (2.0 * a))
            out[1] = complex(-b / (2.0 * a), -s / (2.0 * a))
        return out
    comp = np.zeros((n, n), dtype=np.complex128)
    for i in range(1, n):
        comp[i, i - 1] = 1.0
    for i in range(n):
        comp[i, n - 1] = -c[i] / c[n]
    return np.linalg.eigvals(comp)


@jit
def select_time_core(roots, all_positive, imag_tol):
    """Smallest positive real root, or inf; see :class:`RootPolicy`."""
    best = math.inf
    rejected = False
    for r in roots:
        if abs(r.imag) <= imag_tol and r.real > 0.0:
            if r.real < best:
                best = r.real
        else:
            rejected = True
    if all_positive and rejected:
        return math.inf
    return best


@jit
def motion_angle_core(dx, dy):
    """Direction of ``(dx, dy)`` in ``[0, 2 pi)`` by quadrant; nan if zero."""
    if dx == 0.0 and dy == 0.0:
        return math.nan
    if dx == 0.0:
        a = 0.5 * math.pi
    else:
        a = math.atan(abs(dy / dx))
    if dx >= 0.0 and dy >= 0.0:
        phi = a
    elif dx < 0.0 and dy >= 0.0:
        phi = math.pi - a
    elif dx < 0.0:
        phi = math.pi + a
    else:
        phi = _TWO_PI - a
    if phi >= _TWO_PI:
        phi -= _TWO_PI
    return phi


@jit
def angle_gap_core(a, b):
    d = abs(a - b) % _TWO_PI
    return min(d, _TWO_PI - d)


@jit
def rear_end_core(x_sub, ders_sub, x_lead, ders_lead, lead_length, k):
    """Rear-end TTC of a follower; returns ``(ttc, degenerate)``.

    Order 1 keeps the classical guard that the follower must be faster.
    """
    gap = x_sub - x_lead + lead_length
    c = np.zeros(k + 1)
    c[0] = gap
    fact = 1.0
    for n in range(1, k + 1):
        fact *= n
        c[n] = (ders_sub[n - 1] - ders_lead[n - 1]) / fact
    degenerate = True
    for v in c:
        if v != 0.0:
            degenerate = False
    if degenerate:
        return math.inf, True
    if k == 1:
        closing = ders_sub[0] - ders_lead[0]
        if not closing > 0.0:
            return math.inf, False
        t = -gap / closing
        return (t if t > 0.0 else math.inf), False
    return select_time_core(poly_roots_core(c), False, IMAG_TOL), False


@jit
def _axis_time(start, target, ders, k, imag_tol):
    """Earliest positive time at which the axis motion reaches ``target``.

    Returns nan when the axis is stationary at ``target`` (any time works)
    and inf when it is never reached.
    """
    moving = False
    for d in ders[:k]:
        if abs(d) > 1e-12:
            moving = True
    if not moving:
        if abs(start - target) <= 1e-9 * (1.0 + abs(target)):
            return math.nan
        return math.inf
    c = taylor_poly_core(start - target, ders, k)
    return select_time_core(poly_roots_core(c), False, imag_tol)


@jit
def collision_point_core(sx, sy, phi_s, s_dx, s_dy, cx, cy, phi_c, c_dx, c_dy, k, imag_tol):
    """Heading-line intersection checked against the motion equations.

    Returns ``(status, px, py, times[4])`` with ``times`` ordered as
    (subject x, colliding x, subject y, colliding y).
    """
    times = np.full(4, math.nan)
    ux, uy = math.cos(phi_s), math.sin(phi_s)
    vx, vy = math.cos(phi_c), math.sin(phi_c)
    cross = ux * vy - uy * vx
    rx, ry = cx - sx, cy - sy
    if abs(cross) <= 1e-12:
        if abs(rx * uy - ry * ux) <= 1e-9 * (1.0 + math.hypot(rx, ry)):
            return POINT_COINCIDENT, math.nan, math.nan, times
        return POINT_PARALLEL, math.nan, math.nan, times
    a = (rx * vy - ry * vx) / cross
    px = sx + a * ux
    py = sy + a * uy
    times[0] = _axis_time(sx, px, s_dx, k, imag_tol)
    times[1] = _axis_time(cx, px, c_dx, k, imag_tol)
    times[2] = _axis_time(sy, py, s_dy, k, imag_tol)
    times[3] = _axis_time(cy, py, c_dy, k, imag_tol)
    for t in times:
        if t == math.inf:
            return POINT_UNREACHABLE, px, py, times
    return POINT_OK, px, py, times


@jit
def angular_core(sx, sy, phi, s_dx, s_dy, px, py, k, all_positive, imag_tol):
    """Time for the subject to cover its distance to ``(px, py)``.

    The distance is converted to one axis through the larger of
    ``|cos phi|`` and ``|sin phi|``.
    """
    dist = math.hypot(px - sx, py - sy)
    c_phi, s_phi = math.cos(phi), math.sin(phi)
    if abs(c_phi) >= abs(s_phi):
        ders, scale = s_dx, c_phi
    else:
        ders, scale = s_dy, s_phi
    c = np.zeros(k + 1)
    c[0] = -dist
    fact = 1.0
    for n in range(1, k + 1):
        fact *= n
        c[n] = ders[n - 1] / fact / scale
    return select_time_core(poly_roots_core(c), all_positive, imag_tol)


@jit
def pair_ttc_core(s_prev_x, s_prev_y, sx, sy, s_dx, s_dy, s_len,
                  c_prev_x, c_prev_y, cx, cy, c_dx, c_dy, c_len,
                  same_lane, k, all_positive, tol_rad, imag_tol):
    """Full TTC of a subject against a colliding vehicle.

    Returns ``(ttc, conflict_code)``; ``ttc`` is inf when no collision is
    predicted or either direction of motion is undefined.
    """
    phi_s = motion_angle_core(sx - s_prev_x, sy - s_prev_y)
    phi_c = motion_angle_core(cx - c_prev_x, cy - c_prev_y)
    if math.isnan(phi_s) or math.isnan(phi_c):
        return math.inf, CONFLICT_NONE
    if same_lane and angle_gap_core(phi_s, phi_c) <= tol_rad:
        sign = 1.0 if math.cos(phi_s) >= 0.0 else -1.0
        if sign * sx <= sign * cx:
            t, _ = rear_end_core(sign * sx, sign * s_dx, sign * cx, sign * c_dx, c_len, k)
        else:
            t, _ = rear_end_core(sign * cx, sign * c_dx, sign * sx, sign * s_dx, s_len, k)
        return t, CONFLICT_REAR_END
    status, px, py, _ = collision_point_core(sx, sy, phi_s, s_dx, s_dy, cx, cy, phi_c,
                                             c_dx, c_dy, k, imag_tol)
    if status != POINT_OK:
        return math.inf, CONFLICT_ANGULAR
    return angular_core(sx, sy, phi_s, s_dx, s_dy, px, py, k, all_positive, imag_tol), CONFLICT_ANGULAR


# -- public API ---------------------------------------------------------------

def poly_roots(coeffs: Sequence[float]) -> np.ndarray:
    """Complex roots of ``sum_i coeffs[i] t^i``."""
    return poly_roots_core(np.asarray(coeffs, dtype=np.float64))


def motion_angle(sample: MotionSample) -> float:
    dx = sample.curr[0] - sample.prev[0]
    dy = sample.curr[1] - sample.prev[1]
    phi = motion_angle_core(dx, dy)
    if math.isnan(phi):
        raise DegenerateMotionError("zero displacement has no direction of motion")
    return phi


def classify_conflict(phi_sub: float, phi_col: float, same_lane: bool,
                      tol_deg: float = REAR_END_TOL_DEG) -> Conflict:
    if same_lane and angle_gap_core(phi_sub, phi_col) <= math.radians(tol_deg):
        return Conflict.REAR_END
    return Conflict.ANGULAR


def _order(sub: MotionSample, col: MotionSample, order: Optional[int]) -> int:
    k = order if order is not None else max(sub.order, col.order)
    if k < 1:
        raise ValueError("motion order must be at least 1")
    return k


def rear_end_ttc(sub: MotionSample, lead: MotionSample, lead_length: float,
                 order: Optional[int] = None) -> TtcOutcome:
    """TTC of ``sub`` following ``lead`` along the x axis."""
    k = _order(sub, lead, order)
    s_dx, _ = sub.axis(k)
    l_dx, _ = lead.axis(k)
    t, degenerate = rear_end_core(sub.curr[0], s_dx, lead.curr[0], l_dx, float(lead_length), k)
    if degenerate:
        raise DegenerateMotionError("identical motion with zero gap: the gap polynomial vanishes")
    if math.isinf(t):
        return TtcOutcome.none(Conflict.REAR_END)
    return TtcOutcome.finite(t, Conflict.REAR_END)


def predicted_collision_point(sub: MotionSample, col: MotionSample,
                              order: Optional[int] = None) -> Optional[CollisionPoint]:
    """Intersection of the two heading lines, if both vehicles reach it."""
    k = _order(sub, col, order)
    s_dx, s_dy = sub.axis(k)
    c_dx, c_dy = col.axis(k)
    status, px, py, times = collision_point_core(
        sub.curr[0], sub.curr[1], motion_angle(sub), s_dx, s_dy,
        col.curr[0], col.curr[1], motion_angle(col), c_dx, c_dy, k, IMAG_TOL)
    if status == POINT_COINCIDENT:
        raise DegenerateMotionError("heading lines coincide; the intersection is not a point")
    if status != POINT_OK:
        return None
    t = [float(v) for v in times]
    # an axis equation that holds for every t takes the other axis's time
    for a, b in ((0, 1), (2, 3)):
        if math.isnan(t[a]):
            t[a] = t[b]
        elif math.isnan(t[b]):
            t[b] = t[a]
    return CollisionPoint(float(px), float(py), tuple(t))


def angular_ttc(sub: MotionSample, point, order: Optional[int] = None,
                policy: RootPolicy = RootPolicy.MIN_POSITIVE) -> TtcOutcome:
    k = order if order is not None else sub.order
    s_dx, s_dy = sub.axis(k)
    px, py = (point.x, point.y) if isinstance(point, CollisionPoint) else point
    t = angular_core(sub.curr[0], sub.curr[1], motion_angle(sub), s_dx, s_dy, float(px), float(py),
                     k, policy is RootPolicy.ALL_POSITIVE, IMAG_TOL)
    if math.isinf(t):
        return TtcOutcome.none(Conflict.ANGULAR)
    return TtcOutcome.finite(t, Conflict.ANGULAR, (float(px), float(py)))


def time_to_collision(sub: MotionSample, col: MotionSample, *, same_lane: bool,
                      sub_length: float, col_length: float, order: Optional[int] = None,
                      policy: RootPolicy = RootPolicy.MIN_POSITIVE,
                      tol_deg: float = REAR_END_TOL_DEG) -> TtcOutcome:
    """Classify the conflict and compute the subject's TTC.

    In a rear-end conflict the vehicle behind (along the subject's
    direction of travel) is treated as the follower.
    """
    k = _order(sub, col, order)
    phi_s, phi_c = motion_angle(sub), motion_angle(col)
    if classify_conflict(phi_s, phi_c, same_lane, tol_deg) is Conflict.REAR_END:
        sign = 1.0 if math.cos(phi_s) >= 0 else -1.0
        s_dx, _ = sub.axis(k)
        c_dx, _ = col.axis(k)
        xs, xc = sign * sub.curr[0], sign * col.curr[0]
        if xs <= xc:
            t, degenerate = rear_end_core(xs, sign * s_dx, xc, sign * c_dx, float(col_length), k)
        else:
            t, degenerate = rear_end_core(xc, sign * c_dx, xs, sign * s_dx, float(sub_length), k)
        if degenerate:
            raise DegenerateMotionError("identical motion with zero gap: the gap polynomial vanishes")
        return TtcOutcome.none(Conflict.REAR_END) if math.isinf(t) else TtcOutcome.finite(t, Conflict.REAR_END)
    point = predicted_collision_point(sub, col, k)
    if point is None:
        return TtcOutcome.none(Conflict.ANGULAR)
    return angular_ttc(sub, point, k, policy)
