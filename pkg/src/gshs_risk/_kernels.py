"""Compiled execution loop for the lane-change model.

It follows the numpy engine step for step and consumes random numbers in
the same order (entry budget, Brownian normals, Poisson uniforms, budget
redraw after a jump), so both backends sample the same process; results
agree up to floating-point rounding in the transcendental functions.
"""

from __future__ import annotations

import math

import numpy as np

from ._backend import jit
from .lane_change import (DIM, ER_HIT, I_EL, I_ER, N_ER, P_EPS1, P_EPS2, P_LAM1,
                          EllipseLevel, drift_core, guards_core, jump_rate_core)
from .rng import exponential_scalar, normal_scalar, uniform_scalar
from .shs import DivergenceError

_ONE = np.uint64(1)
_TWO = np.uint64(2)


@jit
def _in_level(mode, c, rx, ry):
    if mode % N_ER == ER_HIT:
        return True
    dx = (c[I_ER] - c[I_EL]) / rx
    dy = (c[I_ER + 1] - c[I_EL + 1]) / ry
    return dx * dx + dy * dy <= 4.0


@jit
def _run(modes, conts, qs, clocks, hits, keys, counters, p, rx, ry, horizon, dt, redraw):
    """Advance every particle; returns the index of a diverged particle or -1."""
    f = np.empty(DIM)
    new = np.empty(DIM)
    eps1, eps2, lam1 = p[P_EPS1], p[P_EPS2], p[P_LAM1]
    for i in range(modes.size):
        hits[i] = False
        if clocks[i] >= horizon:
            clocks[i] = horizon
            continue
        key = keys[i]
        ctr = counters[i]
        mode = modes[i]
        c = conts[i]
        q = qs[i]
        clock = clocks[i]
        if redraw:
            q = exponential_scalar(key, ctr)
            ctr += _ONE
        while True:
            nxt = clock + dt
            if nxt >= horizon - 1e-9 * dt:
                nxt = horizon
            h = nxt - clock
            drift_core(mode, c, p, f)
            lam = jump_rate_core(mode, c, p)
            live = mode % N_ER != ER_HIT
            sq = math.sqrt(h)
            w0 = normal_scalar(key, ctr) * sq
            w1 = normal_scalar(key, ctr + _TWO) * sq
            ctr += _TWO + _TWO
            j0 = uniform_scalar(key, ctr) < lam1 * h
            j1 = uniform_scalar(key, ctr + _ONE) < lam1 * h
            ctr += _TWO
            for k in range(DIM):
                new[k] = c[k] + f[k] * h
            if live:
                new[I_ER] += eps2 * w0
                new[I_ER + 1] += eps2 * w0
                new[I_EL] += eps2 * w1
                new[I_EL + 1] += eps2 * w1
            if j0:
                new[I_ER] += eps1
                new[I_ER + 1] += eps1
            if j1:
                new[I_EL] += eps1
                new[I_EL + 1] += eps1
            for k in range(DIM):
                if not math.isfinite(new[k]):
                    counters[i] = ctr
                    return i
            q -= lam * h
            due = q <= 0.0
            if due:
                q = 0.0
            scratch = new.copy()
            _, boundary = guards_core(mode, scratch, False, p)
            hit = _in_level(mode, new, rx, ry)
            if due or boundary:
                mode, _ = guards_core(mode, new, due, p)
                q = exponential_scalar(key, ctr)
                ctr += _ONE
                hit = hit or _in_level(mode, new, rx, ry)
            for k in range(DIM):
                c[k] = new[k]
            clock = nxt
            if hit or clock >= horizon:
                break
        modes[i] = mode
        qs[i] = q
        clocks[i] = clock
        hits[i] = hit
        counters[i] = ctr
    return -1


class LaneChangeKernel:
    def __init__(self, params: np.ndarray, family):
        self.params = np.ascontiguousarray(params, dtype=np.float64)
        self.base_x = family.base_x
        self.base_y = family.base_y

    def supports(self, target) -> bool:
        return (isinstance(target, EllipseLevel) and target.base_x == self.base_x
                and target.base_y == self.base_y)

    def execute(self, batch, streams, target, horizon, dt, redraw_budget):
        rx = target.ratio * target.base_x
        ry = target.ratio * target.base_y
        bad = _run(batch.mode, batch.cont, batch.q, batch.clock, batch.hit, streams.keys,
                   streams.counters, self.params, rx, ry, float(horizon), float(dt), bool(redraw_budget))
        if bad >= 0:
            raise DivergenceError(f"non-finite state at t={batch.clock[bad]:.6g} for particle {bad}", [bad])
        return batch.hit
