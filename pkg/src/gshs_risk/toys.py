"""Small models with exactly known reach probabilities.

They exercise the engine and the estimator against closed forms:

* a driftless Brownian motion and a fixed barrier (reflection principle),
* a counter that jumps at a constant rate (exponential jump times),
* absorbing discrete-time Markov chains embedded as hybrid systems, whose
  reach probabilities follow from matrix powers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .shs import GshsModel
from .splitting import LevelSchedule


def _zeros_rate(mode, cont):
    return np.zeros(len(mode))


def _keep(mode, cont, draws, spontaneous):
    return mode, cont


# -- Brownian barrier ---------------------------------------------------------

def brownian_model(x0: float = 0.0, sigma: float = 1.0) -> GshsModel:
    def init(draws, n):
        return np.zeros(n, dtype=np.int64), np.full((n, 1), x0)

    return GshsModel(
        modes=(0,), dim=1,
        drift=lambda mode, cont: np.zeros_like(cont),
        diffusion=lambda mode, cont: np.full((len(mode), 1, 1), sigma),
        jump_rate=_zeros_rate, reset=_keep, init=init,
        brownian_dim=1, name="brownian",
    )


def barrier_probability(a: float, horizon: float, sigma: float = 1.0) -> float:
    """P(max_{t<=T} sigma W_t >= a) = 2 (1 - Phi(a / (sigma sqrt T)))."""
    return math.erfc(a / (sigma * math.sqrt(2.0 * horizon)))


def upper_set(level: float, component: int = 0):
    def predicate(mode, cont):
        return cont[:, component] >= level
    predicate.threshold = level
    return predicate


def barrier_schedule(levels=(1.0, 2.0, 3.0), horizon: float = 1.0) -> LevelSchedule:
    return LevelSchedule(tuple(upper_set(a) for a in levels), horizon)


# -- constant-rate jumps ------------------------------------------------------

def poisson_counter_model(rate: float) -> GshsModel:
    """Counter ``n`` that increments at rate ``rate``; no flow at all."""
    def init(draws, n):
        return np.zeros(n, dtype=np.int64), np.zeros((n, 1))

    def reset(mode, cont, draws, spontaneous):
        return mode, cont + spontaneous[:, None]

    return GshsModel(
        modes=(0,), dim=1,
        drift=lambda mode, cont: np.zeros_like(cont),
        diffusion=lambda mode, cont: np.zeros((len(mode), 1, 0)),
        jump_rate=lambda mode, cont: np.full(len(mode), float(rate)),
        reset=reset, init=init, brownian_dim=0, name="counter",
    )


# -- embedded Markov chains ---------------------------------------------------

@dataclass(frozen=True)
class MarkovChainInstance:
    """An absorbing chain with a height function defining nested levels.

    Level ``k`` is ``{s : height[s] >= levels[k]}``; the last level is the
    target set.
    """

    name: str
    transition: np.ndarray
    start: int
    height: np.ndarray
    levels: tuple
    steps: int = 200

    def exact(self) -> float:
        """P(target reached within ``steps`` transitions)."""
        target = self.height >= self.levels[-1]
        p = self.transition.copy()
        p[target] = 0.0
        p[target, target] = 1.0
        dist = np.zeros(len(p))
        dist[self.start] = 1.0
        dist = dist @ np.linalg.matrix_power(p, self.steps)
        return float(dist[target].sum())

    def model(self) -> GshsModel:
        return embed_chain(self.transition, self.start)

    def schedule(self) -> LevelSchedule:
        height = self.height

        def level(h):
            def predicate(mode, cont):
                return height[mode] >= h
            return predicate

        return LevelSchedule(tuple(level(h) for h in self.levels), float(self.steps))


def embed_chain(transition, start: int) -> GshsModel:
    """A discrete-time chain as a hybrid system with a unit-speed phase clock.

    The mode is the chain state; the phase hits the boundary 1 once per unit
    time and the reset draws the next state.  Use ``dt = 1``.
    """
    transition = np.asarray(transition, dtype=np.float64)
    if not np.allclose(transition.sum(axis=1), 1.0):
        raise ValueError("transition rows must sum to 1")
    cum = np.cumsum(transition, axis=1)
    cum[:, -1] = 1.0

    def init(draws, n):
        return np.full(n, start, dtype=np.int64), np.zeros((n, 1))

    def reset(mode, cont, draws, spontaneous):
        u = draws.uniform(1)
        nxt = (u >= cum[mode]).sum(axis=1)
        return nxt.astype(np.int64), np.zeros_like(cont)

    return GshsModel(
        modes=tuple(range(len(transition))), dim=1,
        drift=lambda mode, cont: np.ones_like(cont),
        diffusion=lambda mode, cont: np.zeros((len(mode), 1, 0)),
        jump_rate=_zeros_rate, reset=reset, init=init,
        boundary=lambda mode, cont: cont[:, 0] >= 1.0 - 1e-9,
        brownian_dim=0, name="chain",
    )


def ladder_chain(p: float = 0.2, rungs: int = 3) -> MarkovChainInstance:
    """Climb one rung with probability ``p``, otherwise fall off for good."""
    n = rungs + 2
    fail = n - 1
    t = np.zeros((n, n))
    for i in range(rungs):
        t[i, i + 1] = p
        t[i, fail] = 1.0 - p
    t[rungs, rungs] = 1.0
    t[fail, fail] = 1.0
    height = np.append(np.arange(rungs + 1), -1).astype(float)
    return MarkovChainInstance(f"ladder(p={p}, rungs={rungs})", t, 0, height,
                               tuple(float(k) for k in range(1, rungs + 1)), steps=rungs + 2)


def gamblers_ruin(top: int, p: float, start: int = 1, steps: int = 60) -> MarkovChainInstance:
    """Random walk on ``0..top`` absorbed at both ends, up-probability ``p``."""
    n = top + 1
    t = np.zeros((n, n))
    t[0, 0] = t[top, top] = 1.0
    for i in range(1, top):
        t[i, i + 1] = p
        t[i, i - 1] = 1.0 - p
    height = np.arange(n, dtype=float)
    return MarkovChainInstance(f"ruin(top={top}, p={p})", t, start, height,
                               tuple(float(k) for k in range(start + 1, top + 1)), steps=steps)


def fair_coin() -> MarkovChainInstance:
    t = np.array([[0.0, 0.5, 0.5], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    return MarkovChainInstance("fair-coin", t, 0, np.array([0.0, 1.0, -1.0]), (1.0,), steps=3)


def oracle_chains() -> list[MarkovChainInstance]:
    return [ladder_chain(0.2, 3), gamblers_ruin(4, 0.2), gamblers_ruin(5, 0.25)]
