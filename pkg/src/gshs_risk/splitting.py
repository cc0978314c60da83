"""Interacting-particle estimation of reach probabilities.

The estimator factorises ``P(reach D_m before T)`` over nested levels
``D_1 ⊃ ... ⊃ D_m`` as a product of conditional crossing fractions.  At
every level the population is mutated up to the next level, survivors are
kept, and the population is rebuilt to its original size by fixed
assignment: each survivor gets ``N // n_s`` copies and a uniformly chosen
subset of ``N % n_s`` survivors gets one more.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .rng import KeyedStreams, combine_keys, derive_key, fisher_yates, keys_for
from .shs import (GshsModel, HybridState, ShsModel, execute_batch,
                  init_batch, transform_gshs_to_shs)

LevelPredicate = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True, slots=True)
class Particle:
    entry_time: float
    state: HybridState
    alive: bool
    key: int
    weight: float = 1.0


@dataclass(frozen=True)
class LevelSchedule:
    predicates: tuple
    horizon: float

    def __post_init__(self):
        object.__setattr__(self, "predicates", tuple(self.predicates))
        if not self.predicates:
            raise ValueError("a level schedule needs at least one predicate")
        if not self.horizon >= 0:
            raise ValueError("horizon must be nonnegative")

    def __len__(self):
        return len(self.predicates)

    @property
    def terminal(self) -> LevelPredicate:
        return self.predicates[-1]


@dataclass(frozen=True)
class EstimationResult:
    per_level_gamma: tuple
    survivors: tuple
    seed: int
    trial: int
    particle_count: int

    @property
    def gamma(self) -> float:
        return math.prod(self.per_level_gamma)

    @property
    def levels_reached(self) -> int:
        return sum(1 for s in self.survivors if s > 0)


def copy_counts(n_survivors: int, n_particles: int, key: int) -> np.ndarray:
    """Number of copies of each survivor under fixed assignment."""
    if n_survivors < 1:
        raise ValueError("fixed-assignment splitting needs at least one survivor")
    if n_survivors > n_particles:
        raise ValueError("more survivors than particles")
    base, extra = divmod(n_particles, n_survivors)
    counts = np.full(n_survivors, base, dtype=np.int64)
    if extra:
        counts[fisher_yates(n_survivors, key, prefix=extra)[:extra]] += 1
    return counts


def split_indices(n_survivors: int, n_particles: int, key: int) -> tuple[np.ndarray, np.ndarray]:
    """Parent index and per-parent copy number for every rebuilt particle."""
    counts = copy_counts(n_survivors, n_particles, key)
    parent = np.repeat(np.arange(n_survivors), counts)
    starts = np.cumsum(counts) - counts
    copy = np.arange(n_particles) - np.repeat(starts, counts)
    return parent, copy


def fresh_keys(parent_keys, copy, key: int) -> np.ndarray:
    """Distinct stream keys for the copies of split particles."""
    salted = combine_keys(parent_keys, np.full(np.shape(parent_keys), key, dtype=np.uint64))
    return combine_keys(salted, copy)


def fixed_assignment_split(survivors: Sequence[Particle], n_particles: int,
                           randomness: int) -> list[Particle]:
    """Rebuild a population of ``n_particles`` from ``survivors``.

    Copies share their parent's (immutable) state, carry weight
    ``1 / n_particles`` and get a fresh stream key.
    """
    parent, copy = split_indices(len(survivors), n_particles, randomness)
    parent_keys = np.fromiter((p.key for p in survivors), dtype=np.uint64, count=len(survivors))
    keys = fresh_keys(parent_keys[parent], copy, randomness).tolist()
    w = 1.0 / n_particles
    return [Particle(survivors[i].entry_time, survivors[i].state, True, k, w)
            for i, k in zip(parent.tolist(), keys)]


def _as_shs(model) -> ShsModel:
    if isinstance(model, ShsModel):
        return model
    if isinstance(model, GshsModel):
        return transform_gshs_to_shs(model)
    raise TypeError(f"expected a GshsModel or ShsModel, got {type(model).__name__}")


def estimate_reach_probability(model, schedule: LevelSchedule, n_particles: int, seed: int,
                               *, dt: float, trial: int = 0,
                               redraw_budget: bool = True) -> EstimationResult:
    """One trial of the fixed-assignment splitting estimator.

    Particle ``i`` of the trial starts from stream key ``(seed, trial, i)``.
    At level ``k`` every particle draws from its key extended by ``k``, and
    copies made after level ``k`` receive keys extended by the level's split
    key and their copy number.
    """
    if n_particles < 1:
        raise ValueError("n_particles must be at least 1")
    shs = _as_shs(model)
    trial_key = derive_key(seed, trial)
    keys = keys_for(trial_key, np.arange(n_particles))
    batch = init_batch(shs, KeyedStreams(combine_keys(keys, np.zeros(n_particles, np.uint64))))

    m = len(schedule)
    gammas = [0.0] * m
    survivors = [0] * m
    for k, predicate in enumerate(schedule.predicates, start=1):
        level = np.full(n_particles, k, dtype=np.uint64)
        streams = KeyedStreams(combine_keys(keys, level))
        hit = execute_batch(shs, batch, streams, predicate, schedule.horizon, dt, redraw_budget)
        alive = np.flatnonzero(hit)
        survivors[k - 1] = int(alive.size)
        gammas[k - 1] = alive.size / n_particles
        if alive.size == 0 or k == m:
            break
        split_key = derive_key(seed, trial, "split", k)
        parent, copy = split_indices(alive.size, n_particles, split_key)
        src = alive[parent]
        batch = batch.take(src)
        keys = fresh_keys(keys[src], copy, split_key)

    return EstimationResult(tuple(gammas), tuple(survivors), seed, trial, n_particles)


def monte_carlo_estimate(model, terminal: LevelPredicate, horizon: float, n_runs: int, seed: int,
                         *, dt: float, chunk: int = 20000, stream=0, first_run: int = 0,
                         return_hits: bool = False):
    """Fraction of ``n_runs`` independent trajectories entering ``terminal``.

    Run ``i`` uses stream key ``(seed, "mc", stream, i)`` regardless of the
    chunk size, so runs ``first_run .. first_run + n_runs`` can be farmed
    out in pieces and the hit counts added up.
    """
    if n_runs < 1:
        raise ValueError("n_runs must be at least 1")
    shs = _as_shs(model)
    base = derive_key(seed, "mc", stream)
    hits = 0
    stop = first_run + n_runs
    for start in range(first_run, stop, chunk):
        keys = keys_for(base, np.arange(start, min(start + chunk, stop)))
        batch = init_batch(shs, KeyedStreams(combine_keys(keys, np.zeros(keys.size, np.uint64))))
        streams = KeyedStreams(combine_keys(keys, np.ones(keys.size, np.uint64)))
        hits += int(execute_batch(shs, batch, streams, terminal, horizon, dt, redraw_budget=False).sum())
    return (hits / n_runs, hits) if return_hits else hits / n_runs


def check_initial_exclusion(model, schedule: LevelSchedule, n_samples: int = 1000,
                            seed: int = 0) -> float:
    """Fraction of initial states already inside the first level.

    A well-posed schedule gives 0; the harness refuses to run otherwise.
    """
    shs = _as_shs(model)
    keys = keys_for(derive_key(seed, "init-check"), np.arange(n_samples))
    batch = init_batch(shs, KeyedStreams(keys))
    inside = np.asarray(schedule.predicates[0](batch.mode, batch.cont), dtype=bool)
    return float(inside.mean())
