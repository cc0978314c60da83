"""Stochastic hybrid system models and their execution.

A :class:`GshsModel` mixes SDE flow inside each discrete mode with forced
jumps (boundary hits) and spontaneous jumps at a state-dependent rate.
:func:`transform_gshs_to_shs` replaces the spontaneous jumps by a "remaining
local time" budget ``q`` that drains at the jump rate and forces a jump when
it reaches zero; ``q`` is redrawn from Exp(1) after every jump.

All model callables are vectorized over a batch of particles:

* ``drift(mode[n], cont[n, d]) -> [n, d]``
* ``diffusion(mode, cont) -> [n, d, m]``
* ``jump_rate(mode, cont) -> [n]``
* ``boundary(mode, cont) -> bool[n]`` (optional)
* ``reset(mode, cont, draws, spontaneous) -> (mode, cont)``
* ``init(draws, n) -> (mode[n], cont[n, d])``

``draws`` is a :class:`Draws` handle onto the keyed streams of exactly the
particles being reset or initialised.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import _backend
from .rng import KeyedStreams

Array = np.ndarray
LevelPredicate = Callable[[Array, Array], Array]


class ModelError(ValueError):
    """A model violates its declared structure."""


class DivergenceError(RuntimeError):
    """Integration produced non-finite state components."""

    def __init__(self, message: str, indices: Sequence[int] = ()):
        super().__init__(message)
        self.indices = list(indices)


@dataclass(frozen=True)
class HybridState:
    mode: int
    cont: Array
    local_time_budget: float = 0.0
    clock: float = 0.0

    def __post_init__(self):
        cont = np.array(self.cont, dtype=np.float64).reshape(-1)
        cont.setflags(write=False)
        object.__setattr__(self, "cont", cont)
        if self.local_time_budget < 0:
            raise ValueError("local_time_budget must be nonnegative")


class Draws:
    """Random draws for a subset of particles, in particle order."""

    def __init__(self, streams: KeyedStreams, idx):
        self._streams = streams
        self._idx = np.asarray(idx)

    def __len__(self):
        return self._idx.size

    def uniform(self, k: int = 1) -> Array:
        return self._streams.uniform(k, self._idx)

    def normal(self, k: int = 1) -> Array:
        return self._streams.normal(k, self._idx)

    def exponential(self) -> Array:
        return self._streams.exponential(self._idx)


@dataclass(frozen=True)
class GshsModel:
    modes: tuple
    dim: int
    drift: Callable
    diffusion: Callable
    jump_rate: Callable
    reset: Callable
    init: Callable
    brownian_dim: int = 1
    boundary: Optional[Callable] = None
    poisson_rates: tuple = ()
    poisson_jumps: Optional[Array] = None  # (dim, n_channels)
    kernel: object = None
    name: str = "gshs"

    def dim_of(self, mode) -> int:
        return self.dim

    def poisson_matrix(self) -> Array:
        if not self.poisson_rates:
            return np.zeros((self.dim, 0))
        jumps = np.asarray(self.poisson_jumps, dtype=np.float64)
        if jumps.shape != (self.dim, len(self.poisson_rates)):
            raise ModelError(
                f"poisson_jumps must have shape {(self.dim, len(self.poisson_rates))}, got {jumps.shape}"
            )
        return jumps


@dataclass(frozen=True)
class ShsModel:
    """A GSHS whose spontaneous jumps are driven by a local-time budget.

    The extended continuous state is ``[cont, q]``.  The engine stores ``q``
    alongside ``cont`` rather than inside it; the ``*_extended`` methods give
    the textbook form for inspection.
    """

    base: GshsModel

    @property
    def dim(self) -> int:
        return self.base.dim + 1

    @property
    def kernel(self):
        return self.base.kernel

    def drift_extended(self, mode, cont_ext) -> Array:
        mode = np.atleast_1d(mode)
        cont_ext = np.atleast_2d(cont_ext)
        x = cont_ext[:, :-1]
        f = self.base.drift(mode, x)
        lam = self.base.jump_rate(mode, x)
        return np.concatenate([f, -np.asarray(lam, dtype=float)[:, None]], axis=1)

    def diffusion_extended(self, mode, cont_ext) -> Array:
        mode = np.atleast_1d(mode)
        cont_ext = np.atleast_2d(cont_ext)
        g = self.base.diffusion(mode, cont_ext[:, :-1])
        zeros = np.zeros((g.shape[0], 1, g.shape[2]))
        return np.concatenate([g, zeros], axis=1)

    def init_extended(self, streams: KeyedStreams) -> tuple[Array, Array]:
        n = len(streams)
        mode, cont = self.base.init(Draws(streams, np.arange(n)), n)
        q = streams.exponential()
        return np.asarray(mode), np.column_stack([cont, q])

    def reset_extended(self, mode, cont_ext, draws: Draws, spontaneous) -> tuple[Array, Array]:
        new_mode, new_cont = self.base.reset(mode, cont_ext[:, :-1], draws, spontaneous)
        q = draws.exponential()
        return new_mode, np.column_stack([new_cont, q])


def transform_gshs_to_shs(model: GshsModel, probe_states: Optional[Sequence] = None,
                          n_probe: int = 16) -> ShsModel:
    """Build the local-time SHS for ``model`` after checking it is well formed.

    The jump rate is probed on every declared mode at continuous states taken
    from ``probe_states`` (pairs or :class:`HybridState`) or, by default, from
    the model's own initial distribution.  A rate that raises, is negative or
    is not finite rejects the model.
    """
    if model.dim < 1:
        raise ModelError("dim must be a positive integer")
    if not model.modes:
        raise ModelError("mode set is empty")
    if model.brownian_dim < 0:
        raise ModelError("brownian_dim must be nonnegative")
    if any(r < 0 or not np.isfinite(r) for r in model.poisson_rates):
        raise ModelError("poisson rates must be finite and nonnegative")
    model.poisson_matrix()

    if probe_states is None:
        streams = KeyedStreams(np.arange(n_probe, dtype=np.uint64) + np.uint64(0x5EED))
        _, conts = model.init(Draws(streams, np.arange(n_probe)), n_probe)
        conts = np.atleast_2d(np.asarray(conts, dtype=float))
    else:
        conts = np.array([getattr(s, "cont", s[1] if isinstance(s, tuple) else s)
                          for s in probe_states], dtype=float)
    if conts.shape[1] != model.dim:
        raise ModelError(f"continuous state has dimension {conts.shape[1]}, model declares {model.dim}")

    modes = np.asarray(model.modes)
    mode_grid = np.repeat(modes, len(conts))
    cont_grid = np.tile(conts, (len(modes), 1))
    try:
        lam = np.asarray(model.jump_rate(mode_grid, cont_grid), dtype=float)
        f = np.asarray(model.drift(mode_grid, cont_grid), dtype=float)
        g = np.asarray(model.diffusion(mode_grid, cont_grid), dtype=float)
    except Exception as exc:  # noqa: BLE001 - any failure means the model is ill-defined
        raise ModelError(f"model callables failed on a declared mode: {exc}") from exc
    if lam.shape != (len(mode_grid),) or not np.all(np.isfinite(lam)) or np.any(lam < 0):
        bad = mode_grid[~(np.isfinite(lam) & (lam >= 0))] if lam.shape == mode_grid.shape else modes
        raise ModelError(f"jump_rate undefined or negative on modes {sorted(set(np.atleast_1d(bad).tolist()))}")
    if f.shape != cont_grid.shape:
        raise ModelError(f"drift returned shape {f.shape}, expected {cont_grid.shape}")
    if g.shape != (len(mode_grid), model.dim, model.brownian_dim):
        raise ModelError(f"diffusion returned shape {g.shape}, expected "
                         f"{(len(mode_grid), model.dim, model.brownian_dim)}")
    return ShsModel(model)


@dataclass
class ParticleBatch:
    """Structure-of-arrays particle population used by the engine."""

    mode: Array
    cont: Array
    q: Array
    clock: Array
    hit: Array = field(default=None)

    def __post_init__(self):
        self.mode = np.ascontiguousarray(self.mode, dtype=np.int64).reshape(-1)
        self.cont = np.ascontiguousarray(np.atleast_2d(self.cont), dtype=np.float64)
        self.q = np.ascontiguousarray(self.q, dtype=np.float64).reshape(-1)
        self.clock = np.ascontiguousarray(self.clock, dtype=np.float64).reshape(-1)
        if self.hit is None:
            self.hit = np.zeros(self.mode.shape, dtype=bool)
        n = self.mode.size
        if not (self.cont.shape[0] == self.q.size == self.clock.size == n):
            raise ValueError("inconsistent batch lengths")

    def __len__(self):
        return self.mode.size

    @classmethod
    def from_states(cls, states: Sequence[HybridState]) -> "ParticleBatch":
        return cls(
            mode=[s.mode for s in states],
            cont=np.array([s.cont for s in states]),
            q=[s.local_time_budget for s in states],
            clock=[s.clock for s in states],
        )

    def state(self, i: int) -> HybridState:
        return HybridState(int(self.mode[i]), self.cont[i].copy(), float(self.q[i]), float(self.clock[i]))

    def take(self, idx) -> "ParticleBatch":
        return ParticleBatch(self.mode[idx], self.cont[idx], self.q[idx], self.clock[idx], self.hit[idx])


@dataclass
class NoiseDriver:
    """Brownian and Poisson increments drawn from keyed streams."""

    brownian_dim: int
    poisson_rates: tuple
    stream: KeyedStreams

    @classmethod
    def for_model(cls, model, stream: KeyedStreams) -> "NoiseDriver":
        base = model.base if isinstance(model, ShsModel) else model
        return cls(base.brownian_dim, tuple(base.poisson_rates), stream)


def init_batch(model: ShsModel, streams: KeyedStreams, clock: float = 0.0) -> ParticleBatch:
    """Sample ``len(streams)`` particles from the model's initial law."""
    mode, cont_ext = model.init_extended(streams)
    n = len(streams)
    return ParticleBatch(mode, cont_ext[:, :-1], cont_ext[:, -1], np.full(n, float(clock)))


def _next_clock(clock: Array, dt: float, horizon: float) -> Array:
    nxt = clock + dt
    return np.where(nxt >= horizon - 1e-9 * dt, horizon, nxt)


def _euler_maruyama(base: GshsModel, mode, cont, q, h, streams: KeyedStreams, idx):
    """One Euler-Maruyama step; returns the new ``(cont, q)``.

    Draw order per particle: ``brownian_dim`` normals, then one uniform per
    Poisson channel.  Compiled kernels must consume draws in the same order.
    """
    f = base.drift(mode, cont)
    lam = np.asarray(base.jump_rate(mode, cont), dtype=np.float64)
    new = cont + f * h[:, None]
    if base.brownian_dim:
        g = base.diffusion(mode, cont)
        dw = streams.normal(base.brownian_dim, idx) * np.sqrt(h)[:, None]
        new = new + np.einsum("ndm,nm->nd", g, dw)
    if base.poisson_rates:
        u = streams.uniform(len(base.poisson_rates), idx)
        fired = (u < np.asarray(base.poisson_rates)[None, :] * h[:, None]).astype(np.float64)
        new = new + fired @ base.poisson_matrix().T
    return new, q - lam * h


def execute_batch(model: ShsModel, batch: ParticleBatch, streams: KeyedStreams,
                  target: LevelPredicate, horizon: float, dt: float,
                  redraw_budget: bool = True) -> Array:
    """Advance every particle until it enters ``target`` or reaches ``horizon``.

    ``batch`` is updated in place and its ``hit`` flags are returned.  Each
    particle takes at least one step unless its clock is already at the
    horizon.  A jump (budget exhausted or boundary hit) is applied at the end
    of the step on which it is detected; target entry counts whether it
    happens along the flow or through the jump itself.

    With ``redraw_budget`` the local-time budget is redrawn from Exp(1) on
    entry, which is exact by memorylessness and lets split copies draw
    independent jump times.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    kernel = model.kernel
    if kernel is not None and _backend.use_numba() and kernel.supports(target):
        return kernel.execute(batch, streams, target, horizon, dt, redraw_budget)
    return _execute_numpy(model, batch, streams, target, horizon, dt, redraw_budget)


def _execute_numpy(model, batch, streams, target, horizon, dt, redraw_budget):
    base = model.base
    batch.hit[:] = False
    expired = batch.clock >= horizon
    batch.clock[expired] = horizon
    active = np.flatnonzero(~expired)
    if redraw_budget and active.size:
        batch.q[active] = streams.exponential(active)

    while active.size:
        mode = batch.mode[active]
        cont = batch.cont[active]
        clock = batch.clock[active]
        new_clock = _next_clock(clock, dt, horizon)
        h = new_clock - clock
        new_cont, new_q = _euler_maruyama(base, mode, cont, batch.q[active], h, streams, active)

        bad = ~np.all(np.isfinite(new_cont), axis=1)
        if bad.any():
            raise DivergenceError(
                f"non-finite state after step at t={float(new_clock[bad][0]):.6g} "
                f"for particles {active[bad][:10].tolist()}", active[bad])

        due = new_q <= 0.0
        new_q[due] = 0.0
        jump = due.copy()
        if base.boundary is not None:
            jump |= np.asarray(base.boundary(mode, new_cont), dtype=bool)
        hit = np.asarray(target(mode, new_cont), dtype=bool).copy()
        new_mode = mode.copy()

        if jump.any():
            j = np.flatnonzero(jump)
            draws = Draws(streams, active[j])
            m2, c2 = base.reset(mode[j], new_cont[j], draws, due[j])
            new_mode[j] = m2
            new_cont[j] = c2
            new_q[j] = draws.exponential()
            hit[j] |= np.asarray(target(new_mode[j], new_cont[j]), dtype=bool)

        batch.mode[active] = new_mode
        batch.cont[active] = new_cont
        batch.q[active] = new_q
        batch.clock[active] = new_clock
        batch.hit[active[hit]] = True
        active = active[~(hit | (new_clock >= horizon))]
    return batch.hit


def integrate_step(state: HybridState, model: ShsModel, dt: float, noise: NoiseDriver) -> HybridState:
    """One Euler-Maruyama step of ``state`` without applying any jump.

    A budget that would go negative is floored at zero; the jump is then due
    at the step endpoint (the returned clock).
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    base = model.base
    if state.cont.size != base.dim_of(state.mode):
        raise ModelError("state dimension does not match the model")
    mode = np.array([state.mode], dtype=np.int64)
    cont = state.cont[None, :]
    h = np.array([dt])
    stream = noise.stream
    new_cont, new_q = _euler_maruyama(base, mode, cont, np.array([state.local_time_budget]),
                                      h, stream, np.zeros(1, dtype=np.int64))
    if not np.all(np.isfinite(new_cont)):
        raise DivergenceError(f"non-finite state after step at t={state.clock + dt:.6g}", [0])
    return HybridState(state.mode, new_cont[0], max(float(new_q[0]), 0.0), state.clock + dt)


def execute_until(particle, model: ShsModel, target: LevelPredicate, horizon: float,
                  dt: float, noise: NoiseDriver, redraw_budget: bool = True):
    """Run one particle to ``target`` or ``horizon``; see :func:`execute_batch`."""
    from .splitting import Particle

    state = particle.state if isinstance(particle, Particle) else particle
    batch = ParticleBatch.from_states([state])
    hit = execute_batch(model, batch, noise.stream, target, horizon, dt, redraw_budget)
    out = batch.state(0)
    if isinstance(particle, Particle):
        return Particle(entry_time=out.clock, state=out, alive=bool(hit[0]), key=particle.key)
    return Particle(entry_time=out.clock, state=out, alive=bool(hit[0]), key=int(noise.stream.keys[0]))
