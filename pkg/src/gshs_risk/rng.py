"""Counter-based keyed random streams.

Every random number is a pure function of a 64-bit key and a counter, so a
particle's draws depend only on its own key and on how many numbers it has
consumed.  That makes results independent of batch composition, execution
order and parallelism, and lets a split particle receive a fresh key while
sharing its parent's state.

The mixer is the SplitMix64 finalizer.  A draw hashes ``(key, counter)``
through two rounds of it and keeps the top 53 bits.
"""

from __future__ import annotations

import hashlib
import math

import numpy as np

from . import _backend
from ._backend import jit

MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_MUL1 = 0xBF58476D1CE4E5B9
_MUL2 = 0x94D049BB133111EB
_SALT = 0xD1B54A32D192ED03
_ROOT = 0x243F6A8885A308D3

_U_GOLDEN = np.uint64(_GOLDEN)
_U_MUL1 = np.uint64(_MUL1)
_U_MUL2 = np.uint64(_MUL2)
_U_SALT = np.uint64(_SALT)
_U_S30 = np.uint64(30)
_U_S27 = np.uint64(27)
_U_S31 = np.uint64(31)
_U_S11 = np.uint64(11)
_INV53 = 1.0 / 9007199254740992.0  # 2**-53
_TWO_PI = 2.0 * math.pi


# -- python-int key derivation ------------------------------------------------

def mix64(z: int) -> int:
    z &= MASK64
    z = ((z ^ (z >> 30)) * _MUL1) & MASK64
    z = ((z ^ (z >> 27)) * _MUL2) & MASK64
    return z ^ (z >> 31)


def _combine(key: int, part: int) -> int:
    return mix64(((key ^ mix64(part + _SALT)) + _GOLDEN) & MASK64)


def _as_int(part) -> int:
    if isinstance(part, (bool, np.bool_)):
        return int(part)
    if isinstance(part, (int, np.integer)):
        return int(part) & MASK64
    if isinstance(part, str):
        digest = hashlib.blake2b(part.encode(), digest_size=8).digest()
        return int.from_bytes(digest, "little")
    raise TypeError(f"key parts must be int or str, got {type(part).__name__}")


def derive_key(*parts) -> int:
    """Fold ``parts`` (ints or strings) into a 64-bit stream key."""
    key = mix64(_ROOT)
    for part in parts:
        key = _combine(key, _as_int(part))
    return key


# -- vectorized numpy path ----------------------------------------------------

def _mix64_arr(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> _U_S30)) * _U_MUL1
    z = (z ^ (z >> _U_S27)) * _U_MUL2
    return z ^ (z >> _U_S31)


def combine_keys(keys, parts) -> np.ndarray:
    """Vectorized ``derive``-style step: one new key per (key, part) pair."""
    keys = np.asarray(keys, dtype=np.uint64)
    parts = np.asarray(parts, dtype=np.uint64)
    with np.errstate(over="ignore"):
        return _mix64_arr((keys ^ _mix64_arr(parts + _U_SALT)) + _U_GOLDEN)


def uniform_at(keys, counters) -> np.ndarray:
    """Uniform draws in the open interval (0, 1), one per (key, counter)."""
    bits = combine_keys(keys, counters)
    return ((bits >> _U_S11).astype(np.float64) + 0.5) * _INV53


class KeyedStreams:
    """A bank of per-particle streams: one key and one draw counter each.

    ``idx`` selects a subset of the bank; only the selected counters advance.
    """

    def __init__(self, keys, counters=None):
        self.keys = np.ascontiguousarray(keys, dtype=np.uint64).reshape(-1)
        if counters is None:
            counters = np.zeros(self.keys.shape, dtype=np.uint64)
        self.counters = np.ascontiguousarray(counters, dtype=np.uint64).reshape(-1)
        if self.counters.shape != self.keys.shape:
            raise ValueError("keys and counters must have the same length")

    def __len__(self) -> int:
        return self.keys.size

    def _select(self, idx):
        if idx is None:
            return slice(None), self.keys, self.counters
        idx = np.asarray(idx)
        return idx, self.keys[idx], self.counters[idx]

    def uniform(self, k: int = 1, idx=None) -> np.ndarray:
        sel, keys, ctr = self._select(idx)
        offsets = np.arange(k, dtype=np.uint64)
        with np.errstate(over="ignore"):
            out = uniform_at(keys[:, None], ctr[:, None] + offsets)
            self.counters[sel] = ctr + np.uint64(k)
        return out

    def normal(self, k: int = 1, idx=None) -> np.ndarray:
        u = self.uniform(2 * k, idx)
        u1 = u[:, 0::2]
        u2 = u[:, 1::2]
        return np.sqrt(-2.0 * np.log(u1)) * np.cos(_TWO_PI * u2)

    def exponential(self, idx=None) -> np.ndarray:
        return -np.log(self.uniform(1, idx)[:, 0])

    def spawn(self, *parts) -> "KeyedStreams":
        """Child streams whose keys fold ``parts`` into each current key."""
        keys = self.keys
        for part in parts:
            keys = combine_keys(keys, np.full(keys.shape, _as_int(part), dtype=np.uint64))
        return KeyedStreams(keys)


def keys_for(base_key: int, indices) -> np.ndarray:
    """Keys ``derive_key(..., i)`` for every index ``i`` under ``base_key``."""
    indices = np.asarray(indices, dtype=np.uint64)
    return combine_keys(np.full(indices.shape, base_key, dtype=np.uint64), indices)


# -- scalar kernels (compiled when numba is present) --------------------------

@jit
def mix64_scalar(z):
    z = (z ^ (z >> _U_S30)) * _U_MUL1
    z = (z ^ (z >> _U_S27)) * _U_MUL2
    return z ^ (z >> _U_S31)


@jit
def uniform_scalar(key, counter):
    bits = mix64_scalar((key ^ mix64_scalar(counter + _U_SALT)) + _U_GOLDEN)
    return (np.float64(bits >> _U_S11) + 0.5) * _INV53


if not _backend.compiled():
    # uint64 arithmetic wraps by design; route through the vectorized path,
    # which silences numpy's overflow warnings
    def mix64_scalar(z):  # noqa: F811
        with np.errstate(over="ignore"):
            return _mix64_arr(np.uint64(z))

    def uniform_scalar(key, counter):  # noqa: F811
        return float(uniform_at(np.uint64(key), np.uint64(counter)))


@jit
def normal_scalar(key, counter):
    u1 = uniform_scalar(key, counter)
    u2 = uniform_scalar(key, counter + np.uint64(1))
    return math.sqrt(-2.0 * math.log(u1)) * math.cos(_TWO_PI * u2)


@jit
def exponential_scalar(key, counter):
    return -math.log(uniform_scalar(key, counter))


@jit
def _shuffle_prefix(perm, u, m):
    n = perm.size
    for i in range(m):
        j = i + min(int(u[i] * (n - i)), n - i - 1)
        tmp = perm[i]
        perm[i] = perm[j]
        perm[j] = tmp
    return perm


def fisher_yates(n: int, key: int, prefix: int | None = None) -> np.ndarray:
    """Random permutation of ``range(n)`` driven by ``key``.

    With ``prefix`` only the first ``prefix`` positions are shuffled; they
    are then a uniform sample without replacement, in uniform order.
    """
    m = n - 1 if prefix is None else min(prefix, n - 1)
    perm = np.arange(n, dtype=np.int64)
    if m < 1:
        return perm
    u = uniform_at(np.full(m, key, dtype=np.uint64), np.arange(m, dtype=np.uint64))
    return _shuffle_prefix(perm, u, m)
