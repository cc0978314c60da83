import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gshs_risk import _backend
from gshs_risk.rng import (KeyedStreams, combine_keys, derive_key, exponential_scalar, fisher_yates,
                           keys_for, normal_scalar, uniform_at, uniform_scalar)


def test_derive_key_is_stable_and_sensitive():
    assert derive_key(1, 2) == derive_key(1, 2)
    assert derive_key(1, 2) != derive_key(2, 1)
    assert derive_key(1, "mc") != derive_key(1, "ips")
    assert 0 <= derive_key(123, "x", 4) < 2 ** 64


def test_uniforms_in_open_unit_interval():
    u = uniform_at(keys_for(7, np.arange(1000)), np.arange(1000, dtype=np.uint64))
    assert u.min() > 0.0 and u.max() < 1.0
    assert abs(u.mean() - 0.5) < 0.03


def test_streams_are_counter_based():
    keys = keys_for(derive_key(5), np.arange(4))
    a = KeyedStreams(keys)
    first = a.uniform(3)
    b = KeyedStreams(keys)
    b.uniform(1)
    b2 = KeyedStreams(keys, b.counters.copy())
    assert np.array_equal(b2.uniform(2), first[:, 1:])


def test_subset_draws_do_not_disturb_other_particles():
    keys = keys_for(derive_key(9), np.arange(6))
    full = KeyedStreams(keys)
    part = KeyedStreams(keys)
    part.uniform(1, np.array([1, 3]))
    assert np.array_equal(part.uniform(1)[[0, 2, 4, 5]], full.uniform(1)[[0, 2, 4, 5]])


def test_normal_and_exponential_moments():
    s = KeyedStreams(keys_for(derive_key(11), np.arange(20000)))
    z = s.normal(2)
    assert abs(z.mean()) < 0.03 and abs(z.std() - 1) < 0.03
    e = s.exponential()
    assert abs(e.mean() - 1) < 0.03 and e.min() > 0


def test_scalar_draws_match_vectorised():
    keys = keys_for(derive_key(3), np.arange(5))
    s = KeyedStreams(keys)
    u = s.uniform(1)[:, 0]
    z = KeyedStreams(keys).normal(1)[:, 0]
    e = KeyedStreams(keys).exponential()
    for i, k in enumerate(keys):
        assert uniform_scalar(k, np.uint64(0)) == u[i]
        assert normal_scalar(k, np.uint64(0)) == pytest.approx(z[i], rel=1e-14, abs=1e-14)
        assert exponential_scalar(k, np.uint64(0)) == pytest.approx(e[i], rel=1e-14)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 300), st.integers(0, 2 ** 63), st.data())
def test_fisher_yates_is_a_permutation(n, key, data):
    prefix = data.draw(st.one_of(st.none(), st.integers(0, n)))
    perm = fisher_yates(n, key, prefix)
    assert sorted(perm.tolist()) == list(range(n))


def test_fisher_yates_prefix_is_uniform():
    counts = np.zeros(5)
    for key in range(5000):
        counts[fisher_yates(5, key, 1)[0]] += 1
    assert np.all(np.abs(counts / 5000 - 0.2) < 0.03)


def test_combine_keys_depends_on_both_parts():
    keys = keys_for(1, np.arange(3))
    a = combine_keys(keys, np.zeros(3, np.uint64))
    b = combine_keys(keys, np.ones(3, np.uint64))
    assert len(set(a.tolist()) | set(b.tolist())) == 6


def test_backend_switch():
    with _backend.using("numpy"):
        assert not _backend.use_numba()
    with pytest.raises(ValueError):
        _backend.set_backend("fortran")
