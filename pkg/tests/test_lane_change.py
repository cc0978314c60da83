import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gshs_risk import _backend
from gshs_risk.lane_change import (DIM, EL_CHANGING, EL_HIT, EL_MODES, EL_STRAIGHT, ER_AWARE,
                                   ER_CHANGING, ER_HIT, ER_MODES, ER_REVERTING, ER_STRAIGHT,
                                   I_EL, I_ER, I_ER_TARGET, I_ETA, I_SA, N_MODES, EllipseFamily,
                                   LaneChangeScenario, ModeMachineError, ScenarioConfig,
                                   ScenarioState, _drift_numpy, _guards_numpy, copy_sa, decode_mode,
                                   delay_rate, drift_core, ellipse_ratios, ellipses_intersect,
                                   encode_mode, guards_core, scenario_ttc, step_discrete)
from gshs_risk.rng import KeyedStreams, derive_key, keys_for
from gshs_risk.shs import _execute_numpy, init_batch, transform_gshs_to_shs

CFG = ScenarioConfig()


def _state(mode, c):
    return ScenarioState.unpack(mode, c)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 4), st.integers(0, 2), st.integers(0, 3), st.integers(0, 3))
def test_mode_packing_round_trip(er, el, belief, started):
    m = encode_mode(er, el, belief, started)
    assert 0 <= m < N_MODES
    assert decode_mode(m) == (er, el, belief, started)


def test_ellipse_ratios_and_intersection():
    assert ellipse_ratios() == (2.0, 1.8, 1.6, 1.4, 1.2, 1.0)
    assert ellipses_intersect((0, 0), (2, 0), 1.0, 1.0)
    assert not ellipses_intersect((0, 0), (2.01, 0), 1.0, 1.0)
    with pytest.raises(ValueError):
        EllipseFamily((1.0, 1.2))
    with pytest.raises(ValueError):
        EllipseFamily((2.0, 1.5))


def test_levels_are_nested_and_include_collision():
    sc = LaneChangeScenario()
    levels = sc.levels()
    c = np.zeros((1, DIM))
    c[0, I_EL], c[0, I_EL + 1] = 0.0, 2.9
    inside = [bool(lv(np.array([0]), c)[0]) for lv in levels]
    assert inside == sorted(inside, reverse=True)
    hit = np.array([encode_mode(ER_HIT, EL_HIT)])
    far = np.zeros((1, DIM))
    far[0, I_EL] = 1e3
    assert all(lv(hit, far)[0] for lv in levels)


def test_delay_rate_gating():
    assert delay_rate(1.2, ER_MODES[ER_CHANGING], 0.6) == pytest.approx(1.2 / 0.36)
    assert delay_rate(1.2, ER_MODES[ER_AWARE], 0.6) == 0.0
    assert delay_rate(1.2, ER_MODES[ER_CHANGING], 0.6, EL_MODES[EL_STRAIGHT]) == 0.0
    with pytest.raises(ValueError):
        delay_rate(-1.0, ER_MODES[ER_CHANGING], 0.6)


def test_initial_state_starts_both_lane_changes():
    mode, c = LaneChangeScenario().initial_state()
    er, el, belief, started = decode_mode(mode)
    assert (er, el, belief, started) == (ER_CHANGING, EL_CHANGING, 0, 3)
    assert c[I_ER_TARGET] == CFG.shared_lane


def test_delayed_start():
    cfg = replace(CFG, lane_change_time_er=2.0)
    mode, c = LaneChangeScenario(cfg).initial_state()
    assert decode_mode(mode)[0] == ER_STRAIGHT
    c = c.copy()
    c[-1] = 2.0
    s = step_discrete(_state(mode, c), cfg)
    assert s.er_mode == ER_MODES[ER_CHANGING] and s.er_target == cfg.shared_lane


def test_collision_sets_both_hit():
    mode, c = LaneChangeScenario().initial_state()
    c = c.copy()
    c[I_EL:I_EL + 2] = c[I_ER:I_ER + 2] + (1.0, 0.5)
    s = step_discrete(_state(mode, c))
    assert s.er_mode == ER_MODES[ER_HIT] and s.el_mode == EL_MODES[EL_HIT]
    # absorbing
    assert step_discrete(s, reaction=True) == s


def test_awareness_onset_copies_truth():
    mode, c = LaneChangeScenario().initial_state()
    c = c.copy()
    c[I_EL:I_EL + 5] = (2.0, 3.0, -0.02, -0.3, 0.01)
    s = step_discrete(_state(mode, c))
    assert s.aware and s.sa.est_mode == EL_MODES[EL_CHANGING]
    assert (s.sa.est_x, s.sa.est_y, s.sa.est_heading, s.sa.est_v_lat) == (2.0, 3.0, -0.02, -0.3)
    assert s.sa.awareness_timer == 0.0
    assert copy_sa(s) == s.sa


def test_no_awareness_without_ratio():
    cfg = replace(CFG, awareness_ratio=0.0)
    mode, c = LaneChangeScenario(cfg).initial_state()
    c = c.copy()
    c[I_EL:I_EL + 2] = (2.0, 3.0)
    s = step_discrete(_state(mode, c), cfg)
    assert not s.aware
    with pytest.raises(ModeMachineError):
        copy_sa(s)


def test_reaction_then_ttc_revert():
    mode, c = LaneChangeScenario().initial_state()
    c = c.copy()
    # EL just ahead and drifting into ER's path, ER moving left
    c[I_ER:I_ER + 5] = (0.0, 1.0, 0.05, 0.0, 0.0)
    c[I_EL:I_EL + 5] = (5.0, 3.8, -0.05, 0.0, 0.0)
    s = step_discrete(_state(mode, c))
    assert s.aware
    assert scenario_ttc(s) < CFG.ttc_threshold
    s2 = step_discrete(s, reaction=True)
    assert s2.er_mode == ER_MODES[ER_REVERTING]
    assert s2.er_target == CFG.er_start[1]


def test_reaction_ignored_unless_changing():
    mode, c = LaneChangeScenario().initial_state()
    s = _state(mode, c)
    s = replace(s, er_mode=ER_MODES[ER_REVERTING])
    assert step_discrete(s, reaction=True).er_mode == ER_MODES[ER_REVERTING]


def test_settling_ends_lane_change():
    mode, c = LaneChangeScenario().initial_state()
    c = c.copy()
    c[I_ER + 1] = CFG.shared_lane - 0.01
    c[I_EL + 1] = 40.0  # far away, no collision or awareness
    s = step_discrete(_state(mode, c))
    assert s.er_mode == ER_MODES[ER_STRAIGHT]


def _random_states(n, seed):
    rng = np.random.default_rng(seed)
    mode0, c0 = LaneChangeScenario().initial_state()
    modes = rng.integers(0, N_MODES, n)
    c = np.tile(c0, (n, 1))
    c[:, I_ER:I_ER + 5] += rng.normal(0, [3, 1.5, 0.05, 0.3, 0.05], (n, 5))
    c[:, I_EL:I_EL + 5] += rng.normal(0, [3, 1.5, 0.05, 0.3, 0.05], (n, 5))
    c[:, I_SA:I_SA + 4] = c[:, I_EL:I_EL + 4] + rng.normal(0, 0.1, (n, 4))
    c[:, I_ETA] = rng.uniform(0, 2, n)
    c[:, -1] = rng.uniform(0, 10, n)
    return modes, c


@pytest.mark.skipif(not _backend.compiled(), reason="numba kernels not compiled")
def test_compiled_guards_and_drift_match_numpy():
    p = CFG.packed()
    modes, c = _random_states(300, 1)
    spont = np.arange(300) % 3 == 0
    m_np, c_np, ch_np = _guards_numpy(modes, c, spont, p)
    f_np = _drift_numpy(modes, c, p)
    out = np.empty(DIM)
    for i in range(300):
        ci = c[i].copy()
        m, changed = guards_core(modes[i], ci, spont[i], p)
        assert m == m_np[i] and changed == ch_np[i]
        assert ci == pytest.approx(c_np[i], abs=1e-12)
        drift_core(modes[i], c[i].copy(), p, out)
        assert out == pytest.approx(f_np[i], rel=1e-10, abs=1e-12)


@pytest.mark.skipif(not _backend.compiled(), reason="numba kernels not compiled")
@pytest.mark.parametrize("mu", [0.0, 1.5825])
def test_kernel_matches_numpy_engine(mu):
    sc = LaneChangeScenario(CFG.with_awareness(mu))
    shs = transform_gshs_to_shs(sc.model())
    keys = keys_for(derive_key("agree", repr(mu)), np.arange(40))
    target = sc.levels()[3]
    runs = []
    for use_kernel in (True, False):
        batch = init_batch(shs, KeyedStreams(keys))
        streams = KeyedStreams(keys ^ np.uint64(1))
        if use_kernel:
            hit = shs.kernel.execute(batch, streams, target, 10.0, 0.01, True)
        else:
            hit = _execute_numpy(shs, batch, streams, target, 10.0, 0.01, True)
        runs.append((hit.copy(), batch, streams.counters.copy()))
    (h1, b1, k1), (h2, b2, k2) = runs
    assert np.array_equal(h1, h2)
    assert np.array_equal(b1.mode, b2.mode)
    assert np.allclose(b1.clock, b2.clock)
    assert np.allclose(b1.cont, b2.cont, rtol=1e-8, atol=1e-8)
    assert np.array_equal(k1, k2)


def test_without_awareness_collision_is_certain():
    sc = LaneChangeScenario(CFG.with_awareness(0.0))
    shs = transform_gshs_to_shs(sc.model())
    batch = init_batch(shs, KeyedStreams(keys_for(3, np.arange(50))))
    from gshs_risk.shs import execute_batch
    hit = execute_batch(shs, batch, KeyedStreams(keys_for(4, np.arange(50))), sc.collision(),
                        CFG.horizon, 0.01, False)
    assert hit.all()


def test_scenario_state_round_trip():
    mode, c = LaneChangeScenario().initial_state()
    s = _state(mode, c)
    m2, c2 = s.pack()
    assert m2 == mode and np.array_equal(c2, c)


def test_config_validation():
    with pytest.raises(ValueError):
        ScenarioConfig(mean_delay=0.0)
    with pytest.raises(ValueError):
        ScenarioConfig(ttc_order=0)
    assert math.isclose(CFG.shared_lane, 3.5)
