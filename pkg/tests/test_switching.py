import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from edgeswitch.switching import (ArrivalTracker, ErrorEstimate, KpiSample, Mode,
                                  SwitchState, decide, estimate_error, latency_c,
                                  latency_d, update_window)

E_TH, S_TH = 0.15, 6.0


def test_latency_c():
    assert latency_c(10.05, 10.00) == pytest.approx(0.05)
    assert latency_c(3.0, 3.0) == 0.0
    with pytest.raises(ValueError):
        latency_c(1.0, 1.1)


def test_latency_d():
    assert latency_d(1.02, 1.0, 0, 0.05) == pytest.approx(0.02)
    assert latency_d(1.02, 1.0, 3, 0.05) == pytest.approx(0.17)
    assert latency_d(2.0, 2.0, 0, 0.05) == 0.0
    with pytest.raises(ValueError):
        latency_d(1.0, 1.1, 0, 0.05)
    with pytest.raises(ValueError):
        latency_d(1.1, 1.0, -1, 0.05)


def sample(v, t_prev=0.0, t_arr=0.05, t_created=0.0, k=0):
    return KpiSample(t_arrival=t_arr, t_created=t_created, k=k, v_prev=v, sinr=20.0,
                     t_arrival_prev=t_prev)


def test_estimate_error_examples():
    e = estimate_error(sample(0.0, t_arr=0.3, t_created=0.1, k=2), 0.05)
    assert (e.e_c, e.e_d, e.e_mean) == (0.0, 0.0, 0.0)
    e = estimate_error(sample(1.0), 0.05)
    assert e.e_c == pytest.approx(0.05) and e.e_d == pytest.approx(0.05)
    assert e.e_mean == pytest.approx(0.05)


@settings(max_examples=200, deadline=None)
@given(st.one_of(st.just(0.0), st.floats(1e-6, 20)), st.floats(1e-6, 1), st.floats(1e-6, 1),
       st.integers(0, 20))
def test_estimate_error_properties(v, gap, delay, k):
    s = sample(v, t_prev=1.0, t_arr=1.0 + gap + delay, t_created=1.0 + gap, k=k)
    e = estimate_error(s, 0.05)
    assert e.e_c >= 0 and e.e_d >= 0
    assert e.e_mean == (e.e_c + e.e_d) / 2
    d = estimate_error(sample(2 * v, t_prev=1.0, t_arr=1.0 + gap + delay,
                              t_created=1.0 + gap, k=k), 0.05)
    assert (d.e_c, d.e_d, d.e_mean) == (2 * e.e_c, 2 * e.e_d, 2 * e.e_mean)


def test_kpi_sample_invariants():
    with pytest.raises(ValueError):
        sample(1.0, t_arr=0.1, t_created=0.2)
    with pytest.raises(ValueError):
        sample(1.0, k=-1)


def test_window_mean_examples():
    st_ = SwitchState(capacity=50)
    for _ in range(25):
        update_window(st_, 0.1)
    for _ in range(25):
        update_window(st_, 0.3)
    assert st_.windowed_error == pytest.approx(0.2, abs=1e-15)
    c = SwitchState(capacity=50)
    update_window(c, ErrorEstimate(0.07, 0.07, 0.07, 0.0, 0.0))
    assert c.windowed_error == 0.07


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0, 5), min_size=1, max_size=200), st.integers(1, 60))
def test_window_is_mean_of_last_w(values, W):
    s = SwitchState(capacity=W)
    for v in values:
        update_window(s, v)
    assert len(s.window) <= W
    assert s.windowed_error == pytest.approx(math.fsum(values[-W:]) / len(values[-W:]),
                                             rel=1e-12, abs=1e-15)


def full_state(err, W=5):
    s = SwitchState(capacity=W)
    for _ in range(W):
        update_window(s, err)
    return s


def test_decide_examples():
    assert decide(full_state(0.10), 20.0, E_TH, S_TH).mode == Mode.OFFBOARD
    assert decide(full_state(0.20), 20.0, E_TH, S_TH).mode == Mode.ONBOARD
    s = full_state(0.01)
    for _ in range(3):
        d = decide(s, 5.0, E_TH, S_TH)
    assert d.mode == Mode.ONBOARD and d.error_gate and not d.sinr_gate


def test_sinr_debounce():
    s = full_state(0.0)
    modes = [decide(s, x, E_TH, S_TH).mode for x in [5, 5, 20, 5, 5, 5, 5]]
    assert modes == [Mode.OFFBOARD] * 5 + [Mode.ONBOARD] * 2


def test_channel_down_forces_onboard():
    s = full_state(0.0)
    s.channel_down = True
    d = decide(s, 20.0, E_TH, S_TH)
    assert d.mode == Mode.ONBOARD and not d.sinr_gate


def test_decide_rejects_bad_threshold():
    with pytest.raises(ValueError):
        decide(SwitchState(), 20.0, 0.0, S_TH)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(st.floats(0, 0.5), st.floats(0, 30)), min_size=1, max_size=120),
       st.integers(1, 10))
def test_series_composition(stream, W):
    s = SwitchState(capacity=W)
    for err, sinr in stream:
        update_window(s, err)
        d = decide(s, sinr, E_TH, S_TH)
        assert (d.mode == Mode.OFFBOARD) == (d.error_gate and d.sinr_gate)
        if d.mode == Mode.OFFBOARD and s.window_full:
            assert s.windowed_error < E_TH
        if d.mode == Mode.OFFBOARD and len(s.sinr_history) == s.debounce:
            assert any(x >= S_TH for x in s.sinr_history)


@settings(max_examples=100, deadline=None)
@given(st.floats(0, 1))
def test_error_gate_is_threshold_function(err):
    d = decide(full_state(err, W=3), 20.0, E_TH, S_TH)
    assert (d.mode == Mode.OFFBOARD) == (full_state(err, W=3).windowed_error < E_TH)


def test_gate_held_during_warmup():
    s = SwitchState(capacity=4)
    for _ in range(3):
        update_window(s, 1.0)
        assert decide(s, 20.0, E_TH, S_TH).mode == Mode.OFFBOARD
    update_window(s, 1.0)
    assert decide(s, 20.0, E_TH, S_TH).mode == Mode.ONBOARD


def square_wave_changes(W, n):
    s = SwitchState(capacity=W)
    modes = []
    for i in range(n):
        update_window(s, 0.0 if i % 2 == 0 else 2 * E_TH)
        modes.append(decide(s, 20.0, E_TH, S_TH).mode)
    return sum(a != b for a, b in zip(modes, modes[1:]))


def test_chattering_suppression():
    assert square_wave_changes(50, 500) <= 2
    assert square_wave_changes(1, 500) >= 100


def test_tracker_counts_drops_and_ignores_stale():
    tr = ArrivalTracker()
    assert tr.observe(0, 0.0, 0.01, speed=1.0, sinr=20) is None
    s = tr.observe(3, 0.15, 0.17, speed=2.0, sinr=20)
    assert s.k == 2 and s.v_prev == 1.0 and s.t_arrival_prev == 0.01
    assert tr.observe(2, 0.10, 0.18, speed=5.0, sinr=20) is None  # stale
    s = tr.observe(4, 0.20, 0.21, speed=3.0, sinr=20, hold_speed=True)
    assert s.k == 0 and s.v_prev == 2.0
    s = tr.observe(5, 0.25, 0.26, speed=4.0, sinr=20)
    assert s.v_prev == 2.0  # held during the previous arrival
    assert tr.k_cumulative == 2


def test_tracker_first_seq_counts_missing_prefix():
    tr = ArrivalTracker()
    tr.observe(4, 0.2, 0.21, speed=0.0, sinr=20)
    assert tr.k_cumulative == 4


@pytest.mark.parametrize("delay,relation", [(0.10, "lt"), (0.025, "gt"), (0.05, "eq")])
def test_ordering_on_steady_traffic(delay, relation):
    t_exec = 0.05
    tr = ArrivalTracker()
    for i in range(40):
        t_created = i * t_exec
        s = tr.observe(i, t_created, t_created + delay, speed=1.3, sinr=20)
        if s is None:
            continue
        e = estimate_error(s, t_exec)
        if relation == "lt":
            assert e.e_c < e.e_d
        elif relation == "gt":
            assert e.e_c > e.e_d
        else:
            assert abs(e.e_c - e.e_d) < 1e-12
