import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from arrl.env import BipedEnv, DynamicsPerturbation, EnvConfig
from arrl.trainer import default_theta, make_gait_spec, run_episode
from arrl.controller import BaseController
from arrl.gaits import GaitKind
from arrl.transfer import (ErrorWindow, TableRow, TransferSchedule, evaluate_transfer, schedule_amplitude,
                           schedule_weight, write_table)

S = TransferSchedule(k1=0.5, k2=0.5, A_set=1.0)

# (t, (mean |e|, mean |de|), expected amplitude, expected weight)
TRACE = [
    (0.0, (0.0, 0.0), 0.0, 0.0),
    (0.5, (0.05, 0.1), 0.25, 0.25),
    (1.0, (0.2, 0.0), 0.25, 0.25),    # pitch error breach: freeze
    (1.5, (0.1, 0.4), 0.25, 0.25),    # rate breach: still frozen
    (1.6, (0.15, 0.0), 0.25, 0.25),   # exactly at threshold counts as a breach
    (1.8, (0.1, 0.1), 0.9, 0.9),      # recovered: back on the k*t ramp
    (2.0, (0.1, 0.1), 1.0, 1.0),      # ramp reaches the cap
    (2.5, (0.9, 0.9), 1.0, 1.0),      # saturated values ignore the errors
]


def test_hand_trace_amplitude_and_weight():
    A = w = 0.0
    for t, errs, a_exp, w_exp in TRACE:
        A = schedule_amplitude(t, errs, S, A)
        w = schedule_weight(t, errs, S, w)
        assert A == a_exp and w == w_exp, (t, A, w)


def test_weight_saturates_at_one_before_amplitude_cap():
    s = TransferSchedule(k1=0.1, k2=2.0, A_set=3.0)
    A = w = 0.0
    for t in (0.25, 0.5, 0.75, 1.0):
        A = schedule_amplitude(t, (0, 0), s, A)
        w = schedule_weight(t, (0, 0), s, w)
    assert w == 1.0 and A == pytest.approx(0.1)


def test_infinite_thresholds_never_freeze():
    s = TransferSchedule(k1=0.3, A_set=0.75, e_threshold=(math.inf, math.inf))
    A = 0.0
    for t in np.linspace(0, 5, 51):
        A = schedule_amplitude(t, (1e9, 1e9), s, A)
        assert A == min(0.3 * t, 0.75)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(st.floats(0, 1), st.floats(0, 1)), min_size=1, max_size=60),
       st.floats(0.01, 2.0), st.floats(0.0, 3.0))
def test_schedule_invariants(errs, k1, a_set):
    s = TransferSchedule(k1=k1, A_set=a_set)
    A = w = 0.0
    prev = (0.0, 0.0)
    for i, e in enumerate(errs):
        t = 0.02 * i
        A = schedule_amplitude(t, e, s, A)
        w = schedule_weight(t, e, s, w)
        assert 0.0 <= A <= a_set and 0.0 <= w <= 1.0
        assert A >= prev[0] and w >= prev[1]
        prev = (A, w)


def test_for_amplitude_ramp_time():
    s = TransferSchedule.for_amplitude(0.6, ramp_time=3.0)
    assert s.k1 == pytest.approx(0.2)
    assert schedule_amplitude(3.0, (0, 0), s, 0.0) == 0.6


def test_error_window_running_mean():
    w = ErrorWindow(3)
    assert w.value == (0.0, 0.0)
    for e, de in [(1, -2), (-3, 4), (5, 6), (7, 8)]:
        w.push(e, de)
    assert w.value == pytest.approx((5.0, 6.0))


def test_identity_perturbation_direct_equals_nominal_rollout():
    cfg = EnvConfig(max_steps=60)
    theta = default_theta("Sine")
    res = evaluate_transfer(None, theta, "Sine", DynamicsPerturbation(), False, seed=4, env_cfg=cfg)
    env = BipedEnv(cfg)
    ctrl = BaseController(make_gait_spec(env, GaitKind.SINE), theta, env.pitch_ref, cfg.k_a, cfg.control_dt)
    ref = run_episode(env, None, ctrl, theta, "eval", 1.0, seed=4)
    assert res.ret == ref.ret and res.steps == ref.steps
    assert res.distance == abs(ref.distance)


def test_progressive_traces_follow_schedule():
    cfg = EnvConfig(max_steps=150)
    theta = default_theta("Rose")
    res = evaluate_transfer(None, theta, "Rose", DynamicsPerturbation.default_transfer(), True, seed=0, env_cfg=cfg,
                            schedule=TransferSchedule(k1=0.01, k2=0.5, A_set=0.02))
    assert len(res.amplitudes) == res.steps
    assert res.amplitudes[0] == 0.0 and res.weights[0] == 0.0
    assert np.all(np.diff(res.weights) >= 0) and max(res.weights) <= 1.0
    assert max(res.amplitudes) <= 0.02


def test_write_table(tmp_path):
    p = tmp_path / "t.csv"
    write_table([TableRow("TD3+CMAES", "Rose", 1.0, 0.5, 2.0, 0.75, 5)], p)
    lines = p.read_text().splitlines()
    assert lines[0].startswith("method,gait,direct_return")
    assert lines[1] == "TD3+CMAES,Rose,1.0,0.5,2.0,0.75,5"
