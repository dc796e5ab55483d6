import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from arrl.controller import BaseController, base_action, pd_front, residual_combine
from arrl.env import ACTION_DIM, BipedEnv, RobotState
from arrl.gaits import GaitKind, GaitSpec, Leg, gait_joint_angles
from arrl.kinematics import HIND_HIP, HIND_KNEE, LegGeometry
from arrl.params import ResidualParams, clip_params, in_bounds, sample_params

GEOM = LegGeometry()
PITCH_REF = BipedEnv().pitch_ref
HIND = list(HIND_HIP) + list(HIND_KNEE)


def state(pitch=PITCH_REF, yaw=0.0, q=None, rng=None):
    q = np.zeros(8) if q is None else q
    return RobotState(0.0, pitch, yaw, np.zeros(3), np.asarray(q, dtype=float))


def P(**kw):
    base = dict(A_over_omega=1.0, omega=5.0, Kpp=0.0, Kdp=0.0, Kpy=0.0, Kdy=0.0, delta_x=0.02)
    base.update(kw)
    return ResidualParams(**base)


def test_pd_zero_error():
    assert pd_front(state(), PITCH_REF, P(Kpp=0.1, Kdp=0.1, Kpy=0.1, Kdy=0.1)) == (0.0, 0.0)


def test_pd_worked_example():
    u_hip, _ = pd_front(state(pitch=PITCH_REF - 0.2), PITCH_REF, P(Kpp=0.05))
    assert u_hip == pytest.approx(0.01, abs=1e-15)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(0, 0.1), min_size=4, max_size=4), st.floats(-0.5, 0.5), st.floats(-0.5, 0.5),
       st.floats(-0.5, 0.5), st.floats(-0.5, 0.5))
def test_pd_matches_formula_oracle(gains, p0, p1, y0, y1):
    kpp, kdp, kpy, kdy = gains
    dt = 0.02
    prev, cur = state(pitch=PITCH_REF + p0, yaw=y0), state(pitch=PITCH_REF + p1, yaw=y1)
    u_hip, u_abd = pd_front(cur, PITCH_REF, P(Kpp=kpp, Kdp=kdp, Kpy=kpy, Kdy=kdy), prev, dt)
    e, e_prev = -p1, -p0
    ey, ey_prev = -y1, -y0
    assert u_hip == pytest.approx(kpp * e + kdp * (e - e_prev) / dt, abs=1e-12)
    assert u_abd == pytest.approx(kpy * ey + kdy * (ey - ey_prev) / dt, abs=1e-12)


def test_pd_linear_in_errors():
    # exact powers of two keep the doubling free of rounding
    p = P(Kpp=0.0625, Kdp=0.03125, Kpy=0.0625, Kdy=0.125)
    prev, cur = state(pitch=0.5, yaw=0.25), state(pitch=0.25, yaw=0.125)
    prev2, cur2 = state(pitch=0.25, yaw=0.5), state(pitch=-0.25, yaw=0.25)
    a = pd_front(cur, 0.75, p, prev, 0.03125)
    b = pd_front(cur2, 0.75, p, prev2, 0.03125)
    assert b == (2 * a[0], 2 * a[1])


def test_base_action_zero_gains_line_t0():
    spec = GaitSpec.from_stance(GaitKind.LINE, GEOM)
    p = P()
    q = BipedEnv().stance_joints.copy()
    for leg, hi, ki in ((Leg.LEFT, HIND_HIP[0], HIND_KNEE[0]), (Leg.RIGHT, HIND_HIP[1], HIND_KNEE[1])):
        q[hi], q[ki] = gait_joint_angles(spec, p, 0.0, leg)
    a = base_action(state(q=q), 0.0, spec, p, PITCH_REF)
    assert np.all(a[:4] == 0.0)
    assert np.allclose(a[HIND], 0.0, atol=1e-12)


def test_base_action_bounded_sweep():
    rng = np.random.default_rng(0)
    for i in range(10_000 // 4):
        kind = list(GaitKind)[i % 4]
        spec = GaitSpec.from_stance(kind, GEOM)
        p = sample_params(rng, kind.value)
        s = state(pitch=rng.uniform(0, math.pi), yaw=rng.uniform(-1, 1), q=rng.uniform(-2, 2, 8))
        a = base_action(s, rng.uniform(0, 10), spec, p, PITCH_REF, prev_state=state(pitch=rng.uniform(0, 3)))
        assert a.shape == (ACTION_DIM,) and np.all(np.abs(a) <= 1.0)


def test_base_action_hind_channels_periodic():
    spec = GaitSpec.from_stance(GaitKind.ROSE, GEOM)
    p = P(A_over_omega=2.0)
    s = state(q=BipedEnv().stance_joints)
    T = 2 * math.pi / p.omega
    for t in np.linspace(0, T, 9):
        a, b = base_action(s, t, spec, p, PITCH_REF), base_action(s, t + T, spec, p, PITCH_REF)
        assert np.allclose(a[HIND], b[HIND], atol=1e-9)


def test_hind_channels_open_loop():
    """Hind channels ignore every state field except the hind joint readings they increment from."""
    spec = GaitSpec.from_stance(GaitKind.SINE, GEOM)
    p = P(Kpp=0.1, Kdp=0.05, Kpy=0.1, Kdy=0.05)
    rng = np.random.default_rng(3)
    q = BipedEnv().stance_joints.copy()
    for _ in range(50):
        q1, q2 = rng.uniform(-1, 1, 8), rng.uniform(-1, 1, 8)
        q1[HIND] = q2[HIND] = q[HIND]
        s1 = RobotState(rng.normal(), rng.normal(), rng.normal(), rng.normal(size=3), q1)
        s2 = RobotState(rng.normal(), rng.normal(), rng.normal(), rng.normal(size=3), q2)
        t = rng.uniform(0, 5)
        assert np.array_equal(base_action(s1, t, spec, p, PITCH_REF)[HIND], base_action(s2, t, spec, p, PITCH_REF)[HIND])


def test_residual_combine_examples():
    a = np.linspace(-0.9, 0.9, 8)
    for w in (0.0, 0.3, 1.0):
        assert np.array_equal(residual_combine(a, np.zeros(8), w), a)
    b = np.linspace(-0.5, 0.5, 8)
    assert np.array_equal(residual_combine(np.zeros(8), b, 1.0), b)
    assert residual_combine([0.9], [0.9], 1.0)[0] == 1.0
    with pytest.raises(ValueError):
        residual_combine(a, a, 1.5)


@settings(max_examples=100, deadline=None)
@given(st.sampled_from([k.value for k in GaitKind]), st.lists(st.floats(-100, 100), min_size=7, max_size=7))
def test_clipped_params_satisfy_box(kind, raw):
    assert in_bounds(clip_params(np.array(raw), kind), kind)


def test_controller_tracks_previous_state():
    spec = GaitSpec.from_stance(GaitKind.ROSE, GEOM)
    c = BaseController(spec, P(Kdp=0.1), PITCH_REF)
    a0 = c(state(pitch=PITCH_REF - 0.01), 0.0)
    a1 = c(state(pitch=PITCH_REF - 0.02), 0.02)
    assert a0[2] == 0.0 and a1[2] > 0.0  # derivative term only kicks in once a previous state exists
    c.reset()
    assert c.prev is None
    assert c.period == pytest.approx(2 * math.pi / 5.0)
