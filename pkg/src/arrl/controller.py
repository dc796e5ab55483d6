"""Parametric base policy (front-limb PD balance + open-loop gait) and residual composition."""

from __future__ import annotations

import math

import numpy as np

from arrl.env import ACTION_DIM, RobotState
from arrl.gaits import GaitSpec, Leg, gait_joint_angles
from arrl.kinematics import ABD, FRONT_HIP, HIND_HIP, HIND_KNEE
from arrl.params import ResidualParams


def pd_front(
    state: RobotState,
    pitch_ref: float,
    params: ResidualParams,
    prev_state: RobotState | None = None,
    dt: float = 0.02,
) -> tuple[float, float]:
    """Front hip and abduction increments (rad) from pitch and yaw errors.

    Error rates are backward differences against ``prev_state``; without a
    previous state the rates are taken as zero.
    """
    e_pitch = pitch_ref - state.pitch
    e_yaw = -state.yaw
    if prev_state is None:
        de_pitch = de_yaw = 0.0
    else:
        de_pitch = (e_pitch - (pitch_ref - prev_state.pitch)) / dt
        de_yaw = (e_yaw + prev_state.yaw) / dt
    u_hip = params.Kpp * e_pitch + params.Kdp * de_pitch
    u_abd = params.Kpy * e_yaw + params.Kdy * de_yaw
    return u_hip, u_abd


def base_action(
    state: RobotState,
    t: float,
    spec: GaitSpec,
    params: ResidualParams,
    pitch_ref: float,
    k_a: float = 0.05,
    prev_state: RobotState | None = None,
    dt: float = 0.02,
) -> np.ndarray:
    """8-channel base action in increment units, clamped to [-1, 1]."""
    u_hip, u_abd = pd_front(state, pitch_ref, params, prev_state, dt)
    a = np.empty(ACTION_DIM)
    a[list(ABD)] = u_abd / k_a
    a[list(FRONT_HIP)] = u_hip / k_a
    q = state.joint_angles
    for leg, hi, ki in ((Leg.LEFT, HIND_HIP[0], HIND_KNEE[0]), (Leg.RIGHT, HIND_HIP[1], HIND_KNEE[1])):
        hip, knee = gait_joint_angles(spec, params, t, leg)
        a[hi] = (hip - q[hi]) / k_a
        a[ki] = (knee - q[ki]) / k_a
    return np.clip(a, -1.0, 1.0)


def residual_combine(rl_action, base, base_weight: float = 1.0) -> np.ndarray:
    """``clip(rl + weight * base, -1, 1)``; weight 1 is plain residual RL."""
    if not 0.0 <= base_weight <= 1.0:
        raise ValueError("base_weight must lie in [0, 1]")
    return np.clip(np.asarray(rl_action, dtype=float) + base_weight * np.asarray(base, dtype=float), -1.0, 1.0)


class BaseController:
    """Stateful wrapper that remembers the previous observation for the PD rates."""

    def __init__(self, spec: GaitSpec, params: ResidualParams, pitch_ref: float,
                 k_a: float = 0.05, dt: float = 0.02):
        self.spec = spec
        self.params = params
        self.pitch_ref = pitch_ref
        self.k_a = k_a
        self.dt = dt
        self.prev: RobotState | None = None

    def reset(self) -> None:
        self.prev = None

    def __call__(self, state: RobotState, t: float) -> np.ndarray:
        a = base_action(state, t, self.spec, self.params, self.pitch_ref, self.k_a, self.prev, self.dt)
        self.prev = state
        return a

    @property
    def period(self) -> float:
        return 2.0 * math.pi / self.params.omega
