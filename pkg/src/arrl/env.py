"""Bipedal-mode MDP: reset/step over the planar simulator."""

from __future__ import annotations

import collections
import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from arrl.errors import NonFiniteAction, SteppedAfterDone
from arrl.kinematics import FRONT_CHANNELS, LegGeometry, TransitionPlan, transition_sequence
from arrl.physics import BodyState, ContactModel, MassModel, PlanarBiped

STATE_DIM = 14
ACTION_DIM = 8
LIVING_BONUS = 0.5
FRONT_PENALTY = 0.25
LIMIT_COST = 0.1


class DynamicsPerturbation(BaseModel):
    """Dynamics changes applied on top of the nominal model."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    mass_scale: float = Field(1.0, gt=0)
    friction_scale: float = Field(1.0, gt=0)
    ground_stiffness_scale: float = Field(1.0, gt=0)
    actuation_latency: int = Field(0, ge=0)
    observation_noise_std: float | list[float] = 0.0

    @classmethod
    def default_transfer(cls) -> "DynamicsPerturbation":
        return cls(mass_scale=1.2, friction_scale=0.7, ground_stiffness_scale=0.5,
                   actuation_latency=1, observation_noise_std=0.01)

    def is_identity(self) -> bool:
        noise = np.asarray(self.observation_noise_std, dtype=float)
        return (self.mass_scale == 1.0 and self.friction_scale == 1.0
                and self.ground_stiffness_scale == 1.0 and self.actuation_latency == 0
                and not np.any(noise))


class EnvConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    control_dt: float = Field(0.02, gt=0)
    physics_substeps: int = Field(10, ge=1)
    k_a: float = Field(0.05, gt=0)
    max_steps: int = Field(1000, ge=1)
    gravity: float = 9.81
    torso_mass: float = Field(6.0, gt=0)
    thigh_mass: float = Field(0.6, gt=0)
    shank_mass: float = Field(0.2, gt=0)
    front_limb_mass: float = Field(0.5, gt=0)
    torso_inertia: float = Field(0.08, gt=0)
    ground_stiffness: float = Field(1.0e4, gt=0)
    ground_damping: float = Field(100.0, ge=0)
    tangential_stiffness: float = Field(1.0e4, gt=0)
    tangential_damping: float = Field(100.0, ge=0)
    friction: float = Field(0.8, gt=0)
    servo_kp: float = Field(400.0, gt=0)
    servo_kd: float = Field(40.0, ge=0)
    pitch_ref: float | None = None
    e_pitch_limit: float = Field(0.65, gt=0)
    init_jitter: float = Field(0.02, ge=0)
    front_rest: float = 1.27
    stand_knee: float | None = None
    geometry: LegGeometry = Field(default_factory=LegGeometry)
    perturbation: DynamicsPerturbation | None = None

    def transition_plan(self) -> TransitionPlan:
        return TransitionPlan(stand_knee=self.stand_knee, front_rest=self.front_rest)


@dataclass
class RobotState:
    roll: float
    pitch: float
    yaw: float
    ang_vel: np.ndarray
    joint_angles: np.ndarray

    def as_array(self) -> np.ndarray:
        return np.concatenate(([self.roll, self.pitch, self.yaw], self.ang_vel, self.joint_angles))

    @classmethod
    def from_array(cls, x) -> "RobotState":
        x = np.asarray(x, dtype=float)
        return cls(float(x[0]), float(x[1]), float(x[2]), x[3:6].copy(), x[6:14].copy())


@dataclass
class StepResult:
    next_state: RobotState
    reward: float
    done: bool
    info: dict = field(default_factory=dict)


def compose_reward(height: float, front_penalty: float, distance: float, cost_l: float) -> float:
    """Per-step reward: height, front-limb effort, progress, limit cost, living bonus."""
    return height - front_penalty + distance - cost_l + LIVING_BONUS


def episode_score(rewards) -> float:
    """Undiscounted return of one episode."""
    return float(math.fsum(rewards))


class BipedEnv:
    """Single-threaded environment instance."""

    def __init__(self, cfg: EnvConfig | None = None):
        self.cfg = cfg = cfg or EnvConfig()
        masses = MassModel(cfg.torso_mass, cfg.thigh_mass, cfg.shank_mass,
                           cfg.front_limb_mass, cfg.torso_inertia)
        contact = ContactModel(cfg.ground_stiffness, cfg.ground_damping,
                               cfg.tangential_stiffness, cfg.tangential_damping, cfg.friction)
        self.sim = PlanarBiped(cfg.geometry, masses, contact, cfg.gravity, cfg.servo_kp, cfg.servo_kd)
        stand = transition_sequence(cfg.geometry, 4, cfg.transition_plan())[-1]
        self.stance_joints = stand.joints.copy()
        self.pitch_ref = stand.pitch if cfg.pitch_ref is None else cfg.pitch_ref
        self.q_lo, self.q_hi = cfg.geometry.joint_limits()
        pert = cfg.perturbation or DynamicsPerturbation()
        self.perturbation = pert
        self._scales = (pert.ground_stiffness_scale, pert.friction_scale)
        self._noise = np.broadcast_to(np.asarray(pert.observation_noise_std, dtype=float), (STATE_DIM,)).copy()
        self.body: BodyState | None = None
        self.step_count = 0
        self.done = True
        self._rng = np.random.default_rng(0)
        self._queue: collections.deque = collections.deque()
        self._trajectory: list | None = None

    # ------------------------------------------------------------------ observation

    def reference_state(self) -> np.ndarray:
        """Observation of the unjittered stance at rest."""
        return np.concatenate(([0.0, self.pitch_ref, 0.0], np.zeros(3), self.stance_joints))

    def _true_state(self) -> RobotState:
        s = self.body
        omega = self.sim.angular_velocity(s)
        return RobotState(0.0, s.pitch, 0.0, np.array([0.0, omega, 0.0]), s.q.copy())

    def _observe(self) -> RobotState:
        st = self._true_state()
        if np.any(self._noise):
            x = st.as_array() + self._noise * self._rng.standard_normal(STATE_DIM)
            st = RobotState.from_array(x)
        return st

    def e_pitch(self) -> float:
        return self.pitch_ref - self.body.pitch

    def torso_position(self) -> tuple[float, float]:
        return self.sim.torso_com(self.body)

    # ------------------------------------------------------------------ MDP

    def reset(self, seed: int = 0) -> RobotState:
        self._rng = np.random.default_rng(seed)
        q = self.stance_joints.copy()
        if self.cfg.init_jitter > 0:
            q += self._rng.uniform(-self.cfg.init_jitter, self.cfg.init_jitter, size=q.shape)
            np.clip(q, self.q_lo, self.q_hi, out=q)
        self.body = self.sim.place(q, self.pitch_ref)
        self.target = q.copy()
        self.step_count = 0
        self.done = False
        self.start_x = self.torso_position()[0]
        self._queue = collections.deque(np.zeros(ACTION_DIM) for _ in range(self.perturbation.actuation_latency))
        if self._trajectory is not None:
            self._trajectory = []
        return self._observe()

    def set_state(self, body: BodyState, step_count: int = 0) -> None:
        """Install an explicit simulator state (testing and diagnostics)."""
        self.body = body.copy()
        self.target = body.q.copy()
        self.step_count = step_count
        self.done = False
        self.start_x = self.torso_position()[0]

    def is_terminal_pitch(self, e_pitch: float) -> bool:
        return abs(e_pitch) > self.cfg.e_pitch_limit

    def step(self, action) -> StepResult:
        if self.done:
            raise SteppedAfterDone("reset() before stepping a finished episode")
        a = np.asarray(action, dtype=float).reshape(ACTION_DIM)
        if not np.all(np.isfinite(a)):
            raise NonFiniteAction(f"action contains non-finite values: {a}")
        a = np.clip(a, -1.0, 1.0)
        front_penalty = FRONT_PENALTY * float(np.max(np.abs(a[list(FRONT_CHANNELS)])))

        applied = a
        if self._queue:
            self._queue.append(a)
            applied = self._queue.popleft()
        cmd = self.body.q + self.cfg.k_a * applied
        limit_hit = bool(np.any(cmd < self.q_lo) or np.any(cmd > self.q_hi))
        self.target = np.clip(cmd, self.q_lo, self.q_hi)

        x_before = self.torso_position()[0]
        h = self.cfg.control_dt / self.cfg.physics_substeps
        mass_scale = self.perturbation.mass_scale
        for _ in range(self.cfg.physics_substeps):
            self.sim.substep(self.body, self.target, h, self._scales, mass_scale)
        if not (np.all(np.isfinite(self.body.com)) and math.isfinite(self.body.pitch)):
            raise FloatingPointError("simulator state diverged")
        self.step_count += 1

        height_x, height = self.torso_position()
        distance = height_x - x_before
        cost_l = LIMIT_COST if limit_hit else 0.0
        reward = compose_reward(height, front_penalty, distance, cost_l)
        e = self.e_pitch()
        self.done = self.is_terminal_pitch(e) or self.step_count >= self.cfg.max_steps
        obs = self._observe()
        info = {
            "height": height,
            "front_penalty": front_penalty,
            "distance": distance,
            "cost_l": cost_l,
            "living_bonus": LIVING_BONUS,
            "limit_hit": limit_hit,
            "forward_distance": height_x - self.start_x,
            "e_pitch": e,
            "pitch_rate": obs.ang_vel[1],
        }
        if self._trajectory is not None:
            self._trajectory.append((self.step_count * self.cfg.control_dt, obs.as_array(), a, reward, self.done))
        return StepResult(obs, reward, self.done, info)

    # ------------------------------------------------------------------ trajectory dump

    def record_trajectory(self, enabled: bool = True) -> None:
        self._trajectory = [] if enabled else None

    def dump_trajectory(self, path: str | Path) -> None:
        """Write the recorded steps as CSV: t, 14 state columns, 8 action columns, reward, done."""
        header = ["t"] + [f"s{i}" for i in range(STATE_DIM)] + [f"a{i}" for i in range(ACTION_DIM)] + ["reward", "done"]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for t, s, a, r, d in self._trajectory or []:
                w.writerow([repr(t), *map(repr, s.tolist()), *map(repr, a.tolist()), repr(r), int(d)])
