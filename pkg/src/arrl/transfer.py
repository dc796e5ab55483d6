"""Deploying trained policies on perturbed dynamics, directly or through a progressive ramp."""

from __future__ import annotations

import collections
import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from arrl.controller import BaseController, residual_combine
from arrl.env import ACTION_DIM, BipedEnv, DynamicsPerturbation, EnvConfig, episode_score
from arrl.gaits import GaitKind, GaitSpec
from arrl.params import ResidualParams


class TransferSchedule(BaseModel):
    """Ramp rates, caps and error gates for the progressive deployment."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    k1: float = Field(..., gt=0)  # amplitude units per second
    k2: float = Field(0.5, gt=0)  # base weight per second
    A_set: float = Field(..., ge=0)
    e_threshold: tuple[float, float] = (0.15, 0.35)  # |e_pitch| rad, |de_pitch/dt| rad/s
    window: int = Field(25, ge=1)

    @classmethod
    def for_amplitude(cls, A_set: float, ramp_time: float = 2.0, **kw) -> "TransferSchedule":
        """Schedule whose amplitude ramp reaches ``A_set`` after ``ramp_time`` seconds."""
        return cls(k1=max(A_set, 1e-12) / ramp_time, A_set=A_set, **kw)


def _below(errs, sched: TransferSchedule) -> bool:
    return errs[0] < sched.e_threshold[0] and errs[1] < sched.e_threshold[1]


def schedule_amplitude(t: float, errs, sched: TransferSchedule, prev_A: float) -> float:
    """Three-branch amplitude rule.

    ``k1*t`` while the ramp is below ``A_set`` and both errors are under their
    thresholds; the previous value while the ramp is below ``A_set`` but an
    error is at or above threshold; ``A_set`` otherwise.  After a freeze the
    ramp resumes at ``k1*t`` once the errors recover.
    """
    ramp = sched.k1 * t
    if ramp < sched.A_set:
        return ramp if _below(errs, sched) else prev_A
    return sched.A_set


def schedule_weight(t: float, errs, sched: TransferSchedule, prev_w: float) -> float:
    """Base-controller weight: ``k2*t`` ramp to 1 with the same freeze rule."""
    ramp = sched.k2 * t
    if ramp < 1.0:
        return ramp if _below(errs, sched) else prev_w
    return 1.0


class ErrorWindow:
    """Running averages of |e_pitch| and |de_pitch/dt| over the last ``n`` steps."""

    def __init__(self, n: int):
        self.e = collections.deque(maxlen=n)
        self.de = collections.deque(maxlen=n)

    def push(self, e_pitch: float, de_pitch: float) -> tuple[float, float]:
        self.e.append(abs(e_pitch))
        self.de.append(abs(de_pitch))
        return self.value

    @property
    def value(self) -> tuple[float, float]:
        if not self.e:
            return (0.0, 0.0)
        return (sum(self.e) / len(self.e), sum(self.de) / len(self.de))


@dataclass
class TransferResult:
    ret: float
    distance: float
    steps: int
    amplitudes: list[float]
    weights: list[float]


def evaluate_transfer(agent, theta_prime: ResidualParams | None, gait: GaitKind | str | None,
                      perturbation: DynamicsPerturbation | None, use_schedule: bool,
                      seed: int = 0, env_cfg: EnvConfig | None = None, base_weight: float = 1.0,
                      schedule: TransferSchedule | None = None) -> TransferResult:
    """One deterministic-policy episode on the perturbed environment.

    ``agent=None`` runs the base controller alone; ``base_weight=0`` runs the
    policy alone.  With ``use_schedule`` the gait amplitude and the base weight
    follow the progressive ramps; the other base parameters keep their
    trained values.  The reported distance is the absolute forward
    displacement of the torso at termination.
    """
    env_cfg = (env_cfg or EnvConfig()).model_copy(update={"perturbation": perturbation})
    env = BipedEnv(env_cfg)
    dt = env_cfg.control_dt
    controller = None
    spec = None
    if theta_prime is not None and base_weight > 0.0:
        spec = GaitSpec.from_stance(gait, env_cfg.geometry, env_cfg.transition_plan())
        controller = BaseController(spec, theta_prime, env.pitch_ref, env_cfg.k_a, dt)
    if use_schedule and controller is not None and schedule is None:
        schedule = TransferSchedule.for_amplitude(spec.amplitude(theta_prime))
    window = ErrorWindow(schedule.window if schedule else 25)

    obs = env.reset(seed)
    rewards, amps, weights = [], [], []
    t = 0.0
    A = w = 0.0
    done = False
    info: dict = {"forward_distance": 0.0}
    while not done:
        a_rl = agent.select_action(obs.as_array(), explore=False) if agent is not None else np.zeros(ACTION_DIM)
        if controller is None:
            a = np.clip(a_rl, -1.0, 1.0)
        elif use_schedule:
            errs = window.value
            A = schedule_amplitude(t, errs, schedule, A)
            w = schedule_weight(t, errs, schedule, w) * base_weight
            unit = spec.amplitude(theta_prime.replace(A_over_omega=1.0))
            controller.params = theta_prime.replace(A_over_omega=A / unit if unit > 0 else 0.0)
            a = residual_combine(a_rl, controller(obs, t), w)
            amps.append(A)
            weights.append(w)
        else:
            a = residual_combine(a_rl, controller(obs, t), base_weight)
        res = env.step(a)
        info = res.info
        window.push(info["e_pitch"], info["pitch_rate"])
        rewards.append(res.reward)
        obs, done = res.next_state, res.done
        t += dt
    return TransferResult(episode_score(rewards), abs(float(info["forward_distance"])), len(rewards), amps, weights)


# ---------------------------------------------------------------------------- results table

TABLE_HEADER = ["method", "gait", "direct_return", "direct_distance", "progressive_return", "progressive_distance", "n_seeds"]


@dataclass
class TableRow:
    method: str
    gait: str
    direct_return: float
    direct_distance: float
    progressive_return: float
    progressive_distance: float
    n_seeds: int


def write_table(rows: list[TableRow], path: str | Path) -> None:
    """Results CSV: rows are method x gait (vanilla RL rows use gait ``all``)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TABLE_HEADER)
        for r in rows:
            w.writerow([r.method, r.gait, repr(r.direct_return), repr(r.direct_distance),
                        repr(r.progressive_return), repr(r.progressive_distance), r.n_seeds])


def median(values) -> float:
    return float(np.median(values)) if len(values) else math.nan
