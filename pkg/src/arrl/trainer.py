"""Interleaved training loop: RL updates every step, parameter search every H episodes."""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from arrl.agents import RLConfig, ReplayBuffer, load_agent, make_agent
from arrl.controller import BaseController, residual_combine
from arrl.env import ACTION_DIM, STATE_DIM, BipedEnv, EnvConfig, RobotState, episode_score
from arrl.gaits import GaitKind, GaitSpec
from arrl.optim import OptBounds, denormalize, make_optimizer, normalize
from arrl.params import PARAM_NAMES, ResidualParams, param_bounds

AgentKind = Literal["SAC", "TD3"]
OptimizerKind = Literal["CMAES", "TBPSA", "BO"]


class TrainerConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    t_max: int = Field(300_000, ge=1)
    H: int = Field(5, ge=1)
    agent: AgentKind | None = "TD3"
    optimizer: OptimizerKind | None = "CMAES"
    gait: GaitKind = GaitKind.ROSE
    seed: int = 0
    eval_interval: int = Field(50_000, ge=1)
    # weight on the base controller; None means 1 with an optimizer, 0 without
    base_weight: float | None = Field(None, ge=0.0, le=1.0)
    # fixed base parameters used when no optimizer runs (unit-box centre if None)
    theta_prime: dict[str, float] | None = None
    sigma0: float = Field(0.3, gt=0)
    popsize: int | None = None

    @model_validator(mode="after")
    def _not_both_none(self) -> "TrainerConfig":
        if self.agent is None and self.optimizer is None:
            raise ValueError("agent and optimizer cannot both be None")
        return self

    @property
    def effective_base_weight(self) -> float:
        if self.base_weight is not None:
            return self.base_weight
        return 1.0 if self.optimizer is not None else 0.0

    @property
    def method_name(self) -> str:
        if self.agent and self.optimizer:
            return f"{self.agent}+{self.optimizer}"
        return f"Vanilla {self.agent or self.optimizer}"


def config_hash(*models) -> str:
    """Short stable hash of one or more pydantic configs."""
    blob = json.dumps([m.model_dump(mode="json") if m is not None else None for m in models], sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:12]


def theta_hash(theta: ResidualParams) -> str:
    return hashlib.sha1(theta.to_array().tobytes()).hexdigest()


@dataclass
class EpisodeRecord:
    index: int
    ret: float
    steps: int
    env_step: int  # cumulative env steps at episode end
    theta_prime: np.ndarray
    block: int
    theta_hash: str
    distance: float = 0.0


@dataclass
class RunRecord:
    config_hash: str
    seed: int
    method: str = ""
    gait: str = ""
    episodes: list[EpisodeRecord] = field(default_factory=list)
    tells: int = 0
    best_theta: np.ndarray | None = None

    @property
    def returns(self) -> np.ndarray:
        return np.array([e.ret for e in self.episodes])

    @property
    def env_steps(self) -> np.ndarray:
        return np.array([e.env_step for e in self.episodes], dtype=int)

    @property
    def run_id(self) -> str:
        return f"{self.config_hash}-s{self.seed}"

    def best_so_far(self) -> tuple[np.ndarray, np.ndarray]:
        return self.env_steps, best_so_far(self.returns)

    @property
    def best_return(self) -> float:
        return float(np.max(self.returns)) if self.episodes else -math.inf

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["run_id", "episode", "env_step", "return", *PARAM_NAMES])
            for e in self.episodes:
                w.writerow([self.run_id, e.index, e.env_step, repr(e.ret), *map(repr, e.theta_prime.tolist())])

    @classmethod
    def read_csv(cls, path: str | Path, seed: int = 0, method: str = "", gait: str = "") -> "RunRecord":
        rec = None
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                if rec is None:
                    rec = cls(row["run_id"].rsplit("-s", 1)[0], seed, method, gait)
                theta = np.array([float(row[n]) for n in PARAM_NAMES])
                rec.episodes.append(EpisodeRecord(int(row["episode"]), float(row["return"]), 0,
                                                  int(row["env_step"]), theta, -1, ""))
        if rec is None:
            rec = cls("", seed, method, gait)
        prev = 0
        for e in rec.episodes:
            e.steps, prev = e.env_step - prev, e.env_step
        return rec


def best_so_far(returns) -> np.ndarray:
    """Running maximum of episode returns."""
    r = np.asarray(returns, dtype=float)
    return np.maximum.accumulate(r) if r.size else r.copy()


# ---------------------------------------------------------------------------- rollouts


@dataclass
class EpisodeResult:
    ret: float
    steps: int
    rewards: list[float]
    transitions: list[tuple]
    distance: float
    terminated: bool


def run_episode(env, agent, controller: BaseController | None, theta_prime: ResidualParams | None,
                mode: Literal["train", "eval"] = "eval", base_weight: float = 1.0, seed: int = 0,
                buffer: ReplayBuffer | None = None, learner=None, random_actions: bool = False,
                rng: np.random.Generator | None = None) -> EpisodeResult:
    """Roll out ``a' = a + w * base(s)`` for one episode.

    The replay buffer receives the RL action ``a`` rather than the executed
    composite, and only pitch failures count as terminal for bootstrapping.
    ``learner`` (if given) is called once after every stored transition.
    """
    if controller is not None:
        controller.reset()
        if theta_prime is not None:
            controller.params = theta_prime
    block_hash = theta_hash(theta_prime) if theta_prime is not None and controller is not None else None
    obs = env.reset(seed)
    s = obs.as_array()
    rewards, transitions = [], []
    t = 0.0
    done = False
    info: dict = {}
    explore = mode == "train"
    while not done:
        if block_hash is not None and theta_hash(controller.params) != block_hash:
            raise RuntimeError("base parameters changed inside an episode")
        if agent is None:
            a_rl = np.zeros(ACTION_DIM)
        elif random_actions:
            a_rl = rng.uniform(-1.0, 1.0, ACTION_DIM)
        else:
            a_rl = agent.select_action(s, explore=explore)
        if controller is not None and base_weight > 0.0:
            a = residual_combine(a_rl, controller(obs, t), base_weight)
        else:
            a = np.clip(a_rl, -1.0, 1.0)
        res = env.step(a)
        t += env.cfg.control_dt
        s_next = res.next_state.as_array()
        rewards.append(res.reward)
        info = res.info
        done = res.done
        terminal = done and env.is_terminal_pitch(info.get("e_pitch", 0.0))
        if buffer is not None:
            buffer.add(s, a_rl, res.reward, s_next, terminal)
            if learner is not None:
                learner()
        elif mode == "train":
            transitions.append((s, a_rl, res.reward, s_next, terminal))
        obs, s = res.next_state, s_next
    return EpisodeResult(episode_score(rewards), len(rewards), rewards, transitions,
                         float(info.get("forward_distance", 0.0)), terminated=bool(terminal))


# ---------------------------------------------------------------------------- stub environment


class QuadraticStubEnv:
    """One-step episodes with return ``-||u - u*||^2``, ``u`` the unit-box image of the base parameters.

    Actions are ignored.  The trainer announces the active parameters through
    :meth:`observe_params`.
    """

    def __init__(self, theta_star: np.ndarray, bounds: OptBounds, cfg: EnvConfig | None = None):
        self.cfg = cfg or EnvConfig()
        self.bounds = bounds
        self.u_star = normalize(theta_star, bounds)
        self.pitch_ref = math.pi / 2
        self._u = np.full(len(PARAM_NAMES), 0.5)
        self._done = True

    def reference_state(self) -> np.ndarray:
        return np.zeros(STATE_DIM)

    def observe_params(self, theta: ResidualParams) -> None:
        self._u = normalize(theta.to_array(), self.bounds)

    def reset(self, seed: int = 0) -> RobotState:
        self._done = False
        return RobotState.from_array(self.reference_state())

    def is_terminal_pitch(self, e_pitch: float) -> bool:
        return False

    def step(self, action):
        from arrl.env import StepResult

        r = -float(np.sum((self._u - self.u_star) ** 2))
        self._done = True
        return StepResult(RobotState.from_array(self.reference_state()), r, True, {"forward_distance": 0.0})


# ---------------------------------------------------------------------------- training


def make_gait_spec(env, gait: GaitKind | str) -> GaitSpec:
    return GaitSpec.from_stance(gait, env.cfg.geometry, env.cfg.transition_plan())


def default_theta(gait: GaitKind | str) -> ResidualParams:
    lo, hi = param_bounds(GaitKind(gait).value)
    return ResidualParams.from_array(0.5 * (lo + hi))


@dataclass
class TrainResult:
    record: RunRecord
    agent: object
    optimizer: object
    theta_final: ResidualParams
    buffer_size: int


def arrl_train(cfg: TrainerConfig, rl_cfg: RLConfig | None = None, env_cfg: EnvConfig | None = None,
               env=None, out_dir: str | Path | None = None, tell_hook=None) -> TrainResult:
    """Run the interleaved loop until ``cfg.t_max`` environment steps.

    Each block asks the optimizer for one parameter vector, runs ``H``
    episodes with it while the agent learns every step, then tells the mean
    block return.  Population optimizers are fed one candidate per block and
    told once their whole population has been scored.
    """
    rl_cfg = rl_cfg or RLConfig()
    env_cfg = env_cfg or EnvConfig()
    env = env if env is not None else BipedEnv(env_cfg)
    chash = config_hash(cfg, rl_cfg, env_cfg)
    record = RunRecord(chash, cfg.seed, cfg.method_name, GaitKind(cfg.gait).value)
    rng = np.random.default_rng(cfg.seed)
    gait = GaitKind(cfg.gait)
    lo, hi = param_bounds(gait.value)
    bounds = OptBounds(lo, hi)
    unit = OptBounds.unit(len(lo))

    agent = buffer = None
    if cfg.agent is not None:
        agent = make_agent(cfg.agent, STATE_DIM, ACTION_DIM, rl_cfg, seed=cfg.seed)
        agent.set_obs_shift(env.reference_state())
        buffer = ReplayBuffer(min(rl_cfg.buffer_capacity, cfg.t_max), STATE_DIM, ACTION_DIM)

    optimizer = None
    if cfg.optimizer is not None:
        kw = {"sigma0": cfg.sigma0, "popsize": cfg.popsize} if cfg.optimizer in ("CMAES", "TBPSA") else {}
        optimizer = make_optimizer(cfg.optimizer, unit, seed=cfg.seed, maximize=True, **kw)
    fixed_theta = (ResidualParams.from_dict(cfg.theta_prime) if cfg.theta_prime else default_theta(gait))

    weight = cfg.effective_base_weight
    controller = None
    if weight > 0.0:
        controller = BaseController(make_gait_spec(env, gait), fixed_theta, env.pitch_ref,
                                    env_cfg.k_a, env_cfg.control_dt)

    total = 0
    steps_seen = 0

    def learner():
        nonlocal steps_seen
        steps_seen += 1
        if steps_seen < rl_cfg.warmup_steps or len(buffer) < rl_cfg.batch_size:
            return
        for _ in range(rl_cfg.updates_per_step):
            agent.update(buffer.sample(rl_cfg.batch_size, rng))

    queue: list[np.ndarray] = []
    scores: list[float] = []
    block = 0
    episode = 0
    next_ckpt = cfg.eval_interval
    out = Path(out_dir) if out_dir is not None else None
    theta = fixed_theta
    while total < cfg.t_max:
        if optimizer is not None:
            if not queue:
                queue = list(optimizer.ask())
            theta = ResidualParams.from_array(denormalize(queue.pop(0), bounds))
        if hasattr(env, "observe_params"):
            env.observe_params(theta)
        block_returns = []
        for _ in range(cfg.H):
            if total >= cfg.t_max:
                break
            warm = agent is not None and total < rl_cfg.warmup_steps
            res = run_episode(env, agent, controller, theta, "train", weight,
                              seed=cfg.seed * 1_000_003 + episode, buffer=buffer,
                              learner=learner if agent is not None else None,
                              random_actions=warm, rng=rng)
            total += res.steps
            record.episodes.append(EpisodeRecord(episode, res.ret, res.steps, total, theta.to_array(),
                                                 block, theta_hash(theta), res.distance))
            block_returns.append(res.ret)
            episode += 1
        if optimizer is not None and len(block_returns) == cfg.H:
            scores.append(float(np.mean(block_returns)))
            if not queue:
                optimizer.tell(scores)
                record.tells += len(scores)
                if tell_hook is not None:
                    tell_hook(episode, len(scores))
                scores = []
        block += 1
        if out is not None and total >= next_ckpt:
            _checkpoint(out, record, agent, optimizer, bounds, fixed_theta, total, weight)
            next_ckpt += cfg.eval_interval

    record.best_theta = _best_theta(optimizer, bounds, fixed_theta).to_array()
    if out is not None:
        _checkpoint(out, record, agent, optimizer, bounds, fixed_theta, total, weight)
    return TrainResult(record, agent, optimizer, _best_theta(optimizer, bounds, fixed_theta),
                       len(buffer) if buffer is not None else 0)


def _best_theta(optimizer, bounds: OptBounds, fallback: ResidualParams) -> ResidualParams:
    """Highest-scoring told parameter vector, else the fixed one."""
    if optimizer is None or optimizer.best_x is None:
        return fallback
    return ResidualParams.from_array(denormalize(optimizer.best_x, bounds))


def _checkpoint(out: Path, record: RunRecord, agent, optimizer, bounds, fallback, total: int,
                weight: float) -> None:
    ck = out / "checkpoint"
    ck.mkdir(parents=True, exist_ok=True)
    theta = _best_theta(optimizer, bounds, fallback)
    extra = {"theta_prime": theta.to_dict(), "method": record.method, "gait": record.gait,
             "config_hash": record.config_hash, "seed": record.seed, "base_weight": weight}
    if agent is not None:
        agent.save(ck / "agent", step_count=total, extra=extra)
    if optimizer is not None:
        (ck / "optimizer.json").write_text(json.dumps(optimizer.state_dict()))
    (ck / "checkpoint.json").write_text(json.dumps({**extra, "step_count": total,
                                                    "has_agent": agent is not None}, indent=2, sort_keys=True))


def load_checkpoint(ck_dir: str | Path):
    """Return ``(agent or None, theta_prime, manifest)`` from a checkpoint directory."""
    ck = Path(ck_dir)
    manifest = json.loads((ck / "checkpoint.json").read_text())
    agent = load_agent(ck / "agent")[0] if manifest["has_agent"] else None
    return agent, ResidualParams.from_dict(manifest["theta_prime"]), manifest
