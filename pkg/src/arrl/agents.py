"""Off-policy actor-critic agents (TD3, SAC) and their replay buffer."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from arrl.nn import MLP, Adam

LOG_STD_MIN, LOG_STD_MAX = -20.0, 2.0
_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


class RLConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    gamma: float = Field(0.99, ge=0.0, lt=1.0)
    batch_size: int = Field(256, gt=0)
    buffer_capacity: int = Field(1_000_000, gt=0)
    actor_hidden: tuple[int, ...] = (256, 256)
    critic_hidden: tuple[int, ...] = (256, 256)
    activation: str = "relu"
    actor_lr: float = Field(3e-4, ge=0)
    critic_lr: float = Field(3e-4, ge=0)
    tau: float = Field(0.005, gt=0.0, le=1.0)
    policy_delay: int = Field(2, ge=1)
    target_noise_std: float = Field(0.2, ge=0)
    target_noise_clip: float = Field(0.5, ge=0)
    exploration_noise_std: float = Field(0.1, ge=0)
    target_entropy: float | None = None  # default: -action_dim
    init_temperature: float = Field(1.0, ge=0)
    temperature_lr: float = Field(3e-4, ge=0)
    autotune_temperature: bool = True
    warmup_steps: int = Field(1000, ge=0)
    updates_per_step: int = Field(1, ge=0)


@dataclass
class Transition:
    s: np.ndarray
    a: np.ndarray
    r: float
    s_next: np.ndarray
    done: bool


@dataclass
class Batch:
    s: np.ndarray
    a: np.ndarray
    r: np.ndarray
    s_next: np.ndarray
    done: np.ndarray

    def __len__(self) -> int:
        return len(self.r)


class ReplayBuffer:
    """FIFO ring buffer with uniform sampling."""

    def __init__(self, capacity: int, state_dim: int, action_dim: int):
        self.capacity = int(capacity)
        self.s = np.zeros((capacity, state_dim))
        self.a = np.zeros((capacity, action_dim))
        self.r = np.zeros(capacity)
        self.s_next = np.zeros((capacity, state_dim))
        self.done = np.zeros(capacity)
        self._next = 0
        self._size = 0
        self.total_added = 0

    def __len__(self) -> int:
        return self._size

    def add(self, s, a, r, s_next, done) -> None:
        i = self._next
        self.s[i] = s
        self.a[i] = a
        self.r[i] = r
        self.s_next[i] = s_next
        self.done[i] = float(done)
        self._next = (i + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)
        self.total_added += 1

    def add_transition(self, tr: Transition) -> None:
        self.add(tr.s, tr.a, tr.r, tr.s_next, tr.done)

    def ordered_indices(self) -> np.ndarray:
        """Storage indices from oldest to newest."""
        start = self._next if self._size == self.capacity else 0
        return (start + np.arange(self._size)) % self.capacity

    def sample(self, batch_size: int, rng: np.random.Generator) -> Batch:
        if self._size < batch_size:
            raise ValueError(f"buffer holds {self._size} < batch_size {batch_size}")
        idx = rng.integers(0, self._size, size=batch_size)
        return Batch(self.s[idx], self.a[idx], self.r[idx], self.s_next[idx], self.done[idx])


def q_target(
    batch: Batch,
    critic_targets: Sequence[Callable[[np.ndarray, np.ndarray], np.ndarray]],
    next_action: Callable[[np.ndarray], tuple[np.ndarray, np.ndarray | None]],
    gamma: float,
    temperature: float = 0.0,
) -> np.ndarray:
    """Clipped double-Q Bellman target.

    ``next_action(s_next)`` returns the bootstrap action and, for entropy
    regularised agents, its log-probability (``None`` otherwise).
    ``y = r + gamma * (1 - done) * (min_i Q_i(s', a') - temperature * logp)``.
    """
    a_next, logp = next_action(batch.s_next)
    q_next = np.min(np.stack([np.ravel(q(batch.s_next, a_next)) for q in critic_targets]), axis=0)
    if logp is not None and temperature != 0.0:
        q_next = q_next - temperature * logp
    return batch.r + gamma * (1.0 - batch.done) * q_next


def _critic_fn(net: MLP):
    return lambda s, a: net(np.concatenate([s, a], axis=1))


def _params_hash(nets) -> str:
    h = hashlib.sha256()
    for net in nets:
        for p in net.params:
            h.update(np.ascontiguousarray(p).tobytes())
    return h.hexdigest()


class _ActorCritic:
    kind = "base"

    def __init__(self, state_dim: int, action_dim: int, cfg: RLConfig, seed: int = 0):
        self.cfg = cfg
        self.state_dim, self.action_dim = state_dim, action_dim
        self.rng = np.random.default_rng(seed)
        self.seed = seed
        crit = (state_dim + action_dim, *cfg.critic_hidden, 1)
        self.q1 = MLP(crit, cfg.activation, rng=self.rng)
        self.q2 = MLP(crit, cfg.activation, rng=self.rng)
        self.q1_t, self.q2_t = self.q1.copy(), self.q2.copy()
        self.q_opt = Adam(self.q1.params + self.q2.params, lr=cfg.critic_lr)
        self.updates = 0
        # observations are centred before entering any network
        self.obs_shift = np.zeros(state_dim)

    def set_obs_shift(self, shift) -> None:
        self.obs_shift = np.asarray(shift, dtype=float).copy()

    def _centre(self, batch: Batch) -> Batch:
        return Batch(batch.s - self.obs_shift, batch.a, batch.r, batch.s_next - self.obs_shift, batch.done)

    # critic regression shared by both agents
    def _critic_step(self, batch: Batch, y: np.ndarray) -> float:
        sa = np.concatenate([batch.s, batch.a], axis=1)
        n = len(batch)
        q1, t1 = self.q1.forward(sa)
        q2, t2 = self.q2.forward(sa)
        d1 = q1[:, 0] - y
        d2 = q2[:, 0] - y
        g1, _ = self.q1.backward(t1, (2.0 / n) * d1[:, None])
        g2, _ = self.q2.backward(t2, (2.0 / n) * d2[:, None])
        self.q_opt.step(g1 + g2)
        return float(np.mean(d1 * d1) + np.mean(d2 * d2))

    def _soft_update_critics(self) -> None:
        self.q1_t.soft_update(self.q1, self.cfg.tau)
        self.q2_t.soft_update(self.q2, self.cfg.tau)

    def nets(self) -> dict[str, MLP]:
        raise NotImplementedError

    def params_hash(self, which: str | None = None) -> str:
        nets = self.nets()
        return _params_hash([nets[which]] if which else list(nets.values()))

    # -- checkpoints: flat named tensors + JSON manifest

    def save(self, directory: str | Path, step_count: int = 0, extra: dict | None = None) -> None:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        tensors = {}
        for name, net in self.nets().items():
            tensors.update(net.named_tensors(name))
        tensors.update(self._extra_tensors())
        tensors["obs_shift"] = self.obs_shift
        np.savez(d / "weights.npz", **tensors)
        manifest = {
            "agent": self.kind,
            "state_dim": self.state_dim,
            "action_dim": self.action_dim,
            "architecture": {name: net.spec() for name, net in self.nets().items()},
            "rl_config": self.cfg.model_dump(mode="json"),
            "seed": self.seed,
            "step_count": step_count,
            "updates": self.updates,
        }
        manifest.update(extra or {})
        (d / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))

    def _extra_tensors(self) -> dict:
        return {}

    def _load_extra(self, tensors) -> None:
        pass

    def load_weights(self, directory: str | Path) -> None:
        with np.load(Path(directory) / "weights.npz") as z:
            for name, net in self.nets().items():
                net.load_params([z[f"{name}.l{i // 2}.{'weight' if i % 2 == 0 else 'bias'}"]
                                 for i in range(len(net.params))])
            self._load_extra(z)
            if "obs_shift" in z:
                self.obs_shift = z["obs_shift"].copy()


class TD3(_ActorCritic):
    kind = "TD3"

    def __init__(self, state_dim: int, action_dim: int, cfg: RLConfig | None = None, seed: int = 0):
        super().__init__(state_dim, action_dim, cfg or RLConfig(), seed)
        cfg = self.cfg
        self.actor = MLP((state_dim, *cfg.actor_hidden, action_dim), cfg.activation, "tanh", rng=self.rng)
        self.actor_t = self.actor.copy()
        self.pi_opt = Adam(self.actor.params, lr=cfg.actor_lr)

    def nets(self) -> dict[str, MLP]:
        return {"actor": self.actor, "q1": self.q1, "q2": self.q2,
                "actor_target": self.actor_t, "q1_target": self.q1_t, "q2_target": self.q2_t}

    def _target_action(self, s_next: np.ndarray):
        cfg = self.cfg
        a = self.actor_t(s_next)
        if cfg.target_noise_std > 0:
            noise = np.clip(cfg.target_noise_std * self.rng.standard_normal(a.shape),
                            -cfg.target_noise_clip, cfg.target_noise_clip)
            a = np.clip(a + noise, -1.0, 1.0)
        return a, None

    def target(self, batch: Batch) -> np.ndarray:
        return q_target(batch, [_critic_fn(self.q1_t), _critic_fn(self.q2_t)],
                        self._target_action, self.cfg.gamma)

    def select_action(self, s: np.ndarray, explore: bool = True) -> np.ndarray:
        a = self.actor(np.atleast_2d(s) - self.obs_shift)[0]
        if explore and self.cfg.exploration_noise_std > 0:
            a = a + self.cfg.exploration_noise_std * self.rng.standard_normal(a.shape)
        return np.clip(a, -1.0, 1.0)

    def update(self, batch: Batch) -> dict:
        """One critic step; actor and target step every ``policy_delay`` calls."""
        batch = self._centre(batch)
        y = self.target(batch)
        critic_loss = self._critic_step(batch, y)
        self.updates += 1
        info = {"critic_loss": critic_loss, "actor_updated": False}
        if self.updates % self.cfg.policy_delay == 0:
            n = len(batch)
            a, ta = self.actor.forward(batch.s)
            q, tq = self.q1.forward(np.concatenate([batch.s, a], axis=1))
            _, g_in = self.q1.backward(tq, np.full((n, 1), -1.0 / n))
            g_pi, _ = self.actor.backward(ta, g_in[:, self.state_dim:])
            self.pi_opt.step(g_pi)
            self.actor_t.soft_update(self.actor, self.cfg.tau)
            self._soft_update_critics()
            info.update(actor_loss=float(-np.mean(q)), actor_updated=True)
        return info


def squashed_gaussian_logp(u: np.ndarray, mean: np.ndarray, log_std: np.ndarray) -> np.ndarray:
    """Log-density of ``tanh(u)`` where ``u ~ N(mean, exp(log_std)^2)``, summed over dims."""
    std = np.exp(log_std)
    eps = (u - mean) / std
    gauss = -0.5 * eps * eps - log_std - _HALF_LOG_2PI
    # log(1 - tanh(u)^2) in a stable form
    log_det = 2.0 * (math.log(2.0) - u - np.logaddexp(0.0, -2.0 * u))
    return np.sum(gauss - log_det, axis=-1)


class SAC(_ActorCritic):
    kind = "SAC"

    def __init__(self, state_dim: int, action_dim: int, cfg: RLConfig | None = None, seed: int = 0):
        super().__init__(state_dim, action_dim, cfg or RLConfig(), seed)
        cfg = self.cfg
        self.actor = MLP((state_dim, *cfg.actor_hidden, 2 * action_dim), cfg.activation, rng=self.rng)
        self.pi_opt = Adam(self.actor.params, lr=cfg.actor_lr)
        self.target_entropy = -float(action_dim) if cfg.target_entropy is None else cfg.target_entropy
        t0 = cfg.init_temperature
        self.log_alpha = np.array([math.log(t0) if t0 > 0 else -np.inf])
        self.alpha_opt = Adam([self.log_alpha], lr=cfg.temperature_lr)
        self.noiseless = False

    @property
    def alpha(self) -> float:
        return float(np.exp(self.log_alpha[0]))

    def nets(self) -> dict[str, MLP]:
        return {"actor": self.actor, "q1": self.q1, "q2": self.q2,
                "q1_target": self.q1_t, "q2_target": self.q2_t}

    def _extra_tensors(self) -> dict:
        return {"log_alpha": self.log_alpha}

    def _load_extra(self, tensors) -> None:
        if "log_alpha" in tensors:
            self.log_alpha[...] = tensors["log_alpha"]

    def _dist(self, s: np.ndarray):
        out, tape = self.actor.forward(s)
        mean = out[:, : self.action_dim]
        raw_ls = out[:, self.action_dim:]
        log_std = np.clip(raw_ls, LOG_STD_MIN, LOG_STD_MAX)
        return mean, log_std, raw_ls, tape

    def _sample(self, s: np.ndarray):
        mean, log_std, raw_ls, tape = self._dist(s)
        eps = np.zeros_like(mean) if self.noiseless else self.rng.standard_normal(mean.shape)
        u = mean + np.exp(log_std) * eps
        return np.tanh(u), u, mean, log_std, raw_ls, eps, tape

    def _next_action(self, s_next: np.ndarray):
        a, u, mean, log_std, *_ = self._sample(s_next)
        return a, squashed_gaussian_logp(u, mean, log_std)

    def target(self, batch: Batch) -> np.ndarray:
        return q_target(batch, [_critic_fn(self.q1_t), _critic_fn(self.q2_t)],
                        self._next_action, self.cfg.gamma, self.alpha)

    def select_action(self, s: np.ndarray, explore: bool = True) -> np.ndarray:
        s = np.atleast_2d(s) - self.obs_shift
        if explore:
            return self._sample(s)[0][0]
        mean, *_ = self._dist(s)
        return np.tanh(mean[0])

    def update(self, batch: Batch) -> dict:
        batch = self._centre(batch)
        y = self.target(batch)
        critic_loss = self._critic_step(batch, y)
        self.updates += 1
        n = len(batch)
        alpha = self.alpha
        a, u, mean, log_std, raw_ls, eps, tape = self._sample(batch.s)
        logp = squashed_gaussian_logp(u, mean, log_std)
        sa = np.concatenate([batch.s, a], axis=1)
        q1, t1 = self.q1.forward(sa)
        q2, t2 = self.q2.forward(sa)
        use1 = (q1[:, 0] <= q2[:, 0])[:, None]
        _, gi1 = self.q1.backward(t1, np.where(use1, -1.0 / n, 0.0))
        _, gi2 = self.q2.backward(t2, np.where(use1, 0.0, -1.0 / n))
        dl_da = (gi1 + gi2)[:, self.state_dim:]
        std = np.exp(log_std)
        dl_du = dl_da * (1.0 - a * a)
        # d logp / d mean = 2 tanh(u); d logp / d log_std = -1 + 2 tanh(u) * std * eps
        g_mean = dl_du + (alpha / n) * 2.0 * a
        g_ls = dl_du * std * eps + (alpha / n) * (-1.0 + 2.0 * a * std * eps)
        g_ls = np.where((raw_ls > LOG_STD_MIN) & (raw_ls < LOG_STD_MAX), g_ls, 0.0)
        g_pi, _ = self.actor.backward(tape, np.concatenate([g_mean, g_ls], axis=1))
        self.pi_opt.step(g_pi)
        if self.cfg.autotune_temperature and np.isfinite(self.log_alpha[0]):
            g_alpha = -np.mean(logp + self.target_entropy)
            self.alpha_opt.step([np.array([g_alpha])])
        self._soft_update_critics()
        min_q = np.minimum(q1[:, 0], q2[:, 0])
        return {"critic_loss": critic_loss, "actor_loss": float(np.mean(alpha * logp - min_q)),
                "entropy": float(-np.mean(logp)), "alpha": alpha, "actor_updated": True}


def make_agent(kind: str, state_dim: int, action_dim: int, cfg: RLConfig, seed: int = 0):
    if kind == "TD3":
        return TD3(state_dim, action_dim, cfg, seed)
    if kind == "SAC":
        return SAC(state_dim, action_dim, cfg, seed)
    raise ValueError(f"unknown agent kind {kind!r}")


def load_agent(directory: str | Path):
    """Rebuild an agent from a checkpoint directory."""
    d = Path(directory)
    manifest = json.loads((d / "manifest.json").read_text())
    cfg = RLConfig(**manifest["rl_config"])
    agent = make_agent(manifest["agent"], manifest["state_dim"], manifest["action_dim"], cfg, manifest["seed"])
    agent.load_weights(d)
    return agent, manifest
