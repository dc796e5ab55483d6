import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from pydantic import ValidationError

from arrl.agents import RLConfig, ReplayBuffer
from arrl.controller import BaseController
from arrl.env import ACTION_DIM, STATE_DIM, BipedEnv, EnvConfig, episode_score
from arrl.gaits import GaitKind
from arrl.optim import OptBounds, denormalize, normalize
from arrl.params import param_bounds
from arrl.trainer import (QuadraticStubEnv, RunRecord, TrainerConfig, arrl_train, best_so_far, default_theta,
                          load_checkpoint, make_gait_spec, run_episode)

SHORT_ENV = EnvConfig(max_steps=40)
TINY_RL = RLConfig(actor_hidden=(16,), critic_hidden=(16,), batch_size=16, warmup_steps=50)


def stub(seed=0, gait="Rose"):
    lo, hi = param_bounds(gait)
    b = OptBounds(lo, hi)
    u_star = np.random.default_rng(seed).uniform(0.1, 0.9, 7)
    return QuadraticStubEnv(denormalize(u_star, b), b), b


class ConstantAgent:
    def __init__(self, value):
        self.value = np.full(ACTION_DIM, value)

    def select_action(self, s, explore=True):
        return self.value.copy()


@given(st.lists(st.floats(-1e6, 1e6), max_size=50))
def test_best_so_far_matches_fold(xs):
    acc, out = -np.inf, []
    for x in xs:
        acc = max(acc, x)
        out.append(acc)
    assert best_so_far(xs).tolist() == out


def test_config_rejects_empty_method():
    with pytest.raises(ValidationError):
        TrainerConfig(agent=None, optimizer=None)
    assert TrainerConfig(agent="TD3", optimizer=None).effective_base_weight == 0.0
    assert TrainerConfig(agent=None, optimizer="BO").effective_base_weight == 1.0
    assert TrainerConfig().method_name == "TD3+CMAES"
    assert TrainerConfig(optimizer=None).method_name == "Vanilla TD3"


def test_stub_recovery_cmaes_short():
    env, b = stub(0)
    res = arrl_train(TrainerConfig(t_max=1500, agent=None, optimizer="CMAES", seed=0), env=env)
    assert np.max(np.abs(normalize(res.theta_final.to_array(), b) - env.u_star)) < 0.05


@pytest.mark.parametrize("H", [1, 3, 5])
def test_block_means_are_told(H):
    env, _ = stub(1)
    told = []
    res = arrl_train(TrainerConfig(t_max=H * 40, H=H, agent=None, optimizer="CMAES", seed=0), env=env,
                     tell_hook=lambda ep, n: told.append((ep, n)))
    rec = res.record
    blocks = {}
    for e in rec.episodes:
        blocks.setdefault(e.block, []).append(e)
    # every episode of a block runs the same parameters
    for eps in blocks.values():
        assert len({e.theta_hash for e in eps}) == 1 and len(eps) == H
    means = [np.mean([e.ret for e in eps]) for eps in blocks.values()]
    assert rec.tells == sum(n for _, n in told) == res.optimizer.n_evals
    assert res.optimizer.best_fitness == pytest.approx(max(means[: rec.tells]), abs=0.0)


def test_buffer_receives_every_step_and_rl_actions():
    env = BipedEnv(SHORT_ENV)
    spec = make_gait_spec(env, GaitKind.ROSE)
    theta = default_theta("Rose")
    ctrl = BaseController(spec, theta, env.pitch_ref, env.cfg.k_a, env.cfg.control_dt)
    buf = ReplayBuffer(1000, STATE_DIM, ACTION_DIM)
    agent = ConstantAgent(0.125)
    res = run_episode(env, agent, ctrl, theta, "train", 1.0, seed=0, buffer=buf)
    assert len(buf) == res.steps
    assert np.all(buf.a[: len(buf)] == 0.125)
    assert res.ret == episode_score(res.rewards)


def test_run_episode_terminal_only_on_pitch():
    env = BipedEnv(SHORT_ENV)
    buf = ReplayBuffer(1000, STATE_DIM, ACTION_DIM)
    res = run_episode(env, ConstantAgent(0.0), None, None, "train", 0.0, seed=0, buffer=buf)
    assert res.steps == 40 and not res.terminated and buf.done[: len(buf)].sum() == 0
    env2 = BipedEnv(EnvConfig(max_steps=400))
    buf2 = ReplayBuffer(1000, STATE_DIM, ACTION_DIM)
    a = np.zeros(ACTION_DIM)
    a[6] = a[7] = 1.0  # drive both knees into a fall
    agent = ConstantAgent(0.0)
    agent.value = a
    res2 = run_episode(env2, agent, None, None, "train", 0.0, seed=0, buffer=buf2)
    assert res2.terminated and res2.steps < 400 and buf2.done[len(buf2) - 1] == 1.0


def test_params_change_inside_episode_detected():
    env = BipedEnv(SHORT_ENV)
    spec = make_gait_spec(env, GaitKind.ROSE)
    theta = default_theta("Rose")

    class Meddler(BaseController):
        def __call__(self, state, t):
            out = super().__call__(state, t)
            self.params = self.params.replace(omega=self.params.omega + 1e-9)
            return out

    ctrl = Meddler(spec, theta, env.pitch_ref)
    with pytest.raises(RuntimeError):
        run_episode(env, None, ctrl, theta, "eval", 1.0)


def test_training_is_deterministic_and_buffer_grows():
    cfg = TrainerConfig(t_max=200, H=2, agent="TD3", optimizer="CMAES", seed=3)
    a = arrl_train(cfg, TINY_RL, SHORT_ENV)
    b = arrl_train(cfg, TINY_RL, SHORT_ENV)
    assert a.record.returns.tolist() == b.record.returns.tolist()
    assert a.buffer_size == a.record.env_steps[-1] >= 200
    assert a.agent.params_hash() == b.agent.params_hash()


def test_vanilla_agent_ignores_base_controller():
    res = arrl_train(TrainerConfig(t_max=80, agent="SAC", optimizer=None, seed=0), TINY_RL, SHORT_ENV)
    assert res.optimizer is None and res.record.tells == 0
    assert res.record.method == "Vanilla SAC"


def test_checkpoint_roundtrip(tmp_path):
    cfg = TrainerConfig(t_max=120, H=1, agent="TD3", optimizer="CMAES", seed=0, eval_interval=60)
    res = arrl_train(cfg, TINY_RL, SHORT_ENV, out_dir=tmp_path)
    agent, theta, manifest = load_checkpoint(tmp_path / "checkpoint")
    assert manifest["base_weight"] == 1.0 and manifest["method"] == "TD3+CMAES"
    assert theta == res.theta_final
    assert agent.params_hash() == res.agent.params_hash()
    assert (tmp_path / "checkpoint" / "optimizer.json").exists()


def test_run_record_csv_roundtrip(tmp_path):
    env, _ = stub(2)
    res = arrl_train(TrainerConfig(t_max=30, H=1, agent=None, optimizer="TBPSA", seed=0), env=env)
    p = tmp_path / "episodes.csv"
    res.record.write_csv(p)
    back = RunRecord.read_csv(p, seed=0)
    assert back.returns.tolist() == res.record.returns.tolist()
    assert back.env_steps.tolist() == res.record.env_steps.tolist()
    assert back.config_hash == res.record.config_hash
    assert np.array_equal(back.episodes[3].theta_prime, res.record.episodes[3].theta_prime)
