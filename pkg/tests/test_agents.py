import math

import numpy as np
import pytest

from arrl.agents import (SAC, TD3, Batch, RLConfig, ReplayBuffer, Transition, load_agent, make_agent, q_target,
                         squashed_gaussian_logp)

SMALL = RLConfig(actor_hidden=(32, 32), critic_hidden=(32, 32), batch_size=32)


def random_batch(rng, n=32, sd=4, ad=2, done_frac=0.2):
    return Batch(rng.normal(size=(n, sd)), rng.uniform(-1, 1, (n, ad)), rng.normal(size=n),
                 rng.normal(size=(n, sd)), (rng.random(n) < done_frac).astype(float))


# ---------------------------------------------------------------------------- Bellman targets


def two_state_mdp(gamma):
    """States 0/1 swap every step; reward 1 in state 0, and -(a - a*)^2 shaping with a* = (0.5, -0.25)."""
    a_star = np.array([0.5, -0.25])
    P = np.array([[0.0, 1.0], [1.0, 0.0]])
    V = np.linalg.solve(np.eye(2) - gamma * P, np.array([1.0, 0.0]))
    return a_star, V


def test_bellman_target_matches_value_iteration_tabular():
    gamma = 0.9
    a_star, V = two_state_mdp(gamma)
    grid = np.linspace(-1, 1, 81)  # contains both optimal actions
    Q = np.zeros((2, grid.size))
    s_all = np.repeat([0, 1], grid.size)
    a_all = np.tile(grid, 2)
    r_all = np.where(s_all == 0, 1.0, 0.0) - (a_all - a_star[s_all]) ** 2
    onehot = np.eye(2)
    batch = Batch(onehot[s_all], a_all[:, None], r_all, onehot[1 - s_all], np.zeros(s_all.size))

    def q_fn(s, a):
        si = s.argmax(axis=1)
        ai = np.rint((a[:, 0] + 1) * 40).astype(int)
        return Q[si, ai]

    def greedy(s_next):
        return grid[Q[s_next.argmax(axis=1)].argmax(axis=1)][:, None], None

    for _ in range(400):
        Q = q_target(batch, [q_fn, q_fn], greedy, gamma).reshape(2, grid.size)
    assert np.max(np.abs(Q.max(axis=1) - V)) < 1e-12
    assert np.array_equal(grid[Q.argmax(axis=1)], a_star)


def test_bellman_target_done_mask_and_min():
    b = Batch(np.zeros((3, 1)), np.zeros((3, 1)), np.array([1.0, 2.0, 3.0]), np.zeros((3, 1)), np.array([0.0, 1.0, 0.0]))
    y = q_target(b, [lambda s, a: np.full(3, 10.0), lambda s, a: np.full(3, 4.0)], lambda s: (np.zeros((3, 1)), None), 0.5)
    assert np.array_equal(y, [3.0, 2.0, 5.0])
    y = q_target(b, [lambda s, a: np.full(3, 4.0)], lambda s: (np.zeros((3, 1)), np.full(3, 2.0)), 0.5, temperature=1.0)
    assert np.array_equal(y, [2.0, 2.0, 4.0])


def learned_q_error(kind, gamma=0.9):
    """Max |Q - V| at the frozen policy's actions after fitting the 2-state MDP."""
    _, V = two_state_mdp(gamma)
    cfg = RLConfig(actor_hidden=(16,), critic_hidden=(32, 32), actor_lr=0.0, critic_lr=1e-3, tau=0.05,
                   policy_delay=1, target_noise_std=0.0, gamma=gamma, batch_size=64, init_temperature=0.0)
    agent = make_agent(kind, 2, 1, cfg, seed=0)
    if kind == "SAC":
        agent.noiseless = True
    s = np.eye(2)[np.arange(64) % 2]
    # the frozen policy's own actions: the critic is evaluated where it bootstraps
    acts = np.array([agent.select_action(x, explore=False) for x in s])
    batch = Batch(s, acts, 1.0 - s[:, 1], s[:, ::-1].copy(), np.zeros(64))
    for step in range(16_000):
        if step == 10_000:
            agent.q_opt.lr = 1e-4  # anneal so Adam settles onto the fixed point
        agent.update(batch)
    q = agent.q1(np.c_[s[:2], acts[:2]])[:, 0]
    return float(np.max(np.abs(q - V)))


def learned_q_errors():
    return [learned_q_error(k) for k in ("TD3", "SAC")]


@pytest.mark.parametrize("kind", ["TD3", "SAC"])
def test_learned_q_matches_value_iteration(kind):
    assert learned_q_error(kind) < 1e-3


def test_sac_zero_temperature_noiseless_reduces_to_deterministic_target():
    cfg = SMALL.model_copy(update={"init_temperature": 0.0, "target_noise_std": 0.0})
    rng = np.random.default_rng(0)
    sac, td3 = SAC(4, 2, cfg, seed=1), TD3(4, 2, cfg, seed=1)
    sac.noiseless = True
    # give both the same critics and a deterministic policy tanh(mean)
    td3.q1_t.load_params(sac.q1_t.params)
    td3.q2_t.load_params(sac.q2_t.params)
    b = random_batch(rng)
    mean = sac.actor(b.s_next)[:, :2]
    td3_target = q_target(b, [lambda s, a: td3.q1_t(np.c_[s, a]), lambda s, a: td3.q2_t(np.c_[s, a])],
                          lambda s: (np.tanh(mean), None), cfg.gamma)
    assert np.allclose(sac.target(b), td3_target, atol=1e-12)


# ---------------------------------------------------------------------------- SAC policy


def test_squashed_logp_integrates_to_one():
    a = np.linspace(-1 + 1e-7, 1 - 1e-7, 400_001)
    u = np.arctanh(a)[:, None]
    for mean, log_std in ((0.0, 0.0), (0.7, -0.5), (-1.2, 0.3)):
        p = np.exp(squashed_gaussian_logp(u, np.full_like(u, mean), np.full_like(u, log_std)))
        assert np.trapezoid(p, a) == pytest.approx(1.0, abs=1e-4)


def test_squashed_logp_matches_change_of_variables():
    rng = np.random.default_rng(3)
    u = rng.normal(size=(50, 3))
    mean, log_std = rng.normal(size=(50, 3)), rng.uniform(-1, 1, (50, 3))
    std = np.exp(log_std)
    ref = np.sum(-0.5 * ((u - mean) / std) ** 2 - log_std - 0.5 * math.log(2 * math.pi) - np.log(1 - np.tanh(u) ** 2), axis=1)
    assert np.allclose(squashed_gaussian_logp(u, mean, log_std), ref, atol=1e-9)


def test_sac_entropy_rises_under_high_temperature():
    rng = np.random.default_rng(0)
    cfg = SMALL.model_copy(update={"autotune_temperature": False, "init_temperature": 5.0, "actor_lr": 1e-3})
    agent = SAC(4, 2, cfg, seed=0)
    b = random_batch(rng, n=64)
    first = agent.update(b)["entropy"]
    for _ in range(300):
        last = agent.update(b)["entropy"]
    assert last > first


def test_sac_temperature_autotune_moves_towards_target():
    rng = np.random.default_rng(0)
    agent = SAC(4, 2, SMALL.model_copy(update={"temperature_lr": 1e-2}), seed=0)
    b = random_batch(rng)
    alpha0 = agent.alpha
    info = agent.update(b)
    # entropy above target -> temperature falls
    assert (info["entropy"] > agent.target_entropy) == (agent.alpha < alpha0)


# ---------------------------------------------------------------------------- TD3 specifics


def test_td3_exploration_variance_and_clamp():
    agent = TD3(4, 2, SMALL, seed=0)
    s = np.zeros(4)
    det = agent.select_action(s, explore=False)
    draws = np.array([agent.select_action(s) for _ in range(10_000)])
    assert np.all(np.abs(draws) <= 1.0)
    assert np.allclose(draws.var(axis=0), 0.1 ** 2, rtol=0.06)
    assert np.allclose(draws.mean(axis=0), det, atol=0.005)
    loud = TD3(4, 2, SMALL.model_copy(update={"exploration_noise_std": 10.0}), seed=0)
    assert np.all(np.abs([loud.select_action(s) for _ in range(100)]) <= 1.0)


def test_td3_policy_delay():
    rng = np.random.default_rng(0)
    agent = TD3(4, 2, SMALL.model_copy(update={"policy_delay": 3}), seed=0)
    b = random_batch(rng)
    h0 = agent.params_hash("actor")
    seen = []
    for _ in range(6):
        info = agent.update(b)
        seen.append(info["actor_updated"])
    assert seen == [False, False, True, False, False, True]
    assert agent.params_hash("actor") != h0


@pytest.mark.parametrize("kind", ["TD3", "SAC"])
def test_zero_learning_rate_is_null_step(kind):
    cfg = SMALL.model_copy(update={"actor_lr": 0.0, "critic_lr": 0.0, "temperature_lr": 0.0, "policy_delay": 1})
    agent = make_agent(kind, 4, 2, cfg, seed=0)
    online = {k: v for k, v in agent.nets().items() if "target" not in k}
    before = {k: [p.copy() for p in n.params] for k, n in online.items()}
    agent.update(random_batch(np.random.default_rng(0)))
    for k, n in online.items():
        assert all(np.array_equal(p, q) for p, q in zip(n.params, before[k]))


@pytest.mark.parametrize("kind", ["TD3", "SAC"])
def test_critic_loss_decreases(kind):
    rng = np.random.default_rng(0)
    agent = make_agent(kind, 4, 2, SMALL.model_copy(update={"critic_lr": 1e-3}), seed=0)
    b = random_batch(rng, n=64)
    losses = [agent.update(b)["critic_loss"] for _ in range(300)]
    assert np.mean(losses[-20:]) < 0.5 * np.mean(losses[:20])


@pytest.mark.parametrize("kind", ["TD3", "SAC"])
def test_target_networks_lag(kind):
    agent = make_agent(kind, 4, 2, SMALL.model_copy(update={"policy_delay": 1, "tau": 1.0}), seed=0)
    agent.update(random_batch(np.random.default_rng(0)))
    assert all(np.array_equal(p, q) for p, q in zip(agent.q1.params, agent.q1_t.params))


@pytest.mark.parametrize("kind", ["TD3", "SAC"])
def test_checkpoint_roundtrip(kind, tmp_path):
    rng = np.random.default_rng(0)
    agent = make_agent(kind, 4, 2, SMALL, seed=3)
    agent.set_obs_shift(np.arange(4.0))
    for _ in range(5):
        agent.update(random_batch(rng))
    agent.save(tmp_path / "ck", step_count=123, extra={"note": "x"})
    loaded, manifest = load_agent(tmp_path / "ck")
    assert manifest["step_count"] == 123 and manifest["note"] == "x" and manifest["agent"] == kind
    assert loaded.params_hash() == agent.params_hash()
    s = rng.normal(size=4)
    assert np.array_equal(loaded.select_action(s, explore=False), agent.select_action(s, explore=False))


# ---------------------------------------------------------------------------- replay buffer


def test_replay_fifo_eviction_and_order():
    buf = ReplayBuffer(3, 1, 1)
    for i in range(5):
        buf.add_transition(Transition(np.array([i]), np.array([0.0]), float(i), np.array([i + 1]), False))
    assert len(buf) == 3 and buf.total_added == 5
    assert buf.r[buf.ordered_indices()].tolist() == [2.0, 3.0, 4.0]


def test_replay_sampling():
    buf = ReplayBuffer(100, 2, 1)
    rng = np.random.default_rng(0)
    with pytest.raises(ValueError):
        buf.sample(1, rng)
    for i in range(10):
        buf.add(np.full(2, i), [0.0], i, np.full(2, i + 1), i == 9)
    rs = np.concatenate([buf.sample(10, rng).r for _ in range(50)])
    assert set(rs.astype(int)) == set(range(10))
    b = buf.sample(10, rng)
    assert b.s.shape == (10, 2)
    assert np.all(b.s_next[:, 0] == b.s[:, 0] + 1)
    assert np.all(b.done == (b.r == 9))
