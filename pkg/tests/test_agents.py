"""Baseline agents: convergence oracles, replay, schedules."""

import numpy as np
import pytest

from adintent.agents import (
    BanditAgent,
    DisaAgent,
    EmQAgent,
    EpsilonSchedule,
    ManualAgent,
    MlpQ,
    ObsTransition,
    ReplayMemory,
    TabularQAgent,
)
from adintent.belief import Belief
from adintent.env import KEEP
from adintent.errors import InvalidInputError
from adintent.hmm import random_params
from adintent.spova import Transition


def test_manual_agent_always_keeps():
    agent = ManualAgent()
    rng = np.random.default_rng(0)
    agent.begin_episode()
    for _ in range(20):
        agent.observe(0, (1, 2, 3, 0, 1))
        assert agent.act(rng, epsilon=0.7) == KEEP


def test_epsilon_schedule_monotone_and_reaches_floor():
    sched = EpsilonSchedule(start=1.0, end=0.05, decay_steps=100)
    values = [sched.value(t) for t in range(150)]
    assert all(b <= a for a, b in zip(values, values[1:]))
    assert values[0] == 1.0
    assert values[100] == pytest.approx(0.05)
    assert values[149] == pytest.approx(0.05)
    with pytest.raises(InvalidInputError):
        EpsilonSchedule(start=0.1, end=0.5, decay_steps=10)


def test_replay_capacity_and_uniform_sampling():
    replay = ReplayMemory(capacity=50)
    for i in range(80):
        replay.add(i)
    assert len(replay) == 50
    stored = {replay._items[i] for i in range(50)}
    assert stored == set(range(30, 80))  # oldest evicted first

    rng = np.random.default_rng(1)
    counts = np.zeros(50)
    draws = 4000
    for _ in range(draws):
        batch = replay.sample(rng, 5)
        assert len(set(batch)) == 5  # without replacement inside a minibatch
        for item in batch:
            counts[item - 30] += 1
    p = 5 / 50
    expected = draws * p
    sigma = np.sqrt(draws * p * (1 - p))
    assert np.all(np.abs(counts - expected) <= 4 * sigma)

    with pytest.raises(InvalidInputError):
        ReplayMemory(capacity=3).sample(rng, 1)


def test_bandit_tracks_means_and_prefers_best_arm():
    rng = np.random.default_rng(2)
    agent = BanditAgent(n_actions=3)
    ctx = (1, 0, 2, 0, 1)

    # unvisited context acts uniformly even when greedy
    agent.begin_episode()
    agent.observe(0, ctx)
    draws = [agent.act(np.random.default_rng(s), epsilon=0.0) for s in range(300)]
    assert set(draws) == {0, 1, 2}

    means = np.array([1.0, 2.0, 3.0])
    epsilon = 0.3
    chosen = []
    for step in range(22_000):
        a = agent.act(rng, epsilon=epsilon)
        reward = rng.normal(means[a], 0.5)
        agent.update(ctx, a, reward)
        if step >= 2000:
            chosen.append(a)
    freq_best = np.mean(np.array(chosen) == 2)
    p = 1 - epsilon + epsilon / 3
    sigma = np.sqrt(p * (1 - p) / len(chosen))
    assert abs(freq_best - p) <= 3 * sigma
    assert agent.means[ctx][2] == pytest.approx(3.0, abs=0.05)


def test_bandit_update_moves_mean_toward_reward():
    agent = BanditAgent(n_actions=3)
    agent.update((0,), 1, 10.0)
    assert agent.means[(0,)][1] == 10.0
    agent.update((0,), 1, 0.0)
    assert agent.means[(0,)][1] == 5.0


def test_tabular_q_gamma_zero_matches_mean_rewards():
    rng = np.random.default_rng(3)
    agent = TabularQAgent(n_actions=2, learning_rate=0.05, discount=0.0)
    obs = (1, 1)
    means = [0.5, -0.25]
    for _ in range(20_000):
        a = int(rng.integers(2))
        r = rng.normal(means[a], 0.1)
        agent.update(ObsTransition(obs_before=obs, action=a, reward=r, obs_after=obs))
    # settle the running estimate with a decaying tail
    agent.learning_rate = 0.002
    for _ in range(30_000):
        a = int(rng.integers(2))
        r = rng.normal(means[a], 0.1)
        agent.update(ObsTransition(obs_before=obs, action=a, reward=r, obs_after=obs))
    assert agent.qtable[obs][0] == pytest.approx(means[0], abs=1e-2)
    assert agent.qtable[obs][1] == pytest.approx(means[1], abs=1e-2)


def test_tabular_q_matches_value_iteration_on_deterministic_chain():
    # two states, two actions, deterministic moves and rewards
    next_state = {(0, 0): 0, (0, 1): 1, (1, 0): 0, (1, 1): 1}
    reward = {(0, 0): 0.0, (0, 1): 1.0, (1, 0): -0.5, (1, 1): 2.0}
    gamma = 0.9

    q_star = {(s, a): 0.0 for s in (0, 1) for a in (0, 1)}
    for _ in range(2000):
        q_star = {(s, a): reward[(s, a)]
                  + gamma * max(q_star[(next_state[(s, a)], b)] for b in (0, 1))
                  for s in (0, 1) for a in (0, 1)}

    agent = TabularQAgent(n_actions=2, learning_rate=0.5, discount=gamma)
    for sweep in range(4000):
        for s in (0, 1):
            for a in (0, 1):
                agent.update(ObsTransition(obs_before=(s,), action=a,
                                           reward=reward[(s, a)],
                                           obs_after=(next_state[(s, a)],)))
    for s in (0, 1):
        for a in (0, 1):
            assert agent.qtable[(s,)][a] == pytest.approx(q_star[(s, a)], abs=1e-3)

    # never-updated observations keep the init value
    assert np.all(agent._q((9,)) == 0.0)


def test_mlp_td_gradient_matches_finite_differences():
    rng = np.random.default_rng(4)
    net = MlpQ(n_inputs=3, n_actions=3, hidden_width=8, hidden_layers=2, rng=5)
    beliefs = rng.dirichlet(np.ones(3), size=16)
    actions = rng.integers(0, 3, size=16)
    targets = rng.normal(0.0, 2.0, size=16)

    loss, grads_w, grads_b = net.td_loss_gradients(beliefs, actions, targets)

    def loss_at():
        q = net.forward(beliefs)
        err = q[np.arange(16), actions] - targets
        return 0.5 * float(np.mean(err ** 2))

    h = 1e-6
    for layer in range(len(net.weights)):
        fd = np.zeros_like(net.weights[layer])
        it = np.nditer(net.weights[layer], flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            orig = net.weights[layer][idx]
            net.weights[layer][idx] = orig + h
            up = loss_at()
            net.weights[layer][idx] = orig - h
            down = loss_at()
            net.weights[layer][idx] = orig
            fd[idx] = (up - down) / (2 * h)
        rel = np.linalg.norm(grads_w[layer] - fd) / max(np.linalg.norm(fd), 1e-12)
        assert rel < 1e-4


def test_em_q_bandit_reduction_single_belief():
    rng = np.random.default_rng(6)
    estimator = random_params(3, 3, [2], rng)
    agent = EmQAgent(estimator, n_actions=3, hidden_width=16, hidden_layers=2,
                     learning_rate=0.05, discount=0.0, rng=7)
    belief = Belief(np.array([0.2, 0.5, 0.3]))
    means = [1.0, -0.5, 2.0]
    rewards = {a: rng.normal(means[a], 0.2, size=40) for a in range(3)}
    batch = [Transition(belief_before=belief, action=a, reward=float(r),
                        belief_after=belief)
             for a in range(3) for r in rewards[a]]
    for _ in range(3000):
        agent.learn_from(batch)
    q = agent.net.forward(belief.probs[None, :])[0]
    for a in range(3):
        assert q[a] == pytest.approx(float(np.mean(rewards[a])), abs=5e-2)


def test_em_q_target_frozen_between_refreshes():
    rng = np.random.default_rng(8)
    estimator = random_params(3, 3, [2], rng)
    agent = EmQAgent(estimator, target_refresh=10, rng=9)
    belief = Belief(np.array([0.3, 0.3, 0.4]))
    batch = [Transition(belief_before=belief, action=0, reward=1.0, belief_after=belief)]
    before = [w.copy() for w in agent.target.weights]
    for _ in range(9):
        agent.learn_from(batch)
    assert all(np.array_equal(a, b) for a, b in zip(before, agent.target.weights))
    agent.learn_from(batch)  # tenth update refreshes the frozen copy
    assert any(not np.array_equal(a, b) for a, b in zip(before, agent.target.weights))


def test_disa_agent_checkpoint_roundtrip():
    rng = np.random.default_rng(10)
    estimator = random_params(3, 3, [2], rng)
    agent = DisaAgent(estimator, rng=11)
    state = agent.state_dict()
    clone = DisaAgent(estimator, rng=12)
    clone.load_state(state)
    assert np.array_equal(clone.etas.vectors, agent.etas.vectors)
    assert clone.etas.z == agent.etas.z
    belief = Belief(np.array([0.5, 0.25, 0.25]))
    r1 = np.random.default_rng(1)
    r2 = np.random.default_rng(1)
    agent.tracker.belief = belief
    clone.tracker.belief = belief
    assert agent.act(r1, 0.0) == clone.act(r2, 0.0)
