"""Forward/backward/posterior checks against enumeration oracles."""

import numpy as np
import pytest

from adintent.errors import DegenerateLikelihoodError, GuardSizeError, InvalidInputError
from adintent.hmm import (
    ModelParams,
    Trajectory,
    backward,
    brute_force_likelihood,
    forward,
    posteriors,
    random_params,
)

from _oracles import (
    enum_likelihood,
    enum_pair_posterior,
    enum_state_posterior,
    hand_instance,
    random_instance,
)

# frozen by hand enumeration over the 4 state paths of hand_instance():
# 0.6*0.9*0.7*0.1 + 0.6*0.9*0.3*0.8 + 0.4*0.2*0.2*0.1 + 0.4*0.2*0.8*0.8
HAND_LIKELIHOOD = 0.2202
HAND_ALPHA_0 = (0.54 / 0.62, 0.08 / 0.62)
HAND_POSTERIOR_0 = (0.1674 / 0.2202, 0.0528 / 0.2202)
HAND_PAIR_0 = np.array([[0.0378, 0.1296], [0.0016, 0.0512]]) / 0.2202


def test_forward_matches_hand_enumeration():
    params, traj = hand_instance()
    alpha, scale, loglik = forward(params, traj)
    assert loglik == pytest.approx(np.log(HAND_LIKELIHOOD), abs=1e-12)
    assert alpha[0] == pytest.approx(HAND_ALPHA_0, abs=1e-12)
    assert scale[0] == pytest.approx(0.62, abs=1e-12)
    # scaled rows are normalized; the unscaled message is recoverable
    assert np.allclose(alpha.sum(axis=1), 1.0)
    assert alpha[1] * scale.prod() == pytest.approx(np.array([0.0394, 0.1808]), abs=1e-12)


def test_forward_single_state_reduces_to_emission_product():
    rng = np.random.default_rng(7)
    params = random_params(1, 2, [3, 2], rng)
    actions = np.array([0, 1, 1, 0])
    obs = np.array([[0, 1], [2, 0], [1, 1], [0, 0]])
    traj = Trajectory(actions=actions, obs=obs, rewards=np.zeros(4),
                      clicks=np.zeros(4, dtype=int), purchases=np.zeros(4, dtype=int))
    _, _, loglik = forward(params, traj)
    expected = sum(np.log(params.O[g][actions[t], 0, obs[t, g]])
                   for t in range(4) for g in range(2))
    assert loglik == pytest.approx(expected, abs=1e-12)


def test_forward_uniform_model_gives_symbol_count_power():
    n, m = 3, 4
    params = ModelParams(
        b0=np.full(n, 1 / n),
        T=np.full((1, n, n), 1 / n),
        O=(np.full((1, n, m), 1 / m),),
    )
    traj = Trajectory(actions=np.zeros(3, dtype=int), obs=np.array([[0], [3], [1]]),
                      rewards=np.zeros(3), clicks=np.zeros(3, dtype=int),
                      purchases=np.zeros(3, dtype=int))
    _, _, loglik = forward(params, traj)
    assert loglik == pytest.approx(3 * np.log(1 / m), abs=1e-12)


def test_forward_rejects_impossible_observation_with_step():
    params, traj = hand_instance()
    # make symbol 0 impossible in every state
    impossible = ModelParams(b0=params.b0, T=params.T,
                             O=(np.array([[[0.0, 1.0], [0.0, 1.0]]]),))
    with pytest.raises(DegenerateLikelihoodError) as err:
        forward(impossible, traj)
    assert err.value.step == 1


def test_forward_rejects_dimension_mismatch():
    params, traj = hand_instance()
    bad = Trajectory(actions=np.array([0, 5]), obs=traj.obs, rewards=np.zeros(2),
                     clicks=np.zeros(2, dtype=int), purchases=np.zeros(2, dtype=int))
    with pytest.raises(InvalidInputError):
        forward(params, bad)
    bad_obs = Trajectory(actions=traj.actions, obs=np.array([[1], [9]]),
                         rewards=np.zeros(2), clicks=np.zeros(2, dtype=int),
                         purchases=np.zeros(2, dtype=int))
    with pytest.raises(InvalidInputError):
        forward(params, bad_obs)


def test_backward_terminal_row_is_ones_and_single_step_trivial():
    params, traj = hand_instance()
    _, scale, _ = forward(params, traj)
    beta = backward(params, traj, scale)
    assert np.allclose(beta[-1], 1.0)

    short = Trajectory(actions=np.array([0]), obs=np.array([[1]]), rewards=np.zeros(1),
                       clicks=np.zeros(1, dtype=int), purchases=np.zeros(1, dtype=int))
    _, scale1, _ = forward(params, short)
    assert np.allclose(backward(params, short, scale1), 1.0)


def test_backward_rejects_wrong_scale_length():
    params, traj = hand_instance()
    with pytest.raises(InvalidInputError):
        backward(params, traj, np.ones(5))


def test_alpha_beta_product_is_state_posterior():
    params, traj = hand_instance()
    alpha, scale, _ = forward(params, traj)
    beta = backward(params, traj, scale)
    post = alpha[0] * beta[0]
    post /= post.sum()
    assert post == pytest.approx(HAND_POSTERIOR_0, abs=1e-12)
    assert post == pytest.approx(enum_state_posterior(params, traj, 0), abs=1e-12)


def test_posteriors_match_enumeration_on_hand_instance():
    params, traj = hand_instance()
    bundle = posteriors(params, traj)
    assert bundle.log_likelihood == pytest.approx(np.log(HAND_LIKELIHOOD), abs=1e-12)
    assert bundle.gamma_pair[0] == pytest.approx(HAND_PAIR_0, abs=1e-12)
    assert bundle.gamma_pair[0] == pytest.approx(enum_pair_posterior(params, traj, 0), abs=1e-12)


def test_posteriors_one_hot_on_deterministic_chain():
    # state cycles 0 -> 1 -> 0 and emits its own index
    params = ModelParams(
        b0=np.array([1.0, 0.0]),
        T=np.array([[[0.0, 1.0], [1.0, 0.0]]]),
        O=(np.eye(2)[None, :, :],),
    )
    traj = Trajectory(actions=np.zeros(4, dtype=int), obs=np.array([[0], [1], [0], [1]]),
                      rewards=np.zeros(4), clicks=np.zeros(4, dtype=int),
                      purchases=np.zeros(4, dtype=int))
    bundle = posteriors(params, traj)
    expected = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 0.0], [0.0, 1.0]])
    assert np.allclose(bundle.gamma_single, expected)


def test_pair_marginal_consistency_random_models():
    rng = np.random.default_rng(41)
    for _ in range(60):
        params, traj = random_instance(rng)
        if len(traj) < 2:
            continue
        bundle = posteriors(params, traj)
        marg = bundle.gamma_pair.sum(axis=2)
        assert np.max(np.abs(marg - bundle.gamma_single[:-1])) < 1e-10
        assert np.max(np.abs(bundle.gamma_single.sum(axis=1) - 1.0)) < 1e-10


def test_posteriors_match_enumeration_random_models():
    rng = np.random.default_rng(42)
    for _ in range(40):
        params, traj = random_instance(rng)
        bundle = posteriors(params, traj)
        for t in range(len(traj)):
            assert bundle.gamma_single[t] == pytest.approx(
                enum_state_posterior(params, traj, t), abs=1e-10)
        for t in range(len(traj) - 1):
            assert bundle.gamma_pair[t] == pytest.approx(
                enum_pair_posterior(params, traj, t), abs=1e-12)


def test_forward_matches_independent_enumeration_random_models():
    rng = np.random.default_rng(43)
    for _ in range(100):
        params, traj = random_instance(rng)
        _, _, loglik = forward(params, traj)
        assert abs(loglik - np.log(enum_likelihood(params, traj))) < 1e-10


def test_scaled_likelihood_matches_extended_precision_unscaled():
    mp = pytest.importorskip("mpmath")
    mp.mp.dps = 60
    rng = np.random.default_rng(44)
    for _ in range(20):
        params, traj = random_instance(rng, max_len=6)
        length, n = len(traj), params.n_states
        cur = [mp.mpf(params.b0[i]) for i in range(n)]
        for t in range(length):
            emis = [mp.mpf(1) for _ in range(n)]
            for g, o in enumerate(params.O):
                for i in range(n):
                    emis[i] *= mp.mpf(o[traj.actions[t], i, traj.obs[t, g]])
            if t > 0:
                cur = [sum(cur[i] * mp.mpf(params.T[traj.actions[t], i, j]) for i in range(n))
                       for j in range(n)]
            cur = [cur[i] * emis[i] for i in range(n)]
        exact = mp.log(sum(cur))
        _, _, loglik = forward(params, traj)
        assert abs(loglik - float(exact)) < 1e-10


def test_brute_force_matches_hand_value_and_guards():
    params, traj = hand_instance()
    assert brute_force_likelihood(params, traj) == pytest.approx(HAND_LIKELIHOOD, abs=1e-15)

    single = Trajectory(actions=np.array([0]), obs=np.array([[1]]), rewards=np.zeros(1),
                        clicks=np.zeros(1, dtype=int), purchases=np.zeros(1, dtype=int))
    expected = params.b0[0] * 0.9 + params.b0[1] * 0.2
    assert brute_force_likelihood(params, single) == pytest.approx(expected, abs=1e-15)

    rng = np.random.default_rng(5)
    big = random_params(4, 1, [2], rng)
    long_traj = Trajectory(actions=np.zeros(11, dtype=int),
                           obs=np.zeros((11, 1), dtype=int), rewards=np.zeros(11),
                           clicks=np.zeros(11, dtype=int), purchases=np.zeros(11, dtype=int))
    with pytest.raises(GuardSizeError):
        brute_force_likelihood(big, long_traj)


def test_model_params_invariants_enforced():
    with pytest.raises(InvalidInputError):
        ModelParams(b0=np.array([0.6, 0.5]), T=np.full((1, 2, 2), 0.5),
                    O=(np.full((1, 2, 2), 0.5),))
    with pytest.raises(InvalidInputError):
        ModelParams(b0=np.array([1.2, -0.2]), T=np.full((1, 2, 2), 0.5),
                    O=(np.full((1, 2, 2), 0.5),))
    with pytest.raises(InvalidInputError):
        ModelParams(b0=np.array([0.5, 0.5]), T=np.full((1, 2, 3), 1 / 3),
                    O=(np.full((1, 2, 2), 0.5),))
