"""Bayes filtering of hidden-intent beliefs and estimator blending.

A belief is a probability distribution over the model's hidden states. The
filter follows the three-step update: slice the transition tensor along the
previous action, push the belief through it, weight elementwise by the
observation likelihood, and normalize.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateBeliefError, InvalidInputError
from .hmm import ROW_SUM_TOL, ModelParams, Trajectory

EMA_RENORM_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class Belief:
    """Probability distribution over the hidden states."""

    probs: np.ndarray

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=float)
        if probs.ndim != 1:
            raise InvalidInputError("belief must be a vector")
        if np.any(probs < 0) or abs(probs.sum() - 1.0) > ROW_SUM_TOL:
            raise InvalidInputError("belief entries must be nonnegative and sum to 1")
        probs.flags.writeable = False
        object.__setattr__(self, "probs", probs)

    def __len__(self) -> int:
        return len(self.probs)


def _observation_weight(params: ModelParams, action: int, obs) -> np.ndarray:
    obs = np.asarray(obs, dtype=np.int64).ravel()
    if len(obs) != len(params.O):
        raise InvalidInputError(f"observation has {len(obs)} dims, model expects {len(params.O)}")
    if not 0 <= action < params.n_actions:
        raise InvalidInputError(f"action index {action} out of range")
    weight = np.ones(params.n_states)
    for g, o in enumerate(params.O):
        if not 0 <= obs[g] < o.shape[2]:
            raise InvalidInputError(f"observation symbol out of range in dim {g}")
        weight *= o[action, :, obs[g]]
    return weight


def belief_update(params: ModelParams, prev: Belief, prev_action: int, obs) -> Belief:
    """One filtering step: transition along the action, weight, normalize.

    Raises DegenerateBeliefError carrying the pre-normalization vector when
    the observed symbols have zero probability under every reachable state;
    the fallback (e.g. resetting to b0) is the caller's policy.
    """
    if len(prev) != params.n_states:
        raise InvalidInputError("belief size does not match the model")
    predicted = prev.probs @ params.T[prev_action]
    premass = predicted * _observation_weight(params, prev_action, obs)
    total = premass.sum()
    if total <= 0.0:
        raise DegenerateBeliefError(premass)
    return Belief(premass / total)


def initial_belief(params: ModelParams, prev_action: int, obs) -> Belief:
    """Filter the first observation: weight b0 by the likelihood, no transition.

    b0 is already the distribution of the first hidden state, so the first
    update must not push it through the transition tensor; this keeps the
    filtered sequence identical to the normalized forward messages.
    """
    premass = params.b0 * _observation_weight(params, prev_action, obs)
    total = premass.sum()
    if total <= 0.0:
        raise DegenerateBeliefError(premass, step=0)
    return Belief(premass / total)


def filter_trajectory(params: ModelParams, traj: Trajectory,
                      b_init: Belief | None = None) -> list[Belief]:
    """Beliefs after each step of a trajectory.

    With ``b_init`` left at the model's b0 the result equals the normalized
    forward messages. A degenerate step re-raises with its step index.
    """
    traj.validate_against(params)
    if b_init is None:
        b_init = Belief(params.b0)
    elif len(b_init) != params.n_states:
        raise InvalidInputError("b_init size does not match the model")

    beliefs: list[Belief] = []
    premass = b_init.probs * _observation_weight(params, int(traj.actions[0]), traj.obs[0])
    total = premass.sum()
    if total <= 0.0:
        raise DegenerateBeliefError(premass, step=0)
    beliefs.append(Belief(premass / total))
    for t in range(1, len(traj)):
        try:
            beliefs.append(belief_update(params, beliefs[-1], int(traj.actions[t]), traj.obs[t]))
        except DegenerateBeliefError as err:
            raise DegenerateBeliefError(err.premass, step=t) from None
    return beliefs


class BeliefTracker:
    """Stateful filter for online episodes.

    The first ``update`` after a reset weights b0 by the observation
    likelihood without a transition, matching ``filter_trajectory``.
    """

    def __init__(self, params: ModelParams):
        self.params = params
        self.reset()

    def reset(self) -> Belief:
        self.belief = Belief(self.params.b0)
        self._started = False
        return self.belief

    def update(self, prev_action: int, obs) -> Belief:
        if self._started:
            self.belief = belief_update(self.params, self.belief, prev_action, obs)
        else:
            self.belief = initial_belief(self.params, prev_action, obs)
            self._started = True
        return self.belief


def ema_blend(old: ModelParams, new: ModelParams, rate: float) -> ModelParams:
    """Convex elementwise blend of two parameter sets, re-normalized per row.

    ``rate`` is the weight on the new parameters. The re-normalization only
    absorbs floating-point rounding; anything larger indicates invalid
    inputs and raises.
    """
    if not 0.0 <= rate <= 1.0:
        raise InvalidInputError("rate must be in [0, 1]")
    if (old.n_states != new.n_states or old.n_actions != new.n_actions
            or old.obs_dims != new.obs_dims):
        raise InvalidInputError("models have different dimensions")

    def blend(a, b):
        mixed = (1.0 - rate) * a + rate * b
        sums = mixed.sum(axis=-1, keepdims=True)
        if np.any(np.abs(sums - 1.0) > EMA_RENORM_TOL):
            raise InvalidInputError("blend produced rows off the simplex beyond rounding")
        return mixed / sums

    return ModelParams(
        b0=blend(old.b0[None, :], new.b0[None, :])[0],
        T=blend(old.T, new.T),
        O=tuple(blend(a, b) for a, b in zip(old.O, new.O)),
    )
