"""Latent-intent sequential advertising toolkit.

Learns an action-conditioned hidden Markov model of user intent from
trajectories, filters beliefs over the hidden states, optimizes an
advertising policy over beliefs with a smooth-max value approximator, and
evaluates it against baselines in a synthetic multi-scenario ad-auction
simulator.
"""

from .belief import Belief, BeliefTracker, belief_update, ema_blend, filter_trajectory
from .errors import (
    DegenerateBeliefError,
    DegenerateLikelihoodError,
    GuardSizeError,
    InvalidInputError,
    NumericFaultError,
)
from .hmm import (
    EmResult,
    ModelParams,
    PosteriorBundle,
    Trajectory,
    brute_force_likelihood,
    em_fit,
    forward,
    backward,
    posteriors,
    random_params,
    sample_trajectory,
    score_trajectories,
)
from .spova import (
    SpovaParams,
    Transition,
    apply_update,
    compensated_residual,
    q_value,
    select_action,
    train_step,
    v_value,
)

__version__ = "0.1.0"
