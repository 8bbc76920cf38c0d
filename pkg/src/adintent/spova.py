"""Smooth-max value approximation over beliefs and its training step.

Each action's Q-function is the z-norm of offset dot products between the
belief and a bundle of nonnegative vectors living in belief space. The
positivity offset keeps every dot product strictly positive; because that
offset inflates all fixed points by exactly the offset, the Bellman
residual carries a compensating ``(1 - discount) * offset`` term.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .belief import Belief
from .errors import InvalidInputError, NumericFaultError

EXPONENT_MODES = ("derivative", "paper")


@dataclass(frozen=True, eq=False)
class SpovaParams:
    """Per-action value vectors plus the knobs that define Q.

    vectors : (A, n, N) nonnegative array; n vectors per action partition
        belief space into near-linear value regions.
    z : smoothness exponent >= 1 (larger is closer to a hard max).
    offset : positivity offset added to every dot product.
    exponent_mode : "derivative" applies the true gradient of the z-norm
        (exponent z - 1); "paper" keeps exponent z in the update ratio.
    """

    vectors: np.ndarray
    z: float = 2.0
    offset: float = 1.0
    learning_rate: float = 1e-2
    discount: float = 0.9
    exponent_mode: str = "derivative"

    def __post_init__(self):
        vectors = np.asarray(self.vectors, dtype=float)
        if vectors.ndim != 3:
            raise InvalidInputError("vectors must have shape (actions, n, states)")
        if vectors.shape[1] < 1:
            raise InvalidInputError("need at least one vector per action")
        if np.any(vectors < 0):
            raise InvalidInputError("vector components must be nonnegative")
        if self.z < 1.0:
            raise InvalidInputError("z must be >= 1")
        if self.offset < 0.0:
            raise InvalidInputError("offset must be >= 0")
        if not 0.0 <= self.discount < 1.0:
            raise InvalidInputError("discount must be in [0, 1)")
        if self.exponent_mode not in EXPONENT_MODES:
            raise InvalidInputError(f"exponent_mode must be one of {EXPONENT_MODES}")
        vectors.flags.writeable = False
        object.__setattr__(self, "vectors", vectors)

    @property
    def n_actions(self) -> int:
        return self.vectors.shape[0]

    @property
    def n_vectors(self) -> int:
        return self.vectors.shape[1]

    @property
    def n_states(self) -> int:
        return self.vectors.shape[2]

    @classmethod
    def init(cls, n_actions: int, n_states: int, n_vectors: int = 5, rng=None,
             init_scale: float = 0.1, **kwargs) -> "SpovaParams":
        """Fresh parameters with small nonnegative random vectors."""
        rng = np.random.default_rng(rng)
        vectors = rng.uniform(0.0, init_scale, size=(n_actions, n_vectors, n_states))
        return cls(vectors=vectors, **kwargs)


@dataclass(frozen=True, eq=False)
class Transition:
    """One replayed step: belief, action, reward, successor belief."""

    belief_before: Belief
    action: int
    reward: float
    belief_after: Belief
    terminal: bool = False

    def __post_init__(self):
        if not np.isfinite(self.reward):
            raise InvalidInputError("reward must be finite")


def _dots(etas: SpovaParams, b: Belief, a: int) -> np.ndarray:
    if len(b) != etas.n_states:
        raise InvalidInputError("belief size does not match the value vectors")
    if not 0 <= a < etas.n_actions:
        raise InvalidInputError(f"action index {a} out of range")
    return etas.vectors[a] @ b.probs + etas.offset


def _znorm(dots: np.ndarray, z: float) -> float:
    # factor out the max so the sandwich max <= Q <= n^(1/z) * max holds
    # exactly in floating point and large z cannot overflow
    peak = dots.max()
    if peak <= 0.0:
        return 0.0
    return float(peak * np.sum((dots / peak) ** z) ** (1.0 / z))


def q_value(etas: SpovaParams, b: Belief, a: int) -> float:
    """Smooth-max action value: z-norm of the offset dot products."""
    return _znorm(_dots(etas, b, a), etas.z)


def v_value(etas: SpovaParams, b: Belief) -> tuple[float, int]:
    """Best action value and its index, ties broken toward the lowest index."""
    values = np.array([q_value(etas, b, a) for a in range(etas.n_actions)])
    best = int(np.argmax(values))
    return float(values[best]), best


def compensated_residual(etas: SpovaParams, t: Transition,
                         value_etas: SpovaParams | None = None) -> float:
    """Bellman residual with the positivity-offset bias compensation.

    ``value_etas`` scores the successor belief (a frozen target copy during
    training); terminal transitions drop the bootstrapped term but keep the
    compensation.
    """
    value_etas = etas if value_etas is None else value_etas
    future = 0.0 if t.terminal else etas.discount * v_value(value_etas, t.belief_after)[0]
    return future + t.reward - q_value(etas, t.belief_before, t.action) \
        + (1.0 - etas.discount) * etas.offset


def _delta(etas: SpovaParams, t: Transition, residual: float) -> np.ndarray:
    """Update for the acted action's vectors, shape (n, N)."""
    dots = _dots(etas, t.belief_before, t.action)
    q = _znorm(dots, etas.z)
    if q <= 0.0:
        return np.zeros((etas.n_vectors, etas.n_states))
    power = etas.z - 1.0 if etas.exponent_mode == "derivative" else etas.z
    ratios = (dots / q) ** power
    return etas.learning_rate * residual * ratios[:, None] * t.belief_before.probs[None, :]


def apply_update(etas: SpovaParams, t: Transition,
                 value_etas: SpovaParams | None = None) -> SpovaParams:
    """One gradient step on the acted action's vectors, projected to >= 0."""
    delta = _delta(etas, t, compensated_residual(etas, t, value_etas))
    if not np.all(np.isfinite(delta)):
        raise NumericFaultError("non-finite update; check z/offset configuration")
    vectors = np.array(etas.vectors)
    vectors[t.action] = np.maximum(vectors[t.action] + delta, 0.0)
    return replace(etas, vectors=vectors)


def train_step(etas: SpovaParams, target_etas: SpovaParams,
               minibatch: list[Transition]) -> SpovaParams:
    """Minibatch update: residuals against the frozen target, mean step.

    The caller refreshes ``target_etas`` with a copy of ``etas`` every C
    steps.
    """
    if not minibatch:
        raise InvalidInputError("minibatch must be non-empty")
    acc = np.zeros_like(etas.vectors)
    for t in minibatch:
        residual = compensated_residual(etas, t, target_etas)
        acc[t.action] += _delta(etas, t, residual)
    acc /= len(minibatch)
    if not np.all(np.isfinite(acc)):
        raise NumericFaultError("non-finite update; check z/offset configuration")
    vectors = np.maximum(etas.vectors + acc, 0.0)
    return replace(etas, vectors=vectors)


def select_action(etas: SpovaParams, b: Belief, epsilon: float, rng) -> int:
    """Epsilon-greedy over the action values; greedy when epsilon is 0."""
    if not 0.0 <= epsilon <= 1.0:
        raise InvalidInputError("epsilon must be in [0, 1]")
    if epsilon > 0.0 and rng.random() < epsilon:
        return int(rng.integers(etas.n_actions))
    return v_value(etas, b)[1]
