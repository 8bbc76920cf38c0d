"""Interpretability statistics over a learned model and logged beliefs.

Summarizes what each hidden state means: per-state expected observation
values (marginalized over actions), marginal state transitions, the initial
distribution, a 2-D projection of logged beliefs (top-2 principal
directions via seeded power iteration), k-means clusters over the beliefs,
their purity against oracle hidden-path labels, and per-cluster mean
rewards.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import GuardSizeError, InvalidInputError
from .hmm import ModelParams

POWER_ITERS = 1000
POWER_TOL = 1e-13


def action_frequencies(actions, n_actions: int) -> np.ndarray:
    """Empirical action distribution used to marginalize over actions."""
    actions = np.asarray(actions, dtype=np.int64)
    if actions.size == 0:
        raise InvalidInputError("no actions to count")
    counts = np.bincount(actions, minlength=n_actions).astype(float)
    return counts / counts.sum()


def expectation_table(params: ModelParams, action_weights=None) -> np.ndarray:
    """Per-state expected observed value of every dimension, (N, G).

    The observed value of a symbol is its bin index, so entry (i, g) is
    sum_a w_a * sum_m m * O[g][a, i, m].
    """
    weights = _weights(params, action_weights)
    table = np.zeros((params.n_states, len(params.O)))
    for g, o in enumerate(params.O):
        symbol_values = np.arange(o.shape[2], dtype=float)
        per_action = o @ symbol_values              # (A, N)
        table[:, g] = weights @ per_action
    return table


def marginal_transitions(params: ModelParams, action_weights=None) -> np.ndarray:
    """Action-marginalized state transition matrix, (N, N)."""
    weights = _weights(params, action_weights)
    return np.einsum("a,aij->ij", weights, params.T)


def _weights(params: ModelParams, action_weights) -> np.ndarray:
    if action_weights is None:
        return np.full(params.n_actions, 1.0 / params.n_actions)
    weights = np.asarray(action_weights, dtype=float)
    if weights.shape != (params.n_actions,) or np.any(weights < 0):
        raise InvalidInputError("action weights must be a nonnegative vector per action")
    return weights / weights.sum()


def pca_top2(points: np.ndarray, seed: int = 0):
    """Top-2 principal directions by power iteration with deflation.

    Returns (coords, components, eigenvalues); coordinates are the centered
    points projected on the two components. Deterministic for a fixed seed.
    """
    points = np.asarray(points, dtype=float)
    if points.ndim != 2 or points.shape[0] < 2:
        raise InvalidInputError("need at least two points to project")
    centered = points - points.mean(axis=0)
    cov = centered.T @ centered / (points.shape[0] - 1)
    rng = np.random.default_rng(seed)

    components, eigenvalues = [], []
    work = cov.copy()
    for _ in range(2):
        vec = rng.normal(size=cov.shape[0])
        vec /= np.linalg.norm(vec)
        for _ in range(POWER_ITERS):
            nxt = work @ vec
            norm = np.linalg.norm(nxt)
            if norm < 1e-300:
                break
            nxt /= norm
            if np.linalg.norm(nxt - vec) < POWER_TOL:
                vec = nxt
                break
            vec = nxt
        # deterministic sign: largest-magnitude coordinate positive
        anchor = int(np.argmax(np.abs(vec)))
        if vec[anchor] < 0:
            vec = -vec
        lam = float(vec @ work @ vec)
        components.append(vec)
        eigenvalues.append(lam)
        work = work - lam * np.outer(vec, vec)
    components = np.stack(components)
    return centered @ components.T, components, np.array(eigenvalues)


def kmeans(points: np.ndarray, k: int, seed: int = 0, max_iters: int = 100):
    """Seeded k-means with distinct-point init and lowest-index tie-breaks."""
    points = np.asarray(points, dtype=float)
    if points.shape[0] < k:
        raise GuardSizeError(f"need at least {k} points to form {k} clusters")
    unique = np.unique(points, axis=0)
    if unique.shape[0] < k:
        raise GuardSizeError(f"only {unique.shape[0]} distinct points for {k} clusters")

    rng = np.random.default_rng(seed)
    centers = unique[rng.choice(unique.shape[0], size=k, replace=False)]
    labels = np.full(points.shape[0], -1)
    for _ in range(max_iters):
        dists = np.linalg.norm(points[:, None, :] - centers[None, :, :], axis=2)
        new_labels = np.argmin(dists, axis=1)      # first minimum wins ties
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for c in range(k):
            members = points[labels == c]
            if len(members):
                centers[c] = members.mean(axis=0)
    return labels, centers


def cluster_purity(labels: np.ndarray, oracle_states: np.ndarray, k: int):
    """Dominant-state purity per cluster and overall.

    Returns (overall_purity, dominant_state_per_cluster, per_cluster_purity).
    """
    labels = np.asarray(labels)
    oracle_states = np.asarray(oracle_states)
    if labels.shape != oracle_states.shape:
        raise InvalidInputError("labels and oracle states must align")
    dominant, per_cluster, hits = [], [], 0
    for c in range(k):
        states = oracle_states[labels == c]
        if len(states) == 0:
            dominant.append(-1)
            per_cluster.append(0.0)
            continue
        counts = np.bincount(states)
        dominant.append(int(np.argmax(counts)))
        per_cluster.append(float(counts.max() / len(states)))
        hits += int(counts.max())
    return hits / len(labels), dominant, per_cluster


@dataclass
class InterpretReport:
    expectation: np.ndarray          # (N, G) expected observation values
    marginal_t: np.ndarray           # (N, N) action-marginalized transitions
    b0: np.ndarray                   # (N,) learned initial distribution
    action_weights: np.ndarray       # (A,) marginalization weights
    coords: np.ndarray               # (n, 2) projected beliefs
    labels: np.ndarray               # (n,) cluster assignments
    cluster_reward: np.ndarray       # (k,) mean reward per cluster
    purity: float | None             # vs oracle labels; None without oracle
    dominant_states: list[int] | None
    per_cluster_purity: list[float] | None


def build_report(params: ModelParams, beliefs: np.ndarray, rewards: np.ndarray,
                 actions: np.ndarray, oracle_states=None, seed: int = 0,
                 uniform_weights: bool = False, kmeans_iters: int = 100,
                 ) -> InterpretReport:
    beliefs = np.asarray(beliefs, dtype=float)
    rewards = np.asarray(rewards, dtype=float)
    k = params.n_states
    if beliefs.ndim != 2 or beliefs.shape[1] != k:
        raise InvalidInputError("beliefs must be (n, n_states)")
    if beliefs.shape[0] < k:
        raise GuardSizeError(f"need at least {k} beliefs to form {k} clusters")

    weights = None if uniform_weights else action_frequencies(actions, params.n_actions)
    coords, _, _ = pca_top2(beliefs, seed=seed)
    labels, _ = kmeans(beliefs, k, seed=seed, max_iters=kmeans_iters)
    cluster_reward = np.array([
        rewards[labels == c].mean() if np.any(labels == c) else 0.0 for c in range(k)])

    purity = dominant = per_cluster = None
    if oracle_states is not None:
        purity, dominant, per_cluster = cluster_purity(labels, oracle_states, k)

    return InterpretReport(
        expectation=expectation_table(params, weights),
        marginal_t=marginal_transitions(params, weights),
        b0=np.array(params.b0),
        action_weights=_weights(params, weights),
        coords=coords,
        labels=labels,
        cluster_reward=cluster_reward,
        purity=purity,
        dominant_states=dominant,
        per_cluster_purity=per_cluster,
    )
