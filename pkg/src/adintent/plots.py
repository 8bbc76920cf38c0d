"""Figure rendering for the report paths.

Every report command writes CSV tables as the primary output and renders a
matplotlib figure next to them. Figures are presentation only; tests and
downstream tooling consume the CSVs.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def _finish(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_fit_curves(rows: list[dict], path) -> None:
    """Per-restart train/test log-likelihood curves of the EM fit."""
    fig, ax = plt.subplots(figsize=(6, 4))
    restarts = sorted({r["restart"] for r in rows})
    for restart in restarts:
        iters = [r["iteration"] for r in rows if r["restart"] == restart]
        train = [r["train_ll_per_obs"] for r in rows if r["restart"] == restart]
        test = [r["test_ll_per_obs"] for r in rows if r["restart"] == restart]
        ax.plot(iters, train, label=f"restart {restart} train", alpha=0.8)
        ax.plot(iters, test, linestyle="--", label=f"restart {restart} test", alpha=0.5)
    ax.set_xlabel("iteration")
    ax.set_ylabel("log-likelihood per observation")
    ax.set_title("Intent model fitting")
    if len(restarts) <= 4:
        ax.legend(fontsize=7)
    _finish(fig, path)


def plot_training_curves(curves: dict[str, list[dict]], path) -> None:
    """Discounted episode reward per agent, lightly smoothed."""
    fig, ax = plt.subplots(figsize=(6, 4))
    for kind, rows in curves.items():
        rewards = np.array([r["reward"] for r in rows])
        if len(rewards) >= 20:
            kernel = np.ones(10) / 10
            smooth = np.convolve(rewards, kernel, mode="valid")
            ax.plot(np.arange(len(smooth)) + 9, smooth, label=kind)
        else:
            ax.plot(rewards, label=kind)
    ax.set_xlabel("episode")
    ax.set_ylabel("discounted reward")
    ax.set_title("Training progress")
    ax.legend(fontsize=8)
    _finish(fig, path)


def plot_metrics(rows: list[dict], path) -> None:
    """Relative evaluation metrics, one bar group per agent."""
    fig, ax = plt.subplots(figsize=(7, 4))
    agents = [r["agent"] for r in rows]
    columns = ["revenue_rel", "cost_rel", "roi_rel", "reward_rel"]
    width = 0.2
    xs = np.arange(len(agents))
    for i, col in enumerate(columns):
        ax.bar(xs + (i - 1.5) * width, [r[col] for r in rows], width,
               label=col.removesuffix("_rel"))
    ax.axhline(100.0, color="gray", linewidth=0.8, linestyle=":")
    ax.set_xticks(xs, agents)
    ax.set_ylabel("% of manual")
    ax.set_title("Paired evaluation")
    ax.legend(fontsize=8)
    _finish(fig, path)


def plot_projection(coords: np.ndarray, labels: np.ndarray, path,
                    oracle_states=None) -> None:
    """Beliefs in the top-2 principal plane, colored by cluster."""
    n_panels = 2 if oracle_states is not None else 1
    fig, axes = plt.subplots(1, n_panels, figsize=(5 * n_panels, 4), squeeze=False)
    axes[0][0].scatter(coords[:, 0], coords[:, 1], c=labels, s=6, cmap="viridis")
    axes[0][0].set_title("belief clusters")
    if oracle_states is not None:
        axes[0][1].scatter(coords[:, 0], coords[:, 1], c=oracle_states, s=6, cmap="plasma")
        axes[0][1].set_title("oracle hidden states")
    for row in axes:
        for ax in row:
            ax.set_xlabel("component 1")
            ax.set_ylabel("component 2")
    _finish(fig, path)


def plot_stage_rewards(cluster_reward: np.ndarray, dominant_states, state_names, path) -> None:
    """Mean reward collected per belief cluster."""
    fig, ax = plt.subplots(figsize=(5, 4))
    k = len(cluster_reward)
    names = []
    for c in range(k):
        if dominant_states is not None and dominant_states[c] >= 0:
            names.append(f"cluster {c}\n({state_names[dominant_states[c]]})")
        else:
            names.append(f"cluster {c}")
    ax.bar(range(k), cluster_reward, color="tab:blue")
    ax.set_xticks(range(k), names, fontsize=8)
    ax.set_ylabel("mean reward per step")
    ax.set_title("Reward by belief stage")
    _finish(fig, path)


def plot_sweep(rows: list[dict], path) -> None:
    """Relative reward heatmap over the discount and vector-count grid."""
    discounts = sorted({r["discount"] for r in rows})
    n_vectors = sorted({r["n_vectors"] for r in rows})
    grid = np.full((len(discounts), len(n_vectors)), np.nan)
    for r in rows:
        grid[discounts.index(r["discount"]), n_vectors.index(r["n_vectors"])] = r["reward_rel"]
    fig, ax = plt.subplots(figsize=(6, 4))
    image = ax.imshow(grid, aspect="auto", origin="lower", cmap="viridis")
    ax.set_xticks(range(len(n_vectors)), n_vectors)
    ax.set_yticks(range(len(discounts)), discounts)
    ax.set_xlabel("vectors per action")
    ax.set_ylabel("discount")
    ax.set_title("Relative reward (% of manual)")
    fig.colorbar(image, ax=ax)
    _finish(fig, path)
