"""Flat key-value experiment configuration with typed keys and defaults.

Config files are plain text, one ``key = value`` per line, ``#`` comments.
List values are comma-separated; matrix values separate rows with ``;``.
Unknown keys and malformed values are configuration errors. All defaults
are synthetic and documented here; none of the world-truth numbers are
measurements.
"""

from __future__ import annotations

import hashlib
import json
import math

import numpy as np

from .env import (
    DEFAULT_OBS_CARDINALITIES,
    CompetitionConfig,
    Item,
    ObservationSpec,
    RewardConfig,
    WorldTruth,
)


class ConfigError(ValueError):
    """Bad key, bad type, or unreadable config file."""


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("true", "1", "yes", "on"):
        return True
    if low in ("false", "0", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_floats(text: str) -> tuple[float, ...]:
    return tuple(float(p) for p in text.split(","))


def _parse_ints(text: str) -> tuple[int, ...]:
    return tuple(int(p) for p in text.split(","))


def _parse_matrix(text: str) -> tuple[tuple[float, ...], ...]:
    return tuple(_parse_floats(row) for row in text.split(";"))


_PARSERS = {
    "int": int,
    "float": float,
    "str": str.strip,
    "bool": _parse_bool,
    "floats": _parse_floats,
    "ints": _parse_ints,
    "matrix": _parse_matrix,
}

# key -> (type, default, unit/meaning)
SCHEMA: dict[str, tuple[str, object, str]] = {
    "seed": ("int", 0, "master seed; every stream derives from it"),
    # representative item of the category under study
    "env.category": ("str", "cat-0", "category id stamped on trajectories"),
    "env.price": ("float", 10.0, "item price (currency)"),
    "env.bid": ("float", 1.0, "advertiser bid per click (currency)"),
    "env.pctr": ("float", 0.1, "predicted CTR of the item, in [0,1]"),
    # auction competition (log-normal rank scores)
    "env.competitor_log_mean": ("float", math.log(0.1), "mean of log competitor rank score"),
    "env.competitor_log_sigma": ("float", 1.0, "stddev of log competitor rank score"),
    "env.competitors": ("int", 1, "competitor scores drawn per request"),
    "env.top_k": ("int", 1, "ad slots per request"),
    # reward shaping
    "env.lambda_scale": ("float", 5.0, "revenue scaling balancing sparse purchases"),
    "env.beta_boost": ("float", 1.2, "bid punishment multiplier for the boost action"),
    "env.deltas": ("floats", (10.0, 1.0, 0.1), "rank-score ratios: boost, keep, restrain"),
    "env.horizon": ("int", 8, "requests per episode (decision window)"),
    # ground-truth latent intent dynamics (synthetic defaults)
    "env.b0": ("floats", (0.73, 0.24, 0.03), "initial intent distribution"),
    "env.display_transition": (
        "matrix",
        ((0.55, 0.40, 0.05), (0.05, 0.50, 0.45), (0.02, 0.08, 0.90)),
        "intent transition rows applied when the ad is displayed"),
    "env.nodisplay_transition": (
        "matrix",
        ((0.98, 0.02, 0.00), (0.25, 0.70, 0.05), (0.05, 0.20, 0.75)),
        "intent transition rows applied when the ad is not displayed"),
    "env.click_prob": (
        "matrix",
        ((0.05, 0.06), (0.30, 0.35), (0.60, 0.65)),
        "click probability per (intent state, scenario)"),
    "env.purchase_given_click": ("floats", (0.02, 0.12, 0.35),
                                 "purchase probability per intent state given a click"),
    "env.scenario_switch_prob": ("float", 0.25, "per-request scenario switch probability"),
    "env.obs_cardinalities": ("ints", DEFAULT_OBS_CARDINALITIES,
                              "symbols per observation dimension"),
    # data generation
    "data.episodes": ("int", 2000, "episodes rolled out by gen-data"),
    "data.train_fraction": ("float", 0.9, "train split fraction of trajectories"),
    "data.mix_random": ("float", 0.55, "behavior mix: uniform random actions"),
    "data.mix_boost": ("float", 0.15, "behavior mix: always boost"),
    "data.mix_keep": ("float", 0.15, "behavior mix: always keep"),
    "data.mix_restrain": ("float", 0.15, "behavior mix: always restrain"),
    # EM fitting
    "em.states": ("int", 3, "hidden intent states fitted"),
    "em.restarts": ("int", 5, "random restarts; best train log-likelihood wins"),
    "em.max_iters": ("int", 60, "EM iterations per restart"),
    "em.tol": ("float", 1e-5, "per-observation log-likelihood improvement cutoff"),
    "em.pseudocount": ("float", 1e-3, "additive smoothing of the re-estimation counts"),
    # shared agent settings
    "agents.discount": ("float", 0.9, "discount used by learners and the reward metric"),
    "agents.epsilon_start": ("float", 1.0, "exploration schedule start"),
    "agents.epsilon_end": ("float", 0.05, "exploration schedule floor"),
    "agents.epsilon_decay_steps": ("int", 1200, "env steps to anneal epsilon over"),
    "agents.replay_capacity": ("int", 50000, "transition replay capacity"),
    "agents.minibatch": ("int", 32, "transitions per update"),
    "agents.target_refresh": ("int", 200, "updates between target copies"),
    # the smooth-max policy learner
    "spova.n_vectors": ("int", 5, "value vectors per action"),
    "spova.z": ("float", 2.0, "smooth-max exponent"),
    "spova.offset": ("float", 1.0, "positivity offset on dot products"),
    "spova.learning_rate": ("float", 0.05, "gradient step size"),
    "spova.exponent_mode": ("str", "derivative", "'derivative' or 'paper' update exponent"),
    # belief-input baseline Q network
    "emq.hidden_width": ("int", 32, "units per hidden layer"),
    "emq.hidden_layers": ("int", 2, "hidden layers"),
    "emq.learning_rate": ("float", 0.01, "SGD step size"),
    # observation-input tabular Q baseline
    "tabq.learning_rate": ("float", 0.2, "tabular Q-learning step size"),
    # contextual bandit baseline
    "bandit.epsilon": ("float", 0.05, "bandit exploration floor during training"),
    # training loop
    "train.episodes": ("int", 400, "episodes per trained agent"),
    "train.em_refresh_rate": ("float", 0.01, "estimator blend weight per epoch; 0 disables"),
    "train.em_refresh_iters": ("int", 2, "EM iterations per refresh"),
    "train.em_refresh_sample": ("int", 64, "trajectories sampled per refresh"),
    "train.em_refresh_min": ("int", 64, "replayed trajectories required before refreshing"),
    "train.checkpoint_every": ("int", 100, "episodes between checkpoint writes"),
    # paired evaluation
    "eval.episodes": ("int", 2000, "paired evaluation episodes per agent"),
    # interpretability report
    "interpret.uniform_weights": ("bool", False,
                                  "marginalize over actions uniformly instead of empirically"),
    "interpret.kmeans_iters": ("int", 100, "k-means iteration cap"),
    # hyper-parameter sweep
    "sweep.discounts": ("floats", (0.1, 0.3, 0.5, 0.7, 0.9), "discount grid"),
    "sweep.n_vectors": ("ints", (1, 2, 3, 4, 5), "vectors-per-action grid"),
    "sweep.episodes": ("int", 80, "training episodes per sweep cell"),
    "sweep.eval_episodes": ("int", 300, "evaluation episodes per sweep cell"),
}


def default_config() -> dict:
    return {key: default for key, (_, default, _) in SCHEMA.items()}


def parse_value(key: str, text: str):
    if key not in SCHEMA:
        raise ConfigError(f"unknown config key: {key}")
    kind = SCHEMA[key][0]
    try:
        return _PARSERS[kind](text)
    except ValueError as err:
        raise ConfigError(f"bad value for {key} (expected {kind}): {text!r}") from err


def load_config(path=None, overrides: dict | None = None) -> dict:
    """Defaults, overlaid by a config file, overlaid by explicit overrides."""
    cfg = default_config()
    if path is not None:
        try:
            with open(path, "r", encoding="utf-8") as fh:
                lines = fh.readlines()
        except OSError as err:
            raise ConfigError(f"cannot read config file {path}: {err}") from err
        for lineno, line in enumerate(lines, start=1):
            body = line.split("#", 1)[0].strip()
            if not body:
                continue
            if "=" not in body:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, text = (part.strip() for part in body.split("=", 1))
            cfg[key] = parse_value(key, text)
    if overrides:
        for key, value in overrides.items():
            if key not in SCHEMA:
                raise ConfigError(f"unknown config key: {key}")
            cfg[key] = value
    return cfg


def dump_config(cfg: dict) -> str:
    """Render a config as a loadable file, one documented key per line."""
    lines = []
    for key, (kind, _, help_text) in SCHEMA.items():
        value = cfg[key]
        if kind == "matrix":
            text = "; ".join(",".join(repr(x) for x in row) for row in value)
        elif kind in ("floats", "ints"):
            text = ",".join(repr(x) for x in value)
        else:
            text = str(value)
        lines.append(f"{key} = {text}  # {help_text}")
    return "\n".join(lines) + "\n"


def config_hash(cfg: dict) -> str:
    """Stable digest of a config for run manifests."""
    canon = json.dumps({k: cfg[k] for k in sorted(cfg)}, sort_keys=True, default=list)
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()


def build_world(cfg: dict) -> WorldTruth:
    return WorldTruth(
        b0=np.array(cfg["env.b0"]),
        display_transition=np.array(cfg["env.display_transition"]),
        nodisplay_transition=np.array(cfg["env.nodisplay_transition"]),
        click_prob=np.array(cfg["env.click_prob"]),
        purchase_given_click=np.array(cfg["env.purchase_given_click"]),
        scenario_switch_prob=cfg["env.scenario_switch_prob"],
    )


def build_item(cfg: dict) -> Item:
    return Item(item_id="item-0", category_id=cfg["env.category"],
                price=cfg["env.price"], bid=cfg["env.bid"], pctr=cfg["env.pctr"])


def build_reward(cfg: dict) -> RewardConfig:
    deltas = cfg["env.deltas"]
    if len(deltas) != 3:
        raise ConfigError("env.deltas needs exactly three ratios")
    return RewardConfig(lambda_scale=cfg["env.lambda_scale"],
                        beta_boost=cfg["env.beta_boost"],
                        horizon=cfg["env.horizon"], deltas=tuple(deltas))


def build_competition(cfg: dict) -> CompetitionConfig:
    return CompetitionConfig(log_mean=cfg["env.competitor_log_mean"],
                             log_sigma=cfg["env.competitor_log_sigma"],
                             n_competitors=cfg["env.competitors"],
                             top_k=cfg["env.top_k"])


def build_obs_spec(cfg: dict) -> ObservationSpec:
    return ObservationSpec.integer_counts(tuple(cfg["env.obs_cardinalities"]))
