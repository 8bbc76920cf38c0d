"""Experiment orchestration: generate data, fit, train, evaluate, interpret.

Every random stream derives from the master seed and a purpose label, so a
(config, seed) pair reproduces byte-identical CSV outputs on the
single-threaded path. Evaluation is paired: every agent sees the same
environment seed per episode index.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import plots
from .agents import (
    AGENT_KINDS,
    BanditAgent,
    DisaAgent,
    EmQAgent,
    EpsilonSchedule,
    ManualAgent,
    ObsTransition,
    ReplayMemory,
    TabularQAgent,
)
from .belief import ema_blend
from .config import (
    build_competition,
    build_item,
    build_obs_spec,
    build_reward,
    build_world,
    config_hash,
)
from .dataio import (
    load_checkpoint,
    load_eval_log,
    load_model,
    load_trajectories,
    save_checkpoint,
    save_eval_log,
    save_hidden_paths,
    save_manifest,
    save_model,
    save_trajectories,
    write_csv,
)
from .env import BOOST, KEEP, RESTRAIN, EnvState, discretize, rollout_episode, step
from .errors import DegenerateLikelihoodError, InvalidInputError
from .hmm import ModelParams, em_fit, random_params, score_trajectories
from .interpret import build_report
from .spova import Transition


def derive_seed(base: int, *parts) -> int:
    """Deterministic named substream seed."""
    payload = ":".join([str(base)] + [str(p) for p in parts])
    return int.from_bytes(hashlib.sha256(payload.encode("utf-8")).digest()[:8], "big")


@dataclass(frozen=True)
class EnvBundle:
    world: object
    item: object
    reward_cfg: object
    competition: object
    obs_spec: object

    @classmethod
    def from_config(cls, cfg: dict) -> "EnvBundle":
        return cls(world=build_world(cfg), item=build_item(cfg),
                   reward_cfg=build_reward(cfg), competition=build_competition(cfg),
                   obs_spec=build_obs_spec(cfg))

    @property
    def horizon(self) -> int:
        return self.reward_cfg.horizon


# ---------------------------------------------------------------- gen-data

_BEHAVIOR_POLICIES = ("random", "boost", "keep", "restrain")


def _behavior_chooser(name: str, rng):
    fixed = {"boost": BOOST, "keep": KEEP, "restrain": RESTRAIN}
    if name == "random":
        return lambda t, prev: int(rng.integers(3))
    action = fixed[name]
    return lambda t, prev: action


def generate_dataset(cfg: dict, out_dir) -> dict:
    """Roll behavior-mix episodes; write train/test JSONL plus oracle paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    bundle = EnvBundle.from_config(cfg)
    seed = cfg["seed"]
    episodes = cfg["data.episodes"]
    mix = np.array([cfg["data.mix_random"], cfg["data.mix_boost"],
                    cfg["data.mix_keep"], cfg["data.mix_restrain"]])
    if np.any(mix < 0) or mix.sum() <= 0:
        raise InvalidInputError("behavior mix weights must be nonnegative and not all zero")
    mix = mix / mix.sum()

    trajs, hidden_records = [], []
    for ep in range(episodes):
        rng = np.random.default_rng(derive_seed(seed, "gen", ep))
        policy = _BEHAVIOR_POLICIES[int(rng.choice(len(mix), p=mix))]
        chooser = _behavior_chooser(policy, rng)
        traj, hidden = rollout_episode(
            bundle.world, bundle.item, chooser, bundle.horizon, rng,
            bundle.reward_cfg, bundle.competition, bundle.obs_spec,
            user_id=f"u{ep:06d}")
        trajs.append(traj)
        hidden_records.append({"user": traj.user_id, "category": traj.category_id,
                               "states": [int(s) for s in hidden]})

    n_train = int(round(episodes * cfg["data.train_fraction"]))
    save_trajectories(out / "train.jsonl", trajs[:n_train])
    save_trajectories(out / "test.jsonl", trajs[n_train:])
    save_hidden_paths(out / "train_hidden.jsonl", hidden_records[:n_train])
    save_hidden_paths(out / "test_hidden.jsonl", hidden_records[n_train:])
    manifest = {
        "seed": seed,
        "config_sha256": config_hash(cfg),
        "episodes": episodes,
        "train_count": n_train,
        "test_count": episodes - n_train,
        "horizon": bundle.horizon,
    }
    save_manifest(out / "manifest.json", manifest)
    return manifest


# ----------------------------------------------------------------- fit-hmm

def fit_intent_model(cfg: dict, data_dir, out_dir) -> tuple[ModelParams, list[dict]]:
    """Best-of-restarts EM fit with per-iteration train/test curves."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    train = load_trajectories(Path(data_dir) / "train.jsonl")
    test = load_trajectories(Path(data_dir) / "test.jsonl")
    if not train:
        raise InvalidInputError("training dataset is empty")
    bundle = EnvBundle.from_config(cfg)
    dims = bundle.obs_spec.cardinalities
    n_states = cfg["em.states"]
    if n_states < 2:
        raise InvalidInputError("em.states must be >= 2")
    seed = cfg["seed"]
    train_steps = sum(len(t) for t in train)
    test_steps = sum(len(t) for t in test)

    rows: list[dict] = []
    best_params, best_ll = None, -np.inf
    for restart in range(cfg["em.restarts"]):
        rng = np.random.default_rng(derive_seed(seed, "em-init", restart))
        params = random_params(n_states, 3, dims, rng)
        prev_per_obs = None
        try:
            for iteration in range(cfg["em.max_iters"]):
                result = em_fit(train, params, max_iters=1, tol=0.0,
                                pseudocount=cfg["em.pseudocount"])
                train_ll = result.history[0]
                test_ll = score_trajectories(result.params, test) if test else float("nan")
                rows.append({
                    "restart": restart,
                    "iteration": iteration,
                    "train_ll": train_ll,
                    "test_ll": test_ll,
                    "train_ll_per_obs": train_ll / train_steps,
                    "test_ll_per_obs": test_ll / test_steps if test else float("nan"),
                })
                params = result.params
                per_obs = train_ll / train_steps
                if prev_per_obs is not None and per_obs - prev_per_obs < cfg["em.tol"]:
                    break
                prev_per_obs = per_obs
        except DegenerateLikelihoodError as err:
            rows.append({"restart": restart, "iteration": -1, "train_ll": float("nan"),
                         "test_ll": float("nan"), "train_ll_per_obs": float("nan"),
                         "test_ll_per_obs": float("nan")})
            continue
        final_ll = score_trajectories(params, train)
        if final_ll > best_ll:
            best_ll, best_params = final_ll, params

    if best_params is None:
        raise DegenerateLikelihoodError(-1, "every EM restart degenerated")

    save_model(out / "model.json", best_params)
    write_csv(out / "fit_report.csv",
              ["restart", "iteration", "train_ll", "test_ll",
               "train_ll_per_obs", "test_ll_per_obs"],
              [[r["restart"], r["iteration"], r["train_ll"], r["test_ll"],
                r["train_ll_per_obs"], r["test_ll_per_obs"]] for r in rows])
    save_manifest(out / "fit_summary.json", {
        "best_train_ll": best_ll,
        "n_states": n_states,
        "restarts": cfg["em.restarts"],
        "note": ("state count chosen where the converged log probability "
                 "stops improving appreciably; see fit_report.csv"),
    })
    plots.plot_fit_curves([r for r in rows if r["iteration"] >= 0], out / "fit_curves.png")
    return best_params, rows


# ------------------------------------------------------------------ agents

def build_agent(kind: str, cfg: dict, estimator: ModelParams | None, init_seed: int):
    common = dict(discount=cfg["agents.discount"],
                  replay_capacity=cfg["agents.replay_capacity"],
                  minibatch=cfg["agents.minibatch"],
                  target_refresh=cfg["agents.target_refresh"])
    if kind == "manual":
        return ManualAgent()
    if kind == "bandit":
        return BanditAgent(n_actions=3)
    if kind == "tabular_q":
        return TabularQAgent(n_actions=3, learning_rate=cfg["tabq.learning_rate"],
                             discount=cfg["agents.discount"])
    if kind == "em_q":
        if estimator is None:
            raise InvalidInputError("em_q needs a fitted intent model")
        return EmQAgent(estimator, n_actions=3, hidden_width=cfg["emq.hidden_width"],
                        hidden_layers=cfg["emq.hidden_layers"],
                        learning_rate=cfg["emq.learning_rate"], rng=init_seed, **common)
    if kind == "disa":
        if estimator is None:
            raise InvalidInputError("disa needs a fitted intent model")
        return DisaAgent(estimator, n_actions=3, n_vectors=cfg["spova.n_vectors"],
                         z=cfg["spova.z"], offset=cfg["spova.offset"],
                         learning_rate=cfg["spova.learning_rate"],
                         exponent_mode=cfg["spova.exponent_mode"], rng=init_seed, **common)
    raise InvalidInputError(f"unknown agent kind {kind!r} (choose from {AGENT_KINDS})")


@dataclass
class EpisodeResult:
    traj: object
    hidden: list[int]
    revenue: float
    cost: float
    reward_discounted: float
    beliefs: list | None


def run_episode(agent, bundle: EnvBundle, env_rng, agent_rng, epsilon_for_step,
                discount: float, train: bool, collect_beliefs: bool = False,
                step_counter: list | None = None) -> EpisodeResult:
    """Drive one episode through the shared environment adapter.

    All agent kinds perceive exactly the same observation, action, and
    reward streams; ``epsilon_for_step`` maps the global step count to the
    exploration rate.
    """
    from .hmm import Trajectory

    agent.begin_episode()
    state = EnvState.initial(bundle.world, env_rng)
    prev_obs = None
    steps, hidden = [], []
    beliefs = [] if collect_beliefs else None
    revenue = cost = reward_acc = 0.0
    for t in range(bundle.horizon):
        global_step = step_counter[0] if step_counter is not None else 0
        epsilon = epsilon_for_step(global_step) if train else 0.0
        belief_before = agent.belief if agent.uses_beliefs else None
        action = agent.act(agent_rng, epsilon)
        outcome = step(bundle.world, state, bundle.item, action,
                       bundle.reward_cfg, bundle.competition, env_rng)
        symbols = discretize(outcome.obs_raw, bundle.obs_spec)
        agent.observe(action, symbols)
        terminal = t == bundle.horizon - 1

        if train:
            if agent.uses_beliefs:
                transition = Transition(belief_before=belief_before, action=action,
                                        reward=outcome.reward, belief_after=agent.belief,
                                        terminal=terminal)
            else:
                transition = ObsTransition(
                    obs_before=None if prev_obs is None else tuple(int(v) for v in prev_obs),
                    action=action, reward=outcome.reward,
                    obs_after=tuple(int(v) for v in symbols), terminal=terminal)
            agent.record_and_learn(transition, agent_rng)
        if step_counter is not None:
            step_counter[0] += 1

        if collect_beliefs and agent.uses_beliefs:
            beliefs.append(agent.belief.probs.tolist())
        revenue += bundle.reward_cfg.lambda_scale * bundle.item.price * outcome.purchase
        cost += (bundle.reward_cfg.beta_boost if action == BOOST else 1.0) \
            * bundle.item.bid * outcome.click
        reward_acc += discount ** t * outcome.reward
        steps.append((action, symbols, outcome.reward, outcome.click, outcome.purchase))
        hidden.append(outcome.next_state.intent)
        state = outcome.next_state
        prev_obs = symbols

    traj = Trajectory.from_steps(steps, user_id="", category_id=bundle.item.category_id)
    return EpisodeResult(traj=traj, hidden=hidden, revenue=revenue, cost=cost,
                         reward_discounted=reward_acc, beliefs=beliefs)


# ------------------------------------------------------------------- train

def train_agents(cfg: dict, model: ModelParams | None, out_dir,
                 kinds: list[str]) -> dict:
    """Trajectory-replay training loop for each requested agent kind.

    Belief agents refresh their estimator each episode from replayed
    trajectories (warm-start re-estimation blended at the configured rate);
    rate 0 reproduces a fixed-estimator run bit-identically.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    bundle = EnvBundle.from_config(cfg)
    seed = cfg["seed"]
    schedule = EpsilonSchedule(start=cfg["agents.epsilon_start"],
                               end=cfg["agents.epsilon_end"],
                               decay_steps=cfg["agents.epsilon_decay_steps"])
    curves: dict[str, list[dict]] = {}
    agents = {}
    for kind in kinds:
        agent = build_agent(kind, cfg, model, derive_seed(seed, "agent-init", kind))
        agents[kind] = agent
        rows = _train_single(agent, cfg, bundle, schedule, out)
        curves[kind] = rows
        write_csv(out / f"training_{kind}.csv",
                  ["episode", "epsilon", "reward", "revenue", "cost", "roi"],
                  [[r["episode"], r["epsilon"], r["reward"], r["revenue"], r["cost"],
                    r["roi"]] for r in rows])
    plots.plot_training_curves(curves, out / "training_curves.png")
    return agents


def _train_single(agent, cfg: dict, bundle: EnvBundle, schedule: EpsilonSchedule,
                  out: Path) -> list[dict]:
    seed = cfg["seed"]
    kind = agent.kind
    episodes = cfg["train.episodes"]
    refresh_rate = cfg["train.em_refresh_rate"]
    traj_replay = ReplayMemory(cfg["agents.replay_capacity"])
    learn_rng = np.random.default_rng(derive_seed(seed, "train-learn", kind))
    refresh_rng = np.random.default_rng(derive_seed(seed, "train-refresh", kind))
    step_counter = [0]
    rows = []
    for ep in range(episodes):
        if (agent.uses_beliefs and refresh_rate > 0.0 and ep > 0
                and len(traj_replay) >= cfg["train.em_refresh_min"]):
            sample = traj_replay.sample(
                refresh_rng, min(cfg["train.em_refresh_sample"], len(traj_replay)))
            try:
                refit = em_fit(sample, agent.estimator,
                               max_iters=cfg["train.em_refresh_iters"], tol=0.0,
                               pseudocount=cfg["em.pseudocount"])
                agent.set_estimator(ema_blend(agent.estimator, refit.params, refresh_rate))
            except DegenerateLikelihoodError:
                pass  # skip the refresh; the previous estimator stays in force
        env_rng = np.random.default_rng(derive_seed(seed, "train-env", kind, ep))
        agent_rng = np.random.default_rng(derive_seed(seed, "train-act", kind, ep))
        result = run_episode(agent, bundle, env_rng, agent_rng, schedule.value,
                             cfg["agents.discount"], train=True, step_counter=step_counter)
        traj_replay.add(result.traj)
        rows.append({
            "episode": ep,
            "epsilon": schedule.value(max(step_counter[0] - 1, 0)),
            "reward": result.reward_discounted,
            "revenue": result.revenue,
            "cost": result.cost,
            "roi": result.revenue / result.cost if result.cost > 0 else float("nan"),
        })
        if (ep + 1) % cfg["train.checkpoint_every"] == 0 or ep == episodes - 1:
            _save_agent(out / f"checkpoint_{kind}.json", agent)
    return rows


def _save_agent(path, agent) -> None:
    payload = {"kind": agent.kind, "state": agent.state_dict()}
    if agent.uses_beliefs:
        from .dataio import params_to_dict
        payload["estimator"] = params_to_dict(agent.estimator)
    save_checkpoint(path, payload)


def load_agent(path, cfg: dict):
    from .dataio import params_from_dict
    payload = load_checkpoint(path)
    estimator = params_from_dict(payload["estimator"]) if "estimator" in payload else None
    agent = build_agent(payload["kind"], cfg, estimator, init_seed=0)
    agent.load_state(payload["state"])
    return agent


# ---------------------------------------------------------------- evaluate

def evaluate_agents(cfg: dict, agents: dict, out_dir) -> list[dict]:
    """Greedy paired evaluation; metrics relative to the manual row."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    bundle = EnvBundle.from_config(cfg)
    seed = cfg["seed"]
    episodes = cfg["eval.episodes"]
    if "manual" not in agents:
        agents = {"manual": ManualAgent(), **agents}

    totals = {kind: {"revenue": 0.0, "cost": 0.0, "reward": 0.0} for kind in agents}
    logs = {kind: [] for kind in agents if agents[kind].uses_beliefs}
    for kind, agent in agents.items():
        agent_rng = np.random.default_rng(derive_seed(seed, "eval-act", kind))
        for ep in range(episodes):
            env_rng = np.random.default_rng(derive_seed(seed, "eval-env", ep))
            result = run_episode(agent, bundle, env_rng, agent_rng, lambda s: 0.0,
                                 cfg["agents.discount"], train=False,
                                 collect_beliefs=agent.uses_beliefs)
            totals[kind]["revenue"] += result.revenue
            totals[kind]["cost"] += result.cost
            totals[kind]["reward"] += result.reward_discounted
            if kind in logs:
                logs[kind].append({
                    "episode": ep,
                    "agent": kind,
                    "beliefs": result.beliefs,
                    "actions": [int(a) for a in result.traj.actions],
                    "rewards": [float(r) for r in result.traj.rewards],
                    "states": [int(s) for s in result.hidden],
                })

    manual = totals["manual"]
    rows = []
    for kind in agents:
        t = totals[kind]
        roi = t["revenue"] / t["cost"] if t["cost"] > 0 else float("nan")
        manual_roi = manual["revenue"] / manual["cost"] if manual["cost"] > 0 else float("nan")
        rows.append({
            "agent": kind,
            "revenue": t["revenue"],
            "cost": t["cost"],
            "roi": roi,
            "reward": t["reward"],
            "revenue_rel": 100.0 * t["revenue"] / manual["revenue"],
            "cost_rel": 100.0 * t["cost"] / manual["cost"],
            "roi_rel": 100.0 * roi / manual_roi,
            "reward_rel": 100.0 * t["reward"] / manual["reward"],
        })
    write_csv(out / "metrics.csv",
              ["agent", "revenue", "cost", "roi", "reward",
               "revenue_rel", "cost_rel", "roi_rel", "reward_rel"],
              [[r["agent"], r["revenue"], r["cost"], r["roi"], r["reward"],
                r["revenue_rel"], r["cost_rel"], r["roi_rel"], r["reward_rel"]]
               for r in rows])
    for kind, episodes_log in logs.items():
        save_eval_log(out / f"eval_log_{kind}.jsonl", episodes_log)
    plots.plot_metrics(rows, out / "metrics.png")
    return rows


# --------------------------------------------------------------- interpret

def interpret_model(cfg: dict, model: ModelParams, eval_log_path, out_dir) -> dict:
    """Expectation tables, marginal transitions, projection, clusters, purity."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    episodes = load_eval_log(eval_log_path)
    beliefs, rewards, actions, states = [], [], [], []
    for ep in episodes:
        beliefs.extend(ep["beliefs"])
        rewards.extend(ep["rewards"])
        actions.extend(ep["actions"])
        states.extend(ep.get("states", []))
    beliefs = np.array(beliefs, dtype=float)
    rewards = np.array(rewards, dtype=float)
    actions = np.array(actions, dtype=np.int64)
    oracle = np.array(states, dtype=np.int64) if len(states) == len(rewards) else None

    report = build_report(model, beliefs, rewards, actions, oracle_states=oracle,
                          seed=cfg["seed"], uniform_weights=cfg["interpret.uniform_weights"],
                          kmeans_iters=cfg["interpret.kmeans_iters"])

    from .env import OBS_NAMES
    dim_names = list(OBS_NAMES[: report.expectation.shape[1]])
    write_csv(out / "expectation.csv", ["state", "b0"] + dim_names,
              [[f"s{i}", report.b0[i]] + [report.expectation[i, g] for g in range(len(dim_names))]
               for i in range(model.n_states)])
    write_csv(out / "transitions.csv",
              ["state"] + [f"to_s{j}" for j in range(model.n_states)],
              [[f"s{i}"] + [report.marginal_t[i, j] for j in range(model.n_states)]
               for i in range(model.n_states)])
    cluster_rows = []
    for c in range(model.n_states):
        size = int(np.sum(report.labels == c))
        dominant = report.dominant_states[c] if report.dominant_states else ""
        pure = report.per_cluster_purity[c] if report.per_cluster_purity else ""
        cluster_rows.append([c, size, dominant, pure, report.cluster_reward[c]])
    write_csv(out / "clusters.csv",
              ["cluster", "size", "dominant_state", "purity", "mean_reward"], cluster_rows)
    write_csv(out / "projection.csv",
              ["x", "y", "cluster"] + (["oracle_state"] if oracle is not None else []),
              [[report.coords[i, 0], report.coords[i, 1], int(report.labels[i])]
               + ([int(oracle[i])] if oracle is not None else [])
               for i in range(len(report.labels))])
    summary = {
        "action_weights": report.action_weights.tolist(),
        "weighting": "uniform" if cfg["interpret.uniform_weights"] else "empirical",
        "purity": report.purity,
        "n_beliefs": int(len(report.labels)),
    }
    save_manifest(out / "summary.json", summary)
    plots.plot_projection(report.coords, report.labels, out / "projection.png",
                          oracle_states=oracle)
    plots.plot_stage_rewards(report.cluster_reward, report.dominant_states,
                             build_world(cfg).state_names, out / "stage_rewards.png")
    return summary


# ------------------------------------------------------------------- sweep

def sweep(cfg: dict, model: ModelParams, out_dir) -> list[dict]:
    """Grid over discount and vectors-per-action at reduced episode counts."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for discount in cfg["sweep.discounts"]:
        for n_vectors in cfg["sweep.n_vectors"]:
            sub = dict(cfg)
            sub["agents.discount"] = discount
            sub["spova.n_vectors"] = int(n_vectors)
            sub["train.episodes"] = cfg["sweep.episodes"]
            sub["eval.episodes"] = cfg["sweep.eval_episodes"]
            sub["seed"] = derive_seed(cfg["seed"], "sweep", discount, n_vectors)
            cell_dir = out / f"cell_g{discount}_n{n_vectors}"
            agents = train_agents(sub, model, cell_dir, ["disa"])
            metrics = evaluate_agents(sub, agents, cell_dir)
            disa_row = next(r for r in metrics if r["agent"] == "disa")
            rows.append({
                "discount": discount,
                "n_vectors": int(n_vectors),
                "revenue_rel": disa_row["revenue_rel"],
                "cost_rel": disa_row["cost_rel"],
                "roi_rel": disa_row["roi_rel"],
                "reward_rel": disa_row["reward_rel"],
            })
    write_csv(out / "sweep.csv",
              ["discount", "n_vectors", "revenue_rel", "cost_rel", "roi_rel", "reward_rel"],
              [[r["discount"], r["n_vectors"], r["revenue_rel"], r["cost_rel"],
                r["roi_rel"], r["reward_rel"]] for r in rows])
    plots.plot_sweep(rows, out / "sweep_heatmap.png")
    return rows
