"""Synthetic multi-scenario sequential-advertising environment.

Ground-truth generative model of latent user intent with an eCPM auction,
rank-score ratio actions, bid-punished rewards, and accumulated-behavior
observations. Hidden intent follows a funnel over
awareness -> search -> interest; seeing the ad (winning the auction) is the
only causal channel on intent. Within a request the order is: auction,
intent transition (display- or no-display matrix), click and purchase drawn
from the new intent, counter updates, scenario switch. The first request
draws intent from the initial distribution instead of transitioning, so the
intent layer is exactly an action-conditioned HMM with effective
transitions mixed by each action's display probability.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError
from .hmm import ModelParams, Trajectory

BOOST, KEEP, RESTRAIN = 0, 1, 2
ACTION_NAMES = ("boost", "keep", "restrain")
SCENARIO_NAMES = ("good_items", "guess_what_you_like")
GOOD_ITEMS, GUESS_WHAT_YOU_LIKE = 0, 1

# observation feature order; raw features are the per-scenario accumulated
# display/click counters plus the current scenario flag
OBS_NAMES = ("pv_gi", "clk_gi", "pv_gw", "clk_gw", "scen")
DEFAULT_OBS_CARDINALITIES = (7, 6, 12, 4, 2)


@dataclass(frozen=True)
class Item:
    """Representative advertised item of one category."""

    item_id: str
    category_id: str
    price: float
    bid: float
    pctr: float

    def __post_init__(self):
        if self.price <= 0 or self.bid <= 0:
            raise InvalidInputError("price and bid must be positive")
        if not 0.0 <= self.pctr <= 1.0:
            raise InvalidInputError("pctr must be in [0, 1]")

    @property
    def rank_score(self) -> float:
        return self.pctr * self.bid


@dataclass(frozen=True)
class RewardConfig:
    """Reward shaping: revenue scaling, bid punishment, action ratios."""

    lambda_scale: float = 5.0
    beta_boost: float = 1.2
    horizon: int = 8
    deltas: tuple[float, float, float] = (10.0, 1.0, 0.1)

    def __post_init__(self):
        if self.lambda_scale <= 0:
            raise InvalidInputError("lambda_scale must be positive")
        if self.beta_boost < 1.0:
            raise InvalidInputError("beta_boost must be >= 1")
        if self.horizon < 1:
            raise InvalidInputError("horizon must be >= 1")
        if len(self.deltas) != 3 or not (self.deltas[0] > self.deltas[1] > self.deltas[2] > 0):
            raise InvalidInputError("deltas must be three decreasing positive ratios")


@dataclass(frozen=True)
class CompetitionConfig:
    """Competitor rank scores drawn i.i.d. log-normal per request."""

    log_mean: float
    log_sigma: float
    n_competitors: int = 1
    top_k: int = 1

    def __post_init__(self):
        if self.log_sigma <= 0 or self.n_competitors < 0 or self.top_k < 1:
            raise InvalidInputError("invalid competition configuration")

    def display_probability(self, score: float) -> float:
        """Probability that ``score`` ranks in the top k (ties favor us)."""
        if self.n_competitors < self.top_k:
            return 1.0
        if score <= 0.0:
            return 0.0
        zval = (math.log(score) - self.log_mean) / self.log_sigma
        p_below = 0.5 * (1.0 + math.erf(zval / math.sqrt(2.0)))
        # need fewer than top_k competitors strictly above the score
        prob = 0.0
        for wins in range(self.top_k):
            prob += (math.comb(self.n_competitors, wins)
                     * (1.0 - p_below) ** wins * p_below ** (self.n_competitors - wins))
        return prob


@dataclass(frozen=True)
class ObservationSpec:
    """Monotone binning of raw features into per-dimension symbols.

    ``edges[g]`` holds the M_g - 1 ascending thresholds of dimension g; a
    raw value maps to the number of thresholds at or below it, which clamps
    overflow into the top bin and preserves ordering.
    """

    cardinalities: tuple[int, ...]
    edges: tuple[np.ndarray, ...]

    def __post_init__(self):
        if len(self.cardinalities) != len(self.edges):
            raise InvalidInputError("need one edge vector per dimension")
        frozen = []
        for m, edge in zip(self.cardinalities, self.edges):
            edge = np.asarray(edge, dtype=float)
            if m < 2 or edge.shape != (m - 1,):
                raise InvalidInputError("each dimension needs cardinality-1 edges")
            if np.any(np.diff(edge) < 0):
                raise InvalidInputError("edges must be non-decreasing")
            edge.flags.writeable = False
            frozen.append(edge)
        object.__setattr__(self, "cardinalities", tuple(int(m) for m in self.cardinalities))
        object.__setattr__(self, "edges", tuple(frozen))

    @classmethod
    def integer_counts(cls, cardinalities=DEFAULT_OBS_CARDINALITIES) -> "ObservationSpec":
        """Unit bins for count features: value v maps to min(v, M-1)."""
        edges = tuple(np.arange(m - 1) + 0.5 for m in cardinalities)
        return cls(cardinalities=tuple(cardinalities), edges=edges)

    @classmethod
    def from_quantiles(cls, samples, cardinalities) -> "ObservationSpec":
        """Quantile-based edges estimated from raw feature samples."""
        samples = np.asarray(samples, dtype=float)
        if samples.ndim != 2 or samples.shape[1] != len(cardinalities):
            raise InvalidInputError("samples must be (n, dims)")
        edges = tuple(
            np.quantile(samples[:, g], np.arange(1, m) / m)
            for g, m in enumerate(cardinalities))
        return cls(cardinalities=tuple(cardinalities), edges=edges)


def discretize(obs_raw, spec: ObservationSpec) -> np.ndarray:
    """Clamped, monotone per-dimension bin indices of a raw feature vector."""
    obs_raw = np.asarray(obs_raw, dtype=float)
    if obs_raw.shape != (len(spec.cardinalities),):
        raise InvalidInputError("raw observation has wrong dimensionality")
    if np.any(obs_raw < 0):
        raise InvalidInputError("raw features must be nonnegative")
    return np.array([int(np.searchsorted(spec.edges[g], obs_raw[g], side="right"))
                     for g in range(len(spec.edges))], dtype=np.int64)


@dataclass(frozen=True, eq=False)
class WorldTruth:
    """Ground-truth latent-intent dynamics and feedback probabilities.

    States are ordered (awareness, search, interest); the funnel ordering of
    click probabilities within each scenario is enforced. The display and
    no-display transitions apply on requests where the ad respectively did
    and did not win the auction.
    """

    b0: np.ndarray                      # (N,)
    display_transition: np.ndarray      # (N, N)
    nodisplay_transition: np.ndarray    # (N, N)
    click_prob: np.ndarray              # (N, scenarios)
    purchase_given_click: np.ndarray    # (N,)
    scenario_switch_prob: float
    state_names: tuple[str, ...] = ("awareness", "search", "interest")

    def __post_init__(self):
        b0 = np.asarray(self.b0, dtype=float)
        disp = np.asarray(self.display_transition, dtype=float)
        nodisp = np.asarray(self.nodisplay_transition, dtype=float)
        click = np.asarray(self.click_prob, dtype=float)
        purchase = np.asarray(self.purchase_given_click, dtype=float)
        n = b0.shape[0]
        if disp.shape != (n, n) or nodisp.shape != (n, n):
            raise InvalidInputError("transition matrices must be square over the states")
        if click.ndim != 2 or click.shape[0] != n or purchase.shape != (n,):
            raise InvalidInputError("click/purchase probabilities have wrong shape")
        for name, arr in (("b0", b0), ("display_transition", disp),
                          ("nodisplay_transition", nodisp)):
            if np.any(arr < 0) or np.any(np.abs(arr.sum(axis=-1) - 1.0) > 1e-12):
                raise InvalidInputError(f"{name} rows must be distributions")
        if np.any(click < 0) or np.any(click > 1) or np.any(purchase < 0) or np.any(purchase > 1):
            raise InvalidInputError("probabilities must be in [0, 1]")
        if not 0.0 <= self.scenario_switch_prob <= 1.0:
            raise InvalidInputError("scenario_switch_prob must be in [0, 1]")
        for sc in range(click.shape[1]):
            if not np.all(np.diff(click[:, sc]) > 0):
                raise InvalidInputError(
                    "click probabilities must increase along the intent funnel")
        for arr in (b0, disp, nodisp, click, purchase):
            arr.flags.writeable = False
        object.__setattr__(self, "b0", b0)
        object.__setattr__(self, "display_transition", disp)
        object.__setattr__(self, "nodisplay_transition", nodisp)
        object.__setattr__(self, "click_prob", click)
        object.__setattr__(self, "purchase_given_click", purchase)

    @property
    def n_states(self) -> int:
        return self.b0.shape[0]

    @property
    def n_scenarios(self) -> int:
        return self.click_prob.shape[1]


@dataclass(frozen=True)
class EnvState:
    """Per-episode mutable context, passed in and out of ``step``."""

    intent: int
    scenario: int
    pv: tuple[int, ...]
    clk: tuple[int, ...]
    step_index: int = 0

    @classmethod
    def initial(cls, world: WorldTruth, rng, scenario: int = GOOD_ITEMS) -> "EnvState":
        intent = int(rng.choice(world.n_states, p=world.b0))
        zeros = (0,) * world.n_scenarios
        return cls(intent=intent, scenario=scenario, pv=zeros, clk=zeros)


@dataclass(frozen=True)
class StepOutcome:
    next_state: EnvState
    obs_raw: np.ndarray
    click: int
    purchase: int
    reward: float
    displayed: bool


def run_auction(item: Item, delta: float, competitors, k: int = 1) -> bool:
    """Top-k eCPM auction on the delta-adjusted rank score; ties favor the item."""
    if k < 1 or delta <= 0:
        raise InvalidInputError("need k >= 1 and delta > 0")
    adjusted = item.rank_score * delta
    above = sum(1 for c in competitors if c > adjusted)
    return above < k


def step_reward(action: int, item: Item, click: int, purchase: int,
                cfg: RewardConfig) -> float:
    """Scaled revenue minus (bid-punished) click cost."""
    cost_rate = cfg.beta_boost if action == BOOST else 1.0
    return cfg.lambda_scale * item.price * purchase - cost_rate * item.bid * click


def step(world: WorldTruth, state: EnvState, item: Item, action: int,
         reward_cfg: RewardConfig, competition: CompetitionConfig, rng) -> StepOutcome:
    """One request: auction, intent transition, feedback, counters, scenario.

    The first request of an episode (step_index 0) keeps the intent drawn
    from b0 instead of transitioning. Random draws happen in a fixed order
    (competitors, feedback, transition, scenario) so runs are reproducible
    for a fixed generator state.
    """
    if not 0 <= action < len(reward_cfg.deltas):
        raise InvalidInputError(f"unknown action {action}")
    competitors = rng.lognormal(mean=competition.log_mean, sigma=competition.log_sigma,
                                size=competition.n_competitors)
    displayed = run_auction(item, reward_cfg.deltas[action], competitors, competition.top_k)

    if state.step_index == 0:
        intent = state.intent
    else:
        rows = world.display_transition if displayed else world.nodisplay_transition
        intent = int(rng.choice(world.n_states, p=rows[state.intent]))

    pv, clk = list(state.pv), list(state.clk)
    if displayed:
        click = int(rng.random() < world.click_prob[intent, state.scenario])
        purchase = int(click and rng.random() < world.purchase_given_click[intent])
        pv[state.scenario] += 1
        clk[state.scenario] += click
    else:
        click = purchase = 0

    reward = step_reward(action, item, click, purchase, reward_cfg)

    scenario = state.scenario
    if world.n_scenarios > 1 and rng.random() < world.scenario_switch_prob:
        scenario = int((state.scenario + 1) % world.n_scenarios)

    next_state = EnvState(intent=intent, scenario=scenario, pv=tuple(pv), clk=tuple(clk),
                          step_index=state.step_index + 1)
    obs_raw = np.array([pv[GOOD_ITEMS], clk[GOOD_ITEMS],
                        pv[GUESS_WHAT_YOU_LIKE], clk[GUESS_WHAT_YOU_LIKE],
                        scenario], dtype=float)
    return StepOutcome(next_state=next_state, obs_raw=obs_raw, click=click,
                       purchase=purchase, reward=reward, displayed=displayed)


def rollout_episode(world: WorldTruth, item: Item, action_chooser, horizon: int,
                    rng_seed, reward_cfg: RewardConfig, competition: CompetitionConfig,
                    obs_spec: ObservationSpec, user_id: str = "",
                    ) -> tuple[Trajectory, list[int]]:
    """Roll one episode; returns the trajectory and the hidden intent path.

    ``action_chooser(t, prev_obs_symbols) -> action`` sees only discretized
    observations (None at the first request). The hidden path is exposed
    solely for evaluation and interpretability oracles, never to agents.
    """
    if horizon < 1:
        raise InvalidInputError("horizon must be >= 1")
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) \
        else np.random.default_rng(rng_seed)
    state = EnvState.initial(world, rng)
    steps, hidden = [], []
    prev_obs = None
    for t in range(horizon):
        action = int(action_chooser(t, prev_obs))
        outcome = step(world, state, item, action, reward_cfg, competition, rng)
        symbols = discretize(outcome.obs_raw, obs_spec)
        steps.append((action, symbols, outcome.reward, outcome.click, outcome.purchase))
        hidden.append(outcome.next_state.intent)
        state = outcome.next_state
        prev_obs = symbols
    traj = Trajectory.from_steps(steps, user_id=user_id, category_id=item.category_id)
    return traj, hidden


def effective_transitions(world: WorldTruth, item: Item, reward_cfg: RewardConfig,
                          competition: CompetitionConfig) -> np.ndarray:
    """Exact action-conditioned intent transitions implied by the auction.

    Each action's display probability mixes the display and no-display
    matrices; this is the transition block of the intent layer's equivalent
    action-conditioned HMM.
    """
    tensors = []
    for delta in reward_cfg.deltas:
        p = competition.display_probability(item.rank_score * delta)
        tensors.append(p * world.display_transition + (1.0 - p) * world.nodisplay_transition)
    return np.stack(tensors)


def empirical_intent_params(world: WorldTruth, item: Item, reward_cfg: RewardConfig,
                            competition: CompetitionConfig, obs_spec: ObservationSpec,
                            episodes: int, seed: int, pseudocount: float = 1.0,
                            ) -> ModelParams:
    """Reference HMM view of the environment, estimated with oracle labels.

    Counter observations are history-dependent, so their per-state emission
    law has no closed form; this estimates it by frequency counts on
    uniform-random-action rollouts labeled with the true hidden path. Used
    as a skyline model in diagnostics and tests.
    """
    n, n_act = world.n_states, len(reward_cfg.deltas)
    dims = obs_spec.cardinalities
    o_counts = [np.full((n_act, n, m), pseudocount) for m in dims]
    rng = np.random.default_rng(seed)
    for ep in range(episodes):
        chooser = lambda t, prev: int(rng.integers(n_act))
        traj, hidden = rollout_episode(world, item, chooser, reward_cfg.horizon,
                                       rng, reward_cfg, competition, obs_spec)
        for t in range(len(traj)):
            for g in range(len(dims)):
                o_counts[g][traj.actions[t], hidden[t], traj.obs[t, g]] += 1.0
    o = tuple(c / c.sum(axis=2, keepdims=True) for c in o_counts)
    return ModelParams(b0=world.b0,
                       T=effective_transitions(world, item, reward_cfg, competition),
                       O=o)
