"""Action-conditioned discrete HMM: inference, EM fitting, sampling, oracles.

The model is parameterized by an initial state distribution ``b0``, an
action-conditioned transition tensor ``T`` and per-dimension observation
tensors ``O``. Observation dimensions are conditionally independent given
the state and the action taken before the observation, so the emission
probability of a symbol vector is the product over dimensions.

Step ``t`` of a trajectory stores the action taken *before* observing the
step's symbol vector: the transition into the state at step ``t`` and the
emission of the step-``t`` observation are both conditioned on that action.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateLikelihoodError, GuardSizeError, InvalidInputError

ROW_SUM_TOL = 1e-12
UNVISITED_ROW_TOL = 1e-12
BRUTE_FORCE_PATH_LIMIT = 10**6


def _check_rows(name: str, arr: np.ndarray) -> None:
    if np.any(arr < 0):
        raise InvalidInputError(f"{name} has negative entries")
    sums = arr.sum(axis=-1)
    if np.any(np.abs(sums - 1.0) > ROW_SUM_TOL):
        worst = float(np.abs(sums - 1.0).max())
        raise InvalidInputError(f"{name} rows must sum to 1 (worst deviation {worst:.3e})")


@dataclass(frozen=True, eq=False)
class ModelParams:
    """Parameter triple of the action-conditioned HMM.

    b0 : (N,) initial state distribution.
    T  : (A, N, N); T[a, i, j] = P(next=j | current=i, action=a).
    O  : tuple of G arrays, each (A, N, M_g);
         O[g][a, i, m] = P(symbol m in dim g | state i, preceding action a).
    """

    b0: np.ndarray
    T: np.ndarray
    O: tuple[np.ndarray, ...]

    def __post_init__(self):
        b0 = np.asarray(self.b0, dtype=float)
        T = np.asarray(self.T, dtype=float)
        O = tuple(np.asarray(o, dtype=float) for o in self.O)
        if b0.ndim != 1:
            raise InvalidInputError("b0 must be a vector")
        n = b0.shape[0]
        if T.ndim != 3 or T.shape[1] != n or T.shape[2] != n:
            raise InvalidInputError(f"T must have shape (A, {n}, {n}), got {T.shape}")
        a = T.shape[0]
        if a < 1 or len(O) < 1:
            raise InvalidInputError("need at least one action and one observation dimension")
        for g, o in enumerate(O):
            if o.ndim != 3 or o.shape[0] != a or o.shape[1] != n:
                raise InvalidInputError(f"O[{g}] must have shape ({a}, {n}, M_g), got {o.shape}")
        _check_rows("b0", b0)
        _check_rows("T", T)
        for g, o in enumerate(O):
            _check_rows(f"O[{g}]", o)
        for arr in (b0, T, *O):
            arr.flags.writeable = False
        object.__setattr__(self, "b0", b0)
        object.__setattr__(self, "T", T)
        object.__setattr__(self, "O", O)

    @property
    def n_states(self) -> int:
        return self.b0.shape[0]

    @property
    def n_actions(self) -> int:
        return self.T.shape[0]

    @property
    def obs_dims(self) -> tuple[int, ...]:
        return tuple(o.shape[2] for o in self.O)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """One user/category sequence of (action, observation, reward, feedback) steps.

    ``actions[t]`` is the action taken before observing ``obs[t]``.
    """

    actions: np.ndarray        # (L,) int
    obs: np.ndarray         # (L, G) int
    rewards: np.ndarray     # (L,) float
    clicks: np.ndarray      # (L,) int, 0/1
    purchases: np.ndarray   # (L,) int, 0/1
    user_id: str = ""
    category_id: str = ""

    def __post_init__(self):
        actions = np.asarray(self.actions, dtype=np.int64)
        obs = np.asarray(self.obs, dtype=np.int64)
        if obs.ndim == 1:
            obs = obs[:, None]
        if actions.ndim != 1 or len(actions) < 1:
            raise InvalidInputError("trajectory must have at least one step")
        if obs.shape[0] != len(actions):
            raise InvalidInputError("actions and observations must have equal length")
        rewards = np.asarray(self.rewards, dtype=float)
        clicks = np.asarray(self.clicks, dtype=np.int64)
        purchases = np.asarray(self.purchases, dtype=np.int64)
        for name, arr in (("rewards", rewards), ("clicks", clicks), ("purchases", purchases)):
            if arr.shape != actions.shape:
                raise InvalidInputError(f"{name} must match the number of steps")
        for arr in (actions, obs, rewards, clicks, purchases):
            arr.flags.writeable = False
        object.__setattr__(self, "actions", actions)
        object.__setattr__(self, "obs", obs)
        object.__setattr__(self, "rewards", rewards)
        object.__setattr__(self, "clicks", clicks)
        object.__setattr__(self, "purchases", purchases)

    def __len__(self) -> int:
        return len(self.actions)

    @classmethod
    def from_steps(cls, steps, user_id: str = "", category_id: str = "") -> "Trajectory":
        """Build from an iterable of (action, obs_vector, reward, click, purchase)."""
        acts, obs, rew, clk, pur = zip(*steps)
        return cls(np.array(acts), np.array(obs), np.array(rew), np.array(clk),
                   np.array(pur), user_id=user_id, category_id=category_id)

    def validate_against(self, params: ModelParams) -> None:
        dims = params.obs_dims
        if self.obs.shape[1] != len(dims):
            raise InvalidInputError(
                f"trajectory has {self.obs.shape[1]} observation dims, model expects {len(dims)}")
        if self.actions.min() < 0 or self.actions.max() >= params.n_actions:
            raise InvalidInputError("action index out of range for model")
        if self.obs.min() < 0:
            raise InvalidInputError("negative observation symbol")
        for g, m in enumerate(dims):
            if self.obs[:, g].max() >= m:
                raise InvalidInputError(f"observation symbol out of range in dim {g}")


@dataclass(frozen=True, eq=False)
class PosteriorBundle:
    """Smoothed posteriors of one trajectory under a fixed model.

    gamma_single[t, i] = P(s_t = i | observations, actions)
    gamma_pair[t, i, j] = P(s_t = i, s_{t+1} = j | observations, actions)
    """

    log_likelihood: float
    gamma_single: np.ndarray   # (L, N)
    gamma_pair: np.ndarray     # (L-1, N, N)


@dataclass
class EmDiagnostics:
    """Rows the M-step left untouched because their expected visit count was ~0."""

    retained_transition_rows: list[tuple[int, int]] = field(default_factory=list)
    retained_observation_rows: list[tuple[int, int, int]] = field(default_factory=list)

    @property
    def clean(self) -> bool:
        return not self.retained_transition_rows and not self.retained_observation_rows


@dataclass
class EmResult:
    params: ModelParams
    history: list[float]
    diagnostics: EmDiagnostics


def obs_likelihoods(params: ModelParams, traj: Trajectory) -> np.ndarray:
    """Per-step, per-state emission probability of the observed symbol vectors.

    Returns an (L, N) matrix whose [t, i] entry is the product over dims of
    O[g][actions[t], i, obs[t, g]].
    """
    traj.validate_against(params)
    like = np.ones((len(traj), params.n_states))
    for g, o in enumerate(params.O):
        like *= o[traj.actions, :, traj.obs[:, g]]
    return like


def forward(params: ModelParams, traj: Trajectory):
    """Scaled forward recursion.

    Returns (alpha, scale_factors, log_likelihood) where each alpha row is
    normalized to sum 1 and the unscaled message at step t is
    alpha[t] * prod(scale_factors[: t + 1]); log_likelihood is the sum of
    log scale factors.
    """
    emis = obs_likelihoods(params, traj)
    length, n = emis.shape
    alpha = np.empty((length, n))
    scale = np.empty(length)
    cur = params.b0 * emis[0]
    for t in range(length):
        if t > 0:
            cur = (alpha[t - 1] @ params.T[traj.actions[t]]) * emis[t]
        total = cur.sum()
        if total <= 0.0:
            raise DegenerateLikelihoodError(t)
        alpha[t] = cur / total
        scale[t] = total
    return alpha, scale, float(np.log(scale).sum())


def backward(params: ModelParams, traj: Trajectory, scale_factors: np.ndarray) -> np.ndarray:
    """Scaled backward recursion sharing forward's scale factors.

    The terminal row is all ones; row t is the unscaled backward message
    divided by prod(scale_factors[t + 1 :]), so alpha[t] * beta[t] is the
    (unnormalized-by-rounding-only) state posterior at step t.
    """
    emis = obs_likelihoods(params, traj)
    length, n = emis.shape
    scale_factors = np.asarray(scale_factors, dtype=float)
    if scale_factors.shape != (length,):
        raise InvalidInputError("scale_factors length must match the trajectory")
    beta = np.empty((length, n))
    beta[-1] = 1.0
    for t in range(length - 2, -1, -1):
        beta[t] = (params.T[traj.actions[t + 1]] @ (emis[t + 1] * beta[t + 1])) / scale_factors[t + 1]
    return beta


def posteriors(params: ModelParams, traj: Trajectory) -> PosteriorBundle:
    """Single and pairwise state posteriors via the scaled forward-backward pass."""
    alpha, scale, loglik = forward(params, traj)
    beta = backward(params, traj, scale)
    emis = obs_likelihoods(params, traj)
    length = len(traj)

    gamma_single = alpha * beta
    gamma_single /= gamma_single.sum(axis=1, keepdims=True)

    n = params.n_states
    gamma_pair = np.empty((length - 1, n, n))
    for t in range(length - 1):
        weighted = alpha[t][:, None] * params.T[traj.actions[t + 1]] * (emis[t + 1] * beta[t + 1])[None, :]
        gamma_pair[t] = weighted / weighted.sum()
    return PosteriorBundle(log_likelihood=loglik, gamma_single=gamma_single, gamma_pair=gamma_pair)


def _group_by_length(trajs: list[Trajectory]) -> dict[int, list[int]]:
    groups: dict[int, list[int]] = {}
    for idx, traj in enumerate(trajs):
        groups.setdefault(len(traj), []).append(idx)
    return groups


def _batched_messages(params: ModelParams, actions: np.ndarray, obs: np.ndarray):
    """Forward-backward over a stack of equal-length trajectories.

    actions: (B, L); obs: (B, L, G).
    Returns (alpha, beta, emis, loglik_per_traj); alpha rows are normalized
    and beta uses the shared per-trajectory scale factors.
    """
    batch, length = actions.shape
    n = params.n_states
    emis = np.ones((batch, length, n))
    for g, o in enumerate(params.O):
        emis *= o[actions, :, obs[:, :, g]]

    alpha = np.empty((batch, length, n))
    scale = np.empty((batch, length))
    cur = params.b0[None, :] * emis[:, 0]
    for t in range(length):
        if t > 0:
            cur = np.einsum("bi,bij->bj", alpha[:, t - 1], params.T[actions[:, t]]) * emis[:, t]
        total = cur.sum(axis=1)
        if np.any(total <= 0.0):
            raise DegenerateLikelihoodError(t)
        alpha[:, t] = cur / total[:, None]
        scale[:, t] = total

    beta = np.empty((batch, length, n))
    beta[:, -1] = 1.0
    for t in range(length - 2, -1, -1):
        forward_weight = emis[:, t + 1] * beta[:, t + 1]
        beta[:, t] = np.einsum("bij,bj->bi", params.T[actions[:, t + 1]], forward_weight)
        beta[:, t] /= scale[:, t + 1][:, None]

    return alpha, beta, emis, np.log(scale).sum(axis=1)


def score_trajectories(params: ModelParams, trajs: list[Trajectory]) -> float:
    """Total log-likelihood of a trajectory list (batched forward pass)."""
    if not trajs:
        raise InvalidInputError("no trajectories to score")
    total = 0.0
    for length, idxs in _group_by_length(trajs).items():
        actions = np.stack([trajs[i].actions for i in idxs])
        obs = np.stack([trajs[i].obs for i in idxs])
        for i in idxs:
            trajs[i].validate_against(params)
        _, _, _, lls = _batched_messages(params, actions, obs)
        total += float(lls.sum())
    return total


def em_fit(trajs: list[Trajectory], init: ModelParams, max_iters: int = 100,
           tol: float = 1e-6, pseudocount: float = 0.0) -> EmResult:
    """Pooled Baum-Welch re-estimation for the action-conditioned model.

    Sufficient statistics are summed over all trajectories before
    normalization; each trajectory contributes its step-1 posterior to a
    shared initial distribution. Convergence is measured on per-observation
    log-likelihood (total / number of steps) so ``tol`` is dataset-size
    invariant. Rows whose expected visit count falls below
    ``UNVISITED_ROW_TOL`` keep their previous value and are reported in the
    diagnostics instead of dividing by zero.
    """
    if not trajs:
        raise InvalidInputError("em_fit needs at least one trajectory")
    if max_iters < 1:
        raise InvalidInputError("max_iters must be >= 1")
    for traj in trajs:
        traj.validate_against(init)

    groups = _group_by_length(trajs)
    stacked = []
    for length, idxs in groups.items():
        actions = np.stack([trajs[i].actions for i in idxs])
        obs = np.stack([trajs[i].obs for i in idxs])
        stacked.append((actions, obs))
    total_steps = sum(len(t) for t in trajs)

    params = init
    history: list[float] = []
    diagnostics = EmDiagnostics()
    for _ in range(max_iters):
        stats, total_ll = _em_estep(params, stacked)
        history.append(total_ll)
        if len(history) > 1 and (history[-1] - history[-2]) / total_steps < tol:
            break
        params, diagnostics = _em_mstep(params, stats, len(trajs), pseudocount)
    return EmResult(params=params, history=history, diagnostics=diagnostics)


def _em_estep(params: ModelParams, stacked):
    n, n_act = params.n_states, params.n_actions
    dims = params.obs_dims
    b0_acc = np.zeros(n)
    t_num = np.zeros((n_act, n, n))
    t_den = np.zeros((n_act, n))
    # accumulate with the symbol axis second so np.add.at can fancy-index (action, symbol)
    o_num = [np.zeros((n_act, m, n)) for m in dims]
    o_den = np.zeros((n_act, n))
    total_ll = 0.0

    for actions, obs in stacked:
        alpha, beta, emis, lls = _batched_messages(params, actions, obs)
        total_ll += float(lls.sum())
        length = actions.shape[1]

        gamma = alpha * beta
        gamma /= gamma.sum(axis=2, keepdims=True)
        b0_acc += gamma[:, 0].sum(axis=0)

        for t in range(1, length):
            act_t = actions[:, t]
            pair = alpha[:, t - 1, :, None] * params.T[act_t] \
                * (emis[:, t] * beta[:, t])[:, None, :]
            pair /= pair.sum(axis=(1, 2), keepdims=True)
            np.add.at(t_num, act_t, pair)
            np.add.at(t_den, act_t, pair.sum(axis=2))
        for t in range(length):
            act_t = actions[:, t]
            np.add.at(o_den, act_t, gamma[:, t])
            for g in range(len(dims)):
                np.add.at(o_num[g], (act_t, obs[:, t, g]), gamma[:, t])

    return (b0_acc, t_num, t_den, o_num, o_den), total_ll


def _em_mstep(params: ModelParams, stats, n_trajs: int, pseudocount: float):
    b0_acc, t_num, t_den, o_num, o_den = stats
    diagnostics = EmDiagnostics()

    b0 = b0_acc / n_trajs
    b0 /= b0.sum()

    t_new = np.array(params.T)
    for a in range(params.n_actions):
        for i in range(params.n_states):
            den = t_den[a, i]
            if den < UNVISITED_ROW_TOL:
                diagnostics.retained_transition_rows.append((a, i))
                continue
            row = t_num[a, i] + pseudocount
            t_new[a, i] = row / (den + pseudocount * params.n_states)
            t_new[a, i] /= t_new[a, i].sum()

    o_new = []
    for g, m in enumerate(params.obs_dims):
        og = np.array(params.O[g])
        num = o_num[g].transpose(0, 2, 1)   # back to (A, N, M_g)
        for a in range(params.n_actions):
            for i in range(params.n_states):
                den = o_den[a, i]
                if den < UNVISITED_ROW_TOL:
                    diagnostics.retained_observation_rows.append((g, a, i))
                    continue
                row = num[a, i] + pseudocount
                og[a, i] = row / (den + pseudocount * m)
                og[a, i] /= og[a, i].sum()
        o_new.append(og)

    return ModelParams(b0=b0, T=t_new, O=tuple(o_new)), diagnostics


def brute_force_likelihood(params: ModelParams, traj: Trajectory) -> float:
    """Exact likelihood by enumerating every hidden state path.

    Test oracle only; refuses when N**L exceeds BRUTE_FORCE_PATH_LIMIT.
    """
    traj.validate_against(params)
    n, length = params.n_states, len(traj)
    if n ** length > BRUTE_FORCE_PATH_LIMIT:
        raise GuardSizeError(f"{n}^{length} state paths exceed the enumeration guard")
    emis = obs_likelihoods(params, traj)
    total = 0.0
    for path in itertools.product(range(n), repeat=length):
        weight = params.b0[path[0]] * emis[0, path[0]]
        for t in range(1, length):
            weight *= params.T[traj.actions[t], path[t - 1], path[t]] * emis[t, path[t]]
        total += weight
    return total


def sample_trajectory(params: ModelParams, action_policy, length: int, rng_seed: int,
                      user_id: str = "", category_id: str = "") -> Trajectory:
    """Draw a trajectory from the generative model.

    ``action_policy(t, rng) -> action index`` chooses actions without access
    to the hidden path. Deterministic for a fixed seed.
    """
    if length < 1:
        raise InvalidInputError("length must be >= 1")
    rng = np.random.default_rng(rng_seed)
    n = params.n_states
    actions = np.empty(length, dtype=np.int64)
    obs = np.empty((length, len(params.O)), dtype=np.int64)
    state = rng.choice(n, p=params.b0)
    for t in range(length):
        a = int(action_policy(t, rng))
        if not 0 <= a < params.n_actions:
            raise InvalidInputError(f"action policy returned invalid action {a}")
        if t > 0:
            state = rng.choice(n, p=params.T[a, state])
        actions[t] = a
        for g, o in enumerate(params.O):
            obs[t, g] = rng.choice(o.shape[2], p=o[a, state])
    zeros = np.zeros(length)
    return Trajectory(actions=actions, obs=obs, rewards=zeros, clicks=zeros.astype(np.int64),
                      purchases=zeros.astype(np.int64), user_id=user_id, category_id=category_id)


def random_params(n_states: int, n_actions: int, obs_dims, rng,
                  concentration: float = 1.0) -> ModelParams:
    """Dirichlet-random valid parameters; used for EM restarts and tests."""
    alpha = np.full(n_states, concentration)
    b0 = rng.dirichlet(alpha)
    t = rng.dirichlet(alpha, size=(n_actions, n_states))
    o = tuple(rng.dirichlet(np.full(m, concentration), size=(n_actions, n_states))
              for m in obs_dims)
    return ModelParams(b0=b0, T=t, O=o)
