"""Decision-making agents and the shared training scaffolding.

Every agent consumes the same discretized observations, the same three
actions, and the same rewards; belief-based agents additionally run the
shared intent estimator. Each agent owns its mutable learner state, so
concurrent evaluation clones one agent per worker.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .belief import Belief, BeliefTracker
from .env import KEEP
from .errors import InvalidInputError, NumericFaultError
from .hmm import ModelParams
from .spova import SpovaParams, Transition, select_action, train_step

START_CONTEXT = "__start__"


@dataclass(frozen=True)
class EpsilonSchedule:
    """Linear anneal from start to end over decay_steps; flat afterwards."""

    start: float = 1.0
    end: float = 0.05
    decay_steps: int = 1000

    def __post_init__(self):
        if not (0.0 <= self.end <= self.start <= 1.0):
            raise InvalidInputError("need 0 <= end <= start <= 1")
        if self.decay_steps < 1:
            raise InvalidInputError("decay_steps must be >= 1")

    def value(self, step: int) -> float:
        frac = min(max(step, 0), self.decay_steps) / self.decay_steps
        return self.start + (self.end - self.start) * frac


class ReplayMemory:
    """Bounded ring buffer with uniform without-replacement minibatches."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise InvalidInputError("capacity must be >= 1")
        self.capacity = capacity
        self._items: list = []
        self._insert_at = 0

    def __len__(self) -> int:
        return len(self._items)

    def add(self, item) -> None:
        if len(self._items) < self.capacity:
            self._items.append(item)
        else:
            self._items[self._insert_at] = item
        self._insert_at = (self._insert_at + 1) % self.capacity

    def sample(self, rng, k: int) -> list:
        if k > len(self._items):
            raise InvalidInputError("not enough stored items to sample")
        idx = rng.choice(len(self._items), size=k, replace=False)
        return [self._items[i] for i in idx]


@dataclass(frozen=True)
class ObsTransition:
    """Transition keyed by discretized observations (for model-free agents)."""

    obs_before: tuple | None
    action: int
    reward: float
    obs_after: tuple
    terminal: bool = False


def _context_key(obs) -> tuple | str:
    return START_CONTEXT if obs is None else tuple(int(s) for s in obs)


class ManualAgent:
    """Human-experience bid strategy: always keep. The 100% reference row."""

    kind = "manual"
    uses_beliefs = False

    def begin_episode(self):
        pass

    def observe(self, prev_action, obs_symbols):
        pass

    def act(self, rng, epsilon: float = 0.0) -> int:
        return KEEP

    def record_and_learn(self, transition, rng):
        pass

    def state_dict(self) -> dict:
        return {"kind": self.kind}

    def load_state(self, state: dict) -> None:
        pass


class BanditAgent:
    """Contextual bandit over running mean immediate rewards.

    The context is the full discretized observation tuple; an unvisited
    context falls back to a uniform random action even when greedy.
    """

    kind = "bandit"
    uses_beliefs = False

    def __init__(self, n_actions: int = 3):
        self.n_actions = n_actions
        self.counts: dict = {}
        self.means: dict = {}
        self._context = START_CONTEXT

    def begin_episode(self):
        self._context = START_CONTEXT

    def observe(self, prev_action, obs_symbols):
        self._context = _context_key(obs_symbols)

    def act(self, rng, epsilon: float = 0.0) -> int:
        if epsilon > 0.0 and rng.random() < epsilon:
            return int(rng.integers(self.n_actions))
        ctx = self._context
        if ctx not in self.counts or self.counts[ctx].sum() == 0:
            return int(rng.integers(self.n_actions))
        return int(np.argmax(self.means[ctx]))

    def update(self, context, action: int, reward: float) -> None:
        if context not in self.counts:
            self.counts[context] = np.zeros(self.n_actions, dtype=np.int64)
            self.means[context] = np.zeros(self.n_actions)
        self.counts[context][action] += 1
        n = self.counts[context][action]
        self.means[context][action] += (reward - self.means[context][action]) / n

    def record_and_learn(self, transition: ObsTransition, rng):
        self.update(_context_key(transition.obs_before), transition.action, transition.reward)

    def state_dict(self) -> dict:
        def key(ctx):
            return ctx if isinstance(ctx, str) else ",".join(map(str, ctx))
        return {
            "kind": self.kind,
            "n_actions": self.n_actions,
            "stats": {key(c): {"counts": self.counts[c].tolist(),
                               "means": self.means[c].tolist()}
                      for c in self.counts},
        }

    def load_state(self, state: dict) -> None:
        self.counts, self.means = {}, {}
        for text, payload in state["stats"].items():
            ctx = text if text == START_CONTEXT else tuple(int(p) for p in text.split(","))
            self.counts[ctx] = np.array(payload["counts"], dtype=np.int64)
            self.means[ctx] = np.array(payload["means"])


class TabularQAgent:
    """Exact Q-learning over the finite discretized observation space."""

    kind = "tabular_q"
    uses_beliefs = False

    def __init__(self, n_actions: int = 3, learning_rate: float = 0.2,
                 discount: float = 0.9):
        self.n_actions = n_actions
        self.learning_rate = learning_rate
        self.discount = discount
        self.qtable: dict = {}
        self._context = START_CONTEXT

    def begin_episode(self):
        self._context = START_CONTEXT

    def observe(self, prev_action, obs_symbols):
        self._context = _context_key(obs_symbols)

    def _q(self, ctx) -> np.ndarray:
        if ctx not in self.qtable:
            self.qtable[ctx] = np.zeros(self.n_actions)
        return self.qtable[ctx]

    def act(self, rng, epsilon: float = 0.0) -> int:
        if epsilon > 0.0 and rng.random() < epsilon:
            return int(rng.integers(self.n_actions))
        return int(np.argmax(self._q(self._context)))

    def update(self, transition: ObsTransition) -> None:
        ctx = _context_key(transition.obs_before)
        nxt = _context_key(transition.obs_after)
        target = transition.reward
        if not transition.terminal:
            target += self.discount * float(self._q(nxt).max())
        q_row = self._q(ctx)
        q_row[transition.action] += self.learning_rate * (target - q_row[transition.action])

    def record_and_learn(self, transition: ObsTransition, rng):
        self.update(transition)

    def state_dict(self) -> dict:
        def key(ctx):
            return ctx if isinstance(ctx, str) else ",".join(map(str, ctx))
        return {
            "kind": self.kind,
            "n_actions": self.n_actions,
            "learning_rate": self.learning_rate,
            "discount": self.discount,
            "qtable": {key(c): q.tolist() for c, q in self.qtable.items()},
        }

    def load_state(self, state: dict) -> None:
        self.qtable = {}
        for text, row in state["qtable"].items():
            ctx = text if text == START_CONTEXT else tuple(int(p) for p in text.split(","))
            self.qtable[ctx] = np.array(row)


class MlpQ:
    """Dense tanh network mapping beliefs to per-action values.

    Plain numpy with explicit backprop so the squared-TD-error gradient can
    be checked against finite differences.
    """

    def __init__(self, n_inputs: int, n_actions: int, hidden_width: int = 32,
                 hidden_layers: int = 2, rng=None):
        rng = np.random.default_rng(rng)
        sizes = [n_inputs] + [hidden_width] * hidden_layers + [n_actions]
        self.weights = []
        self.biases = []
        for fan_in, fan_out in zip(sizes, sizes[1:]):
            self.weights.append(rng.normal(0.0, 1.0 / np.sqrt(fan_in), size=(fan_in, fan_out)))
            self.biases.append(np.zeros(fan_out))

    def forward(self, x: np.ndarray) -> np.ndarray:
        h = x
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            h = np.tanh(h @ w + b)
        return h @ self.weights[-1] + self.biases[-1]

    def _forward_cached(self, x: np.ndarray):
        activations = [x]
        h = x
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            h = np.tanh(h @ w + b)
            activations.append(h)
        return h @ self.weights[-1] + self.biases[-1], activations

    def td_loss_gradients(self, beliefs: np.ndarray, actions: np.ndarray,
                          targets: np.ndarray):
        """Loss 0.5 * mean((Q[a] - target)^2) and gradients per layer."""
        q, activations = self._forward_cached(beliefs)
        batch = len(actions)
        errors = q[np.arange(batch), actions] - targets
        loss = 0.5 * float(np.mean(errors ** 2))
        dq = np.zeros_like(q)
        dq[np.arange(batch), actions] = errors / batch

        grads_w = [None] * len(self.weights)
        grads_b = [None] * len(self.biases)
        delta = dq
        for layer in range(len(self.weights) - 1, -1, -1):
            grads_w[layer] = activations[layer].T @ delta
            grads_b[layer] = delta.sum(axis=0)
            if layer > 0:
                delta = (delta @ self.weights[layer].T) * (1.0 - activations[layer] ** 2)
        return loss, grads_w, grads_b

    def sgd_step(self, grads_w, grads_b, learning_rate: float) -> None:
        for layer in range(len(self.weights)):
            self.weights[layer] -= learning_rate * grads_w[layer]
            self.biases[layer] -= learning_rate * grads_b[layer]
        if not all(np.all(np.isfinite(w)) for w in self.weights):
            raise NumericFaultError("network weights became non-finite")

    def clone(self) -> "MlpQ":
        copy = MlpQ.__new__(MlpQ)
        copy.weights = [w.copy() for w in self.weights]
        copy.biases = [b.copy() for b in self.biases]
        return copy

    def state_dict(self) -> dict:
        return {"weights": [w.tolist() for w in self.weights],
                "biases": [b.tolist() for b in self.biases]}

    def load_state(self, state: dict) -> None:
        self.weights = [np.array(w) for w in state["weights"]]
        self.biases = [np.array(b) for b in state["biases"]]


class EmQAgent:
    """Model-free Q over the estimator's beliefs (dense approximator)."""

    kind = "em_q"
    uses_beliefs = True

    def __init__(self, estimator: ModelParams, n_actions: int = 3,
                 hidden_width: int = 32, hidden_layers: int = 2,
                 learning_rate: float = 0.01, discount: float = 0.9,
                 replay_capacity: int = 50000, minibatch: int = 32,
                 target_refresh: int = 200, rng=None):
        self.tracker = BeliefTracker(estimator)
        self.net = MlpQ(estimator.n_states, n_actions, hidden_width, hidden_layers, rng=rng)
        self.target = self.net.clone()
        self.n_actions = n_actions
        self.learning_rate = learning_rate
        self.discount = discount
        self.replay = ReplayMemory(replay_capacity)
        self.minibatch = minibatch
        self.target_refresh = target_refresh
        self._updates = 0

    @property
    def estimator(self) -> ModelParams:
        return self.tracker.params

    def set_estimator(self, params: ModelParams) -> None:
        self.tracker = BeliefTracker(params)

    @property
    def belief(self) -> Belief:
        return self.tracker.belief

    def begin_episode(self):
        self.tracker.reset()

    def observe(self, prev_action, obs_symbols):
        self.tracker.update(prev_action, obs_symbols)

    def act(self, rng, epsilon: float = 0.0) -> int:
        if epsilon > 0.0 and rng.random() < epsilon:
            return int(rng.integers(self.n_actions))
        return int(np.argmax(self.net.forward(self.belief.probs[None, :])[0]))

    def learn_from(self, batch: list[Transition]) -> float:
        beliefs = np.stack([t.belief_before.probs for t in batch])
        actions = np.array([t.action for t in batch])
        nxt = np.stack([t.belief_after.probs for t in batch])
        bootstrap = self.target.forward(nxt).max(axis=1)
        terminal = np.array([t.terminal for t in batch])
        targets = np.array([t.reward for t in batch]) \
            + self.discount * np.where(terminal, 0.0, bootstrap)
        loss, grads_w, grads_b = self.net.td_loss_gradients(beliefs, actions, targets)
        self.net.sgd_step(grads_w, grads_b, self.learning_rate)
        self._updates += 1
        if self._updates % self.target_refresh == 0:
            self.target = self.net.clone()
        return loss

    def record_and_learn(self, transition: Transition, rng):
        self.replay.add(transition)
        if len(self.replay) >= self.minibatch:
            self.learn_from(self.replay.sample(rng, self.minibatch))

    def state_dict(self) -> dict:
        return {"kind": self.kind, "net": self.net.state_dict(),
                "discount": self.discount}

    def load_state(self, state: dict) -> None:
        self.net.load_state(state["net"])
        self.target = self.net.clone()


class DisaAgent:
    """Belief-filtering policy with the smooth-max value approximator."""

    kind = "disa"
    uses_beliefs = True

    def __init__(self, estimator: ModelParams, n_actions: int = 3,
                 n_vectors: int = 5, z: float = 2.0, offset: float = 1.0,
                 learning_rate: float = 0.05, discount: float = 0.9,
                 exponent_mode: str = "derivative", replay_capacity: int = 50000,
                 minibatch: int = 32, target_refresh: int = 200, rng=None):
        self.tracker = BeliefTracker(estimator)
        self.etas = SpovaParams.init(
            n_actions, estimator.n_states, n_vectors=n_vectors, rng=rng, z=z,
            offset=offset, learning_rate=learning_rate, discount=discount,
            exponent_mode=exponent_mode)
        self.target = self.etas
        self.replay = ReplayMemory(replay_capacity)
        self.minibatch = minibatch
        self.target_refresh = target_refresh
        self._updates = 0

    @property
    def estimator(self) -> ModelParams:
        return self.tracker.params

    def set_estimator(self, params: ModelParams) -> None:
        self.tracker = BeliefTracker(params)

    @property
    def belief(self) -> Belief:
        return self.tracker.belief

    def begin_episode(self):
        self.tracker.reset()

    def observe(self, prev_action, obs_symbols):
        self.tracker.update(prev_action, obs_symbols)

    def act(self, rng, epsilon: float = 0.0) -> int:
        return select_action(self.etas, self.belief, epsilon, rng)

    def record_and_learn(self, transition: Transition, rng):
        self.replay.add(transition)
        if len(self.replay) >= self.minibatch:
            batch = self.replay.sample(rng, self.minibatch)
            self.etas = train_step(self.etas, self.target, batch)
            self._updates += 1
            if self._updates % self.target_refresh == 0:
                self.target = self.etas

    def state_dict(self) -> dict:
        return {"kind": self.kind,
                "vectors": self.etas.vectors.tolist(),
                "z": self.etas.z,
                "offset": self.etas.offset,
                "learning_rate": self.etas.learning_rate,
                "discount": self.etas.discount,
                "exponent_mode": self.etas.exponent_mode}

    def load_state(self, state: dict) -> None:
        self.etas = SpovaParams(
            vectors=np.array(state["vectors"]), z=state["z"], offset=state["offset"],
            learning_rate=state["learning_rate"], discount=state["discount"],
            exponent_mode=state["exponent_mode"])
        self.target = self.etas


AGENT_KINDS = ("manual", "bandit", "tabular_q", "em_q", "disa")
