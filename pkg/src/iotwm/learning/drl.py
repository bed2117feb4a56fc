"""Deep Q-learning gateway for the incomplete-information game.

The gateway only learns whether an authenticated device was attacked.
Its history holds, per past step and device, 0 (authenticated, clean),
1 (authenticated, attacked) or 2 (not authenticated); the 2s are imputed
from the gateway's attack belief before the history reaches the network.

Q-network. One LSTM with shared weights reads each device's own imputed
history together with its belief and value, and emits a score q_i. The
action value is additive, Q(S, h) = c + sum_{i in S} q_i / N, so the
greedy action over all feasible sets is an exact knapsack on the scores.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from functools import reduce

import numpy as np

from ..errors import ParameterError, TrainingDivergedError
from ..neural import Adam, Network, backward, forward, to_checkpoint
from .arena import FPAttacker, PlayTrace, coverage_entropy
from .fp import knapsack
from ..game.strategies import count_gateway_strategies, enumerate_gateway_strategies

POOL_LIMIT = 10_000     # enumerate the action space up to this many sets
POOL_SIZE = 256         # otherwise sample this many maximal sets per decision
N_FEATURES = 5


@dataclass(frozen=True)
class QState:
    """Last q observation rows (oldest first), q x N over {0, 1, 2}.

    ``imputed`` is the same history with every 2 replaced by the draw made
    when the row arrived, and ``delta`` the attack belief at that time; both
    feed the network."""

    history: np.ndarray
    imputed: np.ndarray | None = None
    delta: np.ndarray | None = None

    def __post_init__(self):
        h = np.asarray(self.history, dtype=np.int8)
        if h.ndim != 2:
            raise ParameterError("history must be a q x N matrix")
        if not np.isin(h, (0, 1, 2)).all():
            raise ParameterError("history entries must be 0, 1 or 2")
        object.__setattr__(self, "history", h)
        imp = np.where(h == 2, 0, h) if self.imputed is None else np.asarray(self.imputed, np.int8)
        if imp.shape != h.shape or not np.isin(imp, (0, 1)).all():
            raise ParameterError("imputed history must be a 0/1 matrix shaped like the history")
        object.__setattr__(self, "imputed", imp)

    @property
    def q(self):
        return self.history.shape[0]

    @property
    def N(self):
        return self.history.shape[1]

    @classmethod
    def empty(cls, q, N):
        return cls(np.full((q, N), 2, dtype=np.int8))

    def push(self, row, imputed_row, delta=None):
        return QState(np.vstack([self.history[1:], np.asarray(row, dtype=np.int8)[None]]),
                      np.vstack([self.imputed[1:], np.asarray(imputed_row, dtype=np.int8)[None]]),
                      delta)


@dataclass(frozen=True)
class Experience:
    state: QState
    action: frozenset
    reward: float
    next_state: QState
    terminal: bool = False


def observation_row(S, detected, N):
    row = np.full(N, 2, dtype=np.int8)
    idx = list(S)
    row[idx] = 0
    row[list(detected)] = 1
    return row


def impute_state(row, belief, seed):
    """Replace every 2 by a Bernoulli(delta_i) draw. ``seed`` may be an int or
    a numpy Generator."""
    row = np.asarray(row, dtype=np.int8)
    delta = belief.delta if hasattr(belief, "delta") else np.asarray(belief, dtype=np.float64)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    draws = (rng.random(row.shape) < delta).astype(np.int8)
    return np.where(row == 2, draws, row).astype(np.int8)


class AttackBelief:
    """Gateway's estimate of each device's attack probability from the
    windows it authenticated: smoothed hit rate plus an optimism bonus that
    shrinks as the device is checked more often, so unchecked devices get
    checked eventually."""

    def __init__(self, N, prior=0.1, bonus=0.3):
        self.covered = np.zeros(N, dtype=np.int64)
        self.hits = np.zeros(N, dtype=np.int64)
        self.t = 0
        self.prior = prior
        self.bonus = bonus

    @property
    def delta(self):
        rate = (self.hits + self.prior) / (self.covered + 1)
        explore = self.bonus * np.sqrt(math.log(self.t + 2) / (self.covered + 1))
        return np.clip(rate + explore, 0.0, 1.0)

    def update(self, S, detected):
        self.covered[list(S)] += 1
        self.hits[list(detected)] += 1
        self.t += 1


def knapsack_values(profits, freqs, cap):
    """Optimal knapsack value for each row of ``profits`` (B x N), no
    traceback. Negative profits are never worth taking."""
    g = reduce(math.gcd, (int(f) for f in freqs))
    w = [int(f) // g for f in freqs]
    cap = int(cap) // g
    profits = np.maximum(np.asarray(profits, dtype=np.float64), 0.0)
    best = np.zeros((profits.shape[0], cap + 1))
    for i, wi in enumerate(w):
        if wi > cap:
            continue
        np.maximum(best[:, wi:], best[:, : cap + 1 - wi] + profits[:, i:i + 1], out=best[:, wi:])
    return best[:, cap]


class DeviceQNetwork:
    """Additive Q-function over device sets; see the module docstring."""

    def __init__(self, config, hidden=16, seed=0, learning_rate=3e-3, offset_rate=0.1):
        self.config = config
        self.values = config.value_array
        self.net = Network(N_FEATURES, [hidden], 1, seed=seed)
        self.c = 0.0
        self.opt = Adam(learning_rate)
        self.offset_rate = offset_rate

    def features(self, states):
        """(q, B*N, 5) input per device and step: imputed attack flag,
        authenticated flag, belief, N*v_i and N*v_i*belief."""
        N = self.config.N
        scaled_v = N * self.values
        seqs = []
        for s in states:
            delta = s.delta if s.delta is not None else np.zeros(N)
            x = np.empty((s.q, N, N_FEATURES))
            x[:, :, 0] = s.imputed
            x[:, :, 1] = s.history != 2
            x[:, :, 2] = delta
            x[:, :, 3] = scaled_v
            x[:, :, 4] = scaled_v * delta
            seqs.append(x)
        return np.concatenate(seqs, axis=1)

    def scores(self, states):
        """Per-device scores q_i / N as a (B, N) array."""
        out = forward(self.net, self.features(states)).outputs[-1, :, 0]
        return out.reshape(len(states), self.config.N) / self.config.N

    def value(self, state, S):
        sc = self.scores([state])[0]
        return self.c + float(sum(sc[i] for i in S))

    def best(self, state):
        sc = self.scores([state])[0]
        S = knapsack(np.maximum(sc, 0.0), self.config.freqs, self.config.cap)
        return S, self.c + float(sum(sc[i] for i in S))

    def best_values(self, states):
        sc = self.scores(states)
        return self.c + knapsack_values(sc, self.config.freqs, self.config.cap)

    def fit(self, states, device_targets, offset_targets):
        """One optimiser step pulling each device score towards its target
        (B x N) and the offset towards the mean of ``offset_targets``;
        returns the mean squared score error."""
        N = self.config.N
        result = forward(self.net, self.features(states))
        out = result.outputs[-1, :, 0]
        err = out - N * np.asarray(device_targets, dtype=np.float64).reshape(-1)
        loss = float(np.mean(err * err))
        if not np.isfinite(loss):
            raise TrainingDivergedError("Q-network loss is not finite")
        d_out = np.zeros_like(result.outputs)
        d_out[-1, :, 0] = 2.0 * err / len(err)
        grads = backward(self.net, result, d_out)
        self.opt.step(self.net.params(), grads)
        self.c -= self.offset_rate * (self.c - float(np.mean(offset_targets)))
        return loss / (N * N)


class TabularQ:
    """Table of Q(state, action) for small games; keys are history bytes."""

    def __init__(self, actions):
        self.actions = list(actions)
        self.table = {}

    def _key(self, state):
        return state.history.tobytes()

    def value(self, state, S):
        return self.table.get((self._key(state), S), 0.0)

    def best(self, state):
        vals = [self.value(state, S) for S in self.actions]
        k = int(np.argmax(vals))
        return self.actions[k], vals[k]

    def update(self, state, S, value):
        self.table[(self._key(state), S)] = value


def q_update(qnet, exp, alpha, gamma):
    """Bellman update Q + alpha (U + gamma max_S' Q(S', h') - Q) for one
    experience. Tabular Q-functions are updated in place; the new value is
    returned either way (network callers regress on it)."""
    if not 0 < alpha <= 1:
        raise ParameterError("alpha must lie in (0, 1]")
    if not 0 <= gamma < 1:
        raise ParameterError("gamma must lie in [0, 1)")
    current = qnet.value(exp.state, exp.action)
    target = exp.reward
    if not exp.terminal and gamma > 0:
        target += gamma * qnet.best(exp.next_state)[1]
    new = current + alpha * (target - current)
    if hasattr(qnet, "update"):
        qnet.update(exp.state, exp.action, new)
    return new


class ActionPool:
    """Random feasible actions for exploration: uniform over the
    enumerated maximal sets when there are few, otherwise a seeded sample
    of maximal sets built by greedy filling in random order."""

    def __init__(self, config, rng):
        self.config = config
        self.rng = rng
        self.enumerated = None
        if count_gateway_strategies(config.freqs, config.cap) <= POOL_LIMIT:
            self.enumerated = enumerate_gateway_strategies(config.freqs, config.cap) or [frozenset()]

    def _random_maximal(self):
        freqs, cap = self.config.freqs, self.config.cap
        used, S = 0, set()
        for i in self.rng.permutation(self.config.N):
            if used + freqs[i] <= cap:
                S.add(int(i))
                used += freqs[i]
        return frozenset(S)

    def size(self):
        return len(self.enumerated) if self.enumerated is not None else POOL_SIZE

    def sample(self):
        if self.enumerated is not None:
            return self.enumerated[int(self.rng.integers(len(self.enumerated)))]
        pool = [self._random_maximal() for _ in range(POOL_SIZE)]
        return pool[int(self.rng.integers(POOL_SIZE))]


def epsilon_schedule(step, total, start, end=0.05, fraction=0.2):
    """Linear decay from ``start`` to ``end`` over the first ``fraction``
    of training; ``start`` = ``end`` = 1 keeps acting at random."""
    span = max(1, int(fraction * total))
    return start + (end - start) * min(step / span, 1.0)


def policy_entropy(epsilon, pool_size):
    """Entropy (nats) of an epsilon-greedy choice over ``pool_size`` actions."""
    if pool_size <= 1:
        return 0.0
    p_greedy = 1 - epsilon + epsilon / pool_size
    p_other = epsilon / pool_size
    h = -p_greedy * math.log(p_greedy) if p_greedy > 0 else 0.0
    if p_other > 0:
        h -= (pool_size - 1) * p_other * math.log(p_other)
    return h


@dataclass
class DRLConfig:
    q: int = 4
    train_steps: int = 2000
    episode_len: int = 50
    capacity: int = 10_000
    batch: int = 16
    epsilon: float = 1.0        # initial exploration rate
    epsilon_end: float = 0.05
    alpha: float = 1.0          # Bellman step size
    gamma: float = 0.3
    hidden: int = 16
    learning_rate: float = 3e-3
    prior: float = 0.1
    bonus: float = 0.3
    seed: int = 0

    def __post_init__(self):
        if self.capacity < self.batch:
            raise ParameterError("replay capacity must hold at least one batch")
        if self.q < 1 or self.train_steps < 1 or self.episode_len < 1:
            raise ParameterError("q, train_steps and episode_len must be positive")


@dataclass
class DRLGateway:
    """Gateway agent: belief, history, Q-network and exploration state."""

    config: object
    qnet: DeviceQNetwork
    belief: AttackBelief
    state: QState
    rng: np.random.Generator
    pool: ActionPool
    epsilon: float = 0.0
    learning: bool = True
    name: str = "drl"
    last: dict = field(default_factory=dict)

    def act(self):
        if self.rng.random() < self.epsilon:
            S = self.pool.sample()
        else:
            S = self.qnet.best(self.state)[0]
        self.last = {"state": self.state, "action": S}
        return S

    def observe(self, S, detected, attacked):
        N = self.config.N
        raw = observation_row(S, detected, N)
        delta = self.belief.delta
        row = impute_state(raw, delta, self.rng)
        # imputed utility: attacks on unchecked devices come from the draw
        reward = 1.0 - float(self.values[(row == 1) & (raw == 2)].sum())
        self.belief.update(S, detected)
        self.state = self.state.push(raw, row, self.belief.delta)
        self.last.update(reward=reward, next_state=self.state)

    @property
    def values(self):
        return self.config.value_array

    def frozen(self):
        """Greedy copy that no longer explores or learns."""
        return DRLGateway(self.config, self.qnet, self.belief, self.state, self.rng,
                          self.pool, 0.0, False)


@dataclass
class DRLResult:
    gateway: DRLGateway
    attacker: FPAttacker
    trace: PlayTrace
    losses: np.ndarray

    def checkpoint(self):
        blob = to_checkpoint(self.gateway.qnet.net)
        blob["bias"] = self.gateway.qnet.c
        return blob


def _learn(qnet, batch, drl):
    """Bellman targets for every action at once. With the unchecked devices
    imputed, the utility of any set S' in that round is
    1 - sum_i v_i a_i + sum_{i in S'} v_i a_i (a the imputed attack row), so
    each device score regresses on v_i a_i and the offset on the rest plus
    gamma * max Q(h'). The next state is treated as independent of S'."""
    v = qnet.values
    attacks = np.array([e.next_state.imputed[-1] for e in batch], dtype=np.float64)
    device_targets = attacks * v
    offset = 1.0 - device_targets.sum(axis=1)
    if drl.gamma > 0:
        live = [k for k, e in enumerate(batch) if not e.terminal]
        if live:
            offset[live] += drl.gamma * qnet.best_values([batch[k].next_state for k in live])
    states = [e.state for e in batch]
    if drl.alpha < 1:
        current = qnet.scores(states)
        device_targets = current + drl.alpha * (device_targets - current)
        offset = qnet.c + drl.alpha * (offset - qnet.c)
    return qnet.fit(states, device_targets, offset)


def drl_train(config, drl=None, attacker=None):
    """Train the gateway against a fictitious-play attacker for
    ``drl.train_steps`` rounds (episodes of ``drl.episode_len`` rounds).

    Each round: act epsilon-greedily, observe detections, impute the rest,
    store the experience, then take one gradient step on a replay batch
    with Bellman targets. Returns the trained agent, the attacker (to keep
    playing against it) and the per-round trace.
    """
    drl = drl or DRLConfig()
    rng = np.random.default_rng(drl.seed)
    N = config.N
    belief = AttackBelief(N, drl.prior, drl.bonus)
    qnet = DeviceQNetwork(config, drl.hidden, seed=int(rng.integers(2 ** 31)),
                          learning_rate=drl.learning_rate)
    state = QState(np.full((drl.q, N), 2, dtype=np.int8), None, belief.delta)
    pool = ActionPool(config, rng)
    gateway = DRLGateway(config, qnet, belief, state, rng, pool, drl.epsilon)
    attacker = attacker or FPAttacker(config)
    memory = deque(maxlen=drl.capacity)
    u_g = np.empty(drl.train_steps)
    entropy = np.empty(drl.train_steps)
    losses = []
    for step in range(drl.train_steps):
        gateway.epsilon = epsilon_schedule(step, drl.train_steps, drl.epsilon, drl.epsilon_end)
        S = gateway.act()
        A = attacker.act()
        u_a = sum(config.value_array[i] for i in A if i not in S)
        gateway.observe(S, frozenset(A & S), A)
        attacker.observe(S)
        u_g[step] = 1.0 - u_a
        entropy[step] = policy_entropy(gateway.epsilon, pool.size())
        last = gateway.last
        terminal = (step + 1) % drl.episode_len == 0
        memory.append(Experience(last["state"], last["action"], last["reward"],
                                 last["next_state"], terminal))
        if len(memory) >= drl.batch:
            batch = [memory[k] for k in rng.integers(len(memory), size=drl.batch)]
            losses.append(_learn(qnet, batch, drl))
    return DRLResult(gateway, attacker, PlayTrace(u_g, 1.0 - u_g, entropy), np.asarray(losses))


def evaluate(result, steps):
    """Keep playing the frozen greedy policy against the same attacker."""
    gateway = result.gateway.frozen()
    attacker = result.attacker
    config = gateway.config
    u_g = np.empty(steps)
    entropy = np.empty(steps)
    for k in range(steps):
        S = gateway.act()
        A = attacker.act()
        u_g[k] = 1.0 - sum(config.value_array[i] for i in A if i not in S)
        gateway.observe(S, frozenset(A & S), A)
        attacker.observe(S)
        entropy[k] = 0.0
    return PlayTrace(u_g, 1.0 - u_g, entropy)


__all__ = [
    "AttackBelief", "DRLConfig", "DRLGateway", "DRLResult", "DeviceQNetwork", "Experience",
    "QState", "TabularQ", "coverage_entropy", "drl_train", "evaluate", "impute_state",
    "knapsack_values", "observation_row", "q_update",
]
