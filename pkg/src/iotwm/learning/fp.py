"""Fictitious play, best responses and the two sampling baselines."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import reduce

import numpy as np

from ..errors import ParameterError
from ..game.model import GameConfig, indicator_matrix
from ..game.strategies import count_gateway_strategies, enumerate_gateway_strategies


@dataclass
class Belief:
    """Empirical frequency with which each device was in the opponent's set.

    After t observations delta_i = counts_i / t, the telescoped form of the
    running-average update.
    """

    counts: np.ndarray
    t: int = 0

    @classmethod
    def empty(cls, N):
        return cls(np.zeros(N, dtype=np.int64), 0)

    @property
    def delta(self):
        if self.t == 0:
            return np.zeros(len(self.counts))
        return self.counts / self.t


def belief_update(belief, observed):
    """Belief after one more observed opponent set."""
    if belief.t < 0:
        raise ParameterError("t must be non-negative")
    counts = belief.counts.copy()
    counts[list(observed)] += 1
    return Belief(counts, belief.t + 1)


def _delta(belief):
    return belief.delta if isinstance(belief, Belief) else np.asarray(belief, dtype=np.float64)


def br_attacker(belief, values, K):
    """The K devices with the largest (1 - delta_i) v_i; ties to the smaller
    index."""
    delta = _delta(belief)
    values = np.asarray(values, dtype=np.float64)
    if not 1 <= K <= len(values):
        raise ParameterError(f"need 1 <= K <= N, got K={K}")
    score = (1.0 - delta) * values
    order = np.lexsort((np.arange(len(score)), -score))
    return frozenset(int(i) for i in order[:K])


def _gcd_scale(freqs, cap):
    g = reduce(math.gcd, (int(f) for f in freqs))
    return np.asarray(freqs, dtype=np.int64) // g, int(cap) // g


def knapsack(profit, freqs, cap, tol=1e-12):
    """0/1 knapsack over integer weights, padded to a maximal set.

    Devices are decided from index 0 upward on the way back through the
    table, and a device is taken whenever taking it is optimal within
    ``tol``, so ties go to sets containing lower indices. Free capacity is
    then filled in index order (zero-profit devices never hurt).
    """
    w, cap = _gcd_scale(freqs, cap)
    profit = np.asarray(profit, dtype=np.float64)
    N = len(w)
    if cap < 0:
        raise ParameterError("cap must be non-negative")
    best = np.zeros(cap + 1)               # best[j]: max profit with weight <= j
    take = np.zeros((N, cap + 1), dtype=bool)
    for i in range(N - 1, -1, -1):         # last processed is device 0
        wi = int(w[i])
        if wi > cap:
            continue
        cand = best[: cap + 1 - wi] + profit[i]
        t = cand >= best[wi:] - tol
        take[i, wi:] = t
        best[wi:] = np.where(t, np.maximum(cand, best[wi:]), best[wi:])
    j = cap
    chosen = []
    for i in range(N):
        if take[i, j]:
            chosen.append(i)
            j -= int(w[i])
    used = int(w[chosen].sum()) if chosen else 0
    picked = set(chosen)
    for i in range(N):
        if i not in picked and used + w[i] <= cap:
            picked.add(i)
            used += int(w[i])
    return frozenset(picked)


def br_gateway(belief, values, freqs, cap):
    """Feasible set maximising sum delta_i v_i (exact knapsack), maximal."""
    return knapsack(_delta(belief) * np.asarray(values, dtype=np.float64), freqs, cap)


class GatewayOracle:
    """Best-response helper that scans the enumerated maximal sets when
    there are few of them and falls back to the knapsack otherwise. Both
    return an optimal set; the scan is much faster for small games."""

    def __init__(self, config, limit=5000):
        self.config = config
        self.values = config.value_array
        self.strategies = None
        if count_gateway_strategies(config.freqs, config.cap) <= limit:
            self.strategies = enumerate_gateway_strategies(config.freqs, config.cap) or [frozenset()]
            self.matrix = indicator_matrix(self.strategies, config.N)

    def best(self, delta):
        profit = np.asarray(delta, dtype=np.float64) * self.values
        if self.strategies is None:
            return knapsack(profit, self.config.freqs, self.config.cap)
        return self.strategies[int(np.argmax(self.matrix @ profit))]


def attacker_value(delta_g, values, K):
    """max over K-sets of the attacker's expected utility against the
    gateway allocation delta_g."""
    score = (1.0 - np.asarray(delta_g)) * values
    return float(np.sort(score)[::-1][:K].sum())


@dataclass
class FPResult:
    belief_g: Belief          # attacker's record of gateway sets
    belief_a: Belief          # gateway's record of attacker sets
    converged: bool
    iterations: int
    value_trace: np.ndarray   # attacker utility at the empirical allocations
    gap_trace: np.ndarray     # best-response upper minus lower bound on the value
    realized: np.ndarray      # attacker utility of the pure pair played each step
    gateway_play: dict = None  # gateway set -> times played
    alloc_error: float = 0.0   # max over iterates of |sum(attacker allocation) - K|

    def gateway_mix(self):
        """Empirical mixed strategy of the gateway, [(S, frequency), ...]."""
        t = sum(self.gateway_play.values())
        return [(S, c / t) for S, c in sorted(self.gateway_play.items(), key=lambda kv: sorted(kv[0]))]

    @property
    def alloc_g(self):
        return self.belief_g.delta

    @property
    def alloc_a(self):
        return self.belief_a.delta

    @property
    def value_a(self):
        return float(self.value_trace[-1])

    @property
    def value_g(self):
        return 1.0 - self.value_a

    @property
    def average_realized_a(self):
        return float(self.realized.mean())


def fp_run(config: GameConfig, eps=1e-3, max_iter=100_000, min_iter=1):
    """Simultaneous fictitious play until no empirical frequency moves by
    ``eps`` or more in one step (or ``max_iter``)."""
    if not eps > 0:
        raise ParameterError("eps must be positive")
    N, K = config.N, config.K
    v = config.value_array
    oracle = GatewayOracle(config)
    g_counts = np.zeros(N, dtype=np.int64)
    a_counts = np.zeros(N, dtype=np.int64)
    values, uppers, lowers, realized = [], [], [], []
    dg = da = np.zeros(N)
    S = oracle.best(da)
    played = {}
    alloc_error = 0.0
    converged = False
    t = 0
    while t < max_iter:
        A = br_attacker(dg, v, K)
        g_counts[list(S)] += 1
        a_counts[list(A)] += 1
        played[S] = played.get(S, 0) + 1
        realized.append(sum(v[i] for i in A if i not in S))
        t += 1
        prev_g, prev_a = dg, da
        dg, da = g_counts / t, a_counts / t
        alloc_error = max(alloc_error, abs(float(da.sum()) - K))
        S = oracle.best(da)           # next gateway move, also the lower bound
        values.append(float(np.sum(da * (1.0 - dg) * v)))
        uppers.append(attacker_value(dg, v, K))
        lowers.append(float(np.sum(da * v) - sum(da[i] * v[i] for i in S)))
        step = max(np.abs(dg - prev_g).max(), np.abs(da - prev_a).max())
        if t > 1 and t >= min_iter and step < eps:
            converged = True
            break
    gaps = np.asarray(uppers) - np.asarray(lowers)
    return FPResult(Belief(g_counts, t), Belief(a_counts, t), converged, t,
                    np.asarray(values), gaps, np.asarray(realized), played, alloc_error)


class BaselinePolicy:
    """Random gateway sets: devices visited in a sampled order and added
    while the budget allows. ``equal`` samples the order uniformly,
    ``proportional`` draws without replacement with weights v_i."""

    def __init__(self, kind, config, seed):
        if kind not in ("equal", "proportional"):
            raise ParameterError(f"unknown baseline {kind!r}")
        self.kind = kind
        self.config = config
        self.rng = np.random.default_rng(seed)
        self.freqs = np.asarray(config.freqs)

    def sample(self):
        N = self.config.N
        if self.kind == "equal":
            order = self.rng.permutation(N)
        else:
            order = self.rng.choice(N, N, replace=False, p=self.config.value_array)
        used = 0
        S = set()
        for i in order:
            if used + self.freqs[i] <= self.config.cap:
                S.add(int(i))
                used += self.freqs[i]
        return frozenset(S)

    __call__ = sample


def baseline_policy(kind, config, seed):
    return BaselinePolicy(kind, config, seed)

