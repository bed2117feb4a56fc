"""Mixed-strategy equilibrium of the constant-sum authentication game."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import reduce

import numpy as np

from ..errors import TooLargeError
from .lp import solve_positive_game
from .model import GameConfig, allocation_from_mixed, expected_utility
from .strategies import attacker_strategy_space, count_gateway_strategies, enumerate_gateway_strategies

GUARD = 1_000_000       # max |Q^g| * |Q^a| for the matrix solver
EXACT_LIMIT = 100_000   # max |Q^g| * |Q^a| solved in integer arithmetic


@dataclass
class MsneResult:
    value_a: object
    value_g: object
    alloc_g: object
    alloc_a: object
    mixed_g: list            # (strategy, probability) with probability > 0
    mixed_a: list
    gateway_strategies: list
    attacker_strategies: list
    exact: bool

    @property
    def counts(self):
        return len(self.gateway_strategies), len(self.attacker_strategies)

    def to_json(self):
        conv = float if not self.exact else str
        return json.dumps({
            "value_attacker": conv(self.value_a),
            "value_gateway": conv(self.value_g),
            "alloc_gateway": [conv(x) for x in self.alloc_g],
            "alloc_attacker": [conv(x) for x in self.alloc_a],
            "mixed_gateway": [[sorted(S), conv(p)] for S, p in self.mixed_g],
            "mixed_attacker": [[sorted(A), conv(p)] for A, p in self.mixed_a],
            "gateway_strategy_count": len(self.gateway_strategies),
            "attacker_strategy_count": len(self.attacker_strategies),
            "exact": self.exact,
        }, indent=2)


def gateway_strategies(config):
    strategies = enumerate_gateway_strategies(config.freqs, config.cap)
    return strategies or [frozenset()]


def payoff_matrix(config, gateway, attacker):
    """Integer attacker payoffs sum_{i in A \\ S} f_i / g (rows attacker,
    columns gateway), g the gcd of the frequencies."""
    g = reduce(math.gcd, config.freqs)
    f = np.asarray(config.freqs, dtype=np.int64) // g
    Ig = np.zeros((len(gateway), config.N), dtype=np.int64)
    for c, S in enumerate(gateway):
        Ig[c, list(S)] = 1
    Ia = np.zeros((len(attacker), config.N), dtype=np.int64)
    for r, A in enumerate(attacker):
        Ia[r, list(A)] = 1
    # A \ S weight = f.A - f.(A & S)
    return (Ia @ f)[:, None] - (Ia * f) @ Ig.T, g


def strategy_counts(config):
    """(|Q^g|, |Q^a|) without enumerating either space."""
    return count_gateway_strategies(config.freqs, config.cap), math.comb(config.N, config.K)


def msne(config: GameConfig, exact=None, guard=GUARD):
    """Equilibrium value, mixed strategies and allocations by linear
    programming over the non-dominated strategies."""
    n_g, n_a = strategy_counts(config)
    if max(n_g, 1) * n_a > guard:
        raise TooLargeError(
            f"{n_g:.0f} gateway x {n_a} attacker strategies exceed {guard:g}; "
            "use fictitious play"
        )
    gateway = gateway_strategies(config)
    attacker = list(attacker_strategy_space(config.N, config.K))
    if exact is None:
        exact = len(gateway) * len(attacker) <= EXACT_LIMIT
    M, g = payoff_matrix(config, gateway, attacker)
    sol = solve_positive_game((M + 1).tolist() if exact else M + 1.0, exact=exact)
    total = config.total
    if exact:
        value_a = (sol.value - 1) * g / total
        one = Fraction(1)
    else:
        value_a = float((sol.value - 1.0) * g / total)
        one = 1.0
    mixed_g = [(S, p) for S, p in zip(gateway, sol.col_mix) if p > 0]
    mixed_a = [(A, p) for A, p in zip(attacker, sol.row_mix) if p > 0]
    if not exact:
        mixed_g = _renormalise(mixed_g)
        mixed_a = _renormalise(mixed_a)
    alloc_g = allocation_from_mixed(mixed_g, config.N)
    alloc_a = allocation_from_mixed(mixed_a, config.N)
    return MsneResult(value_a, one - value_a, alloc_g, alloc_a, mixed_g, mixed_a,
                      gateway, attacker, exact)


def _renormalise(items):
    total = sum(p for _, p in items)
    return [(S, float(p) / total) for S, p in items]


def deviation_gains(config, result):
    """How much each player could gain by a pure deviation from the
    computed mixes: (attacker gain, gateway gain). Both are <= 0 up to
    rounding at an equilibrium."""
    values = config.values if result.exact else config.value_array
    best_a = max(expected_utility(_indicator(A, config.N), result.alloc_g, values)[1]
                 for A in result.attacker_strategies)
    best_g = max(expected_utility(result.alloc_a, _indicator(S, config.N), values)[0]
                 for S in result.gateway_strategies)
    return best_a - result.value_a, best_g - result.value_g


def _indicator(S, N):
    return tuple(Fraction(1) if i in S else Fraction(0) for i in range(N))


def pure_equilibria(config):
    """All (S, A) pairs from which neither player gains by a unilateral pure
    deviation, searched exhaustively in exact arithmetic."""
    gateway = gateway_strategies(config)
    attacker = list(attacker_strategy_space(config.N, config.K))
    M, _ = payoff_matrix(config, gateway, attacker)
    best_attack = M.max(axis=0)      # attacker's best reply to each gateway set
    best_defence = M.min(axis=1)     # gateway's best reply to each attacker set
    return [(gateway[c], attacker[r]) for r in range(len(attacker)) for c in range(len(gateway))
            if M[r, c] == best_attack[c] and M[r, c] == best_defence[r]]
