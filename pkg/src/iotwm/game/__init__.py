"""Constant-sum game between the authenticating gateway and the attacker."""

from .model import (GameConfig, allocation_from_mixed, expected_utility, random_instance,
                    relaxed_budget_gap, utilities)
from .solve import MsneResult, deviation_gains, msne, payoff_matrix, pure_equilibria, strategy_counts
from .strategies import (attacker_strategy_space, brute_force_maximal, count_gateway_strategies,
                         enumerate_gateway_strategies)

__all__ = [
    "GameConfig", "MsneResult", "allocation_from_mixed", "attacker_strategy_space",
    "brute_force_maximal", "count_gateway_strategies", "deviation_gains",
    "enumerate_gateway_strategies", "expected_utility", "msne", "payoff_matrix",
    "pure_equilibria", "random_instance", "relaxed_budget_gap", "strategy_counts", "utilities",
]
