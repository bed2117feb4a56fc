"""Fictitious play, baselines and the deep Q-learning gateway."""

from .arena import BaselineGateway, FPAttacker, FPGateway, PlayTrace, play
from .compare import POLICIES, policy_utility
from .drl import (AttackBelief, DRLConfig, DeviceQNetwork, Experience, QState, TabularQ,
                  drl_train, evaluate, impute_state, q_update)
from .fp import (Belief, FPResult, baseline_policy, belief_update, br_attacker, br_gateway,
                 fp_run, knapsack)

__all__ = [
    "AttackBelief", "BaselineGateway", "Belief", "DRLConfig", "DeviceQNetwork", "Experience",
    "FPAttacker", "FPGateway", "FPResult", "POLICIES", "PlayTrace", "QState", "TabularQ",
    "baseline_policy", "belief_update", "br_attacker", "br_gateway", "drl_train", "evaluate",
    "fp_run", "impute_state", "knapsack", "play", "policy_utility", "q_update",
]
