"""Head-to-head policy comparison against the fictitious-play attacker."""

from __future__ import annotations

from dataclasses import replace

from ..errors import ParameterError
from .arena import BaselineGateway, FPGateway, play
from .drl import DRLConfig, drl_train, evaluate

POLICIES = ("fp", "drl", "equal", "proportional")


def policy_utility(config, policy, seed, train_steps=2000, eval_steps=2000, drl=None):
    """Mean gateway utility over the last ``eval_steps`` rounds of play
    against a fresh fictitious-play attacker.

    Every policy plays ``train_steps + eval_steps`` rounds so the attacker
    has the same history length when scoring starts; the DRL gateway
    learns during the first part and acts greedily in the second.
    """
    if policy == "drl":
        cfg = replace(drl or DRLConfig(), train_steps=train_steps, seed=seed)
        return evaluate(drl_train(config, cfg), eval_steps).mean_u_g()
    if policy == "fp":
        gateway = FPGateway(config)
    elif policy in ("equal", "proportional"):
        gateway = BaselineGateway(policy, config, seed)
    else:
        raise ParameterError(f"unknown policy {policy!r}; choose from {POLICIES}")
    return play(config, gateway, train_steps + eval_steps).mean_u_g(train_steps)
