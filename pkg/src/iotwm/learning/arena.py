"""Repeated play between a gateway policy and a fictitious-play attacker.

The attacker sees every past gateway set and best-responds to their
empirical frequency. Gateway policies see the attacker only where they
authenticated, except the full-information fictitious-play gateway.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fp import BaselinePolicy, GatewayOracle, br_attacker

TRACE_HEADER = "step,U_g,U_a,policy_entropy"


class FPAttacker:
    def __init__(self, config):
        self.config = config
        self.values = config.value_array
        self.counts = np.zeros(config.N, dtype=np.int64)
        self.t = 0

    def act(self):
        delta = self.counts / self.t if self.t else np.zeros(self.config.N)
        return br_attacker(delta, self.values, self.config.K)

    def observe(self, S):
        self.counts[list(S)] += 1
        self.t += 1


class FPGateway:
    """Complete-information gateway: best response to the attacker's
    empirical frequencies."""

    name = "fp"

    def __init__(self, config):
        self.oracle = GatewayOracle(config)
        self.counts = np.zeros(config.N, dtype=np.int64)
        self.t = 0

    def act(self):
        delta = self.counts / self.t if self.t else np.zeros(len(self.counts))
        return self.oracle.best(delta)

    def observe(self, S, detected, attacked):
        self.counts[list(attacked)] += 1
        self.t += 1


class BaselineGateway:
    def __init__(self, kind, config, seed):
        self.name = kind
        self.sampler = BaselinePolicy(kind, config, seed)

    def act(self):
        return self.sampler()

    def observe(self, S, detected, attacked):
        pass


def coverage_entropy(counts, t):
    """Mean binary entropy (bits) of the per-device authentication rates."""
    if t == 0:
        return 0.0
    p = np.clip(counts / t, 1e-12, 1 - 1e-12)
    return float(np.mean(-(p * np.log2(p) + (1 - p) * np.log2(1 - p))))


@dataclass
class PlayTrace:
    u_g: np.ndarray
    u_a: np.ndarray
    entropy: np.ndarray

    def mean_u_g(self, start=0):
        return float(self.u_g[start:].mean())

    def csv_lines(self):
        yield TRACE_HEADER
        for k, (g, a, h) in enumerate(zip(self.u_g, self.u_a, self.entropy)):
            yield f"{k},{g:.10g},{a:.10g},{h:.6g}"


def play_step(config, gateway, attacker):
    """One round: both move, outcomes are revealed. Returns (S, A, u_g)."""
    S = gateway.act()
    A = attacker.act()
    u_a = sum(config.value_array[i] for i in A if i not in S)
    gateway.observe(S, frozenset(A & S), A)
    attacker.observe(S)
    return S, A, 1.0 - u_a


def play(config, gateway, steps, attacker=None):
    """Run ``steps`` rounds and record realized utilities."""
    attacker = attacker or FPAttacker(config)
    u_g = np.empty(steps)
    entropy = np.empty(steps)
    for k in range(steps):
        _, _, u_g[k] = play_step(config, gateway, attacker)
        entropy[k] = coverage_entropy(attacker.counts, attacker.t)
    return PlayTrace(u_g, 1.0 - u_g, entropy)
