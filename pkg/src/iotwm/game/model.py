"""Game instances, utilities and allocation vectors.

Devices are identified by 0-based index. A strategy is a ``frozenset`` of
indices: for the gateway the devices it authenticates this window, for the
attacker the devices it compromises.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction
from numbers import Integral

import numpy as np

from ..errors import FormatError, ParameterError


def _integer_freqs(freqs):
    out = []
    for f in freqs:
        if isinstance(f, Integral):
            v = int(f)
        elif isinstance(f, float) and f.is_integer():
            v = int(f)
        else:
            raise ParameterError(
                f"frequency {f!r} is not an integer number of Hz; "
                "rescale all frequencies (e.g. to mHz) so they are integers"
            )
        if v <= 0:
            raise ParameterError(f"frequencies must be positive, got {v}")
        out.append(v)
    if not out:
        raise ParameterError("need at least one device")
    return tuple(out)


@dataclass(frozen=True)
class GameConfig:
    """One gateway-vs-attacker instance.

    ``cap`` is the integer per-window budget C/d in the same unit as the
    frequencies; values v_i = f_i / sum(f) and R = cap / sum(f) follow.
    """

    freqs: tuple
    cap: int
    K: int

    def __post_init__(self):
        object.__setattr__(self, "freqs", _integer_freqs(self.freqs))
        if isinstance(self.cap, float) and self.cap.is_integer():
            object.__setattr__(self, "cap", int(self.cap))
        if not isinstance(self.cap, Integral) or self.cap < 0:
            raise ParameterError(f"cap must be a non-negative integer, got {self.cap!r}")
        if not 1 <= self.K <= len(self.freqs):
            raise ParameterError(f"need 1 <= K <= N={len(self.freqs)}, got K={self.K}")

    @classmethod
    def from_budget(cls, freqs, R, K):
        """Instance whose cap is floor(R * sum(f))."""
        freqs = _integer_freqs(freqs)
        R = Fraction(repr(R)) if isinstance(R, float) else Fraction(R)
        return cls(freqs, int(math.floor(R * sum(freqs))), K)

    @property
    def N(self):
        return len(self.freqs)

    @property
    def total(self):
        return sum(self.freqs)

    @property
    def values(self):
        total = self.total
        return tuple(Fraction(f, total) for f in self.freqs)

    @property
    def value_array(self):
        return np.asarray(self.freqs, dtype=np.float64) / self.total

    @property
    def R(self):
        return Fraction(self.cap, self.total)

    def feasible(self, S):
        return sum(self.freqs[i] for i in S) <= self.cap

    def to_json(self):
        return json.dumps({"freqs": list(self.freqs), "cap": self.cap, "K": self.K})

    @classmethod
    def from_json(cls, text):
        try:
            data = json.loads(text)
            return cls(tuple(data["freqs"]), data["cap"], int(data["K"]))
        except (KeyError, TypeError, json.JSONDecodeError) as exc:
            raise FormatError(f"bad game instance: {exc}") from None


def random_instance(N, K, R, seed, low=10, high=150, unit=100):
    """Random instance with frequencies on a ``unit`` Hz grid in
    [low*unit, high*unit] and budget floor(R * sum f)."""
    rng = np.random.default_rng(seed)
    freqs = tuple(int(x) * unit for x in rng.integers(low, high + 1, size=N))
    return GameConfig.from_budget(freqs, Fraction(R).limit_denominator(10 ** 6), K)


def utilities(S, A, values):
    """(u_gateway, u_attacker) for gateway set S and attacker set A. Exact
    when ``values`` are Fractions."""
    u_a = sum((values[i] for i in A if i not in S), 0 * values[0])
    return 1 - u_a, u_a


def _probabilities(mixed):
    items = list(mixed.items()) if isinstance(mixed, dict) else list(mixed)
    total = sum(p for _, p in items)
    exact = all(isinstance(p, (Fraction, Integral)) for _, p in items)
    if (total != 1) if exact else abs(total - 1.0) > 1e-9:
        raise ParameterError(f"mixed strategy sums to {total}, not 1")
    if any(p < 0 for _, p in items):
        raise ParameterError("mixed strategy has negative probabilities")
    return items, exact


def allocation_from_mixed(mixed, N):
    """Per-device marginal probability of being in the played set.

    ``mixed`` maps strategies to probabilities (or is a sequence of
    (strategy, probability) pairs). Fraction probabilities give a tuple of
    Fractions, anything else a float array.
    """
    items, exact = _probabilities(mixed)
    if exact:
        out = [Fraction(0)] * N
        for S, p in items:
            for i in S:
                out[i] += p
        return tuple(out)
    out = np.zeros(N)
    for S, p in items:
        out[list(S)] += p
    return out


def expected_utility(alloc_a, alloc_g, values):
    """(U_g, U_a) with U_a = sum_i a_i (1 - g_i) v_i."""
    if all(isinstance(x, (Fraction, Integral)) for x in (*alloc_a, *alloc_g, *values)):
        u_a = sum((a * (1 - g) * v for a, g, v in zip(alloc_a, alloc_g, values)), Fraction(0))
        return 1 - u_a, u_a
    a, g, v = (np.asarray(x, dtype=np.float64) for x in (alloc_a, alloc_g, values))
    u_a = float(np.sum(a * (1.0 - g) * v))
    return 1.0 - u_a, u_a


def relaxed_budget_gap(alloc_g, values, R):
    """sum_i v_i g_i - R. Non-positive when the allocation meets the budget on
    average; a diagnostic only, the exact solution works on mixed strategies."""
    return sum(v * g for v, g in zip(values, alloc_g)) - R


def indicator_matrix(strategies, N):
    """Rows are 0/1 membership vectors of ``strategies``."""
    M = np.zeros((len(strategies), N))
    for r, S in enumerate(strategies):
        M[r, list(S)] = 1.0
    return M
