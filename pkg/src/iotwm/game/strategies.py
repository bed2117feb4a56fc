"""Non-dominated strategy spaces.

Gateway: the maximal budget-feasible device sets. Attacker: the K-subsets.

Gateway enumeration uses a subset-sum table plus path reconstruction.
Sort devices by frequency; for a maximal set S let j be the cheapest device
left out. Every cheaper device is in S, and S is maximal exactly when
cap - f_j < sum(S) <= cap. The remaining members come from the devices
dearer than j, so each maximal set is a pair (j, subset of the dearer
devices with sum in a known window). The table M[i, s] says whether the i
dearest devices have a subset summing to s; walking back through it yields
every such subset and never enters a dead branch.
"""

from __future__ import annotations

import itertools
import math
import warnings
from functools import reduce

import numpy as np

from ..errors import ParameterError, TooLargeError
from .model import _integer_freqs

TABLE_LIMIT = 50_000_000   # cells in the subset-sum table


def _scaled(freqs, cap):
    freqs = _integer_freqs(freqs)
    g = reduce(math.gcd, freqs)
    return [f // g for f in freqs], int(cap) // g


def _descending(freqs):
    """Device indices from dearest to cheapest; ties keep the higher index
    first so that the cheapest-excluded device is the lowest index."""
    return sorted(range(len(freqs)), key=lambda i: (-freqs[i], -i))


def subset_sum_table(weights, cap):
    """M[i, s] is True iff some subset of weights[:i] sums to s (s <= cap)."""
    if (len(weights) + 1) * (cap + 1) > TABLE_LIMIT:
        raise TooLargeError(
            f"subset-sum table of {(len(weights) + 1) * (cap + 1)} cells exceeds {TABLE_LIMIT}"
        )
    M = np.zeros((len(weights) + 1, cap + 1), dtype=bool)
    M[0, 0] = True
    for i, w in enumerate(weights, start=1):
        M[i] = M[i - 1]
        if w <= cap:
            M[i, w:] |= M[i - 1, : cap + 1 - w]
    return M


def _rec_path(M, weights, i, s):
    """Every subset of weights[:i] summing to exactly s (M[i, s] True),
    as lists of positions."""
    stack = [(i, s, [])]
    while stack:
        i, s, chosen = stack.pop()
        if i == 0:
            yield chosen
            continue
        w = weights[i - 1]
        if s >= w and M[i - 1, s - w]:
            stack.append((i - 1, s - w, chosen + [i - 1]))
        if M[i - 1, s]:
            stack.append((i - 1, s, chosen))


def enumerate_gateway_strategies(freqs, cap):
    """All maximal feasible device sets, sorted lexicographically by their
    sorted index tuples."""
    w, cap = _scaled(freqs, cap)
    N = len(w)
    if cap < min(w):
        warnings.warn("budget is below every device frequency; no device can be authenticated")
        return []
    order = _descending(w)
    dear = [w[i] for i in order]
    if sum(w) <= cap:
        return [frozenset(range(N))]
    M = subset_sum_table(dear, cap)
    out = []
    prefix = 0
    # position p in ascending order is position N-1-p in `order`
    for p in range(N):
        j = order[N - 1 - p]
        hi = cap - prefix
        if hi < 0:
            break
        lo = hi - w[j]            # need lo < sum(T) <= hi
        cheaper = order[N - p:]
        rows = N - 1 - p          # the devices dearer than j
        for s in range(max(lo + 1, 0), hi + 1):
            if M[rows, s]:
                for picked in _rec_path(M, dear, rows, s):
                    out.append(frozenset(cheaper).union(order[k] for k in picked))
        prefix += w[j]
    out.sort(key=lambda S: tuple(sorted(S)))
    return out


def count_gateway_strategies(freqs, cap):
    """Number of maximal feasible sets, without listing them. Float count:
    exact below 2**53, approximate (or inf) beyond."""
    w, cap = _scaled(freqs, cap)
    N = len(w)
    if cap < min(w):
        return 0.0
    if sum(w) <= cap:
        return 1.0
    order = _descending(w)
    asc = [w[i] for i in reversed(order)]
    prefix = np.concatenate([[0], np.cumsum(asc)])
    counts = np.zeros(cap + 1)
    counts[0] = 1.0
    total = 0.0
    # after adding the i dearest devices, `counts` covers subsets of them;
    # those are exactly the devices dearer than ascending position N-1-i
    for i in range(N):
        p = N - 1 - i
        hi = cap - int(prefix[p])
        if hi >= 0:
            lo = hi - asc[p]
            total += counts[max(lo + 1, 0): hi + 1].sum()
        wi = asc[p]
        if wi <= cap:
            counts[wi:] = counts[wi:] + counts[: cap + 1 - wi]
    return float(total)


def brute_force_maximal(freqs, cap):
    """Reference enumeration over all 2^N subsets."""
    freqs = list(freqs)
    N = len(freqs)
    feasible = []
    for mask in range(1 << N):
        S = frozenset(i for i in range(N) if mask >> i & 1)
        if sum(freqs[i] for i in S) <= cap:
            feasible.append(S)
    out = [S for S in feasible
           if not any(sum(freqs[i] for i in S) + freqs[e] <= cap for e in range(N) if e not in S)]
    out.sort(key=lambda S: tuple(sorted(S)))
    return out


class AttackerSpace:
    """Lazy lexicographic enumeration of the K-subsets of N devices."""

    def __init__(self, N, K):
        if not 1 <= K <= N:
            raise ParameterError(f"need 1 <= K <= N, got N={N}, K={K}")
        self.N, self.K = N, K

    @property
    def count(self):
        return math.comb(self.N, self.K)

    def __len__(self):
        return self.count

    def __iter__(self):
        return (frozenset(c) for c in itertools.combinations(range(self.N), self.K))


def attacker_strategy_space(N, K):
    return AttackerSpace(N, K)
