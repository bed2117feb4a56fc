"""Gateway-side authentication decisions and the computation budget."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import ParameterError
from .watermark import as_bits, extract_stream

DEFAULT_THRESHOLD = 20.0  # percent mismatch per window


@dataclass(frozen=True)
class DetectionReport:
    mismatch_pct: float
    alarm: bool
    window_index: int
    delay_s: float
    device_id: int = 0

    @property
    def alarm_time(self):
        """Seconds from stream start until this window's decision."""
        return (self.window_index + 1) * self.delay_s

    def csv_row(self):
        return f"{self.window_index},{self.device_id},{self.mismatch_pct:.6g},{int(self.alarm)},{self.delay_s:.6g}"


REPORT_HEADER = "window_index,device_id,mismatch_pct,alarm,delay_s"


def compare(extracted, expected):
    """Percentage of positions where the two bit streams differ."""
    a, b = as_bits(extracted), as_bits(expected)
    if len(a) != len(b):
        raise ParameterError(f"stream lengths differ: {len(a)} vs {len(b)}")
    return 100.0 * np.count_nonzero(a != b) / len(a)


class StaticStreamSource:
    """Same hidden stream in every window."""

    def __init__(self, bits):
        self.bits = as_bits(bits)

    def next_bits(self):
        return self.bits.copy()

    def observe(self, transmitted):
        pass

    def reset(self):
        pass


def authenticate_window(frame, key, params, expected_source, threshold=DEFAULT_THRESHOLD,
                        device_id=0):
    """Extract the hidden stream from one received window and compare it with
    what ``expected_source`` predicts. The source then observes the received
    window (dynamic sources chain on it)."""
    expected = expected_source.next_bits()
    if len(expected) != params.ns:
        raise ParameterError(f"expected stream has {len(expected)} bits, params say ns={params.ns}")
    result = extract_stream(frame, key, params.beta)
    pct = compare(result.bits, expected)
    expected_source.observe(frame)
    return DetectionReport(
        mismatch_pct=pct,
        alarm=pct > threshold,
        window_index=getattr(frame, "window_index", 0),
        delay_s=params.n * params.ns / params.fs,
        device_id=device_id,
    )


def false_alarm_probability(ns, p_bit, threshold=DEFAULT_THRESHOLD):
    """P(alarm) on honest traffic when each bit flips independently with
    probability p_bit: binomial tail above the mismatch threshold."""
    limit = math.floor(threshold * ns / 100.0 + 1e-9)   # alarm iff errors > limit
    return float(sum(math.comb(ns, k) * p_bit ** k * (1 - p_bit) ** (ns - k)
                     for k in range(limit + 1, ns + 1)))


@dataclass(frozen=True)
class Budget:
    values: tuple          # v_i as Fractions, summing to 1
    R: Fraction
    freqs: tuple
    cap: Fraction

    def feasible(self, devices):
        return sum((self.values[i] for i in devices), Fraction(0)) <= self.R

    def value_floats(self):
        return np.array([float(v) for v in self.values])


def _exact(x):
    # floats go through their shortest decimal form, so 0.1 means 1/10
    return Fraction(repr(x)) if isinstance(x, float) else Fraction(x)


def complexity_budget(freqs, d, C):
    """Per-device values v_i = f_i / sum(f) and the normalised budget
    R = (C/d) / sum(f). Exact rational arithmetic."""
    if not freqs or any(f <= 0 for f in freqs):
        raise ParameterError("frequencies must be positive")
    if not C > 0 or not d > 0:
        raise ParameterError("C and d must be positive")
    fr = [_exact(f) for f in freqs]
    total = sum(fr)
    cap = _exact(C) / _exact(d)
    return Budget(tuple(f / total for f in fr), cap / total, tuple(freqs), cap)
