"""Attacks on watermarked streams: plain injection and record-and-sum."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError, StateError
from .signal import SignalFrame
from .detector import StaticStreamSource, authenticate_window
from .fingerprint import HashStreamSource
from .watermark import as_bits, embed, gen_pn_key


@dataclass(frozen=True)
class AttackTrace:
    tampered: list
    key_estimate: np.ndarray | None
    power_ratio: float
    m: int = 0

    def __post_init__(self):
        if self.power_ratio < 0:
            raise ParameterError("power_ratio must be non-negative")


def _samples(frame):
    return frame.samples if isinstance(frame, SignalFrame) else np.asarray(frame, float)


def inject(frame, forgery):
    """Replace the transmitted window with ``forgery``."""
    y, f = _samples(frame), _samples(forgery)
    if len(y) != len(f):
        raise ParameterError(f"forgery has {len(f)} samples, frame has {len(y)}")
    index = frame.window_index if isinstance(frame, SignalFrame) else 0
    return SignalFrame(f.copy(), index)


def _power_ratio(summed, key_part):
    noise = summed - key_part
    var = noise.var()
    if var <= 0:
        return float("inf")
    return float(np.mean(key_part * key_part) / var)


def record_and_sum(frames, beta, originals=None):
    """Sum m aligned watermarked windows.

    With ``originals`` (the unwatermarked carriers) the ratio is the power of
    the accumulated key component over the variance of the summed carrier.
    Without them the static-stream value (m*beta)^2 / var(sum) is reported.
    """
    if not frames:
        raise ParameterError("need at least one recorded window")
    w = np.array([_samples(f) for f in frames])
    if w.ndim != 2:
        raise ParameterError("recorded windows must have equal length")
    m = len(w)
    total = w.sum(axis=0)
    if originals is not None:
        y = np.array([_samples(f) for f in originals])
        if y.shape != w.shape:
            raise ParameterError("originals must align with the recorded windows")
        ratio = _power_ratio(total, total - y.sum(axis=0))
    else:
        var = total.var()
        ratio = float((m * beta) ** 2 / var) if var > 0 else float("inf")
    return AttackTrace(list(frames), total, ratio, m)


def power_ratio_curve(frames, originals):
    """Key-to-signal power ratio after summing the first m windows, for
    m = 1..len(frames)."""
    w = np.array([_samples(f) for f in frames])
    y = np.array([_samples(f) for f in originals])
    sums_w = np.cumsum(w, axis=0)
    sums_y = np.cumsum(y, axis=0)
    return np.array([_power_ratio(sw, sw - sy) for sw, sy in zip(sums_w, sums_y)])


def estimated_key(trace, n):
    """Attacker's key guess: sign pattern of the first n-chip segment of the
    summed window. Carries the unknown sign of the first hidden bit."""
    if trace.key_estimate is None:
        raise StateError("trace has no key estimate")
    seg = trace.key_estimate[:n]
    return np.where(seg >= 0, 1, -1).astype(np.int8)


def estimated_bits(trace, n):
    """Hidden bits relative to the first one, read off the summed window."""
    key = estimated_key(trace, n).astype(np.float64)
    soft = trace.key_estimate.reshape(-1, n) @ key
    return np.where(soft >= 0, 1, -1).astype(np.int8)


def forge_with_estimate(trace, beta, bits, carrier=None, window_index=0):
    """Embed ``bits`` into ``carrier`` (zeros by default) with the estimated
    key. Replaying ``estimated_bits(trace, n)`` reproduces the recorded chip
    pattern exactly when the estimate is clean."""
    if trace.key_estimate is None:
        raise StateError("trace has no key estimate")
    bits = as_bits(bits)
    width = len(trace.key_estimate)
    if width % len(bits):
        raise ParameterError("bit count does not divide the window length")
    n = width // len(bits)
    key = estimated_key(trace, n)
    base = np.zeros(width) if carrier is None else np.asarray(_samples(carrier), float)
    if len(base) != width:
        raise ParameterError("carrier length differs from the recorded window")
    return SignalFrame(base + beta * np.kron(bits, key).astype(np.float64), window_index)


def sweep_power_ratio(params, sigma, m_max, seed, mu=0.0):
    """Key-to-signal power ratio seen by a record-and-sum attacker after
    m = 1..m_max windows, for a static hidden stream and for the chained
    dynamic stream. Returns (static, dynamic) arrays of length m_max."""
    if m_max < 1:
        raise ParameterError("m_max must be >= 1")
    rng = np.random.default_rng(seed)
    key = gen_pn_key(params.n, seed)
    static_bits = rng.choice(np.array([-1, 1], dtype=np.int8), size=params.ns)
    source = HashStreamSource(params.ns, seed)
    y = rng.normal(mu, sigma, (m_max, params.window))
    static_w, dynamic_w = [], []
    for k in range(m_max):
        static_w.append(embed(y[k], key, static_bits, params.beta).samples)
        w = embed(y[k], key, source.next_bits(), params.beta)
        source.observe(w)
        dynamic_w.append(w.samples)
    return power_ratio_curve(static_w, y), power_ratio_curve(dynamic_w, y)


def simulate_forgery(params, sigma, m, seed, dynamic=True, forged=20, mu=0.0):
    """Record m honest windows, then replace the next ``forged`` windows with
    fresh carriers re-watermarked under the estimated key and the bits read
    off the recording. Returns the gateway's mismatch percentages for the
    forged windows."""
    if m < 1 or forged < 1:
        raise ParameterError("need m >= 1 and forged >= 1")
    rng = np.random.default_rng([seed, 7])
    key = gen_pn_key(params.n, seed)
    if dynamic:
        device, gateway = HashStreamSource(params.ns, seed), HashStreamSource(params.ns, seed)
    else:
        bits = rng.choice(np.array([-1, 1], dtype=np.int8), size=params.ns)
        device, gateway = StaticStreamSource(bits), StaticStreamSource(bits)
    recorded = []
    for k in range(m):
        w = embed(SignalFrame(rng.normal(mu, sigma, params.window), k), key,
                  device.next_bits(), params.beta)
        device.observe(w)
        authenticate_window(w, key, params, gateway)
        recorded.append(w)
    trace = record_and_sum(recorded, params.beta)
    replay = estimated_bits(trace, params.n)
    out = []
    for j in range(forged):
        carrier = rng.normal(mu, sigma, params.window)
        f = forge_with_estimate(trace, params.beta, replay, carrier, window_index=m + j)
        out.append(authenticate_window(f, key, params, gateway).mismatch_pct)
    return np.array(out)
