"""Stochastic window features and their keyed mapping to bit streams.

A dynamic stream for window k is derived from the previous *transmitted*
window k-1, which both the device and the gateway hold bit-exactly; the
first window uses a salt-only stream.
"""

from __future__ import annotations

import hashlib
from dataclasses import astuple, dataclass, field

import numpy as np

from .errors import InsufficientDataError, ParameterError
from .signal import SignalFrame

_FIELDS = ("spectral_flatness", "mean", "variance", "skewness", "kurtosis")


@dataclass(frozen=True)
class FingerprintVector:
    spectral_flatness: float
    mean: float
    variance: float
    skewness: float
    kurtosis: float

    def __post_init__(self):
        if self.variance < 0:
            raise ParameterError("variance must be non-negative")
        if not 0.0 <= self.spectral_flatness <= 1.0:
            raise ParameterError("spectral flatness must lie in [0, 1]")

    def to_csv_row(self):
        return ",".join(repr(float(v)) for v in astuple(self))

    @classmethod
    def from_csv_row(cls, row):
        parts = row.strip().split(",")
        if len(parts) != 5:
            raise ParameterError(f"expected 5 fields ({', '.join(_FIELDS)}), got {len(parts)}")
        return cls(*(float(p) for p in parts))


def spectral_flatness(x):
    """Geometric over arithmetic mean of the DFT power spectrum, DC bin
    excluded."""
    power = np.abs(np.fft.rfft(x)[1:]) ** 2
    if power.size == 0:
        raise InsufficientDataError("window too short for a spectrum")
    amean = power.mean()
    if amean <= 0:
        return 0.0
    gmean = np.exp(np.mean(np.log(np.maximum(power, np.finfo(float).tiny))))
    return float(min(max(gmean / amean, 0.0), 1.0))


def features(window):
    x = window.samples if isinstance(window, SignalFrame) else np.asarray(window, float)
    if len(x) < 4:
        raise InsufficientDataError("need at least 4 samples per window")
    mean = x.mean()
    dev = x - mean
    m2 = np.mean(dev ** 2)
    if m2 <= np.finfo(float).eps * max(1.0, mean * mean):
        raise InsufficientDataError("constant window: skewness and kurtosis undefined")
    m3 = np.mean(dev ** 3)
    m4 = np.mean(dev ** 4)
    return FingerprintVector(
        spectral_flatness=spectral_flatness(x),
        mean=float(mean),
        variance=float(m2),
        skewness=float(m3 / m2 ** 1.5),
        kurtosis=float(m4 / m2 ** 2),
    )


@dataclass(frozen=True)
class QuantizerConfig:
    """Fixed-point ranges per feature; values outside a range are clipped."""

    bits: int = 12
    ranges: tuple = field(default=(
        (0.0, 1.0),     # spectral flatness
        (-4.0, 4.0),    # mean
        (0.0, 4.0),     # variance
        (-4.0, 4.0),    # skewness
        (0.0, 16.0),    # kurtosis
    ))

    def step(self, index):
        lo, hi = self.ranges[index]
        return (hi - lo) / ((1 << self.bits) - 1)

    def codes(self, fp):
        top = (1 << self.bits) - 1
        out = []
        for value, (lo, hi) in zip(astuple(fp), self.ranges):
            q = int(round((value - lo) / (hi - lo) * top))
            out.append(min(max(q, 0), top))
        return out


DEFAULT_QUANTIZER = QuantizerConfig()


def keyed_bits(payload, ns, salt):
    key = int(salt).to_bytes(16, "little", signed=True)
    words = []
    counter = 0
    while 8 * 64 * len(words) < ns:
        h = hashlib.blake2b(payload + counter.to_bytes(4, "little"), key=key, digest_size=64)
        words.append(h.digest())
        counter += 1
    raw = np.unpackbits(np.frombuffer(b"".join(words), dtype=np.uint8))[:ns]
    return np.where(raw == 1, 1, -1).astype(np.int8)


def quantize(fp, ns, salt, config=DEFAULT_QUANTIZER):
    """Map a fingerprint to an ns-bit stream through a salted keyed hash of
    its fixed-point codes."""
    if ns < 1:
        raise ParameterError(f"ns must be >= 1, got {ns}")
    packed = 0
    for code in config.codes(fp):
        packed = (packed << config.bits) | code
    payload = packed.to_bytes((config.bits * 5 + 7) // 8, "big")
    return keyed_bits(b"fp" + payload, ns, salt)


def initial_stream(ns, salt):
    """Stream for the first window, before any window has been sent."""
    if ns < 1:
        raise ParameterError(f"ns must be >= 1, got {ns}")
    return keyed_bits(b"init", ns, salt)


class HashStreamSource:
    """Per-window dynamic stream: bits for window k come from the fingerprint
    of the transmitted window k-1. Device and gateway each keep one."""

    def __init__(self, ns, salt, config=DEFAULT_QUANTIZER):
        self.ns = ns
        self.salt = salt
        self.config = config
        self._previous = None

    def next_bits(self):
        if self._previous is None:
            return initial_stream(self.ns, self.salt)
        try:
            fp = features(self._previous)
        except InsufficientDataError:
            return initial_stream(self.ns, self.salt)
        return quantize(fp, self.ns, self.salt, self.config)

    def observe(self, transmitted):
        self._previous = np.array(
            transmitted.samples if isinstance(transmitted, SignalFrame) else transmitted,
            dtype=np.float64,
        )

    def reset(self):
        self._previous = None
