"""Signal sources, framing and moment estimates."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError, InsufficientDataError, ParameterError


@dataclass(frozen=True)
class SignalStream:
    samples: np.ndarray
    fs: float
    device_id: int = 0

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ParameterError("samples must be one-dimensional")
        if not self.fs > 0:
            raise ParameterError(f"fs must be positive, got {self.fs}")
        if not np.all(np.isfinite(samples)):
            raise ParameterError("samples contain NaN or Inf")
        object.__setattr__(self, "samples", samples)

    def __len__(self):
        return len(self.samples)


@dataclass(frozen=True)
class SignalFrame:
    """One embedding window: ``n * ns`` samples."""

    samples: np.ndarray
    window_index: int = 0

    def __post_init__(self):
        object.__setattr__(self, "samples", np.asarray(self.samples, dtype=np.float64))

    def __len__(self):
        return len(self.samples)


@dataclass(frozen=True)
class SignalModel:
    """First two moments of the carrier and of the product of two
    independent carrier draws (``mu1``, ``sigma1``)."""

    mu: float
    sigma: float
    mu1: float
    sigma1: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise ParameterError(f"sigma must be positive, got {self.sigma}")
        if not self.sigma1 > 0:
            raise ParameterError(f"sigma1 must be positive, got {self.sigma1}")


def synth_gaussian(mu, sigma, count, seed, fs=1000.0, device_id=0):
    if not sigma > 0:
        raise ParameterError(f"sigma must be positive, got {sigma}")
    if count <= 0:
        raise ParameterError(f"count must be positive, got {count}")
    rng = np.random.default_rng(seed)
    return SignalStream(rng.normal(mu, sigma, int(count)), fs, device_id)


def load_csv(path, fs=None, device_id=0):
    """Read one sample per row. An optional first row ``fs,<Hz>`` sets the
    sampling rate; ``fs`` passed explicitly overrides it."""
    path = Path(path)
    header_fs = None
    values = []
    with path.open(newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            if lineno == 1 and row[0].strip().lower() == "fs":
                if len(row) != 2:
                    raise FormatError("header must be 'fs,<Hz>'", lineno)
                try:
                    header_fs = float(row[1])
                except ValueError:
                    raise FormatError(f"bad sampling rate {row[1]!r}", lineno) from None
                continue
            if len(row) != 1:
                raise FormatError(f"expected one value, got {len(row)}", lineno)
            try:
                values.append(float(row[0]))
            except ValueError:
                raise FormatError(f"not a number: {row[0]!r}", lineno) from None
    if not values:
        raise FormatError(f"{path} contains no samples")
    rate = fs if fs is not None else header_fs
    if rate is None:
        raise FormatError(f"{path} has no 'fs' header; pass fs explicitly")
    return SignalStream(np.array(values), rate, device_id)


def frame(stream, n, ns):
    """Split into whole windows of ``n * ns`` samples; the tail is dropped."""
    width = n * ns
    if width <= 0:
        raise ParameterError("window length must be positive")
    samples = stream.samples if isinstance(stream, SignalStream) else np.asarray(stream, float)
    count = len(samples) // width
    return [SignalFrame(samples[k * width:(k + 1) * width], k) for k in range(count)]


def estimate_model(stream, seed=0):
    """Sample moments plus product moments from two independent
    permutations of the samples (avoids autocorrelation of adjacent pairs)."""
    x = stream.samples if isinstance(stream, SignalStream) else np.asarray(stream, float)
    if len(x) < 2:
        raise InsufficientDataError("need at least two samples")
    rng = np.random.default_rng(seed)
    prod = x[rng.permutation(len(x))] * x[rng.permutation(len(x))]
    return SignalModel(
        mu=float(x.mean()),
        sigma=float(x.std()),
        mu1=float(prod.mean()),
        sigma1=float(prod.std()),
    )
