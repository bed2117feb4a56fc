"""Spread-spectrum embed/extract, closed-form error rates and the
(beta, n, ns) parameter search."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import InfeasibleError, ParameterError
from .signal import SignalFrame, SignalModel


@dataclass(frozen=True)
class PNKey:
    """Balanced +1/-1 chip sequence shared by a device and the gateway."""

    chips: np.ndarray

    def __post_init__(self):
        chips = np.asarray(self.chips, dtype=np.int8)
        if chips.ndim != 1 or len(chips) < 2 or len(chips) % 2:
            raise ParameterError("key length must be even and >= 2")
        if not np.all(np.abs(chips) == 1):
            raise ParameterError("key chips must be +1 or -1")
        if chips.sum() != 0:
            raise ParameterError("key must have as many +1 as -1 chips")
        object.__setattr__(self, "chips", chips)

    @property
    def n(self):
        return len(self.chips)

    def __len__(self):
        return len(self.chips)


@dataclass(frozen=True)
class WatermarkParams:
    beta: float
    n: int
    ns: int
    fs: float
    d: float

    def __post_init__(self):
        for name in ("beta", "fs", "d"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if not self.beta > 0:
            raise ParameterError(f"beta must be positive, got {self.beta}")
        if self.n < 2 or self.n % 2:
            raise ParameterError(f"n must be even and >= 2, got {self.n}")
        if self.ns < 1:
            raise ParameterError(f"ns must be >= 1, got {self.ns}")
        # small slack so that d*fs computed in floating point still admits n*ns == d*fs
        if self.n * self.ns > self.d * self.fs * (1 + 1e-12):
            raise ParameterError(
                f"window n*ns={self.n * self.ns} exceeds delay budget d*fs={self.d * self.fs:g}"
            )

    @property
    def window(self):
        return self.n * self.ns

    @property
    def delay(self):
        """Seconds the gateway waits to collect one window."""
        return self.n * self.ns / self.fs

    def to_json(self):
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text):
        data = json.loads(text)
        return cls(float(data["beta"]), int(data["n"]), int(data["ns"]),
                   float(data["fs"]), float(data["d"]))


@dataclass(frozen=True)
class ExtractionResult:
    bits: np.ndarray
    soft: np.ndarray


def as_bits(bits):
    out = np.asarray(bits, dtype=np.int8).ravel()
    if not np.all(np.abs(out) == 1):
        raise ParameterError("bit streams hold +1/-1 values only")
    return out


def format_chips(chips):
    return " ".join("+1" if c > 0 else "-1" for c in chips)


def parse_chips(line):
    try:
        return np.array([int(tok) for tok in line.split()], dtype=np.int8)
    except ValueError as exc:
        raise ParameterError(f"bad chip line: {exc}") from None


def gen_pn_key(n, seed):
    """Random balanced key: a seeded permutation of n/2 (+1) and n/2 (-1)."""
    if n < 2 or n % 2:
        raise ParameterError(f"key length must be even and >= 2, got {n}")
    rng = np.random.default_rng(seed)
    chips = np.repeat(np.array([1, -1], dtype=np.int8), n // 2)
    return PNKey(rng.permutation(chips))


def _samples(frame):
    return frame.samples if isinstance(frame, SignalFrame) else np.asarray(frame, float)


def spread(key, bits):
    """Chip pattern bits (x) key: bit k occupies chips k*n .. (k+1)*n - 1."""
    return np.kron(as_bits(bits), key.chips).astype(np.float64)


def embed(frame, key, bits, beta):
    y = _samples(frame)
    bits = as_bits(bits)
    if len(y) != key.n * len(bits):
        raise ParameterError(
            f"frame has {len(y)} samples, expected n*ns = {key.n}*{len(bits)}"
        )
    w = y + beta * spread(key, bits)
    index = frame.window_index if isinstance(frame, SignalFrame) else 0
    return SignalFrame(w, index)


def extract_stream(frame, key, beta):
    """Correlate each n-sample segment with the key and normalise by
    beta*n. Zero soft values decide +1."""
    if not beta > 0:
        raise ParameterError(f"beta must be positive, got {beta}")
    w = _samples(frame)
    if len(w) % key.n:
        raise ParameterError(f"frame length {len(w)} is not a multiple of n={key.n}")
    soft = w.reshape(-1, key.n) @ key.chips.astype(np.float64) / (beta * key.n)
    bits = np.where(soft >= 0, 1, -1).astype(np.int8)
    return ExtractionResult(bits, soft)


def analytic_ber(beta, sigma, n):
    """Gateway bit error probability for a balanced key and a carrier of
    standard deviation sigma."""
    if not beta > 0 or not sigma > 0 or n < 2:
        raise ParameterError("need beta > 0, sigma > 0, n >= 2")
    return 0.5 * math.erfc(beta * math.sqrt(n) / (sigma * math.sqrt(2.0)))


def attacker_ber(beta, n, model):
    """Error probability of an attacker correlating two watermarked windows
    against each other instead of using the key."""
    if not beta > 0 or n < 2:
        raise ParameterError("need beta > 0, n >= 2")
    b2 = beta * beta
    gain = (1.0 + model.mu1 / (b2 * n * n)) * b2 * n * math.sqrt(n)
    spread_ = math.sqrt(2.0 * (model.sigma1 ** 2 + 2.0 * model.sigma ** 2))
    return 0.5 * math.erfc(gain / spread_)


@dataclass(frozen=True)
class ParamCheck:
    attacker_error: float
    gateway_error: float
    attacker_ok: bool
    gateway_ok: bool
    delay_ok: bool

    @property
    def ok(self):
        return self.attacker_ok and self.gateway_ok and self.delay_ok


def check_params(model, beta, n, ns, p_lo, p_hi, fs, d):
    """Evaluate the three design constraints for one (beta, n, ns)."""
    att = attacker_ber(beta, n, model)
    gw = analytic_ber(beta, model.sigma, n)
    return ParamCheck(
        attacker_error=att,
        gateway_error=gw,
        attacker_ok=att >= 1.0 - p_lo,
        gateway_ok=gw <= p_hi,
        delay_ok=n * ns <= d * fs * (1 + 1e-12),
    )


def beta_grid(sigma, per_decade=100):
    """Log grid over [1e-3 sigma, 10 sigma]; contains sigma itself."""
    exps = np.arange(-3 * per_decade, per_decade + 1) / per_decade
    return sigma * 10.0 ** exps


def solve_params(model, p_lo, p_hi, fs, d):
    """Search (beta, n) on a grid for the smallest admissible key length
    (hence the largest ns = floor(d*fs/n)), ties to the smallest beta.

    Raises InfeasibleError naming the first constraint that no grid point
    can meet on its own: ``delay``, ``attacker-error`` or ``gateway-error``;
    ``joint`` when each holds somewhere but never together.
    """
    if not (0 < p_lo < 0.5 and 0 < p_hi < 0.5):
        raise ParameterError("p_lo and p_hi must lie in (0, 0.5)")
    if not fs > 0 or not d > 0:
        raise ParameterError("fs and d must be positive")
    n_max = int(math.floor(d * fs + 1e-9))
    if n_max < 2:
        raise InfeasibleError(
            f"delay budget d*fs={d * fs:g} samples cannot hold one bit", "delay"
        )
    ns_grid = np.arange(2, n_max + 1, 2)
    betas = beta_grid(model.sigma)
    att = np.array([[attacker_ber(b, n, model) for b in betas] for n in ns_grid])
    gw = np.array([[analytic_ber(b, model.sigma, n) for b in betas] for n in ns_grid])
    att_ok = att >= 1.0 - p_lo
    gw_ok = gw <= p_hi
    if not att_ok.any():
        raise InfeasibleError(
            f"attacker error never reaches 1 - p_lo = {1 - p_lo:g} "
            f"(max {att.max():.3g}) for n <= {n_max}",
            "attacker-error",
        )
    if not gw_ok.any():
        raise InfeasibleError(
            f"gateway error never drops to p_hi = {p_hi:g} "
            f"(min {gw.min():.3g}) for n <= {n_max}",
            "gateway-error",
        )
    both = att_ok & gw_ok
    if not both.any():
        raise InfeasibleError("no (beta, n) meets both error constraints", "joint")
    row, col = np.argwhere(both)[0]  # row-major: smallest n, then smallest beta
    n = int(ns_grid[row])
    ns = int(math.floor(d * fs / n + 1e-9))
    return WatermarkParams(float(betas[col]), n, ns, float(fs), float(d))


def monte_carlo_ber(beta, sigma, n, bits, seed, mu=0.0, key=None, chunk=200_000):
    """Empirical gateway bit error rate over ``bits`` Gaussian-carrier bits.

    Chunks draw from child seeds of ``seed`` and are reduced in order, so a
    given (seed, chunk) pair reproduces bit-exactly however chunks are
    scheduled.
    """
    key = key if key is not None else gen_pn_key(n, seed)
    chips = key.chips.astype(np.float64)
    errors = 0
    done = 0
    children = np.random.SeedSequence(seed).spawn((bits + chunk - 1) // chunk)
    for child in children:
        m = min(chunk, bits - done)
        rng = np.random.default_rng(child)
        b = rng.choice(np.array([-1.0, 1.0]), m)
        y = rng.normal(mu, sigma, (m, n))
        soft = (y @ chips) / (beta * n) + b
        errors += int(np.count_nonzero(np.where(soft >= 0, 1.0, -1.0) != b))
        done += m
    return errors / bits
