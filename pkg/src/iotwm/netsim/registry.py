"""Device registrations shared by the device side and the gateway."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from ..detector import DEFAULT_THRESHOLD, StaticStreamSource
from ..errors import ParameterError
from ..fingerprint import HashStreamSource
from ..game.model import GameConfig
from ..neural import LstmStreamSource, fingerprint_network
from ..watermark import WatermarkParams, gen_pn_key

MODES = ("static", "dynamic-hash", "dynamic-lstm")


@dataclass(frozen=True)
class DeviceRegistration:
    """What a device and the gateway agree on before streaming. The key
    seed is the shared secret: it fixes the PN key, the static stream, the
    hash salt and the fingerprint network."""

    device_id: int
    params: WatermarkParams
    key_seed: int
    mode: str = "dynamic-hash"

    def __post_init__(self):
        if self.mode not in MODES:
            raise ParameterError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not 0 <= self.device_id < 2 ** 32:
            raise ParameterError("device_id must fit in 32 bits")

    @property
    def window(self):
        return self.params.window

    def key(self):
        return gen_pn_key(self.params.n, self.key_seed)

    def static_bits(self):
        rng = np.random.default_rng([self.key_seed, 1])
        return rng.choice(np.array([-1, 1], dtype=np.int8), size=self.params.ns)

    def stream_source(self):
        """A fresh expected-stream source; each end keeps its own copy."""
        if self.mode == "static":
            return StaticStreamSource(self.static_bits())
        if self.mode == "dynamic-hash":
            return HashStreamSource(self.params.ns, self.key_seed)
        net = fingerprint_network(self.params.ns, self.key_seed)
        return LstmStreamSource(net, self.key(), self.params.ns, self.key_seed)

    def to_dict(self):
        p = self.params
        return {"device_id": self.device_id, "key_seed": self.key_seed, "mode": self.mode,
                "beta": p.beta, "n": p.n, "ns": p.ns, "fs": p.fs, "d": p.d}

    @classmethod
    def from_dict(cls, data):
        try:
            params = WatermarkParams(float(data["beta"]), int(data["n"]), int(data["ns"]),
                                     float(data["fs"]), float(data["d"]))
            return cls(int(data["device_id"]), params, int(data["key_seed"]),
                       data.get("mode", "dynamic-hash"))
        except KeyError as exc:
            raise ParameterError(f"device entry is missing {exc}") from None


@dataclass
class ServiceConfig:
    """Gateway configuration. ``cap`` is the per-epoch budget in Hz, in the
    same unit as the devices' sampling rates; ``K`` only matters to
    policies that model the attacker."""

    devices: list
    cap: int
    K: int = 1
    threshold: float = DEFAULT_THRESHOLD
    workers: int = 4
    index: dict = field(init=False, repr=False)

    def __post_init__(self):
        ids = [d.device_id for d in self.devices]
        if len(set(ids)) != len(ids):
            raise ParameterError("device ids must be unique")
        if not self.devices:
            raise ParameterError("register at least one device")
        for d in self.devices:
            if d.params.fs != int(d.params.fs):
                raise ParameterError("sampling rates must be whole Hz to form the budget")
        if self.cap < 0:
            raise ParameterError("cap must be non-negative")
        self.threshold = float(self.threshold)
        self.index = {d.device_id: k for k, d in enumerate(self.devices)}

    @property
    def freqs(self):
        return tuple(int(d.params.fs) for d in self.devices)

    def game_config(self):
        return GameConfig(self.freqs, int(self.cap), self.K)

    def to_json(self):
        return json.dumps({"cap": self.cap, "K": self.K, "threshold": self.threshold,
                           "workers": self.workers,
                           "devices": [d.to_dict() for d in self.devices]}, indent=2)

    @classmethod
    def from_json(cls, text):
        data = json.loads(text)
        try:
            devices = [DeviceRegistration.from_dict(d) for d in data["devices"]]
            return cls(devices, int(data["cap"]), int(data.get("K", 1)),
                       float(data.get("threshold", DEFAULT_THRESHOLD)),
                       int(data.get("workers", 4)))
        except KeyError as exc:
            raise ParameterError(f"service config is missing {exc}") from None
