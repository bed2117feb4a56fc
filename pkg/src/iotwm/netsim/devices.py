"""Device clients and scripted attackers for the gateway harness."""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from ..adversary import estimated_bits, forge_with_estimate, inject, record_and_sum
from ..errors import ParameterError, TransportError
from ..watermark import embed
from .wire import Frame, encode

log = logging.getLogger(__name__)

ATTACK_MODES = ("inject", "record_and_sum_forge")


@dataclass(frozen=True)
class AttackStep:
    """Attack on one device for windows start..stop (inclusive)."""

    device_id: int
    start: int
    stop: int
    mode: str = "inject"

    def __post_init__(self):
        if self.mode not in ATTACK_MODES:
            raise ParameterError(f"attack mode must be one of {ATTACK_MODES}, got {self.mode!r}")
        if not 0 <= self.start <= self.stop:
            raise ParameterError(f"bad attack window range {self.start}..{self.stop}")
        if self.mode == "record_and_sum_forge" and self.start < 1:
            raise ParameterError("record-and-sum needs at least one recorded window before the attack")

    @property
    def windows(self):
        return range(self.start, self.stop + 1)


def parse_script(data):
    """Attack script from JSON text or a list of dicts with keys device,
    windows ([start, stop] or "start..stop") and mode."""
    if isinstance(data, str):
        data = json.loads(data) if data.strip() else []
    steps = []
    for item in data:
        if isinstance(item, AttackStep):
            steps.append(item)
            continue
        w = item["windows"]
        if isinstance(w, str):
            a, _, b = w.partition("..")
            start, stop = int(a), int(b or a)
        else:
            start, stop = int(w[0]), int(w[-1])
        steps.append(AttackStep(int(item["device"]), start, stop, item.get("mode", "inject")))
    return steps


@dataclass
class RunSummary:
    windows: int
    sent: dict                                      # device_id -> frames sent
    attacks: list = field(default_factory=list)     # (device_id, window_index, mode)
    episodes: list = field(default_factory=list)    # the script's AttackSteps
    reconnects: int = 0

    def truth(self):
        return {(d, k) for d, k, _ in self.attacks}


class DeviceSimulator:
    """One device: Gaussian carrier, watermark embedding, and the attacker
    sitting on its link (who records every honest window it sees)."""

    def __init__(self, registration, seed, mu=0.0, sigma=0.5):
        self.reg = registration
        self.key = registration.key()
        self.source = registration.stream_source()
        self.rng = np.random.default_rng([seed, registration.device_id])
        self.attack_rng = np.random.default_rng([seed, registration.device_id, 1])
        self.mu, self.sigma = mu, sigma
        self.recorded = []

    def window(self, k, mode=None):
        p = self.reg.params
        y = self.rng.normal(self.mu, self.sigma, p.window)
        bits = self.source.next_bits()
        w = embed(y, self.key, bits, p.beta)
        self.source.observe(w)          # the device does not know it was attacked
        if mode is None:
            self.recorded.append(w.samples)
            out = w.samples
        elif mode == "inject":
            out = inject(w, self.attack_rng.normal(self.mu, self.sigma, p.window)).samples
        else:
            trace = record_and_sum(self.recorded, p.beta)
            guess = estimated_bits(trace, p.n)
            carrier = self.attack_rng.normal(self.mu, self.sigma, p.window)
            out = forge_with_estimate(trace, p.beta, guess, carrier, k).samples
        return Frame(self.reg.device_id, k, out)


def _plan(script, ids):
    plan = {}
    for step in script:
        if step.device_id not in ids:
            raise ParameterError(f"attack script names unregistered device {step.device_id}")
        for k in step.windows:
            if (step.device_id, k) in plan:
                raise ParameterError(f"device {step.device_id} window {k} attacked twice")
            plan[(step.device_id, k)] = step.mode
    return plan


def run_devices(registrations, windows, transport, script=(), seed=0, mu=0.0, sigma=0.5,
                attempts=3, backoff=0.05):
    """Stream ``windows`` windows from every device, interleaved by window
    index, one connection per device. Windows named by ``script`` are
    replaced by the attacker. A failed send reconnects with bounded
    exponential backoff, then gives up with TransportError."""
    if isinstance(script, str) or any(not isinstance(s, AttackStep) for s in script):
        script = parse_script(script)
    ids = {r.device_id for r in registrations}
    plan = _plan(script, ids)
    sims = [DeviceSimulator(r, seed, mu, sigma) for r in registrations]
    conns = [transport.connect() for _ in sims]
    summary = RunSummary(windows, {r.device_id: 0 for r in registrations}, episodes=script)
    for k in range(windows):
        for j, sim in enumerate(sims):
            mode = plan.get((sim.reg.device_id, k))
            payload = encode(sim.window(k, mode))
            conns[j] = _send(transport, conns[j], payload, attempts, backoff, summary)
            summary.sent[sim.reg.device_id] += 1
            if mode is not None:
                summary.attacks.append((sim.reg.device_id, k, mode))
    for c in conns:
        c.close()
    return summary


def _send(transport, conn, payload, attempts, backoff, summary):
    delay = backoff
    for k in range(attempts):
        try:
            conn.send(payload)
            return conn
        except TransportError as exc:
            log.warning("send failed (%s), reconnecting", exc)
            if k + 1 == attempts:
                raise
            time.sleep(delay)
            delay *= 2
            conn = transport.connect()
            summary.reconnects += 1
    return conn


@dataclass(frozen=True)
class DetectionScore:
    recall: float
    precision: float
    detected: int
    episodes: int
    alarms: int
    false_alarms: int
    first_alarm_delay: list     # per detected episode, windows from start to first alarm


def score_detections(reports, episodes):
    """Recall over attack episodes (detected when any authenticated window
    of the episode alarms) and precision over alarms. An alarm on the
    window right after an episode counts as true: the gateway's stream for
    it is derived from the forged window."""
    by_device = {}
    for r in reports:
        if r.alarm:
            by_device.setdefault(r.device_id, set()).add(r.window_index)
    attributable = set()
    detected = 0
    delays = []
    for ep in episodes:
        hits = sorted(k for k in by_device.get(ep.device_id, ()) if ep.start <= k <= ep.stop)
        if hits:
            detected += 1
            delays.append(hits[0] - ep.start)
        attributable.update((ep.device_id, k) for k in range(ep.start, ep.stop + 2))
    alarms = [(r.device_id, r.window_index) for r in reports if r.alarm]
    false = sum(1 for a in alarms if a not in attributable)
    recall = detected / len(episodes) if episodes else 1.0
    precision = (len(alarms) - false) / len(alarms) if alarms else 1.0
    return DetectionScore(recall, precision, detected, len(episodes), len(alarms), false, delays)
