"""Gateway service: collects windows, picks a budget-feasible set per
epoch from a policy and authenticates exactly those windows."""

from __future__ import annotations

import csv
import io
import queue
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..detector import authenticate_window
from ..errors import FormatError, ParameterError, StateError
from ..signal import SignalFrame
from .wire import FrameDecoder

LOG_FIELDS = ("kind", "epoch", "device_id", "mismatch_pct", "alarm", "selected", "cost", "cap", "reason")


class LogWriter:
    """CSV log with one row per event; every thread writes through here."""

    def __init__(self, target=None):
        self._own = isinstance(target, (str, Path))
        if self._own:
            self._fh = open(target, "w", newline="")
        else:
            self._fh = target if target is not None else io.StringIO()
        self._writer = csv.DictWriter(self._fh, fieldnames=LOG_FIELDS, restval="")
        self._lock = threading.Lock()
        self._writer.writeheader()

    def row(self, **fields):
        with self._lock:
            self._writer.writerow(fields)

    def text(self):
        return self._fh.getvalue() if isinstance(self._fh, io.StringIO) else None

    def close(self):
        with self._lock:
            self._fh.flush()
            if self._own:
                self._fh.close()


class FixedPolicy:
    """Always the same set (device indices)."""

    name = "fixed"

    def __init__(self, S):
        self.S = frozenset(S)

    def act(self):
        return self.S

    def observe(self, S, detected, attacked):
        pass


class MixedPolicy:
    """Samples each epoch's set from a mixed strategy [(S, p), ...]."""

    def __init__(self, mixed, seed, name="msne"):
        self.name = name
        self.sets = [frozenset(S) for S, _ in mixed]
        p = np.array([float(q) for _, q in mixed])
        self.p = p / p.sum()
        self.rng = np.random.default_rng(seed)

    def act(self):
        return self.sets[int(self.rng.choice(len(self.sets), p=self.p))]

    def observe(self, S, detected, attacked):
        pass


def make_policy(name, game, seed, drl=None):
    """Policy by name. ``fp`` and ``msne`` sample from the fictitious-play
    (empirical) or linear-programming equilibrium mix, ``drl`` is trained
    here against a simulated attacker, ``equal`` and ``proportional`` are
    the random baselines."""
    from ..learning import BaselineGateway, drl_train, fp_run
    from ..learning.drl import DRLConfig

    if name == "fp":
        return MixedPolicy(fp_run(game).gateway_mix(), seed, "fp")
    if name in ("equal", "proportional"):
        return BaselineGateway(name, game, seed)
    if name == "msne":
        from ..game import msne
        return MixedPolicy(msne(game).mixed_g, seed)
    if name == "drl":
        cfg = drl or DRLConfig(seed=seed)
        return drl_train(game, cfg).gateway.frozen()
    raise ParameterError(f"unknown policy {name!r}")


@dataclass
class ServiceSummary:
    epochs: int = 0
    selections: list = field(default_factory=list)   # device ids per epoch
    reports: list = field(default_factory=list)
    rejects: list = field(default_factory=list)      # (device_id, window_index, reason)
    drops: list = field(default_factory=list)        # (connection id, reason)

    def alarms(self):
        return [r for r in self.reports if r.alarm]


class Service:
    """Transport sink plus the scheduler loop (see ``serve``)."""

    def __init__(self, config, policy, log=None, epochs=None):
        self.config = config
        self.policy = policy
        self.epochs = epochs
        self.log = log if isinstance(log, LogWriter) else LogWriter(log)
        self.devices = config.devices
        self.keys = [d.key() for d in self.devices]
        self.sources = [d.stream_source() for d in self.devices]
        self.freqs = config.freqs
        self.events = queue.Queue()
        self.summary = ServiceSummary()
        self.epoch = 0
        self._buffer = {}
        self._decoders = {}
        self._lock = threading.Lock()
        self._next_cid = 0

    # -- transport side (reader threads) --------------------------------
    def connection_opened(self):
        with self._lock:
            cid = self._next_cid
            self._next_cid += 1
            self._decoders[cid] = FrameDecoder()
        self.events.put(("open", cid))
        return cid

    def feed(self, cid, chunk):
        try:
            frames = self._decoders[cid].feed(chunk)
        except FormatError as exc:
            self._decoders[cid] = FrameDecoder()      # the rest of the stream is discarded
            self._drop(cid, f"malformed frame: {exc}")
            return False
        for f in frames:
            self.events.put(("frame", f))
        return True

    def connection_closed(self, cid):
        pending = self._decoders[cid].pending
        if pending:
            self._drop(cid, f"stream ended inside a frame ({pending} bytes)")
        self.events.put(("eof", cid))

    def _drop(self, cid, reason):
        self.log.row(kind="drop", device_id="", reason=f"connection {cid}: {reason}")
        self.events.put(("drop", cid, reason))

    # -- scheduler -------------------------------------------------------
    def run(self):
        opened = set()
        closing = False
        with ThreadPoolExecutor(max_workers=max(1, self.config.workers)) as pool:
            while not self._done():
                if closing and not opened:
                    break
                event = self.events.get()
                kind = event[0]
                if kind == "open":
                    opened.add(event[1])
                elif kind == "eof":
                    opened.discard(event[1])
                elif kind == "close":
                    closing = True
                elif kind == "drop":
                    self.summary.drops.append((event[1], event[2]))
                else:
                    self._accept(event[1])
                    while not self._done() and len(self._buffer.get(self.epoch, ())) == len(self.devices):
                        self._process(pool)
            # input is over: decide the remaining epochs with what arrived
            last = max(self._buffer, default=self.epoch - 1)
            while not self._done() and self.epoch <= last:
                self._process(pool)
        self.log.close()
        return self.summary

    def _done(self):
        return self.epochs is not None and self.epoch >= self.epochs

    def _reject(self, frame, reason):
        self.log.row(kind="reject", epoch=frame.window_index, device_id=frame.device_id, reason=reason)
        self.summary.rejects.append((frame.device_id, frame.window_index, reason))

    def _accept(self, frame):
        idx = self.config.index.get(frame.device_id)
        if idx is None:
            return self._reject(frame, "unknown device")
        expected = self.devices[idx].window
        if frame.sample_count != expected:
            return self._reject(frame, f"sample_count {frame.sample_count} != n*ns {expected}")
        if frame.window_index < self.epoch:
            return self._reject(frame, "late window")
        slot = self._buffer.setdefault(frame.window_index, {})
        if idx in slot:
            return self._reject(frame, "duplicate window")
        slot[idx] = frame

    def _process(self, pool):
        k = self.epoch
        frames = self._buffer.pop(k, {})
        S = frozenset(self.policy.act())
        cost = sum(self.freqs[i] for i in S)
        if cost > self.config.cap:
            raise StateError(f"policy chose a set costing {cost} Hz above the cap {self.config.cap}")
        ids = sorted(self.devices[i].device_id for i in S)
        self.log.row(kind="epoch", epoch=k, selected=" ".join(map(str, ids)), cost=cost,
                     cap=self.config.cap)
        chosen = sorted(i for i in S if i in frames)
        for i in sorted(S - set(chosen)):
            self.log.row(kind="missing", epoch=k, device_id=self.devices[i].device_id)
        for i, f in frames.items():
            if i not in S:
                self.sources[i].observe(f.samples)     # keep the stream chain in step
        reports = list(pool.map(lambda i: self._authenticate(i, frames[i]), chosen))
        detected = frozenset(i for i, r in zip(chosen, reports) if r.alarm)
        # the gateway only learns about attacks it detected
        self.policy.observe(S, detected, detected)
        for r in reports:
            self.log.row(kind="report", epoch=k, device_id=r.device_id,
                         mismatch_pct=f"{r.mismatch_pct:.6g}", alarm=int(r.alarm))
        self.summary.reports.extend(reports)
        self.summary.selections.append(ids)
        self.summary.epochs += 1
        self.epoch += 1

    def _authenticate(self, i, frame):
        reg = self.devices[i]
        return authenticate_window(SignalFrame(frame.samples, frame.window_index), self.keys[i],
                                   reg.params, self.sources[i], self.config.threshold,
                                   device_id=reg.device_id)


class ServiceHandle:
    def __init__(self, service, transport):
        self.service = service
        self.transport = transport
        self._result = None
        self._error = None
        self._thread = threading.Thread(target=self._run, daemon=True)
        self._thread.start()

    def _run(self):
        try:
            self._result = self.service.run()
        except BaseException as exc:       # surfaced by join()
            self._error = exc

    def close(self):
        """No more connections: finish once every open one has ended."""
        self.transport.stop()
        self.service.events.put(("close",))

    def join(self, timeout=None):
        self._thread.join(timeout)
        if self._thread.is_alive():
            raise StateError("gateway did not finish in time")
        if self._error is not None:
            raise self._error
        return self._result

    def shutdown(self, timeout=None):
        self.close()
        return self.join(timeout)


def serve(config, policy, transport, log=None, epochs=None):
    """Start the gateway on ``transport`` and return a handle.

    Each epoch (one window index) the policy names a set of device indices;
    the set's frequencies must fit the cap. Exactly those devices' windows
    are authenticated, the other windows only advance their stream chain.
    An epoch is decided once every device's window for it has arrived, or
    when the input ends. ``epochs`` stops the service after that many.
    """
    service = Service(config, policy, log, epochs)
    transport.bind(service)
    return ServiceHandle(service, transport)


def audit_budget(log, freqs_by_id=None):
    """Epochs whose logged cost exceeds the cap, as (epoch, cost, cap).
    ``log`` is a path or an open text file.
    With ``freqs_by_id`` the cost is also recomputed from the selected ids
    and a mismatch counts as a violation."""
    if isinstance(log, (str, Path)):
        with open(log, newline="") as fh:
            rows = list(csv.DictReader(fh))
    else:
        rows = list(csv.DictReader(log))
    bad = []
    for r in rows:
        if r["kind"] != "epoch":
            continue
        cost, cap = int(r["cost"]), int(r["cap"])
        ids = [int(x) for x in r["selected"].split()]
        recomputed = cost if freqs_by_id is None else sum(freqs_by_id[i] for i in ids)
        if cost > cap or recomputed != cost:
            bad.append((int(r["epoch"]), recomputed, cap))
    return bad
