"""Small numpy LSTM: forward pass, backpropagation through time, plain
gradient descent and JSON checkpoints.

Sequences are arrays of shape (T, D) or batched (T, B, D). Gates use the
order forget, input, output, candidate inside the stacked weight matrices.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError, ParameterError, ShapeError, TrainingDivergedError
from .fingerprint import keyed_bits

CHECKPOINT_FORMAT = "iotwm-lstm"
CHECKPOINT_VERSION = 1


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


class LstmCell:
    """One recurrent layer without peepholes."""

    def __init__(self, input_dim, hidden_dim, rng=None):
        self.input_dim = int(input_dim)
        self.hidden_dim = int(hidden_dim)
        h = self.hidden_dim
        if rng is None:
            self.Wx = np.zeros((4 * h, self.input_dim))
            self.Wh = np.zeros((4 * h, h))
            self.b = np.zeros(4 * h)
        else:
            bound = 1.0 / np.sqrt(h)
            self.Wx = rng.uniform(-bound, bound, (4 * h, self.input_dim))
            self.Wh = rng.uniform(-bound, bound, (4 * h, h))
            self.b = rng.uniform(-bound, bound, 4 * h)

    def params(self):
        return {"Wx": self.Wx, "Wh": self.Wh, "b": self.b}

    def step(self, x, h_prev, c_prev):
        hd = self.hidden_dim
        z = x @ self.Wx.T + h_prev @ self.Wh.T + self.b
        f = _sigmoid(z[:, :hd])
        i = _sigmoid(z[:, hd:2 * hd])
        o = _sigmoid(z[:, 2 * hd:3 * hd])
        g = np.tanh(z[:, 3 * hd:])
        c = f * c_prev + i * g
        tc = np.tanh(c)
        h = o * tc
        return h, c, (x, h_prev, c_prev, f, i, o, g, tc)

    def step_back(self, dh, dc, cache, grads):
        x, h_prev, c_prev, f, i, o, g, tc = cache
        do = dh * tc
        dc = dc + dh * o * (1.0 - tc * tc)
        dz = np.concatenate([
            dc * c_prev * f * (1.0 - f),
            dc * g * i * (1.0 - i),
            do * o * (1.0 - o),
            dc * i * (1.0 - g * g),
        ], axis=1)
        grads["Wx"] += dz.T @ x
        grads["Wh"] += dz.T @ h_prev
        grads["b"] += dz.sum(axis=0)
        return dz @ self.Wx, dz @ self.Wh, dc * f


class Network:
    """Stacked LSTM layers followed by one linear fully connected layer."""

    def __init__(self, input_dim, hidden_dims, output_dim, seed=0, zero=False):
        if isinstance(hidden_dims, int):
            hidden_dims = [hidden_dims]
        if not hidden_dims:
            raise ParameterError("need at least one LSTM layer")
        rng = None if zero else np.random.default_rng(seed)
        self.input_dim = int(input_dim)
        self.output_dim = int(output_dim)
        self.cells = []
        d = self.input_dim
        for h in hidden_dims:
            self.cells.append(LstmCell(d, h, rng))
            d = h
        if zero:
            self.W = np.zeros((self.output_dim, d))
            self.c = np.zeros(self.output_dim)
        else:
            bound = 1.0 / np.sqrt(d)
            self.W = rng.uniform(-bound, bound, (self.output_dim, d))
            self.c = rng.uniform(-bound, bound, self.output_dim)

    @property
    def hidden_dims(self):
        return [cell.hidden_dim for cell in self.cells]

    def params(self):
        out = {}
        for k, cell in enumerate(self.cells):
            for name, arr in cell.params().items():
                out[f"lstm{k}.{name}"] = arr
        out["fc.W"] = self.W
        out["fc.b"] = self.c
        return out

    def copy(self):
        clone = Network(self.input_dim, self.hidden_dims, self.output_dim, zero=True)
        clone.set_params(self.params())
        return clone

    def set_params(self, values):
        for name, arr in self.params().items():
            arr[...] = values[name]

    def n_params(self):
        return sum(a.size for a in self.params().values())

    def __call__(self, sequence):
        return forward(self, sequence).outputs


@dataclass
class ForwardResult:
    outputs: np.ndarray       # (T, B, O) or (T, O) when the input was unbatched
    hidden: list              # per layer, (T, B, H)
    cell: list
    batched: bool
    _caches: list


def _as_batch(net, sequence):
    x = np.asarray(sequence, dtype=np.float64)
    batched = x.ndim == 3
    if x.ndim == 2:
        x = x[:, None, :]
    if x.ndim != 3 or x.shape[2] != net.input_dim:
        raise ShapeError(
            f"expected sequence of {net.input_dim}-dimensional inputs, got shape {np.shape(sequence)}"
        )
    return x, batched


def forward(net, sequence):
    x, batched = _as_batch(net, sequence)
    steps, batch, _ = x.shape
    layer_in = x
    hidden, cells, caches = [], [], []
    for cell in net.cells:
        h = np.zeros((batch, cell.hidden_dim))
        c = np.zeros((batch, cell.hidden_dim))
        hs = np.empty((steps, batch, cell.hidden_dim))
        cs = np.empty_like(hs)
        layer_cache = []
        for t in range(steps):
            h, c, cache = cell.step(layer_in[t], h, c)
            hs[t], cs[t] = h, c
            layer_cache.append(cache)
        hidden.append(hs)
        cells.append(cs)
        caches.append(layer_cache)
        layer_in = hs
    outputs = layer_in @ net.W.T + net.c
    if not batched:
        outputs = outputs[:, 0, :]
    return ForwardResult(outputs, hidden, cells, batched, caches)


def backward(net, result, d_outputs):
    """Gradients of a scalar loss given dLoss/dOutputs (same shape as
    ``result.outputs``)."""
    dy = np.asarray(d_outputs, dtype=np.float64)
    if not result.batched:
        dy = dy[:, None, :]
    grads = {name: np.zeros_like(arr) for name, arr in net.params().items()}
    top = result.hidden[-1]
    grads["fc.W"] += np.einsum("tbo,tbh->oh", dy, top)
    grads["fc.b"] += dy.sum(axis=(0, 1))
    d_layer = dy @ net.W                       # (T, B, H_top)
    for k in range(len(net.cells) - 1, -1, -1):
        cell = net.cells[k]
        cell_grads = {"Wx": grads[f"lstm{k}.Wx"], "Wh": grads[f"lstm{k}.Wh"], "b": grads[f"lstm{k}.b"]}
        steps, batch, _ = d_layer.shape
        dh_next = np.zeros((batch, cell.hidden_dim))
        dc_next = np.zeros((batch, cell.hidden_dim))
        d_in = np.empty((steps, batch, cell.input_dim))
        for t in range(steps - 1, -1, -1):
            dx, dh_next, dc_next = cell.step_back(
                d_layer[t] + dh_next, dc_next, result._caches[k][t], cell_grads
            )
            d_in[t] = dx
        d_layer = d_in
    return grads


def mse(outputs, targets, mask=None):
    diff = np.asarray(outputs) - np.asarray(targets)
    if mask is None:
        return float(np.mean(diff * diff))
    m = np.broadcast_to(mask, diff.shape)
    return float(np.sum(m * diff * diff) / np.sum(m))


def grad(net, sequence, targets, mask=None):
    """Mean squared error over (masked) outputs and its parameter gradients.

    Returns ``(loss, grads)`` with one array per entry of ``net.params()``.
    """
    result = forward(net, sequence)
    targets = np.asarray(targets, dtype=np.float64)
    if targets.shape != result.outputs.shape:
        raise ShapeError(f"targets shape {targets.shape} != outputs shape {result.outputs.shape}")
    diff = result.outputs - targets
    if mask is None:
        weight = np.ones_like(diff)
    else:
        weight = np.broadcast_to(np.asarray(mask, dtype=np.float64), diff.shape)
    total = weight.sum()
    loss = float(np.sum(weight * diff * diff) / total)
    grads = backward(net, result, 2.0 * weight * diff / total)
    return loss, grads


def clip_gradients(grads, max_norm):
    norm = np.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if max_norm is not None and norm > max_norm:
        scale = max_norm / norm
        for g in grads.values():
            g *= scale
    return norm


def apply_gradients(net, grads, learning_rate):
    for name, arr in net.params().items():
        arr -= learning_rate * grads[name]


class Adam:
    """Adam optimiser state for one network's parameter dict."""

    def __init__(self, learning_rate=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.learning_rate = learning_rate
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = {}
        self.v = {}
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        lr = self.learning_rate * np.sqrt(1 - self.beta2 ** self.t) / (1 - self.beta1 ** self.t)
        for name, arr in params.items():
            g = grads[name]
            m = self.m.setdefault(name, np.zeros_like(arr))
            v = self.v.setdefault(name, np.zeros_like(arr))
            m *= self.beta1
            m += (1 - self.beta1) * g
            v *= self.beta2
            v += (1 - self.beta2) * g * g
            arr -= lr * m / (np.sqrt(v) + self.eps)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.1
    epochs: int = 100
    seed: int = 0
    clip_norm: float | None = 5.0
    patience: int | None = None

    def __post_init__(self):
        if not self.learning_rate >= 0:
            raise ParameterError("learning_rate must be non-negative")
        if self.epochs < 1:
            raise ParameterError("epochs must be >= 1")


def train(net, inputs, targets, cfg, mask=None):
    """Full-batch gradient descent on MSE. Returns the loss curve, entry 0
    being the loss at the starting parameters.

    The network ends on the best parameters seen, so the final loss never
    exceeds the initial one. With ``cfg.patience`` set, training stops after
    that many epochs without improvement.
    """
    inputs = np.asarray(inputs, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if inputs.size == 0:
        raise ParameterError("empty training set")
    curve = []
    best_loss = np.inf
    best = None
    stale = 0
    for epoch in range(cfg.epochs + 1):
        loss, grads = grad(net, inputs, targets, mask)
        if not np.isfinite(loss):
            raise TrainingDivergedError(
                f"loss became {loss} at epoch {epoch}; try a smaller learning rate"
            )
        curve.append(loss)
        if loss < best_loss:
            best_loss = loss
            best = {k: v.copy() for k, v in net.params().items()}
            stale = 0
        else:
            stale += 1
            if cfg.patience is not None and stale > cfg.patience:
                break
        if epoch == cfg.epochs:
            break
        clip_gradients(grads, cfg.clip_norm)
        apply_gradients(net, grads, cfg.learning_rate)
    net.set_params(best)
    return curve


def save_loss_curve(curve, path):
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "mse"])
        for epoch, loss in enumerate(curve):
            writer.writerow([epoch, repr(float(loss))])


def to_checkpoint(net):
    return {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "input_dim": net.input_dim,
        "hidden_dims": net.hidden_dims,
        "output_dim": net.output_dim,
        "params": {
            name: {"shape": list(arr.shape), "data": arr.ravel().tolist()}
            for name, arr in net.params().items()
        },
    }


def from_checkpoint(blob):
    if blob.get("format") != CHECKPOINT_FORMAT:
        raise FormatError(f"not an {CHECKPOINT_FORMAT} checkpoint")
    if blob.get("version") != CHECKPOINT_VERSION:
        raise FormatError(f"unsupported checkpoint version {blob.get('version')}")
    net = Network(blob["input_dim"], blob["hidden_dims"], blob["output_dim"], zero=True)
    values = {}
    for name, arr in net.params().items():
        entry = blob["params"].get(name)
        if entry is None or list(entry["shape"]) != list(arr.shape):
            raise FormatError(f"parameter {name} missing or mis-shaped")
        values[name] = np.asarray(entry["data"], dtype=np.float64).reshape(arr.shape)
    net.set_params(values)
    return net


def save_checkpoint(net, path):
    Path(path).write_text(json.dumps(to_checkpoint(net)))


def load_checkpoint(path):
    return from_checkpoint(json.loads(Path(path).read_text()))


# -- DW-LSTM helpers ---------------------------------------------------------

def embedder_dataset(y_windows, key, bits_per_window, beta):
    """Inputs [y(t), p(t)] and targets w(t) = y(t) + beta*b*p(t) for a batch
    of windows. ``y_windows`` is (B, n*ns); ``bits_per_window`` is (B, ns)."""
    y = np.asarray(y_windows, dtype=np.float64)
    bits = np.asarray(bits_per_window, dtype=np.float64)
    batch, width = y.shape
    chips = np.tile(key.chips.astype(np.float64), width // key.n)
    pattern = np.repeat(bits, key.n, axis=1) * chips
    x = np.stack([y, np.broadcast_to(chips, y.shape)], axis=-1)     # (B, T, 2)
    w = y + beta * pattern
    return x.transpose(1, 0, 2), w.T[:, :, None]                     # (T, B, 2), (T, B, 1)


def fingerprint_network(ns, seed, hidden=16):
    """Randomly initialised network whose signed final outputs serve as a
    per-window bit stream. Device and gateway share it (the seed is the
    secret)."""
    net = Network(2, [hidden], ns, seed=seed)
    for cell in net.cells:
        cell.Wx *= 4.0
    net.c[:] = 0.0
    return net


class LstmStreamSource:
    """Per-window stream from a shared LSTM run over the previous
    transmitted window (standardised) interleaved with the key.

    The raw output signs are far from balanced (a random network leans
    each output one way), so the final outputs are quantized to 1/4096 and
    passed through the salted mixing hash of the fingerprint module."""

    def __init__(self, net, key, ns, salt=0):
        if net.output_dim < ns:
            raise ParameterError("network has fewer outputs than ns")
        self.net = net
        self.key = key
        self.ns = ns
        self.salt = salt
        self._previous = None

    def _bits_for(self, window):
        chips = np.tile(self.key.chips.astype(np.float64), len(window) // self.key.n)
        scale = window.std()
        z = (window - window.mean()) / scale if scale > 0 else np.zeros_like(window)
        out = forward(self.net, np.stack([z, chips], axis=-1)).outputs[-1, :self.ns]
        codes = np.round(out * 4096).astype("<i8")
        return keyed_bits(b"lstm" + codes.tobytes(), self.ns, self.salt)

    def next_bits(self):
        if self._previous is None:
            width = self.key.n * self.ns
            return self._bits_for(np.zeros(width))
        return self._bits_for(self._previous)

    def observe(self, transmitted):
        samples = getattr(transmitted, "samples", transmitted)
        self._previous = np.array(samples, dtype=np.float64)

    def reset(self):
        self._previous = None
