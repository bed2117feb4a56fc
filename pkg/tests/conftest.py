import numpy as np

from iotwm import neural as nn
from iotwm.watermark import gen_pn_key


def embedder_task(windows=200, n=4, ns=2, sigma=0.5, beta=0.5, seed=0):
    """Desk-scale embedder regression: inputs [y(t), p(t)], target w(t).

    Each segment's hidden bit is the sign of its first carrier sample, so
    the network has to carry state across the segment rather than learn a
    constant pattern.
    """
    rng = np.random.default_rng(seed)
    key = gen_pn_key(n, seed + 3)
    y = rng.normal(0.0, sigma, (windows, n * ns))
    bits = np.where(y[:, ::n] >= 0, 1, -1)
    return nn.embedder_dataset(y, key, bits, beta)


def finite_difference_worst(net, x, targets, h=1e-5):
    """Largest relative error between BPTT gradients and central differences."""
    _, analytic = nn.grad(net, x, targets)
    worst = 0.0
    for name, arr in net.params().items():
        for idx in np.ndindex(arr.shape):
            old = arr[idx]
            arr[idx] = old + h
            plus, _ = nn.grad(net, x, targets)
            arr[idx] = old - h
            minus, _ = nn.grad(net, x, targets)
            arr[idx] = old
            fd = (plus - minus) / (2 * h)
            an = analytic[name][idx]
            worst = max(worst, abs(fd - an) / max(abs(fd), abs(an), 1e-12))
    return worst


def pytest_terminal_summary(terminalreporter):
    lines = []
    for key in ("passed", "failed"):
        for rep in terminalreporter.stats.get(key, []):
            for name, value in getattr(rep, "user_properties", []):
                if name == "acceptance":
                    lines.append(value)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
