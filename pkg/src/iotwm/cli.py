"""Command-line entry point: ``iotwm <command> [flags]``.

Exit codes: 0 ok, 2 usage error, 3 contract violation, 4 infeasible.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .errors import InfeasibleError, IotwmError, ParameterError

SWEEP_COLUMNS = ("R", "policy", "U_g_mean", "U_g_std", "n")


class UsageError(Exception):
    pass


# -- small parsers -------------------------------------------------------

def int_list(text):
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def seed_list(text):
    """``0..9`` (inclusive) or ``0,3,7``."""
    if ".." in text:
        a, _, b = text.partition("..")
        try:
            lo, hi = int(a), int(b)
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad seed range {text!r}") from None
        if hi < lo:
            raise argparse.ArgumentTypeError(f"empty seed range {text!r}")
        return list(range(lo, hi + 1))
    return int_list(text)


def r_grid(text):
    """``start:stop:step`` (inclusive) or a comma list."""
    if ":" in text:
        try:
            start, stop, step = (float(x) for x in text.split(":"))
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected start:stop:step, got {text!r}") from None
        if step <= 0 or stop < start:
            raise argparse.ArgumentTypeError(f"empty grid {text!r}")
        count = int(math.floor((stop - start) / step + 1e-9)) + 1
        return [round(start + k * step, 10) for k in range(count)]
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad R grid {text!r}") from None


def _dump(obj, out=None):
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    _write(text, out)


def _write(text, out=None):
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _need_seed(args):
    if getattr(args, "seed", None) is None:
        raise UsageError(f"{args.command} is stochastic: pass --seed")


def _params(args):
    from .watermark import WatermarkParams
    if getattr(args, "params", None):
        return WatermarkParams.from_json(Path(args.params).read_text())
    return WatermarkParams(args.beta, args.n, args.ns, args.fs, args.d)


def _game(args):
    from .game import GameConfig, random_instance
    if args.freqs:
        if args.cap is None:
            raise UsageError("--freqs needs --cap")
        return GameConfig(tuple(args.freqs), args.cap, args.k)
    if args.n_devices is None or args.r is None:
        raise UsageError("give --freqs/--cap or --n/--r for a random instance")
    _need_seed(args)
    return random_instance(args.n_devices, args.k, args.r, args.seed)


# -- commands ------------------------------------------------------------

def cmd_embed(args):
    from .netsim.registry import DeviceRegistration
    from .signal import frame, load_csv
    from .watermark import embed, format_chips
    _need_seed(args)
    params = _params(args)
    stream = load_csv(args.input, fs=params.fs)
    reg = DeviceRegistration(0, params, args.seed, args.mode)
    key, source = reg.key(), reg.stream_source()
    lines = [f"fs,{params.fs:g}"]
    for fr in frame(stream, params.n, params.ns):
        w = embed(fr, key, source.next_bits(), params.beta)
        source.observe(w)
        lines.extend(repr(float(x)) for x in w.samples)
    _write("\n".join(lines) + "\n", args.out)
    if args.key_out:
        Path(args.key_out).write_text(format_chips(key.chips) + "\n")


def cmd_extract(args):
    from .detector import REPORT_HEADER, authenticate_window
    from .netsim.registry import DeviceRegistration
    from .signal import frame, load_csv
    _need_seed(args)
    params = _params(args)
    stream = load_csv(args.input, fs=params.fs)
    reg = DeviceRegistration(0, params, args.seed, args.mode)
    key, source = reg.key(), reg.stream_source()
    rows = [REPORT_HEADER]
    for fr in frame(stream, params.n, params.ns):
        rows.append(authenticate_window(fr, key, params, source, args.threshold).csv_row())
    _write("\n".join(rows) + "\n", args.out)


def cmd_solve_params(args):
    from .signal import SignalModel
    from .watermark import check_params, solve_params
    model = SignalModel(args.mu, args.sigma, args.mu1, args.sigma1)
    out = {}
    if args.check:
        beta, n, ns = args.check
        c = check_params(model, beta, int(n), int(ns), args.plo, args.phi, args.fs, args.d)
        out["check"] = {"beta": beta, "n": int(n), "ns": int(ns), "attacker_error": c.attacker_error,
                        "gateway_error": c.gateway_error, "attacker_ok": c.attacker_ok,
                        "gateway_ok": c.gateway_ok, "delay_ok": c.delay_ok, "ok": c.ok}
    try:
        p = solve_params(model, args.plo, args.phi, args.fs, args.d)
        out.update(feasible=True, beta=p.beta, n=p.n, ns=p.ns, fs=p.fs, d=p.d)
        _dump(out)
    except InfeasibleError as exc:
        out.update(feasible=False, constraint=exc.constraint, message=str(exc))
        _dump(out)
        raise


def cmd_ber(args):
    from .watermark import analytic_ber, monte_carlo_ber
    _need_seed(args)
    mc = monte_carlo_ber(args.beta, args.sigma, args.n, args.bits, args.seed, mu=args.mu)
    an = analytic_ber(args.beta, args.sigma, args.n)
    _dump({"beta": args.beta, "sigma": args.sigma, "n": args.n, "bits": args.bits,
           "monte_carlo": mc, "analytic": an,
           "relative_error": abs(mc - an) / an if an > 0 else None})


def cmd_attack_sweep(args):
    from .adversary import sweep_power_ratio
    _need_seed(args)
    params = _params(args)
    static, dynamic = sweep_power_ratio(params, args.sigma, args.m_max, args.seed, mu=args.mu)
    unit = params.beta ** 2 / args.sigma ** 2
    rows = ["m,static_ratio,dynamic_ratio,static_theory"]
    for m, (s, d) in enumerate(zip(static, dynamic), start=1):
        rows.append(f"{m},{s:.10g},{d:.10g},{m * unit:.10g}")
    _write("\n".join(rows) + "\n", args.out)


def cmd_enumerate(args):
    from .game import enumerate_gateway_strategies
    freqs = args.freqs
    rows = ["strategy,frequencies,cost"]
    for S in enumerate_gateway_strategies(freqs, args.cap):
        idx = sorted(S)
        rows.append(f"{' '.join(map(str, idx))},{' '.join(str(freqs[i]) for i in idx)},"
                     f"{sum(freqs[i] for i in idx)}")
    _write("\n".join(rows) + "\n", args.out)


def cmd_msne(args):
    from .game import msne
    exact = {"auto": None, "exact": True, "float": False}[args.arithmetic]
    _write(msne(_game(args), exact=exact).to_json() + "\n", args.out)


def cmd_fp(args):
    from .learning import fp_run
    res = fp_run(_game(args), eps=args.eps, max_iter=args.max_iter)
    _dump({"value_attacker": res.value_a, "value_gateway": res.value_g,
           "converged": res.converged, "iterations": res.iterations,
           "final_gap": float(res.gap_trace[-1]),
           "alloc_gateway": res.alloc_g.tolist(), "alloc_attacker": res.alloc_a.tolist()}, args.out)


def cmd_drl(args):
    from .learning import drl_train, evaluate
    from .learning.drl import DRLConfig
    _need_seed(args)
    game = _game(args)
    cfg = DRLConfig(q=args.q, train_steps=args.train_steps, batch=args.batch, gamma=args.gamma,
                    alpha=args.alpha, epsilon=args.epsilon, seed=args.seed)
    result = drl_train(game, cfg)
    trace = evaluate(result, args.eval_steps)
    if args.trace:
        lines = list(result.trace.csv_lines())
        offset = len(result.trace.u_g)
        lines.extend(f"{offset + k},{g:.10g},{a:.10g},{h:.6g}"
                     for k, (g, a, h) in enumerate(zip(trace.u_g, trace.u_a, trace.entropy)))
        Path(args.trace).write_text("\n".join(lines) + "\n")
    if args.checkpoint:
        Path(args.checkpoint).write_text(json.dumps(result.checkpoint(), sort_keys=True))
    _dump({"policy": "drl", "train_steps": args.train_steps, "eval_steps": args.eval_steps,
           "U_g_train_mean": result.trace.mean_u_g(), "U_g_eval_mean": trace.mean_u_g()}, args.out)


def _parse_attack(text):
    # device:start..stop[:mode]
    parts = text.split(":")
    if len(parts) not in (2, 3):
        raise UsageError(f"--attack wants device:start..stop[:mode], got {text!r}")
    item = {"device": int(parts[0]), "windows": parts[1]}
    if len(parts) == 3:
        item["mode"] = parts[2]
    return item


def _default_service(args):
    from .netsim import DeviceRegistration, ServiceConfig
    from .watermark import WatermarkParams
    devices = [DeviceRegistration(k + 1, WatermarkParams(args.beta, args.n, args.ns, float(f), args.d),
                                  args.seed * 1000 + k, args.mode)
               for k, f in enumerate(args.freqs or [1000, 2000, 3000])]
    return ServiceConfig(devices, args.cap if args.cap is not None else 5000, args.k,
                         args.threshold)


def cmd_serve(args):
    from .netsim import (ServiceConfig, audit_budget, make_policy, make_transport, parse_script,
                         run_devices, score_detections, serve)
    _need_seed(args)
    if args.service:
        config = ServiceConfig.from_json(Path(args.service).read_text())
    else:
        config = _default_service(args)
    script = []
    if args.script:
        script.extend(parse_script(Path(args.script).read_text()))
    script.extend(parse_script([_parse_attack(a) for a in args.attack]))
    policy = make_policy(args.policy, config.game_config(), args.seed)
    transport = make_transport(args.transport)
    log_target = args.log or io.StringIO()
    handle = serve(config, policy, transport, log=log_target, epochs=args.windows)
    run = run_devices(config.devices, args.windows, transport, script, seed=args.seed)
    summary = handle.shutdown(timeout=600)
    log_src = args.log if args.log else io.StringIO(log_target.getvalue())
    violations = audit_budget(log_src, {d.device_id: int(d.params.fs) for d in config.devices})
    score = score_detections(summary.reports, run.episodes)
    _dump({"epochs": summary.epochs, "reports": len(summary.reports),
           "alarms": len(summary.alarms()), "rejects": len(summary.rejects),
           "drops": len(summary.drops), "budget_violations": len(violations),
           "attacked_windows": len(run.attacks), "episodes": score.episodes,
           "recall": score.recall, "precision": score.precision,
           "false_alarms": score.false_alarms}, args.out)
    if violations:
        raise IotwmError(f"budget exceeded in {len(violations)} epochs")


def _sweep_point(task):
    from .game import random_instance
    from .learning import policy_utility
    R, seed, policy, n, k, train, evals = task
    return policy_utility(random_instance(n, k, R, seed), policy, seed, train, evals)


def cmd_sweep(args):
    from .learning import POLICIES
    if args.experiment != "r-sweep":
        raise UsageError(f"unknown experiment {args.experiment!r}; available: r-sweep")
    if not args.seeds:
        raise UsageError("sweep needs explicit --seeds, e.g. 0..9")
    policies = args.policies.split(",")
    for p in policies:
        if p not in POLICIES:
            raise UsageError(f"unknown policy {p!r}; choose from {','.join(POLICIES)}")
    tasks = [(R, s, p, args.n_devices, args.k, args.train_steps, args.eval_steps)
             for R in args.r_grid for p in policies for s in args.seeds]
    if args.jobs > 1:
        with ProcessPoolExecutor(args.jobs) as pool:
            values = list(pool.map(_sweep_point, tasks))
    else:
        values = [_sweep_point(t) for t in tasks]
    groups = {}
    for (R, _, p, *_), u in zip(tasks, values):
        groups.setdefault((R, p), []).append(u)
    rows = [",".join(SWEEP_COLUMNS)]
    for (R, p), us in groups.items():
        us = np.asarray(us)
        std = float(us.std(ddof=1)) if len(us) > 1 else 0.0
        rows.append(f"{R:g},{p},{us.mean():.10g},{std:.10g},{len(us)}")
    _write("\n".join(rows) + "\n", args.out)


def build_report(text):
    """Gnuplot-ready blocks (one per policy, separated by two blank lines):
    R, mean, lower and upper 95% bound. Without an ``n`` column the bounds
    are mean -/+ one standard deviation."""
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None:
        raise ParameterError("report input is empty")
    missing = [c for c in SWEEP_COLUMNS[:4] if c not in reader.fieldnames]
    if missing:
        raise ParameterError(f"report input lacks column(s): {', '.join(missing)}")
    rows = list(reader)
    if not rows:
        raise ParameterError("report input has a header but no rows")
    by_policy = {}
    for r in rows:
        by_policy.setdefault(r["policy"], []).append(r)
    out = []
    for policy in sorted(by_policy):
        if out:
            out.extend(["", ""])
        out.append(f"# policy {policy}")
        out.append("# R U_g_mean lower upper")
        for r in sorted(by_policy[policy], key=lambda r: float(r["R"])):
            mean, std = float(r["U_g_mean"]), float(r["U_g_std"])
            half = 1.96 * std / math.sqrt(int(r["n"])) if r.get("n") else std
            out.append(f"{float(r['R']):g} {mean:.6f} {mean - half:.6f} {mean + half:.6f}")
    return "\n".join(out) + "\n"


def cmd_report(args):
    _write(build_report(Path(args.input).read_text()), args.out)


# -- parser --------------------------------------------------------------

def _watermark_flags(p):
    p.add_argument("--params", help="JSON file {beta, n, ns, fs, d}; overrides the flags below")
    p.add_argument("--beta", type=float, default=0.5)
    p.add_argument("--n", type=int, default=10, help="chips per bit")
    p.add_argument("--ns", type=int, default=10, help="bits per window")
    p.add_argument("--fs", type=float, default=1000.0)
    p.add_argument("--d", type=float, default=0.1, help="window duration (s)")
    p.add_argument("--mode", choices=["static", "dynamic-hash", "dynamic-lstm"], default="dynamic-hash")


def _game_flags(p):
    p.add_argument("--freqs", type=int_list, help="comma-separated sampling rates (Hz)")
    p.add_argument("--cap", type=int, help="per-window budget (Hz)")
    p.add_argument("--n", dest="n_devices", type=int, help="random instance: device count")
    p.add_argument("--k", type=int, default=1, help="devices the attacker compromises")
    p.add_argument("--r", type=float, help="random instance: budget ratio R")
    p.add_argument("--seed", type=int)


def build_parser():
    parser = argparse.ArgumentParser(prog="iotwm", description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="JSON object of flag values for the command")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    parser._subcommands = {}

    def add(name, func, help_):
        p = sub.add_parser(name, help=help_)
        p.set_defaults(func=func, _parser=p)
        parser._subcommands[name] = p
        return p

    p = add("embed", cmd_embed, "watermark a CSV signal")
    p.add_argument("--input", required=True)
    p.add_argument("--out")
    p.add_argument("--key-out", help="write the PN key as one line of +1/-1")
    p.add_argument("--seed", type=int, help="key/stream secret")
    _watermark_flags(p)

    p = add("extract", cmd_extract, "authenticate a watermarked CSV signal window by window")
    p.add_argument("--input", required=True)
    p.add_argument("--out")
    p.add_argument("--seed", type=int, help="key/stream secret used at embedding")
    p.add_argument("--threshold", type=float, default=20.0, help="alarm above this mismatch (%%)")
    _watermark_flags(p)

    p = add("solve-params", cmd_solve_params, "search (beta, n, ns) meeting the error and delay constraints")
    p.add_argument("--mu", type=float, default=0.0)
    p.add_argument("--sigma", type=float, required=True)
    p.add_argument("--mu1", type=float, default=0.0)
    p.add_argument("--sigma1", type=float, required=True)
    p.add_argument("--plo", type=float, required=True, help="max attacker success probability")
    p.add_argument("--phi", type=float, required=True, help="max gateway bit error rate")
    p.add_argument("--fs", type=float, required=True)
    p.add_argument("--d", type=float, required=True)
    p.add_argument("--check", type=float, nargs=3, metavar=("BETA", "N", "NS"),
                   help="also report the constraints for this triple")

    p = add("ber", cmd_ber, "Monte-Carlo vs closed-form gateway bit error rate")
    p.add_argument("--beta", type=float, default=0.5)
    p.add_argument("--sigma", type=float, default=0.5)
    p.add_argument("--mu", type=float, default=0.0)
    p.add_argument("--n", type=int, default=10)
    p.add_argument("--bits", type=int, default=1_000_000)
    p.add_argument("--seed", type=int)

    p = add("attack-sweep", cmd_attack_sweep, "record-and-sum power ratio against m")
    _watermark_flags(p)
    p.add_argument("--sigma", type=float, default=0.5)
    p.add_argument("--mu", type=float, default=0.0)
    p.add_argument("--m-max", type=int, default=100)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")

    p = add("enumerate", cmd_enumerate, "maximal budget-feasible gateway sets")
    p.add_argument("--freqs", type=int_list, required=True)
    p.add_argument("--cap", type=int, required=True)
    p.add_argument("--out")

    p = add("msne", cmd_msne, "mixed-strategy equilibrium by linear programming")
    _game_flags(p)
    p.add_argument("--arithmetic", choices=["auto", "exact", "float"], default="auto")
    p.add_argument("--out")

    p = add("fp", cmd_fp, "fictitious play")
    _game_flags(p)
    p.add_argument("--eps", type=float, default=1e-3)
    p.add_argument("--max-iter", type=int, default=100_000)
    p.add_argument("--out")

    p = add("drl", cmd_drl, "train and evaluate the deep Q-learning gateway")
    _game_flags(p)
    p.add_argument("--q", type=int, default=4, help="history length")
    p.add_argument("--train-steps", type=int, default=2000)
    p.add_argument("--eval-steps", type=int, default=2000)
    p.add_argument("--batch", type=int, default=16)
    p.add_argument("--gamma", type=float, default=0.3)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--epsilon", type=float, default=1.0, help="initial exploration rate")
    p.add_argument("--trace", help="CSV trace: step,U_g,U_a,policy_entropy")
    p.add_argument("--checkpoint", help="Q-network checkpoint (JSON)")
    p.add_argument("--out")

    p = add("serve", cmd_serve, "run the gateway with simulated devices")
    p.add_argument("--service", help="service config JSON (devices, cap, K, threshold)")
    p.add_argument("--freqs", type=int_list, help="default config: device rates (Hz)")
    p.add_argument("--cap", type=int)
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--beta", type=float, default=0.5)
    p.add_argument("--n", type=int, default=10)
    p.add_argument("--ns", type=int, default=10)
    p.add_argument("--d", type=float, default=0.1)
    p.add_argument("--mode", choices=["static", "dynamic-hash", "dynamic-lstm"], default="dynamic-hash")
    p.add_argument("--threshold", type=float, default=20.0)
    p.add_argument("--policy", choices=["fp", "msne", "drl", "equal", "proportional"], default="msne")
    p.add_argument("--transport", choices=["inproc", "tcp"], default="inproc")
    p.add_argument("--windows", type=int, default=100)
    p.add_argument("--script", help="attack script JSON: [{device, windows, mode}, ...]")
    p.add_argument("--attack", action="append", default=[],
                   help="device:start..stop[:mode], repeatable")
    p.add_argument("--log", help="CSV event log")
    p.add_argument("--seed", type=int)
    p.add_argument("--out")

    p = add("sweep", cmd_sweep, "policy comparison over a parameter grid")
    p.add_argument("--experiment", default="r-sweep")
    p.add_argument("--n", dest="n_devices", type=int, default=50)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--r-grid", type=r_grid, default=r_grid("0.1:1.0:0.1"))
    p.add_argument("--seeds", type=seed_list)
    p.add_argument("--policies", default="fp,drl,equal,proportional")
    p.add_argument("--train-steps", type=int, default=2000)
    p.add_argument("--eval-steps", type=int, default=2000)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out")

    p = add("report", cmd_report, "summarise a sweep CSV for plotting")
    p.add_argument("input")
    p.add_argument("--out")
    return parser


def _load_config(path):
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise UsageError(f"--config {path}: invalid JSON ({exc})") from None
    if not isinstance(data, dict):
        raise UsageError("--config must hold a JSON object")
    return {k.replace("-", "_"): v for k, v in data.items()}


def _apply_config(parser, values):
    """Make config values the defaults of every subcommand that has such a
    flag, so flags given on the command line still win and required flags
    may come from the file."""
    for p in parser._subcommands.values():
        actions = {a.dest: a for a in p._actions}
        present = {k: v for k, v in values.items() if k in actions}
        p.set_defaults(**present)
        for k in present:
            actions[k].required = False


def main(argv=None):
    parser = build_parser()
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    values = {}
    config_path = pre.parse_known_args(argv)[0].config
    if config_path:
        try:
            values = _load_config(config_path)
        except UsageError as exc:
            print(f"iotwm: error: {exc}", file=sys.stderr)
            return 2
        except OSError as exc:
            print(f"iotwm: error: cannot read --config {config_path} ({exc.strerror})", file=sys.stderr)
            return 2
        _apply_config(parser, values)
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        unknown = sorted(set(values) - set(vars(args)))
        if unknown:
            raise UsageError(f"--config has unknown keys for {args.command}: {', '.join(unknown)}")
        args.func(args)
    except UsageError as exc:
        args._parser.print_usage(sys.stderr)
        print(f"iotwm {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (FileNotFoundError, IsADirectoryError) as exc:
        print(f"iotwm {args.command}: error: cannot read {exc.filename} (check the path)",
              file=sys.stderr)
        return 2
    except IotwmError as exc:
        print(f"iotwm {args.command}: error: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
