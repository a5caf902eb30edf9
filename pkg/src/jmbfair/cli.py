"""Command-line interface: ``jmbfair {solve,converge,ergodic,verify}``."""

from __future__ import annotations

import argparse
import contextlib
import dataclasses
import json
import logging
import sys
from typing import Optional, Sequence

from . import __version__, harness, verify
from .ao import AoConfig, Init, Mode, ao_solve
from .harness import ExperimentSpec
from .model import Decaying, Fixed

FULL_SCALE = {"n_channels": 200, "sample_size": 1000}


def _error_model(args) -> Optional[object]:
    if getattr(args, "sigma_e2", None) is not None:
        return Fixed(args.sigma_e2)
    if getattr(args, "alpha", None) is not None:
        return Decaying(args.alpha)
    return None


def _load_spec(args) -> ExperimentSpec:
    base = {}
    if args.config:
        with open(args.config, encoding="utf-8") as fp:
            base = json.load(fp)
    spec = ExperimentSpec.from_dict(base)
    over = {}
    if getattr(args, "full_scale", False):
        over.update(FULL_SCALE)
    for flag, name in (("ntx", "n_tx"), ("k", "n_users"), ("m", "sample_size"),
                       ("seed", "seed"), ("n_channels", "n_channels"), ("eps_r", "eps_r"),
                       ("n_max", "n_max"), ("workers", "workers"), ("snr_db", "snr_grid_db")):
        value = getattr(args, flag, None)
        if value is not None:
            over[name] = value
    if getattr(args, "modes", None):
        over["modes"] = tuple(Mode(m) for m in args.modes)
    if getattr(args, "inits", None):
        over["inits"] = tuple(Init(i) for i in args.inits)
    if getattr(args, "unpaired", False):
        over["paired_sampling"] = False
    em = _error_model(args)
    if em is not None:
        over["error_model"] = em
    return dataclasses.replace(spec, **over)


@contextlib.contextmanager
def _output(path: Optional[str]):
    if path is None or path == "-":
        yield sys.stdout
    else:
        with open(path, "w", encoding="utf-8", newline="") as fp:
            yield fp


def cmd_solve(args) -> int:
    spec = ExperimentSpec(n_tx=args.ntx, n_users=args.k, sample_size=args.m, seed=args.seed,
                          error_model=_error_model(args) or Decaying(0.6))
    sc, h_true, ss = harness.draw_instance(spec, args.channel, args.snr_db)
    cfg = AoConfig(eps_r=args.eps_r, n_max=args.n_max, init=Init(args.init), mode=Mode(args.mode))
    res = ao_solve(sc, ss, cfg)
    pre = res.precoder
    out = {
        "snr_db": args.snr_db,
        "n_tx": sc.n_tx,
        "n_users": sc.n_users,
        "power": sc.power,
        "sigma_e2": ss.error_var,
        "sample_size": ss.size,
        "mode": cfg.mode.value,
        "init": cfg.init.value,
        "seed": args.seed,
        "channel": args.channel,
        "objective_bits": res.objective,
        "achieved_rate_bits": harness.achieved_min_rate(h_true, pre, res.coeffs, sc.noise_var),
        "converged": res.converged,
        "iterations": res.iterations,
        "objective_trace": res.objective_trace,
        "coeffs": res.coeffs.tolist(),
        "average_rates": {"common": res.final_rates.common.tolist(),
                          "private": res.final_rates.private.tolist()},
        "precoder": {"real": pre.matrix.real.tolist(), "imag": pre.matrix.imag.tolist()},
    }
    json.dump(out, sys.stdout, indent=2)
    sys.stdout.write("\n")
    return 0


def cmd_converge(args) -> int:
    spec = _load_spec(args)
    snr_points = args.snr_db if args.snr_db else (5.0, 20.0, 35.0)
    alpha = args.alpha if args.alpha is not None else 0.6
    if not args.inits:
        spec = dataclasses.replace(spec, inits=(Init.ZF_E, Init.ZF_SVD))
    rows = harness.run_convergence(spec, snr_points=snr_points, alpha=alpha, channel=args.channel)
    with _output(args.out) as fp:
        harness.write_convergence_csv(rows, fp)
    return 0


def cmd_ergodic(args) -> int:
    spec = _load_spec(args)
    if args.dump_config:
        json.dump(spec.to_dict(), sys.stdout, indent=2)
        sys.stdout.write("\n")
        return 0
    records = harness.run_ergodic(spec)
    with _output(args.out) as fp:
        harness.write_ergodic_csv(records, fp)
    return 0


def cmd_verify(args) -> int:
    results = verify.run_all(args.suite or None)
    for r in results:
        print(r.line())
    return 0 if all(r.passed for r in results) else 1


def _add_error_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_mutually_exclusive_group()
    g.add_argument("--alpha", type=float, help="decaying CSIT error, sigma_e2 = P_t**-alpha")
    g.add_argument("--sigma-e2", type=float, help="fixed CSIT error variance")


def _add_experiment_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file with experiment settings (flags override it)")
    p.add_argument("--ntx", type=int, help="transmit antennas")
    p.add_argument("--k", type=int, help="users")
    p.add_argument("--m", type=int, help="realizations per sample set")
    p.add_argument("--seed", type=int)
    p.add_argument("--eps-r", type=float)
    p.add_argument("--n-max", type=int)
    p.add_argument("--inits", nargs="+", choices=[i.value for i in Init])
    p.add_argument("--out", help="output CSV path (default: stdout)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="jmbfair", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="run the AO algorithm on one random instance, print JSON")
    p.add_argument("--ntx", type=int, default=2)
    p.add_argument("--k", type=int, default=2)
    p.add_argument("--snr-db", type=float, default=20.0)
    _add_error_flags(p)
    p.add_argument("--m", type=int, default=200)
    p.add_argument("--init", choices=[i.value for i in Init], default=Init.ZF_SVD.value)
    p.add_argument("--mode", choices=[m.value for m in Mode], default=Mode.JMB.value)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--channel", type=int, default=0, help="channel index within the seed")
    p.add_argument("--eps-r", type=float, default=1e-4)
    p.add_argument("--n-max", type=int, default=200)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("converge", help="objective traces per iteration (CSV)")
    _add_experiment_flags(p)
    p.add_argument("--snr-db", type=float, nargs="+", help="SNR points (default 5 20 35)")
    p.add_argument("--alpha", type=float, help="error decay exponent (default 0.6)")
    p.add_argument("--channel", type=int, default=0)
    p.set_defaults(func=cmd_converge)

    p = sub.add_parser("ergodic", help="ergodic-rate sweep over SNR (CSV)")
    _add_experiment_flags(p)
    _add_error_flags(p)
    p.add_argument("--snr-db", type=float, nargs="+", help="SNR grid in dB")
    p.add_argument("--n-channels", type=int)
    p.add_argument("--modes", nargs="+", choices=[m.value for m in Mode])
    p.add_argument("--unpaired", action="store_true",
                   help="fresh draws at every SNR point instead of paired sampling")
    p.add_argument("--workers", type=int, help="worker processes")
    p.add_argument("--full-scale", action="store_true",
                   help=f"use {FULL_SCALE['n_channels']} channels and "
                        f"M = {FULL_SCALE['sample_size']}")
    p.add_argument("--dump-config", action="store_true",
                   help="print the effective settings as JSON and exit")
    p.set_defaults(func=cmd_ergodic)

    p = sub.add_parser("verify", help="run the oracle self-checks; nonzero exit on failure")
    p.add_argument("--suite", action="append", choices=list(verify.SUITES))
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValueError, OSError, json.JSONDecodeError, harness.HarnessError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
