"""Command-line front end.

Subcommands: ingest (delay data -> hashrate profile), calibrate, sweep
(q vs k CSV), density (inter-mining pdf CSV), simulate (Monte Carlo CSV).
All outputs are plain CSV and deterministic given the flags and seed.

Exit codes: 0 success, 2 flag errors (argparse), 3 input/parse errors,
4 numerical failures, 5 unstable regime under --strict.
"""

from __future__ import annotations

import argparse
import logging
import sys

import numpy as np

from . import delaymodel, doublespend, ingest, simulate
from .delaymodel import HashrateProfile
from .medist import erlang_me

logger = logging.getLogger(__name__)

EXIT_INPUT = 3
EXIT_NUMERIC = 4
EXIT_UNSTABLE = 5


def _add_model_flags(p):
    p.add_argument("--model", default="zero",
                   choices=["zero", "fixed", "expdelay", "medelay", "variable"])
    p.add_argument("--data", help="delay dataset file (variable model)")
    p.add_argument("--profile", help="hashrate profile table file")
    p.add_argument("--epsilon", type=float, default=0.01)
    p.add_argument("--bins", type=int, default=128, metavar="N_PRIME")
    p.add_argument("--cme-order", type=int, default=27, dest="cme_order")
    p.add_argument("--beta-fraction", type=float, default=0.2)
    p.add_argument("--block-interval", type=float, default=600.0)
    p.add_argument("--delta-conf", type=float, default=None)
    p.add_argument("--delay", type=float, default=10.0,
                   help="propagation delay for the fixed model")
    p.add_argument("--delay-mean", type=float, default=1.0,
                   help="mean delay for expdelay/medelay models")
    p.add_argument("--delay-order", type=int, default=2,
                   help="Erlang order of the medelay delay distribution")


def _load_profile(args) -> HashrateProfile:
    if args.profile:
        with open(args.profile, "r", encoding="utf-8") as fh:
            return HashrateProfile.from_table(fh.read())
    if not args.data:
        raise ValueError("variable model requires --data or --profile")
    ds = ingest.load_delays(args.data)
    ds, _ = ingest.apply_cutoff(ds, args.epsilon)
    binning = ingest.bin_delays(ds, args.bins)
    return ingest.to_profile(binning, 1.0 / args.block_interval)


def _build_model(args) -> doublespend.DelayModel:
    if args.model == "zero":
        return doublespend.DelayModel("zero")
    if args.model == "fixed":
        return doublespend.DelayModel("fixed", delay=args.delay)
    if args.model == "expdelay":
        return doublespend.DelayModel(
            "random", delay_dist=erlang_me(1, args.delay_mean))
    if args.model == "medelay":
        return doublespend.DelayModel(
            "random", delay_dist=erlang_me(args.delay_order, args.delay_mean))
    return doublespend.DelayModel("variable", profile=_load_profile(args))


def _sim_profile(args):
    """Profile + calibrated rate + delta_conf for simulation commands."""
    T = args.block_interval
    if args.model == "zero":
        return HashrateProfile.zero_delay(1.0 / T), 1.0 / T, 0.0
    if args.model == "fixed":
        alpha = 1.0 / (T - args.delay)
        return (HashrateProfile.fixed_delay(args.delay, alpha), alpha,
                args.delay)
    if args.model == "variable":
        prof = _load_profile(args)
        cal = delaymodel.calibrate_alpha(prof, T, args.cme_order, rel_tol=1e-6)
        prof = prof.with_fullrate(cal.calibrated_rate)
        return prof, cal.calibrated_rate, prof.max_delay
    raise ValueError(f"model {args.model!r} is not supported by simulate")


def _write(path, text):
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)


def cmd_ingest(args) -> int:
    ds = ingest.load_delays(args.data)
    ds, cutoff = ingest.apply_cutoff(ds, args.epsilon)
    binning = ingest.bin_delays(ds, args.bins)
    profile = ingest.to_profile(binning, 1.0 / args.block_interval)
    _write(args.out, profile.to_table())
    print(f"# cutoff_delay_s = {cutoff!r}", file=sys.stderr)
    print(f"# sub_ms_fraction = {binning.sub_ms_fraction!r}", file=sys.stderr)
    print(f"# M = {binning.M}  M_prime = {binning.M_prime}  "
          f"N = {binning.N}", file=sys.stderr)
    return 0


def cmd_calibrate(args) -> int:
    if args.model == "variable" or args.profile:
        prof = _load_profile(args)
    elif args.model == "zero":
        prof = HashrateProfile.zero_delay(1.0 / args.block_interval)
    elif args.model == "fixed":
        prof = HashrateProfile.fixed_delay(args.delay,
                                           1.0 / args.block_interval)
    else:
        raise ValueError("calibrate supports zero, fixed and variable models")
    res = delaymodel.calibrate_alpha(prof, args.block_interval,
                                     args.cme_order, rel_tol=args.rel_tol)
    rel_err = abs(res.achieved_mean - args.block_interval) / args.block_interval
    print(f"calibrated_rate_bps = {res.calibrated_rate!r}")
    print(f"achieved_mean_s = {res.achieved_mean!r}")
    print(f"iterations = {res.iterations}")
    print(f"rel_error = {rel_err:.3e}")
    return 0


def cmd_sweep(args) -> int:
    model = _build_model(args)
    results = doublespend.analyze(
        model, args.beta_fraction, args.block_interval, args.k_max,
        K=args.cme_order, delta_conf=args.delta_conf)
    lines = ["k,q,deficit,model"]
    unstable = False
    for k, res in enumerate(results, start=1):
        tag = res.model_tag + (",UNSTABLE" if res.unstable_regime else "")
        unstable |= res.unstable_regime
        lines.append(f"{k},{res.q!r},{res.deficit_mass!r},{tag}")
    _write(args.out, "\n".join(lines) + "\n")
    if unstable and args.strict:
        print("unstable regime: mean adversary blocks per interval >= 1",
              file=sys.stderr)
        return EXIT_UNSTABLE
    return 0


def cmd_density(args) -> int:
    model = _build_model(args)
    theta, _, _, _ = doublespend._build_theta(
        model, args.block_interval, args.cme_order)
    xs = np.linspace(0.0, 5.0 * args.block_interval, args.points)
    fs = theta.pdf_grid(xs)
    lines = ["x,f"] + [f"{float(x)!r},{float(f)!r}" for x, f in zip(xs, fs)]
    _write(args.out, "\n".join(lines) + "\n")
    return 0


def cmd_simulate(args) -> int:
    profile, rate, default_dconf = _sim_profile(args)
    dconf = args.delta_conf if args.delta_conf is not None else default_dconf
    config = simulate.SimConfig(
        profile=profile, beta=args.beta_fraction * rate, k=args.k_max,
        delta_conf=dconf, warmup_blocks=args.warmup, stop_lead=args.stop_lead,
        trials=args.trials, seed=args.seed)
    ests = simulate.simulate_attack_sweep(config, range(1, args.k_max + 1))
    lines = ["k,q_hat,std_err,trials"]
    for k in sorted(ests):
        e = ests[k]
        lines.append(f"{k},{e.q_hat!r},{e.std_err!r},{e.trials}")
    _write(args.out, "\n".join(lines) + "\n")
    return 0


def _apply_config_file(parser, path):
    """key=value file; flag values still override.

    String defaults are type-converted by argparse, so values can be set
    on every subparser that knows the key.
    """
    defaults = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value")
            key, value = (t.strip() for t in line.split("=", 1))
            defaults[key.replace("-", "_")] = value
    for target in parser._config_targets:
        known = {a.dest for a in target._actions}
        target.set_defaults(**{k: v for k, v in defaults.items() if k in known})


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="powruin",
        description="Double-spend probability analysis for PoW chains "
                    "with time-varying honest mining rates.")
    parser.add_argument("--config", help="key=value defaults file")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="delay data -> hashrate profile")
    p.add_argument("--data", required=True)
    p.add_argument("--epsilon", type=float, default=0.01)
    p.add_argument("--bins", type=int, default=128)
    p.add_argument("--block-interval", type=float, default=600.0)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("calibrate", help="calibrate the full mining rate")
    _add_model_flags(p)
    p.add_argument("--rel-tol", type=float, default=1e-4)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("sweep", help="q as a function of k")
    _add_model_flags(p)
    p.add_argument("--k-max", type=int, default=20)
    p.add_argument("--out", default="-")
    p.add_argument("--strict", action="store_true")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("density", help="inter-mining time pdf grid")
    _add_model_flags(p)
    p.add_argument("--points", type=int, default=1000)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_density)

    p = sub.add_parser("simulate", help="Monte Carlo attack estimate")
    _add_model_flags(p)
    p.add_argument("--k-max", type=int, default=6)
    p.add_argument("--trials", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--warmup", type=int, default=10_000)
    p.add_argument("--stop-lead", type=int, default=64)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_simulate)

    parser._config_targets = [parser] + list(sub.choices.values())
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    # peek at --config before the real parse so file values become defaults
    pre, _ = parser.parse_known_args(argv)
    if getattr(pre, "config", None):
        try:
            _apply_config_file(parser, pre.config)
        except (OSError, ValueError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_INPUT
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (ArithmeticError, np.linalg.LinAlgError, RuntimeError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
