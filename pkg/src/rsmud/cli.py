"""Command-line front end: `simulate`, `pep`, `bound`, `signatures`."""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import analysis, harness
from .channel import ChannelModel, build_signatures, correlation_matrix
from .randset import SlotState, Universe
from .traffic import TrafficModel


def _mask_arg(text: str) -> int:
    """User list like '1,3' (1-based) or 'empty' -> bit mask."""
    if text.strip().lower() in ("empty", "none", ""):
        return 0
    mask = 0
    for part in text.split(","):
        u = int(part)
        if u < 1:
            raise argparse.ArgumentTypeError("user indices are 1-based")
        mask |= 1 << (u - 1)
    return mask


def _add_model_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--users", type=int, required=True, help="number of potential interferers K")
    p.add_argument("--alpha", type=float, required=True, help="activity probability")
    p.add_argument("--mu", type=float, default=0.0, help="persistence probability")
    p.add_argument("--spreading", choices=("msequence", "kasami"), default="msequence")
    p.add_argument("--length", type=int, default=7, help="signature length (2^d - 1)")
    p.add_argument("--ebn0", default="0,2,4,6,8,10,12", help="comma list of Eb/N0 points in dB")
    p.add_argument("--frame", type=int, default=1, help="frame length T")
    p.add_argument("--seed", type=int, default=0)


def _channel_for(args, ebn0_db: float) -> ChannelModel:
    sigs = build_signatures(args.spreading, args.users, args.length)
    r = correlation_matrix(sigs)
    return ChannelModel(r, np.ones(args.users), 10.0 ** (-ebn0_db / 10.0))


def _emit_rows(rows, out_path) -> None:
    text = "ebn0_db,value,stderr\n" + "".join(
        f"{db:.10g},{v:.10g},{se:.10g}\n" for db, v, se in rows)
    if out_path:
        with open(out_path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _cmd_simulate(args) -> int:
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = str(args.seed)
    if args.trials is not None:
        overrides["trials"] = str(args.trials)
    if args.ebn0 is not None:
        overrides["ebn0_db"] = args.ebn0
    for item in args.set or []:
        if "=" not in item:
            raise ValueError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        overrides[key.strip()] = value.strip()
    if args.preset:
        configs = harness.preset_configs(args.preset, overrides)
    elif args.config:
        configs = [harness.load_config(args.config, overrides)]
    else:
        raise ValueError("simulate needs --config FILE or --preset NAME")
    records = []
    for cfg in configs:
        records.extend(harness.run_experiment(cfg))
    if args.out:
        harness.write_csv(records, args.out)
        harness.write_sidecar(configs, args.out + ".json")
    else:
        harness.write_csv(records, sys.stdout)
    return 0


def _cmd_pep(args) -> int:
    model = TrafficModel(args.users, args.alpha, args.mu, 0 if args.trained else 1)
    universe = Universe(args.users, model.N, False)
    rows = []
    for db in (float(s) for s in args.ebn0.split(",")):
        c = _channel_for(args, db)
        if args.trained:
            rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(args.seed)))
            training = 1.0 - 2.0 * rng.integers(0, 2, size=(args.frame, args.users)).astype(float)
            states_x = [SlotState(args.x)] * args.frame
            states_h = [SlotState(args.xhat)] * args.frame
            ctx = analysis.pair_from_states(universe, c, states_x, states_h, training=training)
            value = analysis.pep(ctx, model, args.mode)
        else:
            value = analysis.identity_pair_pep_averaged(
                universe, model, c, args.x, args.xhat, args.frame, args.mode)
        rows.append((db, value, 0.0))
    _emit_rows(rows, args.out)
    return 0


def _cmd_bound(args) -> int:
    trained = args.trained
    model = TrafficModel(args.users, args.alpha, args.mu, 0 if trained else 1)
    universe = Universe(args.users, model.N, False)
    rng_seed = np.random.SeedSequence(args.seed)
    rows = []
    for db in (float(s) for s in args.ebn0.split(",")):
        c = _channel_for(args, db)
        training = None
        if trained:
            rng = np.random.Generator(np.random.Philox(rng_seed))
            training = 1.0 - 2.0 * rng.integers(0, 2, size=(args.frame, args.users)).astype(float)
        if args.kind == "semianalytic":
            rng = np.random.Generator(np.random.Philox(rng_seed))
            mode = "map_identities" if trained else "map_with_data"
            value, se = analysis.semianalytic_dynamic_bound(
                universe, model, c, args.frame, args.samples, args.restrict, rng,
                training=training, mode=mode)
        else:
            restrict = None if args.kind == "union" else int(args.kind[1:])
            value = analysis.union_bound_static(
                universe, model, c, args.frame, restrict_n=restrict,
                mode="map_identities", training=training)
            se = 0.0
        rows.append((db, value, se))
    _emit_rows(rows, args.out)
    return 0


def _cmd_signatures(args) -> int:
    sigs = build_signatures(args.spreading, args.users, args.length)
    if args.out:
        sigs.save_text(args.out)
    else:
        sigs.save_text(sys.stdout)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rsmud",
        description="Random-set multiuser detection: simulation sweeps, "
                    "pairwise error probabilities, and error bounds.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run a Monte Carlo sweep to CSV")
    p.add_argument("--config", help="flat key=value configuration file")
    p.add_argument("--preset", help=f"one of {', '.join(sorted(harness.PRESETS))}")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--trials", type=int, default=None)
    p.add_argument("--ebn0", default=None, help="override the Eb/N0 sweep")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override any configuration key")
    p.add_argument("--out", help="CSV output path (sidecar JSON written next to it)")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("pep", help="closed-form pairwise error probability sweep")
    _add_model_args(p)
    p.add_argument("--x", type=_mask_arg, required=True, help="true set, e.g. '1,3' or 'empty'")
    p.add_argument("--xhat", type=_mask_arg, required=True, help="competitor set")
    p.add_argument("--mode", choices=("ml", "map_identities", "map_with_data"), default="ml")
    p.add_argument("--trained", action="store_true",
                   help="use seed-drawn known training data instead of averaging")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_pep)

    p = sub.add_parser("bound", help="union / restricted / semianalytic bounds")
    _add_model_args(p)
    p.add_argument("--kind", default="union",
                   help="'union', 'p<n>' (restricted), or 'semianalytic'")
    p.add_argument("--samples", type=int, default=1000, help="semianalytic sample count")
    p.add_argument("--restrict", type=int, default=2, help="semianalytic distance budget")
    p.add_argument("--trained", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_bound)

    p = sub.add_parser("signatures", help="export a signature family as +-1 rows")
    p.add_argument("--spreading", choices=("msequence", "kasami"), required=True)
    p.add_argument("--length", type=int, required=True)
    p.add_argument("--users", type=int, required=True)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_signatures)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, KeyError) as exc:
        print(f"rsmud: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
