"""Command-line front end: run experiments, inspect checkpoints, export
reconstructions."""

from __future__ import annotations

import argparse
import sys

import numpy as np

from .errors import ConfigError
from .runner import (export_reconstructions, load_checkpoint, parse_config,
                     run_experiment)


def _parse_overrides(pairs):
    overrides = {}
    for pair in pairs:
        if "=" not in pair:
            raise ConfigError(f"override must look like key=value, got {pair!r}")
        key, _, value = pair.partition("=")
        overrides[key.strip()] = value
    return overrides


def _cmd_run(args) -> int:
    cfg = parse_config(args.config, _parse_overrides(args.override))
    records = run_experiment(cfg, verbose=not args.quiet)
    last = records[-1]
    print(f"finished {len(records)} rounds; final accuracy {last.accuracy:.4f}; "
          f"artifacts in {cfg.out_dir}")
    return 0


def _cmd_inspect(args) -> int:
    params = load_checkpoint(args.path)
    total = 0
    for name, t in params.items():
        v = t.view()
        print(f"{name:18s} shape={t.shape} min={v.min():+.5f} "
              f"max={v.max():+.5f} mean={v.mean():+.5f}")
        total += t.size
    print(f"{len(params)} tensors, {total} values")
    return 0


def _cmd_export_recon(args) -> int:
    paths = export_reconstructions(args.checkpoint, args.target, args.count,
                                   args.out, seed=args.seed)
    print(f"wrote {len(paths)} images to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fedleak",
        description="Deterministic federated-learning simulator with a "
                    "GAN-based information-stealing adversary.")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run an experiment")
    run_p.add_argument("--config", help="path to a `key = value` config file")
    run_p.add_argument("--override", action="append", default=[],
                       metavar="KEY=VALUE", help="override a config value")
    run_p.add_argument("--quiet", action="store_true",
                       help="suppress per-round progress lines")
    run_p.set_defaults(func=_cmd_run)

    ins_p = sub.add_parser("inspect-checkpoint", help="describe a checkpoint")
    ins_p.add_argument("path")
    ins_p.set_defaults(func=_cmd_inspect)

    exp_p = sub.add_parser("export-recon",
                           help="write PGM images from a generator checkpoint")
    exp_p.add_argument("checkpoint")
    exp_p.add_argument("--target", type=int, required=True,
                       help="target class, used to seed the noise")
    exp_p.add_argument("-n", "--count", type=int, default=16)
    exp_p.add_argument("--out", default="recon_out")
    exp_p.add_argument("--seed", type=int, default=0)
    exp_p.set_defaults(func=_cmd_export_recon)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
