"""Command-line entry point.

    mhdlab <subcommand> --config <path> [--out <dir>] [--seed <u64>]

Exit codes: 0 when every enabled check passes, 2 for configuration errors,
3 when the time integration diverges, 4 when a check fails.
"""

from __future__ import annotations

import argparse
import sys

from .config import KINDS, MAX_SEED, parse_config
from .errors import ConfigurationError, ContractError
from .experiments import EXIT_CONFIG, run_experiment


def _u64(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= value <= MAX_SEED:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mhdlab", description="Perturbation MHD laboratory on the torus.")
    sub = parser.add_subparsers(dest="command", required=True, metavar="subcommand")
    for kind in KINDS:
        p = sub.add_parser(kind, help=f"run the {kind} experiment")
        p.add_argument("--config", required=True, help="key = value configuration file")
        p.add_argument("--out", help="output directory (overrides the output key)")
        p.add_argument("--seed", type=_u64, help="random seed (overrides the seed key)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {}
    if args.out is not None:
        overrides["output"] = args.out
    if args.seed is not None:
        overrides["seed"] = str(args.seed)
    try:
        cfg = parse_config(args.config, overrides, kind=args.command)
        code, report = run_experiment(cfg)
    except (ConfigurationError, ContractError) as exc:
        print(f"mhdlab: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    status = {0: "pass", 3: "diverged", 4: "fail"}[code]
    print(f"{cfg.kind}: {status} (output in {cfg.output})")
    for name, ok in report.checks.items():
        print(f"  {name}: {'pass' if ok else 'fail'}")
    return code


if __name__ == "__main__":
    sys.exit(main())
