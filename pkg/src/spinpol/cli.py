"""Command-line experiment runner.

    spinpol <experiment> --config <path> [--seed N] [--out PATH] [--threads N]

Flags override config-file fields, which override defaults.  Exit codes:
0 success, 2 configuration error, 3 numerical failure, 4 speed limit
exceeded (fe-ramp only; the fallback trace is still written).
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from spinpol.config import EXPERIMENTS, ConfigError, parse_config
from spinpol.experiments import IntegrationError, run_experiment

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_SPEED_LIMIT = 4


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spinpol",
        description="Dynamic-polarization experiments for the anisotropic central spin model",
    )
    sub = parser.add_subparsers(dest="experiment", required=True)
    for name in EXPERIMENTS:
        p = sub.add_parser(name, help=f"run the {name} experiment")
        p.add_argument("--config", help="TOML config file")
        p.add_argument("--seed", type=int, help="override RNG seed")
        p.add_argument("--out", help="override output CSV path")
        p.add_argument("--threads", type=int, help="worker processes")
        p.add_argument("--realizations", type=int, help="override disorder sample count")
        p.add_argument("--size", type=int, help="override spin count L")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {
        "experiment": args.experiment,
        "seed": args.seed,
        "out": args.out,
        "threads": args.threads,
        "realizations": args.realizations,
        "size": args.size,
    }
    try:
        if args.config:
            with open(args.config) as handle:
                text = handle.read()
        else:
            text = ""
        cfg = parse_config(text, overrides)
    except FileNotFoundError as err:
        print(f"spinpol: config file not found: {err.filename}", file=sys.stderr)
        return EXIT_CONFIG
    except ConfigError as err:
        print(f"spinpol: {err}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        table = run_experiment(cfg)
    except (IntegrationError, np.linalg.LinAlgError) as err:
        print(f"spinpol: numerical failure: {err}", file=sys.stderr)
        return EXIT_NUMERICAL
    print(f"spinpol: wrote {len(table.rows)} rows to {cfg.out}")
    if cfg.experiment == "fe-ramp" and table.speed_limited:
        print("spinpol: requested ramp below the engineered speed limit; "
              "fallback trace written", file=sys.stderr)
        return EXIT_SPEED_LIMIT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
