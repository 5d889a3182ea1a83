"""Command-line entry point: `divfree-flow run --config <path>` with
optional overrides.  Exit codes: 0 success, 2 invalid config,
3 numerical failure, 4 I/O failure."""

from __future__ import annotations

import argparse
import sys

from .config import ConfigError, build_config, load_config
from .solver import SolverError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4


def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="divfree-flow")
    sub = p.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run a configured case")
    run.add_argument("--config", help="flat key=value config file")
    run.add_argument("--case", help="case name override")
    run.add_argument("--disc", help="discretization override")
    run.add_argument("--model", help="turbulence model override")
    run.add_argument("--order", help="polynomial order override")
    run.add_argument("--out", help="output directory override")
    run.add_argument("--seed", help="RNG seed override")
    return p


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    overrides = {
        k: getattr(args, k)
        for k in ("case", "disc", "model", "order", "out", "seed")
    }
    try:
        if args.config:
            cfg = load_config(args.config, overrides)
        else:
            cfg = build_config({}, overrides)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG

    from .channel_app import run_case

    try:
        report = run_case(cfg)
    except SolverError as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as e:
        print(f"I/O failure: {e}", file=sys.stderr)
        return EXIT_IO
    print(
        f"case {report['case']} ({report['disc']}) finished in "
        f"{report['wall_clock_s']:.2f}s; outputs in {cfg.out}"
    )
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
