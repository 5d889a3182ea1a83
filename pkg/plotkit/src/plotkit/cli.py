"""Command-line entry point.

  plotkit profile --in profile.csv [--ref dns.csv] --out fig.png
  plotkit spectrum --in spectrum.csv [--kmin A --kmax B] --out fig.png

Exit codes: 0 success, 2 bad input (schema/missing file), 4 unwritable output.
"""

from __future__ import annotations

import argparse
import math
import sys

from .figures import plot_profile, plot_spectrum
from .io import SchemaError, load_profile, load_spectrum

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_IO = 4


def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="plotkit")
    sub = p.add_subparsers(dest="command", required=True)

    prof = sub.add_parser("profile", help="u+(y+) with law-of-wall overlays")
    prof.add_argument("--in", dest="infile", required=True, help="profile.csv path")
    prof.add_argument("--ref", help="optional reference profile CSV (same schema)")
    prof.add_argument("--out", required=True, help="output image path")

    spec = sub.add_parser("spectrum", help="log-log spectrum with reference slopes")
    spec.add_argument("--in", dest="infile", required=True, help="spectrum CSV path")
    spec.add_argument("--kmin", type=float, help="lower bound of the slope-fit k-range")
    spec.add_argument("--kmax", type=float, help="upper bound of the slope-fit k-range")
    spec.add_argument("--out", required=True, help="output image path")
    return p


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    try:
        if args.command == "profile":
            profile = load_profile(args.infile)
            ref = load_profile(args.ref) if args.ref else None
        else:
            spectrum = load_spectrum(args.infile)
            k_range = None
            if args.kmin is not None or args.kmax is not None:
                k_range = (
                    args.kmin if args.kmin is not None else -math.inf,
                    args.kmax if args.kmax is not None else math.inf,
                )
    except (SchemaError, OSError) as e:
        print(f"input error: {e}", file=sys.stderr)
        return EXIT_INPUT

    try:
        if args.command == "profile":
            deviation = plot_profile(profile, args.out, ref=ref)
            print(f"max log-law deviation: {deviation:.6g}")
        else:
            slope = plot_spectrum(spectrum, args.out, k_range=k_range)
            print(f"fitted slope: {slope:.6g}")
    except OSError as e:
        print(f"I/O failure: {e}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
