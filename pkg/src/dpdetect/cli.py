"""Command line entry point: ``dpdetect detect --mechanism svt --epsilon0 0.7 ...``."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .core import InvalidParameterError
from .detector import N_DETECT, N_SELECT, DetectionConfig, epsilon_grid, sweep, verdict
from .events import GRID_STEP
from .mechanisms import REGISTRY
from .report import to_csv, to_json
from .stats import DEFAULT_RESAMPLES

EXIT_OK, EXIT_CONFIG, EXIT_POINT_FAILED = 0, 2, 3


def _grid(text: str) -> list:
    try:
        lo, hi, step = (float(x) for x in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected lo:hi:step, got {text!r}") from None
    try:
        return epsilon_grid(lo, hi, step)
    except InvalidParameterError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dpdetect", description="Find counterexamples to differential privacy.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    p = sub.add_parser("detect", help="test a registered mechanism at one or more epsilons")
    p.add_argument("--mechanism", required=True, choices=sorted(REGISTRY))
    p.add_argument("--epsilon0", required=True, type=float, help="claimed privacy budget")
    grid = p.add_mutually_exclusive_group()
    grid.add_argument("--test-eps", type=float, help="single test epsilon")
    grid.add_argument("--sweep", type=_grid, metavar="LO:HI:STEP",
                      help="inclusive grid of test epsilons (default 0.05:epsilon0+1.5:0.1)")
    p.add_argument("--n-detect", type=int, default=N_DETECT)
    p.add_argument("--n-select", type=int, default=N_SELECT)
    p.add_argument("--resamples", type=int, default=DEFAULT_RESAMPLES)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--grid-step", type=float, default=GRID_STEP,
                   help="spacing of interval endpoints for numeric outputs")
    p.add_argument("--out", help="write results here instead of stdout")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--no-timing", action="store_true",
                   help="leave the seconds column empty (byte-reproducible output)")
    p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.test_eps is not None:
        grid = [args.test_eps]
    else:
        grid = args.sweep or ()
    try:
        config = DetectionConfig(args.mechanism, args.epsilon0, tuple(grid), args.n_detect,
                                 args.n_select, args.resamples, args.alpha, args.seed,
                                 args.workers, args.grid_step)
    except InvalidParameterError as exc:
        print(f"dpdetect: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    results = sweep(args.mechanism, config)
    timing = not args.no_timing
    text = to_csv(results, timing) if args.format == "csv" else to_json(results, config, timing)
    if args.out:
        with open(args.out, "w", newline="") as fh:
            fh.write(text)
        if args.format == "csv":
            with open(args.out + ".config.json", "w") as fh:
                json.dump(config.echo(), fh, indent=2)
                fh.write("\n")
    else:
        sys.stdout.write(text)
    print(verdict(results, config.epsilon0, config.alpha), file=sys.stderr)
    return EXIT_POINT_FAILED if any(not r.ok for r in results) else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
