"""Standalone plotting CLI: CSV in, PNG out, no display required."""

import argparse
import sys

from apacplots import obstacles, plots


def build_parser():
    parser = argparse.ArgumentParser(
        prog="apacplots",
        description="Render solver CSV exports as PNG figures.")
    parser.add_argument("--input", required=True, nargs="+",
                        help="input CSV file(s); curves overlay multiple files")
    parser.add_argument("--output", required=True, help="output PNG path")
    parser.add_argument("--kind", required=True, choices=plots.KINDS)
    parser.add_argument("--xlim", type=float, nargs=2, metavar=("LO", "HI"))
    parser.add_argument("--ylim", type=float, nargs=2, metavar=("LO", "HI"))
    parser.add_argument("--dims", type=int, nargs=2, default=(1, 2),
                        metavar=("I", "J"),
                        help="1-based coordinate pair to project (default 1 2)")
    parser.add_argument("--obstacle", choices=obstacles.VARIANTS,
                        help="overlay this obstacle region on a trajectory plot")
    parser.add_argument("--columns", nargs="+",
                        help="history columns to draw (curve kinds only)")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        spec = plots.PlotSpec(
            inputs=args.input, output=args.output, kind=args.kind,
            xlim=tuple(args.xlim) if args.xlim else None,
            ylim=tuple(args.ylim) if args.ylim else None,
            dims=tuple(args.dims), obstacle=args.obstacle,
            columns=tuple(args.columns) if args.columns else None)
        plots.render(spec)
    except (plots.SchemaError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {args.output}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
