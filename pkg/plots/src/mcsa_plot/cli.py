"""Command-line interface.

    mcsa-plot <kind> --in <csv> --out <img> [--panel-key K] [--logx | --no-logx]
                                            [--logy | --no-logy]

Kinds: convergence (median KL + quantile band vs iteration, one panel per
budget), variance_panels (variance vs N, one panel per study offset), and
stepsize (final KL vs stepsize, one panel per optimizer). Exits nonzero with
a column diagnostic when the CSV does not match the expected schema.
"""

from __future__ import annotations

import argparse
import sys

from .figures import KINDS, FigureSpec, SchemaError, render


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mcsa-plot",
                                     description="Render mcsa CSVs to figures")
    parser.add_argument("kind", choices=KINDS)
    parser.add_argument("--in", dest="input_csv", required=True)
    parser.add_argument("--out", dest="output_path", required=True)
    parser.add_argument("--panel-key", default=None,
                        help="column that splits panels (defaults per kind)")
    parser.add_argument("--logx", action=argparse.BooleanOptionalAction,
                        default=None, help="override the kind's x-scale default")
    parser.add_argument("--logy", action=argparse.BooleanOptionalAction,
                        default=None, help="override the kind's y-scale default")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        spec = FigureSpec.create(args.kind, args.input_csv, args.output_path,
                                 log_x=args.logx, log_y=args.logy,
                                 panel_key=args.panel_key)
        render(spec)
    except (SchemaError, OSError) as exc:
        print(f"mcsa-plot error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {args.output_path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
