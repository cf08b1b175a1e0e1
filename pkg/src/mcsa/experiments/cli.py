"""Command-line interface.

    mcsa run <config-file> [--seed S] [--out PATH] [--threads K]
                           [--record-stride R]
    mcsa aggregate <csv> --group method,N [--quantiles 0.1,0.5,0.9]
                         [--value kl] [--out PATH]
    mcsa validate <config-file>

Exit codes: 0 success, 2 configuration/input error, 3 numerical divergence
in every repetition.
"""

from __future__ import annotations

import argparse
import sys

from .config import ConfigError, parse_config_file
from .records import aggregate_quantiles, aggregated_to_text, read_csv, write_csv
from .runners import run_experiment

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_ALL_DIVERGED = 3


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mcsa",
        description="Inclusive-KL variational inference experiment harness")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one experiment config, write CSV")
    p_run.add_argument("config")
    p_run.add_argument("--seed", type=int, default=None,
                       help="override the config seed")
    p_run.add_argument("--out", default=None, help="override output_path")
    p_run.add_argument("--threads", type=int, default=1)
    p_run.add_argument("--record-stride", type=int, default=None,
                       help="override record_stride (1 = full resolution)")

    p_agg = sub.add_parser("aggregate", help="per-group quantiles of a CSV column")
    p_agg.add_argument("csv")
    p_agg.add_argument("--group", required=True,
                       help="comma-separated group columns, e.g. method,N")
    p_agg.add_argument("--quantiles", default="0.1,0.5,0.9")
    p_agg.add_argument("--value", default="kl", help="value column (default kl)")
    p_agg.add_argument("--out", default=None, help="write here instead of stdout")

    p_val = sub.add_parser("validate", help="check a config file and exit")
    p_val.add_argument("config")
    return parser


def _cmd_run(args) -> int:
    try:
        cfg = parse_config_file(args.config)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.seed is not None:
        cfg.seed = args.seed
    if args.record_stride is not None:
        if args.record_stride < 0:
            print("config error: --record-stride must be >= 0", file=sys.stderr)
            return EXIT_CONFIG
        cfg.record_stride = args.record_stride
    out_path = args.out or cfg.output_path or f"{cfg.experiment}.csv"

    records, all_diverged = run_experiment(cfg, threads=args.threads)
    write_csv(out_path, records)
    print(f"wrote {len(records)} rows to {out_path}")
    if all_diverged:
        print("every repetition diverged", file=sys.stderr)
        return EXIT_ALL_DIVERGED
    return EXIT_OK


def _cmd_aggregate(args) -> int:
    try:
        rows = read_csv(args.csv)
        group_keys = [k.strip() for k in args.group.split(",") if k.strip()]
        quantiles = [float(q) for q in args.quantiles.split(",") if q.strip()]
        aggregated = aggregate_quantiles(rows, group_keys, quantiles,
                                         value_col=args.value)
        text = aggregated_to_text(aggregated)
    except (ValueError, OSError) as exc:
        print(f"aggregate error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        print(f"wrote {len(aggregated)} groups to {args.out}")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _cmd_validate(args) -> int:
    try:
        cfg = parse_config_file(args.config)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(f"ok: {cfg.experiment} (dim={cfg.dim}, methods={','.join(cfg.methods)}, "
          f"budgets={','.join(str(n) for n in cfg.budgets)}, seed={cfg.seed})")
    return EXIT_OK


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    handler = {"run": _cmd_run, "aggregate": _cmd_aggregate,
               "validate": _cmd_validate}[args.command]
    return handler(args)


if __name__ == "__main__":
    sys.exit(main())
