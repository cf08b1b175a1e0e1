"""CSV schema for experiment traces, and quantile aggregation.

Columns are fixed: experiment,method,N,repetition,iteration,kl,grad_variance,
acceptance_rate,diverged,wall_ns. Inapplicable fields are empty strings,
floats carry 17 significant digits, line endings are LF.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np

CSV_COLUMNS = ("experiment", "method", "N", "repetition", "iteration", "kl",
               "grad_variance", "acceptance_rate", "diverged", "wall_ns")


@dataclass(frozen=True)
class RunRecord:
    experiment: str
    method: str
    n_budget: Optional[int]
    repetition: Optional[int]
    iteration: Optional[int]
    kl: Optional[float] = None
    grad_variance: Optional[float] = None
    acceptance_rate: Optional[float] = None
    diverged: bool = False
    wall_ns: Optional[int] = None

    def __post_init__(self):
        if self.kl is not None and math.isfinite(self.kl) and self.kl < 0:
            raise ValueError("kl must be nonnegative when present")


def _fmt_float(x: Optional[float]) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    return f"{x:.17g}"


def _fmt_int(x: Optional[int]) -> str:
    return "" if x is None else str(int(x))


def record_to_row(rec: RunRecord) -> str:
    return ",".join([
        rec.experiment,
        rec.method,
        _fmt_int(rec.n_budget),
        _fmt_int(rec.repetition),
        _fmt_int(rec.iteration),
        _fmt_float(rec.kl),
        _fmt_float(rec.grad_variance),
        _fmt_float(rec.acceptance_rate),
        "true" if rec.diverged else "false",
        _fmt_int(rec.wall_ns),
    ])


def write_csv(path: str, records: Sequence[RunRecord]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(CSV_COLUMNS) + "\n")
        for rec in records:
            fh.write(record_to_row(rec) + "\n")


def rows_to_text(records: Sequence[RunRecord]) -> str:
    lines = [",".join(CSV_COLUMNS)]
    lines.extend(record_to_row(r) for r in records)
    return "\n".join(lines) + "\n"


def read_csv(path: str) -> List[Dict[str, str]]:
    """Rows as dicts of raw strings; validates the header and field counts."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        lines = fh.read().split("\n")
    if not lines or not lines[0]:
        raise ValueError(f"{path}: empty file")
    header = tuple(lines[0].split(","))
    rows = []
    for i, line in enumerate(lines[1:], start=2):
        if not line:
            continue
        parts = line.split(",")
        if len(parts) != len(header):
            raise ValueError(f"{path}:{i}: expected {len(header)} fields, "
                             f"got {len(parts)}")
        rows.append(dict(zip(header, parts)))
    return rows


def parse_record(row: Dict[str, str]) -> RunRecord:
    def opt_int(s):
        return None if s == "" else int(s)

    def opt_float(s):
        return None if s == "" else float(s)

    return RunRecord(
        experiment=row["experiment"],
        method=row["method"],
        n_budget=opt_int(row["N"]),
        repetition=opt_int(row["repetition"]),
        iteration=opt_int(row["iteration"]),
        kl=opt_float(row["kl"]),
        grad_variance=opt_float(row["grad_variance"]),
        acceptance_rate=opt_float(row["acceptance_rate"]),
        diverged=row["diverged"] == "true",
        wall_ns=opt_int(row["wall_ns"]),
    )


def _typed_sort_key(values: Sequence[str]):
    key = []
    for v in values:
        try:
            key.append((0, float(v), ""))
        except ValueError:
            key.append((1, 0.0, v))
    return tuple(key)


def aggregate_quantiles(rows: List[Dict[str, str]], group_keys: Sequence[str],
                        quantiles: Sequence[float] = (0.1, 0.5, 0.9),
                        value_col: str = "kl") -> List[Dict[str, str]]:
    """Per-group quantiles of one value column (linear interpolation).

    Rows with an empty value field are skipped; output rows are ordered by
    the typed group key so repeated runs aggregate identically.
    """
    if not rows:
        raise ValueError("no rows to aggregate")
    for key in list(group_keys) + [value_col]:
        if key not in rows[0]:
            raise ValueError(f"missing column {key!r}; available: "
                             f"{', '.join(rows[0])}")
    for q in quantiles:
        if not (0.0 <= q <= 1.0):
            raise ValueError(f"quantile {q} outside [0, 1]")

    groups: Dict[tuple, List[float]] = {}
    for row in rows:
        if row[value_col] == "":
            continue
        key = tuple(row[k] for k in group_keys)
        groups.setdefault(key, []).append(float(row[value_col]))

    out = []
    for key in sorted(groups, key=_typed_sort_key):
        values = np.asarray(groups[key])
        rec = dict(zip(group_keys, key))
        for q in quantiles:
            rec[f"q{q:g}"] = f"{float(np.quantile(values, q)):.17g}"
        out.append(rec)
    return out


def aggregated_to_text(rows: List[Dict[str, str]]) -> str:
    if not rows:
        raise ValueError("nothing aggregated")
    header = list(rows[0])
    lines = [",".join(header)]
    lines.extend(",".join(row[h] for h in header) for row in rows)
    return "\n".join(lines) + "\n"
