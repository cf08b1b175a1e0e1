"""Render mcsa experiment CSVs into the three study figure layouts.

Inputs are plain CSV files: either the raw 10-column run schema
(experiment,method,N,repetition,iteration,kl,grad_variance,acceptance_rate,
diverged,wall_ns) or the aggregated schema produced by ``mcsa aggregate``
(group columns plus q0.1/q0.5/q0.9). Rendering is deterministic: fixed
figure geometry, colors assigned by sorted method name, no timestamps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

KINDS = ("convergence", "variance_panels", "stepsize")

# per-kind axis defaults; explicit flags override
DEFAULT_LOG = {"convergence": (False, True),
               "variance_panels": (True, True),
               "stepsize": (True, True)}

_COLORS = plt.get_cmap("tab10").colors


class SchemaError(Exception):
    """Input CSV does not match the expected schema; message names columns."""


@dataclass(frozen=True)
class FigureSpec:
    kind: str
    input_csv: str
    output_path: str
    log_x: bool
    log_y: bool
    panel_key: Optional[str] = None

    @classmethod
    def create(cls, kind: str, input_csv: str, output_path: str,
               log_x: Optional[bool] = None, log_y: Optional[bool] = None,
               panel_key: Optional[str] = None) -> "FigureSpec":
        if kind not in KINDS:
            raise SchemaError(f"unknown figure kind {kind!r}; valid: "
                              f"{', '.join(KINDS)}")
        dx, dy = DEFAULT_LOG[kind]
        return cls(kind, input_csv, output_path,
                   dx if log_x is None else log_x,
                   dy if log_y is None else log_y,
                   panel_key)


def read_rows(path: str) -> List[Dict[str, str]]:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        lines = [ln for ln in fh.read().split("\n") if ln]
    if not lines:
        raise SchemaError(f"{path}: empty file")
    header = lines[0].split(",")
    rows = []
    for i, line in enumerate(lines[1:], start=2):
        parts = line.split(",")
        if len(parts) != len(header):
            raise SchemaError(f"{path}:{i}: {len(parts)} fields, header has "
                              f"{len(header)}")
        rows.append(dict(zip(header, parts)))
    return rows


def _require(rows: List[Dict[str, str]], columns: Sequence[str], path: str) -> None:
    have = set(rows[0]) if rows else set()
    missing = [c for c in columns if c not in have]
    if missing:
        raise SchemaError(
            f"{path}: missing column(s) {', '.join(missing)}; "
            f"found: {', '.join(sorted(have))}")
    if not rows:
        raise SchemaError(f"{path}: no data rows")


def _method_colors(methods: Sequence[str]) -> Dict[str, tuple]:
    return {m: _COLORS[i % len(_COLORS)] for i, m in enumerate(sorted(set(methods)))}


def _value_columns(rows: List[Dict[str, str]], raw_col: str,
                   path: str) -> Tuple[str, Optional[str], Optional[str]]:
    """Aggregated input uses q0.5 with a q0.1..q0.9 band; raw input uses
    ``raw_col`` with no band."""
    cols = set(rows[0])
    if "q0.5" in cols:
        lo = "q0.1" if "q0.1" in cols else None
        hi = "q0.9" if "q0.9" in cols else None
        return "q0.5", lo, hi
    if raw_col in cols:
        return raw_col, None, None
    raise SchemaError(f"{path}: need either aggregated quantile columns "
                      f"(q0.5 [,q0.1,q0.9]) or a raw {raw_col!r} column; "
                      f"found: {', '.join(sorted(cols))}")


def _group_panels(rows, panel_key, path):
    panels: Dict[str, List[Dict[str, str]]] = {}
    for row in rows:
        panels.setdefault(row[panel_key], []).append(row)
    if not panels:
        raise SchemaError(f"{path}: no rows after grouping by {panel_key!r}")
    return panels


def _sorted_panel_labels(labels):
    def key(label):
        try:
            return (0, float(label.rsplit("=", 1)[-1]), label)
        except ValueError:
            return (1, 0.0, label)

    return sorted(labels, key=key)


def _series(rows, x_col, y_col, lo_col, hi_col):
    pts = []
    for row in rows:
        if row[x_col] == "" or row[y_col] == "":
            continue
        lo = float(row[lo_col]) if lo_col and row[lo_col] != "" else None
        hi = float(row[hi_col]) if hi_col and row[hi_col] != "" else None
        pts.append((float(row[x_col]), float(row[y_col]), lo, hi))
    pts.sort(key=lambda p: p[0])
    return pts


def _draw_panels(spec, panels, x_col, y_col, lo_col, hi_col, x_label, y_label,
                 x_from_experiment=False):
    labels = _sorted_panel_labels(panels)
    methods = sorted({row["method"] for rows in panels.values() for row in rows})
    colors = _method_colors(methods)

    fig, axes = plt.subplots(1, len(labels),
                             figsize=(3.6 * len(labels), 3.2),
                             sharey=True, squeeze=False)
    seen_any = False
    for ax, label in zip(axes[0], labels):
        by_method: Dict[str, list] = {}
        for row in panels[label]:
            by_method.setdefault(row["method"], []).append(row)
        for method in sorted(by_method):
            rows = by_method[method]
            if x_from_experiment:
                pts = []
                for row in rows:
                    x = float(row["experiment"].rsplit("gamma=", 1)[-1])
                    y = row[y_col]
                    if y == "":
                        continue
                    lo = (float(row[lo_col]) if lo_col and row[lo_col] != ""
                          else None)
                    hi = (float(row[hi_col]) if hi_col and row[hi_col] != ""
                          else None)
                    pts.append((x, float(y), lo, hi))
                pts.sort(key=lambda p: p[0])
            else:
                pts = _series(rows, x_col, y_col, lo_col, hi_col)
            if not pts:
                continue
            seen_any = True
            xs = [p[0] for p in pts]
            ys = [p[1] for p in pts]
            ax.plot(xs, ys, color=colors[method], label=method, linewidth=1.6)
            if all(p[2] is not None and p[3] is not None for p in pts):
                ax.fill_between(xs, [p[2] for p in pts], [p[3] for p in pts],
                                color=colors[method], alpha=0.2, linewidth=0)
        ax.set_title(label)
        ax.set_xlabel(x_label)
        if spec.log_x:
            ax.set_xscale("log")
        if spec.log_y:
            ax.set_yscale("log")
    if not seen_any:
        plt.close(fig)
        raise SchemaError(f"{spec.input_csv}: no plottable values in column "
                          f"{y_col!r}")
    axes[0][0].set_ylabel(y_label)
    handles, labels_ = axes[0][0].get_legend_handles_labels()
    by_label = dict(zip(labels_, handles))
    for ax in axes[0][1:]:
        h, l = ax.get_legend_handles_labels()
        for li, hi_ in zip(l, h):
            by_label.setdefault(li, hi_)
    order = sorted(by_label)
    fig.legend([by_label[k] for k in order], order, loc="upper center",
               ncol=max(1, len(order)), frameon=False)
    fig.tight_layout(rect=(0, 0, 1, 0.9))
    fig.savefig(spec.output_path, dpi=150)
    plt.close(fig)


def render(spec: FigureSpec) -> None:
    """Write the figure for one spec; raises SchemaError on bad input."""
    rows = read_rows(spec.input_csv)

    if spec.kind == "variance_panels":
        _require(rows, ["method", "N"], spec.input_csv)
        panel_key = spec.panel_key or "experiment"
        _require(rows, [panel_key], spec.input_csv)
        y_col, lo, hi = _value_columns(rows, "grad_variance", spec.input_csv)
        panels = _group_panels(rows, panel_key, spec.input_csv)
        _draw_panels(spec, panels, "N", y_col, lo, hi, "N", "gradient variance")
        return

    if spec.kind == "convergence":
        _require(rows, ["method", "iteration"], spec.input_csv)
        panel_key = spec.panel_key or "N"
        _require(rows, [panel_key], spec.input_csv)
        y_col, lo, hi = _value_columns(rows, "kl", spec.input_csv)
        panels = _group_panels(rows, panel_key, spec.input_csv)
        _draw_panels(spec, panels, "iteration", y_col, lo, hi, "iteration", "KL")
        return

    # stepsize: gamma is encoded in the experiment id written by the sweeper
    _require(rows, ["method", "experiment"], spec.input_csv)
    for row in rows:
        if "gamma=" not in row["experiment"]:
            raise SchemaError(
                f"{spec.input_csv}: experiment id {row['experiment']!r} does "
                f"not encode a stepsize (expected ...gamma=<value>)")
    y_col, lo, hi = _value_columns(rows, "kl", spec.input_csv)

    def opt_label(row):
        body = row["experiment"]
        if ":opt=" in body:
            return body.split(":opt=", 1)[1].split(":", 1)[0]
        return "all"

    panels: Dict[str, List[Dict[str, str]]] = {}
    for row in rows:
        panels.setdefault(opt_label(row), []).append(row)
    _draw_panels(spec, panels, "", y_col, lo, hi, "stepsize", "final KL",
                 x_from_experiment=True)
