"""Report rendering: main metric tables, the trade-off fit, paradigm table.

Rendering is a pure function of the metric rows: identical stores produce
identical bytes, and every number is formatted exactly once so the CSV and
text outputs never disagree on rounding.
"""

from __future__ import annotations

import csv
import math
from collections import defaultdict
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .metrics import (
    AggregateTable,
    CorrelationFit,
    EmptyRunError,
    MethodKey,
    MetricRow,
    TooFewPointsError,
    aggregate,
    pearson_fit,
)

MISSING = "—"  # em dash placeholder for absent cells

# metric name -> (scale, decimals); unlisted metrics render raw at 2 decimals
_FORMATS: dict[str, tuple[float, int]] = {
    "rouge_avg": (100.0, 2),
    "compression_ratio": (100.0, 2),
    "abstractiveness": (100.0, 2),
    "frag_coverage": (100.0, 2),
    "frag_density": (1.0, 4),
    "geval_completeness": (1.0, 2),
    "geval_conciseness": (1.0, 2),
    "geval_faithfulness": (1.0, 2),
    "geval_overall": (1.0, 2),
}


def format_value(metric: str, value: float | None) -> str:
    if value is None:
        return MISSING
    scale, decimals = _FORMATS.get(metric, (1.0, 2))
    return f"{value * scale:.{decimals}f}"


def _write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence[str]]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _write_text_table(
    path: Path, header: Sequence[str], rows: Sequence[Sequence[str]], flag_best: bool
) -> None:
    cells = [list(header)] + [list(r) for r in rows]
    if flag_best and rows:
        # flag the strict per-column maximum among parseable values
        for col in range(1, len(header)):
            best_row, best_val = None, None
            for i, row in enumerate(rows):
                try:
                    val = float(row[col])
                except ValueError:
                    continue
                if best_val is None or val > best_val:
                    best_row, best_val = i, val
                elif val == best_val:
                    best_row = None  # ties: nothing is strictly best
            if best_row is not None:
                cells[best_row + 1][col] += "*"
    widths = [max(len(row[c]) for row in cells) for c in range(len(header))]
    with open(path, "w", encoding="utf-8") as fh:
        for i, row in enumerate(cells):
            fh.write(
                "  ".join(
                    cell.ljust(widths[c]) if c == 0 else cell.rjust(widths[c])
                    for c, cell in enumerate(row)
                ).rstrip()
                + "\n"
            )
            if i == 0:
                fh.write("  ".join("-" * w for w in widths) + "\n")


def render_main_tables(
    rows: Sequence[MetricRow], group_of: Mapping[str, str], out_dir: str | Path
) -> list[Path]:
    """One main_<metric>.csv/.txt per metric: dataset columns plus Average.

    A grouped_<metric>.csv with short/long/table means is written alongside.
    The text table flags the strict per-column maximum with ``*``.
    """
    if not rows:
        raise EmptyRunError("no metric rows to render")
    table = aggregate(rows, group_of)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    for metric in table.metrics:
        header = ["method", *table.datasets, "Average"]
        body: list[list[str]] = []
        for method in table.methods:
            row = [method.label()]
            for ds in table.datasets:
                row.append(format_value(metric, table.value(method, ("dataset", ds), metric)))
            row.append(format_value(metric, table.value(method, ("avg", ""), metric)))
            body.append(row)
        csv_path = out / f"main_{metric}.csv"
        txt_path = out / f"main_{metric}.txt"
        _write_csv(csv_path, header, body)
        _write_text_table(txt_path, header, body, flag_best=True)
        written += [csv_path, txt_path]
        if table.groups:
            gheader = ["method", *table.groups, "Average"]
            gbody = []
            for method in table.methods:
                grow = [method.label()]
                for group in table.groups:
                    grow.append(
                        format_value(metric, table.value(method, ("group", group), metric))
                    )
                grow.append(format_value(metric, table.value(method, ("avg", ""), metric)))
                gbody.append(grow)
            gpath = out / f"grouped_{metric}.csv"
            _write_csv(gpath, gheader, gbody)
            written.append(gpath)
    return written


def render_tradeoff(
    rows: Sequence[MetricRow],
    x_metric: str,
    y_metric: str,
    out_dir: str | Path,
    group_of: Mapping[str, str] | None = None,
) -> tuple[CorrelationFit, Path]:
    """Method-level scatter of two metrics plus its linear fit.

    Points are per-method means over all samples; methods missing either
    metric are dropped. Needs at least 3 points.
    """
    table = aggregate(rows, group_of or {})
    points: list[tuple[MethodKey, float, float]] = []
    for method in table.methods:
        x = table.value(method, ("avg", ""), x_metric)
        y = table.value(method, ("avg", ""), y_metric)
        if x is not None and y is not None:
            points.append((method, x, y))
    if len(points) < 3:
        raise TooFewPointsError(
            f"need >= 3 methods with both {x_metric} and {y_metric}, got {len(points)}"
        )
    fit = pearson_fit([p[1] for p in points], [p[2] for p in points])
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "tradeoff.csv"
    body = [[m.label(), repr(x), repr(y)] for m, x, y in points]
    body += [
        ["_fit", "r", repr(fit.r)],
        ["_fit", "p_value", repr(fit.p_value)],
        ["_fit", "slope", repr(fit.slope)],
        ["_fit", "intercept", repr(fit.intercept)],
        ["_fit", "n", str(fit.n)],
    ]
    _write_csv(path, ["method", x_metric, y_metric], body)
    return fit, path


_PARADIGMS = ("Vanilla", "Augmentation", "Organization", "Reflective", "LRM")
_PARADIGM_OF = {
    "cot": "Augmentation",
    "cite": "Augmentation",
    "e2a": "Augmentation",
    "qag": "Augmentation",
    "deco": "Organization",
    "plan": "Organization",
    "ir": "Reflective",
    "sc": "Reflective",
}


def paradigm_of(strategy: str, reasoning_effort: str) -> str:
    if strategy == "vanilla":
        return "LRM" if reasoning_effort != "none" else "Vanilla"
    return _PARADIGM_OF[strategy]


def render_paradigm_abstractiveness(
    rows: Sequence[MetricRow], out_dir: str | Path
) -> Path:
    """Mean abstractiveness (plus quality and faithfulness when present) for
    the five reasoning paradigms."""
    if not rows:
        raise EmptyRunError("no metric rows to render")
    pooled: dict[str, dict[str, list[float]]] = defaultdict(lambda: defaultdict(list))
    for row in rows:
        paradigm = paradigm_of(row.strategy, row.reasoning_effort)
        pooled[paradigm]["abstractiveness"].append(row.metrics.abstractiveness)
        if row.metrics.rouge_avg is not None:
            pooled[paradigm]["rouge_avg"].append(row.metrics.rouge_avg)
        if "summac" in row.metrics.external:
            pooled[paradigm]["summac"].append(row.metrics.external["summac"])
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "paradigm.csv"
    body = []
    for paradigm in _PARADIGMS:
        if paradigm not in pooled:
            continue
        stats = pooled[paradigm]

        def mean_or_missing(name: str) -> str:
            vals = stats.get(name)
            if not vals:
                return MISSING
            return format_value(name, math.fsum(vals) / len(vals))

        body.append(
            [
                paradigm,
                mean_or_missing("abstractiveness"),
                mean_or_missing("rouge_avg"),
                mean_or_missing("summac"),
            ]
        )
    _write_csv(path, ["paradigm", "abstractiveness", "rouge_avg", "summac"], body)
    return path


def render_effort_sweep(
    rows_by_level: Mapping[str, Sequence[MetricRow]], out_path: str | Path
) -> Path:
    """Flat (level, metric, value) CSV for overlaying per-level metric curves."""
    path = Path(out_path)
    path.parent.mkdir(parents=True, exist_ok=True)
    body = []
    for level, rows in rows_by_level.items():
        if not rows:
            continue
        table = aggregate(rows, {})
        for metric in table.metrics:
            vals = [
                table.value(method, ("avg", ""), metric)
                for method in table.methods
                if table.value(method, ("avg", ""), metric) is not None
            ]
            if vals:
                body.append([level, metric, repr(math.fsum(vals) / len(vals))])
    _write_csv(path, ["level", "metric", "value"], body)
    return path
