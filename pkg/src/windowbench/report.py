"""Report files derived from a ResultsTable.

Layout under ``out_dir``::

    results.csv                          every row, fixed column order
    tables/{split}/{mode}_{source}_{task}.csv   model x window AUROC pivots
    fig3_series.csv                      per-window mean over converged variants
    fig4_best.csv                        per-window best variant per mode
    table2.csv                           day-of-surgery vs +3 months (when available)
"""

from __future__ import annotations

import csv
import io
import logging
import math
from collections import defaultdict
from pathlib import Path
from typing import Iterable

import numpy as np

from .ehr import ObservationWindow
from .results import NA, EVAL_SPLITS, ResultRow, ResultsTable, fmt_float, parse_float

Z95 = 1.959963984540054

log = logging.getLogger(__name__)


class ReportError(ValueError):
    pass


def _window_order(labels: Iterable[str]) -> list[str]:
    return sorted(set(labels), key=lambda w: ObservationWindow.parse(w).sort_key)


def _first_seen(values: Iterable[str]) -> list[str]:
    return list(dict.fromkeys(values))


def _write(path: Path, header: list[str], rows: Iterable[list]) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    path.write_text(buf.getvalue(), encoding="utf-8")


# ---------------------------------------------------------------------------
# pivots


def pivot_name(split: str, mode: str, source: str, task: str) -> str:
    return f"{split}/{mode}_{source}_{task}.csv"


def pivot_groups(results: ResultsTable) -> dict[tuple[str, str, str, str], list[ResultRow]]:
    """Rows keyed by (split, mode, data_source, task), in table order."""
    groups: dict[tuple[str, str, str, str], list[ResultRow]] = {}
    for r in results:
        groups.setdefault((r.split, r.mode, r.data_source, r.task), []).append(r)
    return groups


def pivot_text(rows: list[ResultRow]) -> str:
    windows = _window_order(r.window for r in rows)
    models = _first_seen(r.model_id for r in rows)
    cell = {(r.model_id, r.window): r for r in rows}
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["model_id", *windows])
    for m in models:
        w.writerow([m, *(fmt_float(cell[(m, win)].auroc) if (m, win) in cell else "" for win in windows)])
    return buf.getvalue()


def parse_pivot(text: str, split: str, mode: str, source: str, task: str) -> dict[tuple[str, ...], float | None]:
    """Inverse of :func:`pivot_text`: cell key -> AUROC, None for "--"."""
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    if not header or header[0] != "model_id":
        raise ReportError(f"not a pivot table: header {header}")
    out: dict[tuple[str, ...], float | None] = {}
    for row in reader:
        if not row:
            continue
        for win, val in zip(header[1:], row[1:]):
            if val == "":
                continue
            out[(task, mode, source, row[0], win, split)] = parse_float(val)
    return out


def read_pivots(out_dir: str | Path) -> dict[tuple[str, ...], float | None]:
    root = Path(out_dir) / "tables"
    cells: dict[tuple[str, ...], float | None] = {}
    for split in EVAL_SPLITS:
        for path in sorted((root / split).glob("*.csv")):
            mode, source, task = path.stem.split("_", 2)
            cells.update(parse_pivot(path.read_text(encoding="utf-8"), split, mode, source, task))
    return cells


# ---------------------------------------------------------------------------
# figure series


def fig3_series(results: ResultsTable) -> list[list]:
    """Mean AUROC over converged variants per window with a normal band over variants."""
    acc: dict[tuple, list[float]] = defaultdict(list)
    keys: list[tuple] = []
    for r in results:
        k = (r.task, r.mode, r.data_source, r.split, r.window)
        if k not in acc:
            keys.append(k)
            acc[k] = []
        if r.converged:
            acc[k].append(r.auroc)
    out = []
    for k in sorted(keys, key=lambda k: (*k[:4], ObservationWindow.parse(k[4]).sort_key)):
        vals = np.array(acc[k])
        n = vals.size
        if n == 0:
            out.append([*k, 0, NA, NA, NA, NA])
            continue
        mean = float(vals.mean())
        sd = float(vals.std(ddof=1)) if n > 1 else 0.0
        half = Z95 * sd / math.sqrt(n)
        out.append([*k, n, fmt_float(mean), fmt_float(sd), fmt_float(mean - half), fmt_float(mean + half)])
    return out


FIG3_HEADER = ["task", "mode", "data_source", "split", "window", "n_variants", "mean_auroc", "sd", "band_lo", "band_hi"]
FIG4_HEADER = ["task", "data_source", "split", "window", "mode", "best_model_id", "auroc"]


def fig4_best(results: ResultsTable) -> list[list]:
    """Highest-AUROC converged variant per (task, source, split, window, mode); ties keep roster order."""
    best: dict[tuple, ResultRow | None] = {}
    for r in results:
        k = (r.task, r.data_source, r.split, r.window, r.mode)
        cur = best.get(k)
        if k not in best:
            best[k] = r if r.converged else None
        elif r.converged and (cur is None or r.auroc > cur.auroc):
            best[k] = r
    out = []
    for k in sorted(best, key=lambda k: (*k[:3], ObservationWindow.parse(k[3]).sort_key, k[4])):
        r = best[k]
        out.append([*k, r.model_id if r else NA, fmt_float(r.auroc if r else None)])
    return out


# ---------------------------------------------------------------------------
# day of surgery vs +3 months

TABLE2_SOURCES = ("structured", "notes", "both")
TABLE2_HEADER = ["data_source", "task", "split", "day0", "months3", "best"]


def compare_day_vs_history(results: ResultsTable, split: str = "test",
                           tasks: Iterable[str] = ("hip", "knee")) -> list[list]:
    """Best AUROC per (source, task) for windows "0" and "3" with the larger flagged.

    ``best`` is "0", "3", or "0+3" when the two values are equal.
    """
    tasks = tuple(tasks)
    best: dict[tuple[str, str, str], float] = {}
    for r in results:
        if r.split != split or not r.converged or r.window not in ("0", "3"):
            continue
        k = (r.data_source, r.task, r.window)
        best[k] = max(best.get(k, -1.0), r.auroc)
    missing = [f"{s}/{t}/{w}" for s in TABLE2_SOURCES for t in tasks for w in ("0", "3") if (s, t, w) not in best]
    if missing:
        raise ReportError(f"day-vs-history comparison lacks converged cells: {', '.join(missing)}")
    out = []
    for s in TABLE2_SOURCES:
        for t in tasks:
            a, b = best[(s, t, "0")], best[(s, t, "3")]
            flag = "0+3" if a == b else ("3" if b > a else "0")
            out.append([s, t, split, fmt_float(a), fmt_float(b), flag])
    return out


def has_table2_inputs(results: ResultsTable) -> bool:
    windows = {r.window for r in results}
    sources = {r.data_source for r in results}
    return {"0", "3"} <= windows and set(TABLE2_SOURCES) <= sources


# ---------------------------------------------------------------------------


def emit_report(results: ResultsTable, out_dir: str | Path) -> list[Path]:
    """Write every report file; returns the paths written, in a fixed order."""
    if not len(results):
        raise ReportError("no results to report")
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        written = [out / "results.csv"]
        results.write_csv(written[0])
        for (split, mode, source, task), rows in pivot_groups(results).items():
            p = out / "tables" / pivot_name(split, mode, source, task)
            p.parent.mkdir(parents=True, exist_ok=True)
            p.write_text(pivot_text(rows), encoding="utf-8")
            written.append(p)
        _write(out / "fig3_series.csv", FIG3_HEADER, fig3_series(results))
        _write(out / "fig4_best.csv", FIG4_HEADER, fig4_best(results))
        written += [out / "fig3_series.csv", out / "fig4_best.csv"]
        if has_table2_inputs(results):
            tasks = _first_seen(x.task for x in results)
            try:
                rows = [r for sp in EVAL_SPLITS for r in compare_day_vs_history(results, sp, tasks)]
            except ReportError as exc:
                log.warning("event=table2_skipped reason=%r", str(exc))
            else:
                _write(out / "table2.csv", TABLE2_HEADER, rows)
                written.append(out / "table2.csv")
    except OSError as exc:
        raise ReportError(f"cannot write report to {out}: {exc}") from None
    return written
