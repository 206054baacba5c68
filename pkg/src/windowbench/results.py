"""ResultsTable rows and their CSV form."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Iterable, Sequence

NA = "--"
COLUMNS = (
    "task", "mode", "data_source", "model_id", "window", "split",
    "auroc", "ci_lo", "ci_hi", "n_pos", "n_neg", "converged", "seed", "wall_ms",
)
EVAL_SPLITS = ("validation", "test")


@dataclass(frozen=True)
class ResultRow:
    task: str
    mode: str
    data_source: str
    model_id: str
    window: str
    split: str
    auroc: float | None
    ci_lo: float | None
    ci_hi: float | None
    n_pos: int
    n_neg: int
    converged: bool
    seed: int
    wall_ms: int | None = None

    def __post_init__(self):
        if self.converged:
            if self.auroc is None or not 0.0 <= self.auroc <= 1.0:
                raise ValueError(f"converged row needs an AUROC in [0, 1]: {self.cell_key}")
            if self.ci_lo is not None and not self.ci_lo <= self.auroc <= self.ci_hi:
                raise ValueError(f"AUROC outside its interval: {self.cell_key}")
        elif self.auroc is not None or self.ci_lo is not None or self.ci_hi is not None:
            raise ValueError(f"non-converged row must not carry numbers: {self.cell_key}")

    @property
    def cell_key(self) -> tuple[str, ...]:
        return (self.task, self.mode, self.data_source, self.model_id, self.window, self.split)


def fmt_float(x: float | None) -> str:
    # repr gives the shortest string that parses back to the same double
    return NA if x is None else repr(float(x))


def parse_float(s: str) -> float | None:
    return None if s == NA else float(s)


def _row_cells(r: ResultRow) -> list[str]:
    return [
        r.task, r.mode, r.data_source, r.model_id, r.window, r.split,
        fmt_float(r.auroc), fmt_float(r.ci_lo), fmt_float(r.ci_hi),
        str(r.n_pos), str(r.n_neg), "true" if r.converged else "false", str(r.seed),
        "" if r.wall_ms is None else str(r.wall_ms),
    ]


class ResultsTable:
    def __init__(self, rows: Iterable[ResultRow] = ()):
        self.rows: list[ResultRow] = list(rows)
        seen = set()
        for r in self.rows:
            if r.cell_key in seen:
                raise ValueError(f"duplicate results cell {r.cell_key}")
            seen.add(r.cell_key)

    def __len__(self) -> int:
        return len(self.rows)

    def __iter__(self):
        return iter(self.rows)

    def select(self, **kw) -> list[ResultRow]:
        return [r for r in self.rows if all(getattr(r, k) == v for k, v in kw.items())]

    def get(self, *key: str) -> ResultRow:
        for r in self.rows:
            if r.cell_key == tuple(key):
                return r
        raise KeyError(key)

    def without_timing(self) -> ResultsTable:
        return ResultsTable(replace(r, wall_ms=None) for r in self.rows)

    def to_csv_text(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(COLUMNS)
        for r in self.rows:
            w.writerow(_row_cells(r))
        return buf.getvalue()

    def write_csv(self, path: str | Path) -> None:
        Path(path).write_text(self.to_csv_text(), encoding="utf-8")

    @classmethod
    def read_csv(cls, path: str | Path) -> ResultsTable:
        return cls.from_csv_text(Path(path).read_text(encoding="utf-8"))

    @classmethod
    def from_csv_text(cls, text: str) -> ResultsTable:
        reader = csv.reader(io.StringIO(text))
        header = next(reader)
        if tuple(header) != COLUMNS:
            raise ValueError(f"unexpected results header {header}")
        rows = []
        for c in reader:
            if not c:
                continue
            rows.append(
                ResultRow(
                    *c[:6],
                    auroc=parse_float(c[6]),
                    ci_lo=parse_float(c[7]),
                    ci_hi=parse_float(c[8]),
                    n_pos=int(c[9]),
                    n_neg=int(c[10]),
                    converged=c[11] == "true",
                    seed=int(c[12]),
                    wall_ms=int(c[13]) if c[13] else None,
                )
            )
        return cls(rows)


def row_fields() -> Sequence[str]:
    return [f.name for f in fields(ResultRow)]
