"""Per-iteration run log and its CSV form."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import astuple, dataclass, field, fields
from pathlib import Path

HEADER = ("iter", "stage", "wall_time_s", "lb", "ub", "gap", "soc_cuts", "cap_cuts",
          "benders_cuts", "n_binary", "mip_gap", "solver_limit", "status")
TIMING_COLUMNS = ("wall_time_s",)
STAGES = ("lp", "ig", "oia")


@dataclass(frozen=True)
class TraceRow:
    iter: int
    stage: str
    wall_time_s: float
    lb: float
    ub: float
    gap: float
    soc_cuts: int
    cap_cuts: int
    benders_cuts: int
    n_binary: int
    mip_gap: float | None
    solver_limit: float | None
    status: str


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    return str(v)


@dataclass
class RunTrace:
    rows: list[TraceRow] = field(default_factory=list)

    def append(self, row: TraceRow) -> TraceRow:
        if row.stage not in STAGES:
            raise ValueError(f"unknown stage {row.stage!r}")
        if self.rows:
            prev = self.rows[-1]
            if row.wall_time_s <= prev.wall_time_s:
                row = _with_time(row, math.nextafter(prev.wall_time_s, math.inf))
            if row.lb < prev.lb or row.ub > prev.ub:
                raise ValueError("trace bounds must be monotone (lb up, ub down)")
        self.rows.append(row)
        return row

    def __len__(self) -> int:
        return len(self.rows)

    def __iter__(self):
        return iter(self.rows)

    @property
    def last(self) -> TraceRow | None:
        return self.rows[-1] if self.rows else None

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(HEADER)
        for r in self.rows:
            w.writerow([_fmt(v) for v in astuple(r)])
        return buf.getvalue()

    def write(self, path) -> None:
        Path(path).write_text(self.to_csv())


def _with_time(row: TraceRow, t: float) -> TraceRow:
    vals = {f.name: getattr(row, f.name) for f in fields(row)}
    vals["wall_time_s"] = t
    return TraceRow(**vals)


def read_trace(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def strip_timing(csv_text: str) -> list[list[str]]:
    """CSV rows with the timing columns removed, for run-to-run comparison."""
    rows = list(csv.reader(io.StringIO(csv_text)))
    drop = {HEADER.index(c) for c in TIMING_COLUMNS}
    return [[v for i, v in enumerate(r) if i not in drop] for r in rows]
