"""Deterministic CSV report tables for experiment runs.

Every number is rendered with the same %.12g rule and every writer emits
LF line endings, so identical runs produce byte-identical files whatever
the platform or thread count.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

SUMMARY_COLUMNS = ["check", "residual", "threshold", "status", "notes"]
RECORD_COLUMNS = ["radius", "deviation", "conservation", "mass_drift"]


def fmt(value) -> str:
    """Canonical CSV rendering of a number."""
    x = float(value)
    if x == 0.0:
        return "0"
    return f"{x:.12g}"


@dataclass(frozen=True)
class CheckRow:
    """One pass/fail line of a report table."""

    check: str
    residual: float
    threshold: float
    passed: bool
    notes: str = ""

    @property
    def status(self) -> str:
        return "PASS" if self.passed else "FAIL"


def all_passed(rows: Iterable[CheckRow]) -> bool:
    return all(r.passed for r in rows)


def write_table(path, columns: Sequence[str], rows: Iterable[Sequence]) -> None:
    """Write one CSV table; numbers are formatted, strings pass through."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([c if isinstance(c, str) else fmt(c) for c in row])


def write_summary(path, rows: Iterable[CheckRow]) -> None:
    write_table(
        path,
        SUMMARY_COLUMNS,
        [[r.check, fmt(r.residual), fmt(r.threshold), r.status, r.notes]
         for r in rows],
    )


def format_check(row: CheckRow) -> str:
    """One-line terminal rendering of a check row."""
    line = (f"{row.status:<4}  {row.check}: "
            f"residual {fmt(row.residual)} vs {fmt(row.threshold)}")
    if row.notes:
        line += f"  ({row.notes})"
    return line
