"""Batch comparison tables as CSV and Markdown."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Sequence

from .metrics import BatchSummary, format_act, format_rate

COLUMNS = ("Scenario", "ACT", "Comfortability", "CR")


@dataclass(frozen=True)
class ReportRow:
    label: str
    summary: BatchSummary
    failed: int = 0


def _cells(row: ReportRow, optional: list) -> list:
    s = row.summary
    cells = [row.label, format_act(s.mean_min_act, s.infinite_act_runs, s.n),
             f"{s.mean_comfortability:.3f}", format_rate(s.collisions, s.n)]
    if "Failed" in optional:
        cells.append(str(row.failed))
    return cells


def _header(rows: Sequence[ReportRow]) -> tuple[list, list]:
    # optional columns appear only when some row has a value for them
    optional = ["Failed"] if any(r.failed for r in rows) else []
    return list(COLUMNS) + optional, optional


def emit_report(rows: Sequence[ReportRow]) -> tuple[str, str]:
    """Render rows as ``(csv_text, markdown_text)`` with a fixed column order.

    ACT is the mean over runs with a finite minimum, annotated with the number
    of runs where it was infinite; CR is a percentage to one decimal.
    """
    if not rows:
        raise ValueError("emit_report needs at least one row")
    header, optional = _header(rows)
    body = [_cells(r, optional) for r in rows]

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(body)

    lines = ["| " + " | ".join(header) + " |", "|" + "|".join("---" for _ in header) + "|"]
    lines += ["| " + " | ".join(cells) + " |" for cells in body]
    return buf.getvalue(), "\n".join(lines) + "\n"
