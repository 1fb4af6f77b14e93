"""Recompute metrics from a stored trace and compare them with the stored ones."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .metrics import MetricsSummary, evaluate_trace
from .sim import SimTrace
from .svg import write_snapshots


@dataclass
class ReplayResult:
    recomputed: MetricsSummary
    stored: Optional[MetricsSummary] = None
    snapshots: list = field(default_factory=list)

    @property
    def matches(self) -> Optional[bool]:
        """None when there is nothing stored to compare with."""
        if self.stored is None:
            return None
        return self.recomputed.to_dict() == self.stored.to_dict()


def stored_metrics_for(trace_path) -> Optional[Path]:
    """The ``metrics.json`` written next to a trace in a run directory, if any."""
    p = Path(trace_path)
    name = "refined_metrics.json" if p.name.startswith("refined_") else "metrics.json"
    cand = p.with_name(name)
    return cand if cand.is_file() else None


def replay(trace_path, metrics_path=None, svg_every: Optional[float] = None, svg_dir=None) -> ReplayResult:
    """Re-evaluate a trace file.

    Args:
        trace_path: trace JSONL file.
        metrics_path: stored metrics to compare against; looked up next to the trace when unset.
        svg_every: write a snapshot every this many simulated seconds.
        svg_dir: where snapshots go; ``<trace stem>_svg`` next to the trace when unset.

    Raises:
        TraceFormatError: with the line number of the first bad record.
    """
    trace = SimTrace.read(trace_path)
    res = ReplayResult(evaluate_trace(trace))
    metrics_path = metrics_path or stored_metrics_for(trace_path)
    if metrics_path:
        with open(metrics_path, encoding="utf-8") as fh:
            res.stored = MetricsSummary.from_dict(json.load(fh))
    if svg_every:
        out = svg_dir or Path(trace_path).with_name(Path(trace_path).stem + "_svg")
        res.snapshots = write_snapshots(trace, out, svg_every)
    return res
