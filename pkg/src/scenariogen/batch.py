"""Batches: n seeded runs of one description, simulated in parallel, refined and reported.

Run ``i`` of a batch uses seed ``seed_base + i``. That seed goes into the
scenario document written for the run, so every file in the run directory can
be re-derived from that document alone.

Layout of an output directory::

    batch.json            config, per-run outcomes, aggregates, creation time
    report.csv/.md        comparison table (one row, or original + refined)
    runs.csv              one line per run
    runs/run_0007/
        scenario.yaml     the simulated document
        trace.jsonl       full trace (unless traces are disabled)
        metrics.json
        episodes.jsonl    refinement episode logs (refinement on)
        refined.yaml      best refined document (refinement on)
        refined_metrics.json
        error.txt         only for failed runs
"""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
import math
import os
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .metrics import BatchSummary, MetricsSummary, evaluate_trace, summarize_batch
from .model import ScenarioSpec
from .pipeline import BackendError, RemoteBackend, RemoteConfig, TemplateBackend, generate_scenario
from .presets import descriptions, load_preset
from .refine import refine_until_aligned
from .report import ReportRow, emit_report
from .scenario_io import load_scenario_file, serialize_scenario
from .sim import DEFAULT_DURATION, DT, run_scenario

log = logging.getLogger(__name__)


class BatchFailed(RuntimeError):
    """More than half of the runs failed."""

    def __init__(self, failed: int, n: int, errors: list, backend: bool = False):
        super().__init__(f"{failed} of {n} runs failed; first error: {errors[0] if errors else '?'}")
        self.failed = failed
        self.n = n
        self.errors = errors
        self.backend = backend  # every failure came from the generation backend


@dataclass(frozen=True)
class BatchConfig:
    """One batch.

    Args:
        source: a preset id, a path to a scenario document, or free description text.
        n: number of runs.
        seed_base: run ``i`` uses seed ``seed_base + i``.
        duration: simulated seconds per run.
        backend: ``template`` or ``remote``; used only for free text.
        remote: endpoint settings when ``backend`` is ``remote``.
        refine: run the refinement loop on every run.
        budget: refinement episodes per run.
        out_dir: where to write the run directory; nothing is written when unset.
        workers: worker processes; logical cores when unset.
        traces: write full traces into the run directory.
        label: row label in the report; derived from the source when unset.
        dt: simulation step in seconds.
    """

    source: str
    n: int = 32
    seed_base: int = 0
    duration: float = DEFAULT_DURATION
    backend: str = "template"
    remote: Optional[RemoteConfig] = None
    refine: bool = False
    budget: int = 5
    out_dir: Optional[str] = None
    workers: Optional[int] = None
    traces: bool = True
    label: Optional[str] = None
    dt: float = DT

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.seed_base < 0:
            raise ValueError("seed_base must be >= 0")
        if self.duration <= 0:
            raise ValueError("duration must be > 0")
        if self.budget < 0:
            raise ValueError("budget must be >= 0")
        if self.backend not in ("template", "remote"):
            raise ValueError(f"unknown backend {self.backend!r}")
        if self.backend == "remote" and self.remote is None:
            raise ValueError("the remote backend needs a remote config")

    def run_seed(self, index: int) -> int:
        return self.seed_base + index

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["remote"] = dataclasses.asdict(self.remote) if self.remote else None
        return d


@dataclass
class RunOutcome:
    index: int
    seed: int
    metrics: Optional[MetricsSummary] = None
    refined: Optional[MetricsSummary] = None
    episodes: int = 0
    error: Optional[str] = None
    backend_error: bool = False

    @property
    def ok(self) -> bool:
        return self.error is None

    def to_dict(self) -> dict:
        return {
            "index": self.index, "seed": self.seed, "error": self.error, "episodes": self.episodes,
            "metrics": self.metrics.to_dict() if self.metrics else None,
            "refined": self.refined.to_dict() if self.refined else None,
        }


@dataclass
class BatchResult:
    config: BatchConfig
    runs: list
    original: BatchSummary
    refined: Optional[BatchSummary] = None
    report_csv: str = ""
    report_md: str = ""
    out_dir: Optional[Path] = None
    failed: int = field(init=False)

    def __post_init__(self):
        self.failed = sum(1 for r in self.runs if not r.ok)


def source_kind(source: str) -> str:
    """``preset``, ``document`` or ``text``."""
    if source in descriptions():
        return "preset"
    if len(source) < 4096 and "\n" not in source and source.endswith((".yaml", ".yml")) and Path(source).is_file():
        return "document"
    return "text"


def default_label(source: str) -> str:
    kind = source_kind(source)
    if kind == "preset":
        return descriptions()[source].label
    if kind == "document":
        return Path(source).stem
    return source if len(source) <= 40 else source[:37] + "..."


def make_backend(config: BatchConfig):
    if config.backend == "remote":
        return RemoteBackend(config.remote)
    return TemplateBackend()


def scenario_for_run(config: BatchConfig, index: int) -> ScenarioSpec:
    """The scenario of run ``index``: the source document with the run seed, or a fresh generation."""
    seed = config.run_seed(index)
    kind = source_kind(config.source)
    if kind == "preset" and config.backend == "template":
        return dataclasses.replace(load_preset(config.source), seed=seed)
    if kind == "document":
        return dataclasses.replace(load_scenario_file(config.source), seed=seed)
    text = descriptions()[config.source].text if kind == "preset" else config.source
    return generate_scenario(text, make_backend(config), seed).spec


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def execute_run(config: BatchConfig, index: int) -> RunOutcome:
    """Generate, simulate, optionally refine, and evaluate one run; failures are captured, not raised."""
    out = RunOutcome(index, config.run_seed(index))
    run_dir = Path(config.out_dir, "runs", f"run_{index:04d}") if config.out_dir else None
    if run_dir:
        run_dir.mkdir(parents=True, exist_ok=True)
    try:
        spec = scenario_for_run(config, index)
        if run_dir:
            (run_dir / "scenario.yaml").write_text(serialize_scenario(spec), encoding="utf-8")
        if config.refine:
            res = refine_until_aligned(spec, budget=config.budget, duration=config.duration, dt=config.dt)
            out.metrics, out.refined, out.episodes = res.initial, res.summary, len(res.episodes)
            if run_dir:
                with open(run_dir / "episodes.jsonl", "w", encoding="utf-8") as fh:
                    for ep in res.episodes:
                        fh.write(json.dumps(ep.to_dict(), sort_keys=True) + "\n")
                (run_dir / "refined.yaml").write_text(serialize_scenario(res.spec), encoding="utf-8")
                _write_json(run_dir / "refined_metrics.json", res.summary.to_dict())
                if config.traces:
                    res.trace.write(run_dir / "refined_trace.jsonl")
            trace = res.initial_trace
        else:
            trace = run_scenario(spec, config.duration, dt=config.dt)
            out.metrics = evaluate_trace(trace)
        if run_dir:
            _write_json(run_dir / "metrics.json", out.metrics.to_dict())
            if config.traces and trace is not None:
                trace.write(run_dir / "trace.jsonl")
    except Exception as exc:  # isolate the run; the batch decides whether to fail
        out.error = f"{type(exc).__name__}: {exc}"
        out.backend_error = isinstance(exc, BackendError)
        log.warning("run %d (seed %d) failed: %s", index, out.seed, out.error)
        if run_dir:
            (run_dir / "error.txt").write_text(traceback.format_exc(), encoding="utf-8")
    return out


def _execute(args):
    return execute_run(*args)


def _write_runs_csv(path: Path, runs: list) -> None:
    def num(x):
        return "inf" if x is not None and math.isinf(x) else x

    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "seed", "status", "min_act", "comfortability", "collision",
                    "refined_min_act", "refined_comfortability", "refined_collision", "episodes"])
        for r in runs:
            m, f = r.metrics, r.refined
            w.writerow([
                r.index, r.seed, "ok" if r.ok else "failed",
                num(m.min_act) if m else "", m.comfortability if m else "", m.collision if m else "",
                num(f.min_act) if f else "", f.comfortability if f else "", f.collision if f else "",
                r.episodes,
            ])


def run_batch(config: BatchConfig) -> BatchResult:
    """Run the batch and (with ``out_dir``) persist the run directory.

    Results are merged in run-index order, so the outcome does not depend on
    the number of workers.

    Raises:
        BatchFailed: when more than half of the runs fail.
    """
    workers = config.workers or os.cpu_count() or 1
    if config.out_dir:
        Path(config.out_dir).mkdir(parents=True, exist_ok=True)
    jobs = [(config, i) for i in range(config.n)]
    if workers == 1 or config.n == 1:
        runs = [_execute(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=min(workers, config.n)) as pool:
            runs = list(pool.map(_execute, jobs))

    failed = [r for r in runs if not r.ok]
    if 2 * len(failed) > config.n:
        raise BatchFailed(len(failed), config.n, [r.error for r in failed], all(r.backend_error for r in failed))
    good = [r for r in runs if r.ok]
    label = config.label or default_label(config.source)
    original = summarize_batch([r.metrics for r in good])
    rows = [ReportRow(label, original, len(failed))]
    refined = None
    if config.refine:
        refined = summarize_batch([r.refined for r in good])
        rows.append(ReportRow(f"{label} (refined)", refined, len(failed)))
    csv_text, md_text = emit_report(rows)
    result = BatchResult(config, runs, original, refined, csv_text, md_text)

    if config.out_dir:
        out = Path(config.out_dir)
        result.out_dir = out
        (out / "report.csv").write_text(csv_text, encoding="utf-8")
        (out / "report.md").write_text(md_text, encoding="utf-8")
        _write_runs_csv(out / "runs.csv", runs)
        _write_json(out / "batch.json", {
            "created": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
            "config": config.to_dict(),
            "seed_derivation": "seed_base + run index",
            "original": original.to_dict(),
            "refined": refined.to_dict() if refined else None,
            "failed": len(failed),
            "runs": [r.to_dict() for r in runs],
        })
    return result
