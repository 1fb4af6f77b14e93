import json
import math

import pytest

from scenariogen import batch
from scenariogen.batch import BatchConfig, BatchFailed, run_batch, source_kind
from scenariogen.cli import EXIT_BACKEND, EXIT_DATA, EXIT_OK, EXIT_USAGE, main
from scenariogen.metrics import MetricsSummary, summarize_batch
from scenariogen.replay import replay
from scenariogen.report import ReportRow, emit_report
from scenariogen.scenario_io import load_scenario_file
from scenariogen.sim import SimTrace, TraceFormatError, run_scenario

REAL_RUN = batch.run_scenario


def _summary(acts, hits=0, comfort=0.9):
    runs = [MetricsSummary(a, comfort, i < hits, ("x",) if i < hits else ()) for i, a in enumerate(acts)]
    return summarize_batch(runs)


def listing(root):
    """Relative path -> bytes for every file under ``root``."""
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


# --- report --------------------------------------------------------------------------


def test_report_layout():
    rows = [ReportRow("Dangerous", _summary([0.5] * 17 + [1.0] * 15, hits=15)),
            ReportRow("Safe", _summary([math.inf] * 32))]
    csv_text, md = emit_report(rows)
    assert csv_text.splitlines() == [
        "Scenario,ACT,Comfortability,CR",
        "Dangerous,0.734,0.900,46.9%",
        "Safe,∞ (32/32),0.900,0.0%",
    ]
    assert md.splitlines()[0] == "| Scenario | ACT | Comfortability | CR |"
    assert md.splitlines()[2] == "| Dangerous | 0.734 | 0.900 | 46.9% |"


def test_failed_column_only_when_something_failed():
    ok = ReportRow("a", _summary([1.0]))
    assert "Failed" not in emit_report([ok])[0]
    header = emit_report([ok, ReportRow("b", _summary([1.0]), failed=2)])[0].splitlines()
    assert header[0].endswith(",Failed") and header[1].endswith(",0") and header[2].endswith(",2")


def test_report_needs_rows():
    with pytest.raises(ValueError):
        emit_report([])


# --- batch ---------------------------------------------------------------------------


def test_config_validation():
    with pytest.raises(ValueError):
        BatchConfig("cut_in_safe", n=0)
    with pytest.raises(ValueError):
        BatchConfig("cut_in_safe", backend="remote")
    assert BatchConfig("cut_in_safe", seed_base=100).run_seed(7) == 107


def test_source_kinds(tmp_path):
    doc = tmp_path / "s.yaml"
    doc.write_text("x: 1\n")
    assert source_kind("cut_in_safe") == "preset"
    assert source_kind(str(doc)) == "document"
    assert source_kind("a car brakes hard in front of me") == "text"


def test_single_run_is_reproducible(tmp_path):
    dirs = [tmp_path / "a", tmp_path / "b"]
    for d in dirs:
        run_batch(BatchConfig("sudden_stop", n=1, seed_base=11, duration=5.0, out_dir=str(d)))
    a, b = listing(dirs[0]), listing(dirs[1])
    assert sorted(a) == sorted(b)
    for name in a:
        if name != "batch.json":
            assert a[name] == b[name], name
    ja, jb = (json.loads(x["batch.json"]) for x in (a, b))
    for j in (ja, jb):
        del j["created"], j["config"]["out_dir"]
    assert ja == jb
    assert {"runs/run_0000/scenario.yaml", "runs/run_0000/trace.jsonl", "runs/run_0000/metrics.json",
            "report.csv", "report.md", "runs.csv"} <= set(a)


def test_run_directory_reproduces_from_scenario_document(tmp_path):
    run_batch(BatchConfig("cut_in_dangerous", n=2, duration=5.0, out_dir=str(tmp_path)))
    run = tmp_path / "runs" / "run_0001"
    again = run_scenario(load_scenario_file(run / "scenario.yaml"), 5.0)
    assert again.to_jsonl() == (run / "trace.jsonl").read_text(encoding="utf-8")
    assert replay(run / "trace.jsonl").matches


def test_worker_count_does_not_change_results():
    cfg = dict(source="cut_in_dangerous", n=4, seed_base=3, duration=8.0)
    serial = run_batch(BatchConfig(**cfg, workers=1))
    parallel = run_batch(BatchConfig(**cfg, workers=2))
    assert [r.to_dict() for r in serial.runs] == [r.to_dict() for r in parallel.runs]
    assert serial.report_csv == parallel.report_csv


def test_refined_batch_has_two_rows():
    res = run_batch(BatchConfig("cut_in_dangerous", n=2, duration=5.0, refine=True, budget=1, workers=1))
    rows = res.report_csv.splitlines()
    assert len(rows) == 3
    assert rows[2].split(",")[0] == rows[1].split(",")[0] + " (refined)"


def _flaky(bad_seeds):
    def run(spec, *a, **kw):
        if spec.seed in bad_seeds:
            raise RuntimeError(f"boom {spec.seed}")
        return REAL_RUN(spec, *a, **kw)

    return run


def test_failed_runs_are_isolated(monkeypatch, tmp_path):
    monkeypatch.setattr(batch, "run_scenario", _flaky({1}))
    res = run_batch(BatchConfig("cut_in_safe", n=4, duration=2.0, workers=1, out_dir=str(tmp_path)))
    assert res.failed == 1 and res.original.n == 3
    assert res.report_csv.splitlines()[1].endswith(",1")
    assert "boom 1" in (tmp_path / "runs" / "run_0001" / "error.txt").read_text()


def test_batch_fails_when_most_runs_fail(monkeypatch):
    monkeypatch.setattr(batch, "run_scenario", _flaky({0, 1, 2}))
    with pytest.raises(BatchFailed) as exc:
        run_batch(BatchConfig("cut_in_safe", n=4, duration=2.0, workers=1))
    assert exc.value.failed == 3 and not exc.value.backend
    # exactly half is still a result
    monkeypatch.setattr(batch, "run_scenario", _flaky({0, 1}))
    assert run_batch(BatchConfig("cut_in_safe", n=4, duration=2.0, workers=1)).failed == 2


# --- replay --------------------------------------------------------------------------


def test_replay_writes_snapshots_every_two_seconds(tmp_path, presets):
    trace = run_scenario(presets["cut_in_moderate"], 30.0)
    path = tmp_path / "trace.jsonl"
    trace.write(path)
    res = replay(path, svg_every=2.0)
    assert len(res.snapshots) == 15
    assert all(p.read_text().startswith("<svg") for p in res.snapshots)
    assert res.matches is None


def test_replay_reports_first_bad_line(tmp_path, presets):
    path = tmp_path / "trace.jsonl"
    lines = run_scenario(presets["cut_in_safe"], 1.0).to_jsonl().splitlines()
    path.write_text("\n".join(lines[:7] + ["{not json"] + lines[8:]) + "\n")
    with pytest.raises(TraceFormatError) as exc:
        replay(path)
    assert exc.value.line == 8


# --- command line --------------------------------------------------------------------


def test_cli_generate_simulate_evaluate(tmp_path, capsys):
    doc, trace, metrics = tmp_path / "s.yaml", tmp_path / "t.jsonl", tmp_path / "m.json"
    assert main(["generate", "--preset", "sudden_stop", "-o", str(doc)]) == EXIT_OK
    assert main(["simulate", str(doc), "--duration", "5", "-o", str(trace), "--metrics", str(metrics)]) == EXIT_OK
    capsys.readouterr()
    assert main(["evaluate", str(trace), "--json"]) == EXIT_OK
    assert json.loads(capsys.readouterr().out) == json.loads(metrics.read_text())


def test_cli_batch_and_replay(tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["batch", "cut_in_safe", "-n", "2", "--duration", "4", "--workers", "1", "-o", str(out)]) == EXIT_OK
    assert capsys.readouterr().out.startswith("| Scenario | ACT | Comfortability | CR |")
    trace = out / "runs" / "run_0000" / "trace.jsonl"
    assert main(["replay", str(trace)]) == EXIT_OK
    assert "reproduced exactly" in capsys.readouterr().out


def test_cli_refine(tmp_path, capsys):
    doc = tmp_path / "s.yaml"
    main(["generate", "--preset", "cut_in_dangerous", "-o", str(doc)])
    assert main(["refine", str(doc), "-o", str(tmp_path / "r"), "--budget", "1", "--duration", "5"]) == EXIT_OK
    assert (tmp_path / "r" / "refined.yaml").is_file()
    assert "initial:" in capsys.readouterr().out


def test_cli_config_file_sets_defaults(tmp_path):
    cfg = tmp_path / "cfg.yaml"
    cfg.write_text("duration: 2\nsimulate: {dt: 0.1}\n")
    doc, trace = tmp_path / "s.yaml", tmp_path / "t.jsonl"
    main(["generate", "--preset", "cut_in_safe", "-o", str(doc)])
    assert main(["--config", str(cfg), "simulate", str(doc), "-o", str(trace)]) == EXIT_OK
    assert len(SimTrace.read(trace).ticks) == 20  # 2 s at 0.1 s
    assert main(["--config", str(cfg), "simulate", str(doc), "-o", str(trace), "--duration", "1"]) == EXIT_OK
    assert len(SimTrace.read(trace).ticks) == 10


def test_cli_map_validate(capsys):
    assert main(["map", "validate"]) == EXIT_OK
    assert "highway_straight: ok" in capsys.readouterr().out


def test_exit_code_usage():
    with pytest.raises(SystemExit) as exc:
        main(["simulate"])
    assert exc.value.code == EXIT_USAGE
    assert main(["generate", "some text", "--preset", "cut_in_safe"]) == EXIT_USAGE


def test_exit_code_data(tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text("schema_version: 1\nenvironment: {map_id: nowhere}\n")
    assert main(["simulate", str(bad)]) == EXIT_DATA
    assert main(["evaluate", str(tmp_path / "missing.jsonl")]) == EXIT_DATA


def test_exit_code_backend(tmp_path, monkeypatch):
    monkeypatch.delenv("SCENARIOGEN_API_TOKEN", raising=False)
    rc = tmp_path / "remote.yaml"
    rc.write_text("base_url: https://models.invalid/v1\nmodel: m\n")
    assert main(["generate", "a car brakes in front of me", "--backend", "remote", "--remote-config", str(rc)]) \
        == EXIT_BACKEND
    assert main(["generate", "a car brakes", "--backend", "remote"]) == EXIT_USAGE
