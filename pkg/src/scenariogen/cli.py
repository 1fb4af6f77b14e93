"""Command-line entry point.

Exit codes: 0 ok, 1 usage error, 2 data error (bad scenario, trace, map or
failed batch), 3 generation backend error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

import yaml

from . import __version__
from .batch import BatchConfig, BatchFailed, run_batch
from .maps import MapError, NoMatchError, UnsatisfiableRelationError, bundled_map_ids, load_map, load_map_file, validate_map
from .metrics import evaluate_trace
from .pipeline import BackendError, RemoteBackend, RemoteConfig, TemplateBackend, generate_scenario
from .presets import descriptions
from .refine import refine_until_aligned
from .replay import replay
from .scenario_io import ScenarioError, load_scenario_file, serialize_scenario
from .sim import DEFAULT_DURATION, DT, SimTrace, SpawnInfeasibleError, TraceFormatError, run_scenario

log = logging.getLogger("scenariogen")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_BACKEND = 0, 1, 2, 3

# built-in values for options that a config file may also set
DEFAULTS = {
    "seed": 0, "duration": DEFAULT_DURATION, "dt": DT, "backend": "template", "budget": 5,
    "n": 32, "seed_base": 0, "workers": None, "traces": True, "refine": False,
}
DATA_ERRORS = (ScenarioError, TraceFormatError, MapError, NoMatchError, UnsatisfiableRelationError,
               SpawnInfeasibleError, FileNotFoundError, IsADirectoryError, ValueError, KeyError, yaml.YAMLError)


class UsageError(Exception):
    pass


class Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def load_config(path) -> dict:
    """A YAML config: top-level keys are option defaults, per-command sections override them.

    Example::

        duration: 20
        batch: {n: 16, workers: 4}
        remote: {base_url: https://host/v1, model: some-model}
    """
    if not path:
        return {}
    with open(path, encoding="utf-8") as fh:
        doc = yaml.safe_load(fh) or {}
    if not isinstance(doc, dict):
        raise UsageError(f"{path}: config must be a mapping")
    return doc


def resolve(args, config: dict) -> argparse.Namespace:
    """Fill options left unset on the command line from the config, then from DEFAULTS."""
    section = config.get(args.command, {}) or {}
    for key, value in vars(args).items():
        if value is not None:
            continue
        if key in section:
            setattr(args, key, section[key])
        elif key in config and not isinstance(config[key], dict):
            setattr(args, key, config[key])
        elif key in DEFAULTS:
            setattr(args, key, DEFAULTS[key])
    return args


def remote_config(args, config: dict):
    if getattr(args, "backend", None) != "remote":
        return None
    if args.remote_config:
        return RemoteConfig.from_file(args.remote_config)
    if config.get("remote"):
        return RemoteConfig.from_file(args.config)
    raise UsageError("--backend remote needs --remote-config or a 'remote' section in --config")


def _backend(args, config):
    rc = remote_config(args, config)
    return RemoteBackend(rc) if rc else TemplateBackend()


def _write(text: str, path) -> None:
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text, encoding="utf-8")


def _metrics_line(m) -> str:
    act = "inf" if m.min_act == float("inf") else f"{m.min_act:.3f}"
    return f"min_act={act} comfortability={m.comfortability:.3f} collision={m.collision}"


# --- commands -------------------------------------------------------------------------


def cmd_generate(args, config) -> int:
    if bool(args.text) == bool(args.preset):
        raise UsageError("give either a description text or --preset")
    text = descriptions()[args.preset].text if args.preset else args.text
    res = generate_scenario(text, _backend(args, config), args.seed)
    for note in res.notes:
        print(f"note: {note}", file=sys.stderr)
    _write(serialize_scenario(res.spec), args.output)
    return EXIT_OK


def cmd_simulate(args, config) -> int:
    spec = load_scenario_file(args.scenario)
    if args.seed_override is not None:
        spec = dataclasses.replace(spec, seed=args.seed_override)
    trace = run_scenario(spec, args.duration, dt=args.dt)
    m = evaluate_trace(trace)
    _write(trace.to_jsonl(), args.output)
    if args.metrics:
        _write(json.dumps(m.to_dict(), indent=1, sort_keys=True) + "\n", args.metrics)
    print(_metrics_line(m), file=sys.stderr)
    return EXIT_OK


def cmd_evaluate(args, config) -> int:
    m = evaluate_trace(SimTrace.read(args.trace))
    if args.json:
        print(json.dumps(m.to_dict(), indent=1, sort_keys=True))
    else:
        print(_metrics_line(m))
    return EXIT_OK


def cmd_refine(args, config) -> int:
    spec = load_scenario_file(args.scenario)
    res = refine_until_aligned(spec, budget=args.budget, duration=args.duration, dt=args.dt)
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    (out / "refined.yaml").write_text(serialize_scenario(res.spec), encoding="utf-8")
    with open(out / "episodes.jsonl", "a", encoding="utf-8") as fh:
        for ep in res.episodes:
            fh.write(json.dumps(ep.to_dict(), sort_keys=True) + "\n")
    (out / "metrics.json").write_text(json.dumps(
        {"initial": res.initial.to_dict(), "final": res.summary.to_dict(), "selected_episode": res.selected,
         "aligned": res.aligned, "knobs_exhausted": res.exhausted}, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    print(f"initial: {_metrics_line(res.initial)}")
    print(f"refined: {_metrics_line(res.summary)} (episodes {len(res.episodes)}, kept {res.selected}, "
          f"aligned {res.aligned})")
    return EXIT_OK


def cmd_batch(args, config) -> int:
    cfg = BatchConfig(
        source=args.source, n=args.n, seed_base=args.seed_base, duration=args.duration, backend=args.backend,
        remote=remote_config(args, config), refine=args.refine, budget=args.budget, out_dir=args.output,
        workers=args.workers, traces=args.traces, label=args.label, dt=args.dt,
    )
    res = run_batch(cfg)
    sys.stdout.write(res.report_md)
    if res.failed:
        print(f"{res.failed} of {cfg.n} runs failed", file=sys.stderr)
    return EXIT_OK


def cmd_replay(args, config) -> int:
    res = replay(args.trace, args.metrics, args.svg_every, args.svg_dir)
    print(_metrics_line(res.recomputed))
    if res.snapshots:
        print(f"wrote {len(res.snapshots)} snapshots to {res.snapshots[0].parent}")
    if res.matches is False:
        print("recomputed metrics differ from the stored ones", file=sys.stderr)
        return EXIT_DATA
    if res.matches:
        print("stored metrics reproduced exactly")
    return EXIT_OK


def cmd_map_validate(args, config) -> int:
    targets = args.maps or bundled_map_ids()
    bad = 0
    for t in targets:
        graph = load_map_file(t) if Path(t).is_file() else load_map(t)
        problems = validate_map(graph)
        print(f"{t}: {'ok' if not problems else f'{len(problems)} problem(s)'}")
        for p in problems:
            print(f"  {p}")
        bad += bool(problems)
    return EXIT_DATA if bad else EXIT_OK


# --- parser ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = Parser(prog="scenariogen", description="Generate, simulate, evaluate and refine driving scenarios.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("--config", help="YAML file with option defaults (flags override it)")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=Parser)

    def sim_opts(sp):
        sp.add_argument("--duration", type=float, help="simulated seconds (default 30)")
        sp.add_argument("--dt", type=float, help="time step in seconds (default 0.05)")

    def backend_opts(sp):
        sp.add_argument("--backend", choices=["template", "remote"], help="generation backend (default template)")
        sp.add_argument("--remote-config", help="YAML file with remote endpoint settings")

    g = sub.add_parser("generate", help="description text -> scenario document")
    g.add_argument("text", nargs="?")
    g.add_argument("--preset", choices=list(descriptions()))
    g.add_argument("--seed", type=int)
    g.add_argument("-o", "--output", help="output file (default stdout)")
    backend_opts(g)
    g.set_defaults(func=cmd_generate)

    s = sub.add_parser("simulate", help="scenario document -> trace JSONL")
    s.add_argument("scenario")
    s.add_argument("--seed", dest="seed_override", type=int, help="replace the document's seed")
    s.add_argument("-o", "--output", help="trace file (default stdout)")
    s.add_argument("--metrics", help="also write metrics JSON here")
    sim_opts(s)
    s.set_defaults(func=cmd_simulate)

    e = sub.add_parser("evaluate", help="trace -> metrics")
    e.add_argument("trace")
    e.add_argument("--json", action="store_true")
    e.set_defaults(func=cmd_evaluate)

    r = sub.add_parser("refine", help="refine a scenario toward its intent band")
    r.add_argument("scenario")
    r.add_argument("-o", "--output", required=True, help="output directory")
    r.add_argument("--budget", type=int, help="refinement episodes (default 5)")
    sim_opts(r)
    r.set_defaults(func=cmd_refine)

    b = sub.add_parser("batch", help="n seeded runs of a preset, document or description")
    b.add_argument("source", help="preset id, scenario document path, or description text")
    b.add_argument("-n", type=int, help="runs (default 32)")
    b.add_argument("--seed-base", type=int, help="run i uses seed base+i (default 0)")
    b.add_argument("--refine", action="store_const", const=True, help="refine every run")
    b.add_argument("--budget", type=int, help="refinement episodes (default 5)")
    b.add_argument("--workers", type=int, help="worker processes (default: logical cores)")
    b.add_argument("--no-traces", dest="traces", action="store_const", const=False, help="skip trace files")
    b.add_argument("--label")
    b.add_argument("-o", "--output", help="run directory")
    backend_opts(b)
    sim_opts(b)
    b.set_defaults(func=cmd_batch)

    rp = sub.add_parser("replay", help="recompute metrics from a trace, optionally with SVG snapshots")
    rp.add_argument("trace")
    rp.add_argument("--metrics", help="stored metrics to compare (default: metrics.json next to the trace)")
    rp.add_argument("--svg-every", type=float, metavar="SECONDS")
    rp.add_argument("--svg-dir")
    rp.set_defaults(func=cmd_replay)

    m = sub.add_parser("map", help="map tools")
    msub = m.add_subparsers(dest="map_command", required=True, parser_class=Parser)
    mv = msub.add_parser("validate", help="check bundled maps or map files")
    mv.add_argument("maps", nargs="*", help="map ids or files (default: all bundled maps)")
    mv.set_defaults(func=cmd_map_validate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = load_config(args.config)
        args = resolve(args, config)
        return args.func(args, config)
    except UsageError as exc:
        print(f"scenariogen: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except BatchFailed as exc:
        print(f"scenariogen: batch failed: {exc}", file=sys.stderr)
        return EXIT_BACKEND if exc.backend else EXIT_DATA
    except BackendError as exc:
        print(f"scenariogen: backend error: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except DATA_ERRORS as exc:
        print(f"scenariogen: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
