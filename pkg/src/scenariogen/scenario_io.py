"""Scenario document format: parse, canonical serialize, cross-reference checks.

Documents are YAML with the top-level sections ``environment``, ``ego``,
``adversaries``, ``background`` and ``intent`` plus ``schema_version`` and
``seed``. Serialization sorts keys, spells out every optional field that has a
value and always writes ``adversaries`` (possibly ``[]``), so two documents
differ textually only where their scenarios differ. See docs/scenario_format.md.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional

import yaml

from .maps import CONTEXTS, RELATIONS, PlacementQuery, RelativePlacement, bundled_map_ids
from .maps.placement import SIGNAL_REQUIREMENTS
from .model import (
    COMBINATORS,
    CONCURRENT_POLICIES,
    CRITICALITY_BANDS,
    DENSITY_PROFILES,
    EGO_CONTROLLERS,
    EGO_ID,
    LEAF_CONDITIONS,
    SCHEMA_VERSION,
    VEHICLE_CLASSES,
    AdversarySpec,
    AtomicBehavior,
    BackgroundSpec,
    BehaviorNode,
    Concurrent,
    Condition,
    EgoSpec,
    EnvironmentSpec,
    IntentSpec,
    ScenarioSpec,
    Sequential,
    WeatherConfig,
)
from . import registry


class ScenarioError(ValueError):
    """Base class for scenario document problems."""


class ScenarioSyntaxError(ScenarioError):
    def __init__(self, message: str, line: Optional[int] = None, column: Optional[int] = None, path: str = ""):
        self.line, self.column, self.path = line, column, path
        where = f"line {line}, column {column}: " if line is not None else ""
        at = f" (at {path})" if path else ""
        super().__init__(f"{where}{message}{at}")


class ScenarioReferenceError(ScenarioError):
    pass


class ScenarioRangeError(ScenarioError):
    pass


class ScenarioOwnershipError(ScenarioError):
    pass


@dataclass(frozen=True)
class Violation:
    path: str
    category: str  # reference | range | ownership
    message: str

    def __str__(self):
        return f"{self.path}: {self.message}"


# --- dict -> model ----------------------------------------------------------------


class _Structure(Exception):
    def __init__(self, message, path):
        super().__init__(message)
        self.path = path


def _fmt(path: tuple) -> str:
    out = ""
    for p in path:
        out += f"[{p}]" if isinstance(p, int) else (f".{p}" if out else str(p))
    return out


def _mapping(v, path, allowed, required=()):
    if not isinstance(v, dict):
        raise _Structure("expected a mapping", path)
    for k in v:
        if k not in allowed:
            raise _Structure(f"unknown field {k!r}", path + (k,))
    for k in required:
        if k not in v:
            raise _Structure(f"missing field {k!r}", path)
    return v


def _num(v, path) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise _Structure("expected a number", path)
    return float(v)


def _int(v, path) -> int:
    if isinstance(v, bool) or not isinstance(v, int):
        raise _Structure("expected an integer", path)
    return v


def _str(v, path) -> str:
    if not isinstance(v, str):
        raise _Structure("expected a string", path)
    return v


def condition_from_obj(v, path=("condition",)) -> Condition:
    if not isinstance(v, dict) or len(v) != 1:
        raise _Structure("a condition is a mapping with exactly one key", path)
    (op, arg), = v.items()
    p = path + (op,)
    if op in ("all", "any"):
        if not isinstance(arg, list):
            raise _Structure("expected a list of conditions", p)
        return Condition(op, (), tuple(condition_from_obj(c, p + (i,)) for i, c in enumerate(arg)))
    if op == "not":
        return Condition(op, (), (condition_from_obj(arg, p),))
    if op not in LEAF_CONDITIONS:
        raise _Structure(f"unknown condition {op!r}", p)
    names = LEAF_CONDITIONS[op]
    if len(names) == 1:
        val = _str(arg, p) if names[0] == "vehicle" else _num(arg, p)
        return Condition(op, (val,))
    _mapping(arg, p, set(names), names)
    return Condition(op, tuple(_str(arg[n], p + (n,)) if n == "vehicle" else _num(arg[n], p + (n,)) for n in names))


def condition_to_obj(c: Condition):
    if c.op in ("all", "any"):
        return {c.op: [condition_to_obj(ch) for ch in c.children]}
    if c.op == "not":
        return {"not": condition_to_obj(c.children[0])}
    names = LEAF_CONDITIONS[c.op]
    if len(names) == 1:
        return {c.op: c.args[0]}
    return {c.op: dict(zip(names, c.args))}


def _config(kind, raw, path) -> dict:
    if not isinstance(raw, dict):
        raise _Structure("expected a mapping", path)
    try:
        entry = registry.get_kind(kind)
    except registry.UnknownKindError:
        return dict(raw)
    out = {}
    for k, v in raw.items():
        p = entry.schema.get(k)
        if p is not None and p.type not in ("vehicle", "turn") and not (p.type == "decel" and v == "max"):
            if isinstance(v, (int, float)) and not isinstance(v, bool):
                v = float(v)
        out[k] = v
    return out


def node_from_obj(v, path=("behavior",)) -> BehaviorNode:
    if not isinstance(v, dict) or len(v) != 1:
        raise _Structure("a behavior node is a mapping with one key: atomic, sequential or concurrent", path)
    (key, body), = v.items()
    p = path + (key,)
    if key == "atomic":
        _mapping(body, p, {"kind", "agent", "config", "success", "fail", "timeout"}, ("kind",))
        kind = _str(body["kind"], p + ("kind",))
        agent = body.get("agent")
        if agent is None:
            try:
                agent = registry.get_kind(kind).default_agent
            except registry.UnknownKindError:
                agent = ""
        return AtomicBehavior(
            kind=kind,
            agent=_str(agent, p + ("agent",)),
            config=_config(kind, body.get("config") or {}, p + ("config",)),
            success=condition_from_obj(body["success"], p + ("success",)) if body.get("success") is not None else None,
            fail=condition_from_obj(body["fail"], p + ("fail",)) if body.get("fail") is not None else None,
            timeout=_num(body["timeout"], p + ("timeout",)) if body.get("timeout") is not None else None,
        )
    if key == "sequential":
        if not isinstance(body, list):
            raise _Structure("expected a list of nodes", p)
        return Sequential(tuple(node_from_obj(c, p + (i,)) for i, c in enumerate(body)))
    if key == "concurrent":
        _mapping(body, p, {"policy", "children"}, ("children",))
        ch = body["children"]
        if not isinstance(ch, list):
            raise _Structure("expected a list of nodes", p + ("children",))
        return Concurrent(
            tuple(node_from_obj(c, p + ("children", i)) for i, c in enumerate(ch)),
            _str(body.get("policy", "all-succeed"), p + ("policy",)),
        )
    raise _Structure(f"unknown node type {key!r}", p)


def node_to_obj(n: BehaviorNode):
    if isinstance(n, AtomicBehavior):
        body = {"kind": n.kind, "agent": n.agent, "config": dict(n.config)}
        if n.success is not None:
            body["success"] = condition_to_obj(n.success)
        if n.fail is not None:
            body["fail"] = condition_to_obj(n.fail)
        if n.timeout is not None:
            body["timeout"] = n.timeout
        return {"atomic": body}
    if isinstance(n, Sequential):
        return {"sequential": [node_to_obj(c) for c in n.children]}
    return {"concurrent": {"policy": n.policy, "children": [node_to_obj(c) for c in n.children]}}


def spec_from_obj(doc) -> ScenarioSpec:
    root = ()
    _mapping(doc, root, {"schema_version", "seed", "environment", "ego", "adversaries", "background", "intent"},
             ("schema_version", "environment", "ego"))
    version = _int(doc["schema_version"], ("schema_version",))
    if version > SCHEMA_VERSION:
        raise _Structure(f"schema_version {version} is newer than supported {SCHEMA_VERSION}", ("schema_version",))
    env = _mapping(doc["environment"], ("environment",), {"map_id", "weather"}, ("map_id",))
    w = _mapping(env.get("weather") or {}, ("environment", "weather"),
                 {"precipitation", "fog_density", "time_of_day", "friction_multiplier"})
    weather = WeatherConfig(**{k: _num(v, ("environment", "weather", k)) for k, v in w.items()})
    ego = _mapping(doc["ego"], ("ego",), {"placement", "target_speed", "controller"}, ("placement", "target_speed"))
    pq = _mapping(ego["placement"], ("ego", "placement"), {"context", "signal"}, ("context",))
    ego_spec = EgoSpec(
        PlacementQuery(_str(pq["context"], ("ego", "placement", "context")),
                       _str(pq.get("signal", "any"), ("ego", "placement", "signal"))),
        _num(ego["target_speed"], ("ego", "target_speed")),
        _str(ego.get("controller", "defensive"), ("ego", "controller")),
    )
    advs = doc.get("adversaries", [])
    if advs is None:
        advs = []
    if not isinstance(advs, list):
        raise _Structure("expected a list", ("adversaries",))
    adversaries = []
    for i, a in enumerate(advs):
        p = ("adversaries", i)
        _mapping(a, p, {"id", "vehicle_class", "placement", "behavior"}, ("id", "vehicle_class", "placement", "behavior"))
        pl = _mapping(a["placement"], p + ("placement",), {"relation", "gap"}, ("relation",))
        adversaries.append(
            AdversarySpec(
                _str(a["id"], p + ("id",)),
                _str(a["vehicle_class"], p + ("vehicle_class",)),
                RelativePlacement(_str(pl["relation"], p + ("placement", "relation")),
                                  _num(pl.get("gap", 0.0), p + ("placement", "gap"))),
                node_from_obj(a["behavior"], p + ("behavior",)),
            )
        )
    bg = _mapping(doc.get("background") or {}, ("background",), {"count", "spawn_radius", "density_profile"})
    background = BackgroundSpec(
        _int(bg.get("count", 0), ("background", "count")),
        _num(bg.get("spawn_radius", 150.0), ("background", "spawn_radius")),
        _str(bg.get("density_profile", "none"), ("background", "density_profile")),
    )
    it = _mapping(doc.get("intent") or {}, ("intent",), {"criticality_band", "narrative"})
    intent = IntentSpec(
        _str(it.get("criticality_band", "moderate"), ("intent", "criticality_band")),
        _str(it.get("narrative", ""), ("intent", "narrative")),
    )
    return ScenarioSpec(
        EnvironmentSpec(_str(env["map_id"], ("environment", "map_id")), weather),
        ego_spec,
        tuple(adversaries),
        background,
        intent,
        _int(doc.get("seed", 0), ("seed",)),
        version,
    )


def spec_to_obj(spec: ScenarioSpec) -> dict:
    w = spec.environment.weather
    return {
        "schema_version": spec.schema_version,
        "seed": spec.seed,
        "environment": {
            "map_id": spec.environment.map_id,
            "weather": {
                "precipitation": w.precipitation,
                "fog_density": w.fog_density,
                "time_of_day": w.time_of_day,
                "friction_multiplier": w.friction_multiplier,
            },
        },
        "ego": {
            "placement": {"context": spec.ego.placement.context, "signal": spec.ego.placement.signal},
            "target_speed": spec.ego.target_speed,
            "controller": spec.ego.controller,
        },
        "adversaries": [
            {
                "id": a.id,
                "vehicle_class": a.vehicle_class,
                "placement": {"relation": a.placement.relation, "gap": a.placement.gap},
                "behavior": node_to_obj(a.behavior),
            }
            for a in spec.adversaries
        ],
        "background": {
            "count": spec.background.count,
            "spawn_radius": spec.background.spawn_radius,
            "density_profile": spec.background.density_profile,
        },
        "intent": {"criticality_band": spec.intent.criticality_band, "narrative": spec.intent.narrative},
    }


# --- text --------------------------------------------------------------------------


def _mark_for(text: str, path: tuple):
    try:
        node = yaml.compose(text)
    except yaml.YAMLError:
        return None
    mark = node.start_mark if node is not None else None
    for key in path:
        if isinstance(node, yaml.MappingNode):
            nxt = None
            for k, v in node.value:
                if k.value == key:
                    nxt, mark = v, k.start_mark
                    break
            if nxt is None:
                break
            node = nxt
        elif isinstance(node, yaml.SequenceNode) and isinstance(key, int) and key < len(node.value):
            node = node.value[key]
            mark = node.start_mark
        else:
            break
    return mark


def parse_scenario(text: str, map_ids: Optional[Iterable[str]] = None) -> ScenarioSpec:
    """Parse and fully validate a scenario document.

    Raises ScenarioSyntaxError (with line/column) for malformed YAML, unknown
    fields or wrong types, and ScenarioReferenceError / ScenarioRangeError /
    ScenarioOwnershipError when a cross-reference or range invariant fails.
    """
    try:
        doc = yaml.safe_load(text)
    except yaml.MarkedYAMLError as exc:
        m = exc.problem_mark
        raise ScenarioSyntaxError(str(exc.problem), m.line + 1, m.column + 1) from exc
    except yaml.YAMLError as exc:
        raise ScenarioSyntaxError(str(exc)) from exc
    try:
        spec = spec_from_obj(doc)
    except _Structure as exc:
        m = _mark_for(text, exc.path)
        raise ScenarioSyntaxError(
            str(exc), m.line + 1 if m else None, m.column + 1 if m else None, _fmt(exc.path)
        ) from None
    raise_on_violations(validate_cross_references(spec, map_ids))
    return spec


def parse_node(obj, path: str = "behavior") -> BehaviorNode:
    """Behavior tree from its document form; structural errors become ScenarioSyntaxError."""
    try:
        return node_from_obj(obj, (path,))
    except _Structure as exc:
        raise ScenarioSyntaxError(str(exc), path=_fmt(exc.path)) from None


def raise_on_violations(violations: list[Violation]) -> None:
    if not violations:
        return
    for cat, cls in (("reference", ScenarioReferenceError), ("ownership", ScenarioOwnershipError),
                     ("range", ScenarioRangeError)):
        hits = [v for v in violations if v.category == cat]
        if hits:
            raise cls("; ".join(str(v) for v in hits))


class _Dumper(yaml.SafeDumper):
    pass


def _represent_str(dumper, value):
    # PyYAML folds NEL and friends inside single quotes; double quotes escape them
    style = '"' if any(c in value for c in "\x85\u2028\u2029") else None
    return dumper.represent_scalar("tag:yaml.org,2002:str", value, style=style)


_Dumper.add_representer(str, _represent_str)


def serialize_scenario(spec: ScenarioSpec) -> str:
    return yaml.dump(
        spec_to_obj(spec), Dumper=_Dumper, sort_keys=True, default_flow_style=False, allow_unicode=True,
        width=1 << 30,
    )


# --- validation ---------------------------------------------------------------------


def _controlled(node: BehaviorNode) -> bool:
    if isinstance(node, AtomicBehavior):
        try:
            return registry.get_kind(node.kind).controls
        except registry.UnknownKindError:
            return True
    return any(_controlled(c) for c in node.children)


def _check_condition(c: Condition, path: str, vehicles: set, out: list) -> None:
    if c.op in COMBINATORS:
        if c.op == "not" and len(c.children) != 1:
            out.append(Violation(path, "range", "'not' takes exactly one condition"))
        if c.op in ("all", "any") and not c.children:
            out.append(Violation(path, "range", f"'{c.op}' needs at least one condition"))
        for i, ch in enumerate(c.children):
            _check_condition(ch, f"{path}.{c.op}[{i}]", vehicles, out)
        return
    for name, val in zip(LEAF_CONDITIONS[c.op], c.args):
        if name == "vehicle":
            if val not in vehicles:
                out.append(Violation(f"{path}.{c.op}", "reference", f"undeclared vehicle {val!r}"))
        elif not math.isfinite(val):
            out.append(Violation(f"{path}.{c.op}", "range", "threshold must be finite"))
        elif name in ("time", "speed") and val < 0:
            out.append(Violation(f"{path}.{c.op}", "range", "threshold must be >= 0"))


def _check_node(node, path, owner, vehicles, out):
    if isinstance(node, AtomicBehavior):
        try:
            entry = registry.get_kind(node.kind)
        except registry.UnknownKindError:
            out.append(Violation(path, "reference", f"unknown behavior kind {node.kind!r}"))
            return
        if node.agent not in entry.agents:
            out.append(Violation(f"{path}.agent", "reference",
                                 f"agent {node.agent!r} cannot run {node.kind} (allowed: {list(entry.agents)})"))
        for name, cat, msg in registry.validate_config(node.kind, node.config):
            out.append(Violation(f"{path}.config.{name}", cat, msg))
        for name, p in entry.schema.items():
            if p.type == "vehicle" and name in node.config and isinstance(node.config[name], str):
                ref = node.config[name]
                if ref not in vehicles:
                    out.append(Violation(f"{path}.config.{name}", "reference", f"undeclared vehicle {ref!r}"))
                elif ref == owner:
                    out.append(Violation(f"{path}.config.{name}", "reference", "a vehicle cannot target itself"))
        for label, cond in (("success", node.success), ("fail", node.fail)):
            if cond is not None:
                _check_condition(cond, f"{path}.{label}", vehicles, out)
        if node.timeout is not None and not (math.isfinite(node.timeout) and node.timeout > 0):
            out.append(Violation(f"{path}.timeout", "range", "timeout must be > 0"))
        return
    key = "sequential" if isinstance(node, Sequential) else "concurrent"
    if not node.children:
        out.append(Violation(path, "range", f"{key} node needs at least one child"))
    if isinstance(node, Concurrent):
        if node.policy not in CONCURRENT_POLICIES:
            out.append(Violation(f"{path}.policy", "range", f"policy must be one of {CONCURRENT_POLICIES}"))
        owners = [i for i, ch in enumerate(node.children) if _controlled(ch)]
        if len(owners) > 1:
            out.append(Violation(path, "ownership",
                                 f"children {owners} would control vehicle {owner!r} at the same time"))
    for i, ch in enumerate(node.children):
        _check_node(ch, f"{path}.{key}[{i}]", owner, vehicles, out)


def _rng(out, path, v, lo, hi, lo_open=False, hi_open=False):
    ok = math.isfinite(v) and (v > lo if lo_open else v >= lo) and (v < hi if hi_open else v <= hi)
    if not ok:
        lb = "(" if lo_open else "["
        rb = ")" if hi_open else "]"
        out.append(Violation(path, "range", f"value {v} outside {lb}{lo}, {hi}{rb}"))


def validate_cross_references(spec: ScenarioSpec, map_ids: Optional[Iterable[str]] = None) -> list[Violation]:
    """Every invariant violation in a structurally parsed spec (empty when valid)."""
    out: list[Violation] = []
    if spec.schema_version > SCHEMA_VERSION or spec.schema_version < 1:
        out.append(Violation("schema_version", "range", f"unsupported schema_version {spec.schema_version}"))
    if not 0 <= spec.seed < 2 ** 64:
        out.append(Violation("seed", "range", "seed must be a 64-bit unsigned integer"))
    maps = set(bundled_map_ids() if map_ids is None else map_ids)
    if spec.environment.map_id not in maps:
        out.append(Violation("environment.map_id", "reference", f"unknown map {spec.environment.map_id!r}"))
    w = spec.environment.weather
    _rng(out, "environment.weather.precipitation", w.precipitation, 0, 1)
    _rng(out, "environment.weather.fog_density", w.fog_density, 0, 1)
    _rng(out, "environment.weather.time_of_day", w.time_of_day, 0, 24, hi_open=True)
    _rng(out, "environment.weather.friction_multiplier", w.friction_multiplier, 0, 1, lo_open=True)
    if spec.ego.placement.context not in CONTEXTS:
        out.append(Violation("ego.placement.context", "range", f"context must be one of {CONTEXTS}"))
    if spec.ego.placement.signal not in SIGNAL_REQUIREMENTS:
        out.append(Violation("ego.placement.signal", "range", f"signal must be one of {SIGNAL_REQUIREMENTS}"))
    if not (math.isfinite(spec.ego.target_speed) and spec.ego.target_speed > 0):
        out.append(Violation("ego.target_speed", "range", "target_speed must be > 0"))
    if spec.ego.controller not in EGO_CONTROLLERS:
        out.append(Violation("ego.controller", "reference", f"unknown ego controller {spec.ego.controller!r}"))

    seen: dict[str, int] = {}
    for i, a in enumerate(spec.adversaries):
        p = f"adversaries[{i}]"
        if a.id == EGO_ID or not a.id:
            out.append(Violation(f"{p}.id", "reference", f"adversary id {a.id!r} is reserved or empty"))
        elif a.id in seen:
            j = seen[a.id]
            out.append(Violation(f"adversaries[{j}].id / {p}.id", "reference", f"duplicate adversary id {a.id!r}"))
        else:
            seen[a.id] = i
        if a.vehicle_class not in VEHICLE_CLASSES:
            out.append(Violation(f"{p}.vehicle_class", "range", f"vehicle_class must be one of {VEHICLE_CLASSES}"))
        if a.placement.relation not in RELATIONS:
            out.append(Violation(f"{p}.placement.relation", "range", f"relation must be one of {RELATIONS}"))
        if not (math.isfinite(a.placement.gap) and a.placement.gap >= 0):
            out.append(Violation(f"{p}.placement.gap", "range", f"gap {a.placement.gap} must be >= 0"))
    vehicles = {EGO_ID} | {a.id for a in spec.adversaries}
    for i, a in enumerate(spec.adversaries):
        _check_node(a.behavior, f"adversaries[{i}].behavior", a.id, vehicles, out)

    bg = spec.background
    if bg.count < 0:
        out.append(Violation("background.count", "range", "count must be >= 0"))
    if bg.density_profile not in DENSITY_PROFILES:
        out.append(Violation("background.density_profile", "range", f"must be one of {DENSITY_PROFILES}"))
    elif (bg.count == 0) != (bg.density_profile == "none"):
        out.append(Violation("background", "range", "count must be 0 exactly when density_profile is 'none'"))
    if not (math.isfinite(bg.spawn_radius) and bg.spawn_radius > 0):
        out.append(Violation("background.spawn_radius", "range", "spawn_radius must be > 0"))
    if spec.intent.criticality_band not in CRITICALITY_BANDS:
        out.append(Violation("intent.criticality_band", "range", f"must be one of {CRITICALITY_BANDS}"))
    return out


def load_scenario_file(path) -> ScenarioSpec:
    with open(path, encoding="utf-8") as fh:
        return parse_scenario(fh.read())
