"""Text to scenario: interpreter, then the four layer agents, then validation."""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field
from typing import Optional

from ..maps import (
    LaneGraph, LanePosition, NoMatchError, PlacementQuery, RelativePlacement, UnsatisfiableRelationError,
    bundled_map_ids, find_ego_spawn, load_map, resolve_relative_placement,
)
from ..model import (
    EGO_CLASS, AdversarySpec, BackgroundSpec, EgoSpec, EnvironmentSpec, IntentSpec, ScenarioSpec, WeatherConfig,
    footprint,
)
from ..scenario_io import ScenarioError, parse_node, raise_on_violations, validate_cross_references
from ..sim import SpawnInfeasibleError, Simulation
from .backend import GenerationBackend
from .schemas import ActionPlan, AdversaryPlans, ChaosPlan, EgoPlan, Elaboration, WeatherReport
from .template import FALLBACK_ORDER, TemplateBackend, gap_for

log = logging.getLogger(__name__)

ElaboratedDescription = Elaboration


@dataclass(frozen=True)
class EgoPlacement:
    ego: EgoSpec
    map_id: str
    position: LanePosition


@dataclass
class GenerationResult:
    spec: ScenarioSpec
    elaboration: Elaboration
    ego_position: LanePosition
    notes: list = field(default_factory=list)


def _default_backend(backend: Optional[GenerationBackend]) -> GenerationBackend:
    return TemplateBackend() if backend is None else backend


def _maps(maps: Optional[dict]) -> dict:
    return {mid: load_map(mid) for mid in bundled_map_ids()} if maps is None else maps


def speed_limit(graph: LaneGraph) -> float:
    """Highest posted limit on the map's ordinary (non-junction) lanes."""
    return max(l.speed_limit for lid, l in graph.lanes.items() if not graph.is_connector(lid))


def interpret(description: str, backend: Optional[GenerationBackend] = None) -> Elaboration:
    if not description or not description.strip():
        raise ValueError("description is empty")
    out = _default_backend(backend).ask("interpreter", {"description": description}, Elaboration)
    for layer in out.improvised:
        log.info("interpreter improvised %s: %s", layer, getattr(out, layer))
    return out


def _weather(text: str, backend) -> tuple[WeatherConfig, list]:
    rep = _default_backend(backend).ask("weather_report", {"general_environment": text}, WeatherReport)
    for note in rep.notes:
        log.info("weather: %s", note)
    cfg = WeatherConfig(rep.precipitation, rep.fog_density, rep.time_of_day, rep.friction_multiplier)
    return cfg, list(rep.notes)


def weather_report(text: str, backend: Optional[GenerationBackend] = None) -> WeatherConfig:
    return _weather(text, backend)[0]


def locate_ego(text: str, seed: int = 0, backend: Optional[GenerationBackend] = None, maps: Optional[dict] = None,
               adversarial_plan: str = "") -> EgoPlacement:
    """Ego map, road context and speed from the text, then a seeded spawn point.

    Raises:
        NoMatchError: when the chosen map has no location of that kind.
    """
    maps = _maps(maps)
    payload = {"ego_context": text, "adversarial_plan": adversarial_plan,
               "map_limits": {mid: speed_limit(g) for mid, g in sorted(maps.items())}}

    def check(plan):
        if plan.map_id not in maps:
            raise ValueError(f"unknown map {plan.map_id!r}; choose one of {sorted(maps)}")

    plan = _default_backend(backend).ask("ego_locator", payload, EgoPlan, check)
    query = PlacementQuery(plan.context, plan.signal)
    pos = find_ego_spawn(maps[plan.map_id], query, seed)
    return EgoPlacement(EgoSpec(query, plan.target_speed, plan.controller), plan.map_id, pos)


def _relation_ok(graph, ego: EgoPlacement, seed: int, cls, rel, gap) -> bool:
    """Whether some ego spawn of the requested kind admits this relation (the simulator picks such a spawn)."""
    def fits(pos):
        try:
            resolve_relative_placement(graph, pos, RelativePlacement(rel, gap), footprint(EGO_CLASS), footprint(cls))
            return True
        except UnsatisfiableRelationError:
            return False

    if fits(ego.position):
        return True
    try:
        find_ego_spawn(graph, ego.ego.placement, seed, accept=fits)
        return True
    except NoMatchError:
        return False


def locate_adversaries(texts: list, ego: EgoPlacement, backend: Optional[GenerationBackend] = None,
                       maps: Optional[dict] = None, seed: int = 0) -> tuple[list, list]:
    """Class and relative placement per adversary text.

    A relation the map cannot satisfy is first sent back to a remote backend
    once; if it still fails (or the backend is the template engine) the first
    satisfiable relation in the order behind, ahead, left, right is used and
    the substitution is recorded.

    Returns:
        ``(plans, notes)`` with one AdversaryPlan per adversary.

    Raises:
        UnsatisfiableRelationError: when no relation in the fallback order fits.
    """
    backend = _default_backend(backend)
    graph = _maps(maps)[ego.map_id]
    payload = {"adversary_texts": list(texts), "map_id": ego.map_id, "ego_context": ego.ego.placement.context}
    plans = backend.ask("adv_locator", payload, AdversaryPlans)
    notes = list(plans.notes)

    def bad(ps):
        return [p for p in ps.adversaries if not _relation_ok(graph, ego, seed, p.vehicle_class, p.relation, p.gap)]

    failing = bad(plans)
    if failing and not isinstance(backend, TemplateBackend):
        payload["rejected"] = [f"{p.id}: relation {p.relation!r} is not available here" for p in failing]
        plans = backend.ask("adv_locator", payload, AdversaryPlans)
        failing = bad(plans)
    out = []
    for p in plans.adversaries:
        if p in failing:
            for rel in FALLBACK_ORDER:
                gap = gap_for(rel, p.text)
                if rel != p.relation and _relation_ok(graph, ego, seed, p.vehicle_class, rel, gap):
                    notes.append(f"{p.id}: relation {p.relation!r} unsatisfiable on {ego.map_id}, using {rel!r}")
                    p = p.model_copy(update={"relation": rel, "gap": gap})
                    break
            else:
                raise UnsatisfiableRelationError(f"{p.id}: no placement relation fits on {ego.map_id}")
        out.append(p)
    for n in notes:
        log.info("adv locator: %s", n)
    return out, notes


def generate_actions(adversaries: list, ego: EgoPlacement, backend: Optional[GenerationBackend] = None,
                     maps: Optional[dict] = None) -> dict:
    """Behavior tree per adversary id; every tree passes load-time validation."""
    graph = _maps(maps)[ego.map_id]
    payload = {
        "adversaries": [{"id": p.id, "relation": p.relation, "text": p.text} for p in adversaries],
        "ego_speed": ego.ego.target_speed,
        "speed_limit": speed_limit(graph),
    }
    nodes: dict = {}

    def check(plan: ActionPlan):
        missing = {p.id for p in adversaries} - set(plan.behaviors)
        if missing:
            raise ValueError(f"no behavior for {sorted(missing)}")
        nodes.clear()
        for aid, obj in plan.behaviors.items():
            try:
                nodes[aid] = parse_node(obj, f"behaviors.{aid}")
            except ScenarioError as exc:
                raise ValueError(f"{aid}: {exc}") from None
        advs = tuple(AdversarySpec(p.id, p.vehicle_class, RelativePlacement(p.relation, p.gap), nodes[p.id])
                     for p in adversaries)
        draft = ScenarioSpec(EnvironmentSpec(ego.map_id), ego.ego, advs)
        problems = validate_cross_references(draft)
        if problems:
            raise ValueError("; ".join(str(v) for v in problems))

    _default_backend(backend).ask("action_generator", payload, ActionPlan, check)
    return {p.id: nodes[p.id] for p in adversaries}


def make_chaos(text: str, backend: Optional[GenerationBackend] = None, spec: Optional[ScenarioSpec] = None,
               graph: Optional[LaneGraph] = None) -> tuple[BackgroundSpec, list]:
    """Background traffic from the text.

    With ``spec`` given, the count is lowered until the roamers can actually
    be placed around that scenario's ego, and the reduction is recorded.
    """
    plan = _default_backend(backend).ask("chaos_maker", {"background_plan": text}, ChaosPlan)
    bg = BackgroundSpec(plan.count, plan.spawn_radius, plan.density_profile if plan.count else "none")
    notes = []
    if spec is not None and bg.count > 0:
        for count in range(bg.count, -1, -1):
            trial = dataclasses.replace(bg, count=count, density_profile=bg.density_profile if count else "none")
            try:
                Simulation(dataclasses.replace(spec, background=trial), graph)
            except SpawnInfeasibleError:
                continue
            if count < bg.count:
                notes.append(f"background count reduced from {bg.count} to {count}: no room for more")
            bg = trial
            break
    for n in notes:
        log.info("chaos maker: %s", n)
    return bg, notes


def generate_scenario(description: str, backend: Optional[GenerationBackend] = None, seed: int = 0,
                      maps: Optional[dict] = None) -> GenerationResult:
    """Full generation pipeline for one scenario.

    Args:
        description: free-text scene description.
        backend: generation backend; the template engine when omitted.
        seed: run seed; picks the ego spawn and is stored in the document.
        maps: map library by id; the bundled maps when omitted.

    Returns:
        The validated scenario together with the intermediate elaboration
        and every fallback or tie-break note.
    """
    backend = _default_backend(backend)
    maps = _maps(maps)
    elab = interpret(description, backend)
    notes = [f"improvised {layer}" for layer in elab.improvised]
    weather, wnotes = _weather(elab.general_environment, backend)
    notes += wnotes
    ego = locate_ego(elab.ego_context, seed, backend, maps, elab.adversarial_plan)
    texts = elab.adversary_texts or [elab.adversarial_plan]
    plans, anotes = locate_adversaries(texts, ego, backend, maps, seed)
    notes += anotes
    trees = generate_actions(plans, ego, backend, maps)
    advs = tuple(AdversarySpec(p.id, p.vehicle_class, RelativePlacement(p.relation, p.gap), trees[p.id])
                 for p in plans)
    spec = ScenarioSpec(
        EnvironmentSpec(ego.map_id, weather), ego.ego, advs, BackgroundSpec(),
        IntentSpec(elab.intent_band, description.strip()), seed,
    )
    bg, cnotes = make_chaos(elab.background_plan, backend, spec, maps[ego.map_id])
    notes += cnotes
    spec = dataclasses.replace(spec, background=bg)
    raise_on_violations(validate_cross_references(spec, maps.keys()))
    return GenerationResult(spec, elab, ego.position, notes)
