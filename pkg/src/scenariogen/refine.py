"""Alignment check and rule-based scenario refinement.

The commander compares a run's metrics with the band the scenario's intent
asks for and, on a mismatch, emits a goal. The refiner turns a goal into a
small set of knob moves on the scenario document. Knob classes are tried in a
fixed order; the goal's magnitude says how many classes move in one episode.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

from .maps.lanegraph import LaneGraph
from .metrics import MetricsSummary, evaluate_trace
from .model import (
    EGO_CLASS, AdversarySpec, AtomicBehavior, BehaviorNode, Concurrent, ScenarioSpec, Sequential, footprint,
)
from .scenario_io import raise_on_violations, validate_cross_references
from .sim import DEFAULT_DURATION, DT, run_scenario

REDUCE = "reduce_aggression"
INCREASE = "increase_aggression"

AGGRESSION_STEP = 0.2
GAP_FACTOR = 1.3
SPEED_FACTOR = 0.10
MAX_PLACEMENT_GAP = 120.0
TRIGGER_BOUNDS = (0.5, 60.0)
SPEED_BOUNDS = (2.0, 40.0)
DECIMALS = 6

KNOB_CLASSES = ("aggressiveness", "placement_gap", "trigger_gap", "target_speed")


class KnobExhausted(RuntimeError):
    """No knob can move any further in the requested direction."""


@dataclass(frozen=True)
class AlignmentTarget:
    collision_allowed: bool
    act_band: tuple

    def __post_init__(self):
        lo, hi = self.act_band
        if not lo < hi:
            raise ValueError(f"act band needs lo < hi, got {self.act_band}")


DEFAULT_BANDS = {
    "collision_expected": AlignmentTarget(True, (0.0, 0.5)),
    "dangerous_no_collision": AlignmentTarget(False, (0.05, 0.5)),
    "moderate": AlignmentTarget(False, (0.5, 2.0)),
    "safe": AlignmentTarget(False, (2.0, math.inf)),
}


def target_for(band: str, bands: Optional[dict] = None) -> AlignmentTarget:
    table = DEFAULT_BANDS if bands is None else bands
    if band not in table:
        raise KeyError(f"no alignment target for band {band!r}")
    return table[band]


@dataclass(frozen=True)
class RefinementGoal:
    direction: str
    violated: str
    magnitude: int = 1


@dataclass(frozen=True)
class Mutation:
    path: str
    old: object
    new: object

    def to_dict(self) -> dict:
        return {"path": self.path, "old": self.old, "new": self.new}


@dataclass(frozen=True)
class RefinementEpisodeLog:
    episode: int
    goal: RefinementGoal
    mutations: tuple
    pre: MetricsSummary
    post: MetricsSummary

    def to_dict(self) -> dict:
        return {
            "episode": self.episode,
            "goal": dataclasses.asdict(self.goal),
            "mutations": [m.to_dict() for m in self.mutations],
            "pre": self.pre.to_dict(),
            "post": self.post.to_dict(),
        }


def check_alignment(summary: MetricsSummary, target: AlignmentTarget) -> Optional[RefinementGoal]:
    """``None`` when the run matches the target, else the goal that should fix it.

    A forbidden collision takes precedence over the ACT band and asks for two
    knob classes at once; an ACT miss asks for one.
    """
    if summary.collision and not target.collision_allowed:
        return RefinementGoal(REDUCE, "collision", 2)
    lo, hi = target.act_band
    if summary.min_act > hi:
        return RefinementGoal(INCREASE, "act_above", 1)
    if summary.min_act < lo:
        return RefinementGoal(REDUCE, "act_below", 1)
    return None


# --- knobs -----------------------------------------------------------------------


def _round(x: float) -> float:
    return round(float(x), DECIMALS)


def _scaled(value, factor, lo, hi) -> Optional[float]:
    """``value * factor`` clamped to [lo, hi]; None when that does not move it."""
    if (factor > 1.0 and value >= hi) or (factor < 1.0 and value <= lo):
        return None
    new = _round(min(hi, max(lo, value * factor)))
    # rounding can swallow the step on tiny values, or even reverse it
    if (new - value) * (factor - 1.0) <= 0:
        return None
    return new


def _move_aggressiveness(value, direction):
    step = -AGGRESSION_STEP if direction == REDUCE else AGGRESSION_STEP
    new = _round(min(1.0, max(0.0, value + step)))
    return None if new == value else new


def _move_trigger(value, direction):
    factor = GAP_FACTOR if direction == REDUCE else 1.0 / GAP_FACTOR
    return _scaled(value, factor, *TRIGGER_BOUNDS)


def _move_speed(value, direction):
    factor = 1.0 - SPEED_FACTOR if direction == REDUCE else 1.0 + SPEED_FACTOR
    return _scaled(value, factor, *SPEED_BOUNDS)


CONFIG_KNOBS = {
    "aggressiveness": ("aggressiveness", _move_aggressiveness),
    "trigger_gap": ("trigger_gap", _move_trigger),
    "target_speed": ("target_speed", _move_speed),
}


def min_placement_gap(adv: AdversarySpec) -> float:
    """Smallest gap that keeps the adversary's footprint clear of the ego's."""
    if adv.placement.relation in ("behind", "ahead"):
        return (footprint(EGO_CLASS)[0] + footprint(adv.vehicle_class)[0]) / 2.0 + 1.0
    return 0.0


def _map_atomics(node: BehaviorNode, fn: Callable, path: str) -> BehaviorNode:
    if isinstance(node, AtomicBehavior):
        return fn(node, path)
    key = "sequential" if isinstance(node, Sequential) else "concurrent"
    kids = tuple(_map_atomics(ch, fn, f"{path}.{key}[{i}]") for i, ch in enumerate(node.children))
    if isinstance(node, Concurrent):
        return Concurrent(kids, node.policy)
    return Sequential(kids)


def _apply_config_knob(spec: ScenarioSpec, knob: str, direction: str, out: list) -> ScenarioSpec:
    key, move = CONFIG_KNOBS[knob]
    advs = []
    for i, adv in enumerate(spec.adversaries):
        def visit(atom: AtomicBehavior, path: str) -> AtomicBehavior:
            value = atom.config.get(key)
            if not isinstance(value, (int, float)) or isinstance(value, bool):
                return atom
            new = move(float(value), direction)
            if new is None:
                return atom
            out.append(Mutation(f"{path}.config.{key}", value, new))
            return dataclasses.replace(atom, config={**atom.config, key: new})

        root = _map_atomics(adv.behavior, visit, f"adversaries[{i}].behavior")
        advs.append(dataclasses.replace(adv, behavior=root))
    return dataclasses.replace(spec, adversaries=tuple(advs))


def _apply_placement_knob(spec: ScenarioSpec, direction: str, out: list) -> ScenarioSpec:
    advs = []
    for i, adv in enumerate(spec.adversaries):
        gap = adv.placement.gap
        lo = min_placement_gap(adv)
        factor = GAP_FACTOR if direction == REDUCE else 1.0 / GAP_FACTOR
        new = _scaled(gap, factor, lo, MAX_PLACEMENT_GAP) if gap > 0 else None
        if new is not None:
            out.append(Mutation(f"adversaries[{i}].placement.gap", gap, new))
            adv = dataclasses.replace(adv, placement=dataclasses.replace(adv.placement, gap=new))
        advs.append(adv)
    return dataclasses.replace(spec, adversaries=tuple(advs))


def apply_knob(spec: ScenarioSpec, knob: str, direction: str) -> tuple[ScenarioSpec, list]:
    """Move every instance of one knob class one step; returns the new spec and its mutations."""
    if direction not in (REDUCE, INCREASE):
        raise ValueError(f"unknown direction {direction!r}")
    out: list = []
    if knob == "placement_gap":
        spec = _apply_placement_knob(spec, direction, out)
    elif knob in CONFIG_KNOBS:
        spec = _apply_config_knob(spec, knob, direction, out)
    else:
        raise ValueError(f"unknown knob class {knob!r}")
    return spec, out


def refine(spec: ScenarioSpec, goal: RefinementGoal, episode: int = 1) -> tuple[ScenarioSpec, list]:
    """Apply ``goal`` to ``spec``.

    Knob classes are visited in order; classes with nothing left to move are
    skipped, and the first ``goal.magnitude`` classes that do move are applied.

    Args:
        spec: the scenario to mutate.
        goal: direction and size of the change.
        episode: 1-based episode index, only used for error messages.

    Returns:
        The mutated spec and the list of mutations applied.

    Raises:
        KnobExhausted: when no knob class can move in the goal's direction.
    """
    moved = 0
    mutations: list = []
    for knob in KNOB_CLASSES:
        if moved >= goal.magnitude:
            break
        new_spec, muts = apply_knob(spec, knob, goal.direction)
        if muts:
            spec = new_spec
            mutations.extend(muts)
            moved += 1
    if not mutations:
        raise KnobExhausted(f"episode {episode}: every knob is at its bound for {goal.direction}")
    raise_on_violations(validate_cross_references(spec))
    return spec, mutations


# --- loop ------------------------------------------------------------------------


def band_distance(summary: MetricsSummary, target: AlignmentTarget) -> float:
    """How far a run's min ACT lies outside the target band (0 inside)."""
    lo, hi = target.act_band
    if summary.min_act < lo:
        return lo - summary.min_act
    if summary.min_act > hi:
        return summary.min_act - hi
    return 0.0


def rank(summary: MetricsSummary, target: AlignmentTarget) -> tuple:
    """Sort key for candidate versions: aligned first, then collision-free, then closest to the band."""
    forbidden = summary.collision and not target.collision_allowed
    return (check_alignment(summary, target) is not None, forbidden, band_distance(summary, target))


@dataclass
class RefinementResult:
    """Outcome of one refinement loop.

    ``spec``/``summary``/``trace`` belong to the best version simulated (see
    ``rank``); ``selected`` is its episode index, 0 for the original.
    """

    spec: ScenarioSpec
    summary: MetricsSummary
    initial: MetricsSummary
    episodes: list = field(default_factory=list)
    aligned: bool = False
    exhausted: bool = False
    trace: object = None
    selected: int = 0
    initial_trace: object = None


def refine_until_aligned(spec: ScenarioSpec, graph: Optional[LaneGraph] = None, budget: int = 5,
                         duration: float = DEFAULT_DURATION, dt: float = DT, bands: Optional[dict] = None,
                         jitter: bool = True) -> RefinementResult:
    """Simulate, evaluate and refine until the run matches its intent or the budget is spent.

    Every episode re-simulates with the scenario's own seed, so metric changes
    come from the mutations alone. A step can overshoot (a gentler version may
    fall out of the band on the other side, a sharper one may collide again),
    so the loop reports the best-ranked version rather than the last one.
    """
    if budget < 0:
        raise ValueError("budget must be >= 0")
    target = target_for(spec.intent.criticality_band, bands)
    trace = run_scenario(spec, duration, graph, dt, jitter)
    summary = evaluate_trace(trace)
    result = RefinementResult(spec, summary, summary, trace=trace, initial_trace=trace)
    best = rank(summary, target)
    for episode in range(1, budget + 1):
        goal = check_alignment(summary, target)
        if goal is None:
            break
        try:
            new_spec, mutations = refine(spec, goal, episode)
        except KnobExhausted:
            result.exhausted = True
            break
        trace = run_scenario(new_spec, duration, graph, dt, jitter)
        post = evaluate_trace(trace)
        result.episodes.append(RefinementEpisodeLog(episode, goal, tuple(mutations), summary, post))
        spec, summary = new_spec, post
        key = rank(summary, target)
        if key < best:
            best = key
            result.spec, result.summary, result.trace, result.selected = spec, summary, trace, episode
    result.aligned = check_alignment(result.summary, target) is None
    return result
