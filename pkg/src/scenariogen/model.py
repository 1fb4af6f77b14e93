"""Scenario description types: four layers plus intent, and behavior trees."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

from .maps.placement import PlacementQuery, RelativePlacement

SCHEMA_VERSION = 1
EGO_ID = "ego"

VEHICLE_CLASSES = ("sedan", "van", "truck")
FOOTPRINTS = {"sedan": (4.5, 1.9), "van": (5.2, 2.0), "truck": (8.0, 2.5)}
EGO_CLASS = "sedan"

DENSITY_PROFILES = ("none", "sparse", "heavy")
CRITICALITY_BANDS = ("safe", "moderate", "dangerous_no_collision", "collision_expected")
CONCURRENT_POLICIES = ("all-succeed", "any-succeeds")
EGO_CONTROLLERS = ("defensive", "cautious")


@dataclass(frozen=True)
class WeatherConfig:
    precipitation: float = 0.0
    fog_density: float = 0.0
    time_of_day: float = 12.0
    friction_multiplier: float = 1.0


@dataclass(frozen=True)
class EnvironmentSpec:
    map_id: str
    weather: WeatherConfig = WeatherConfig()


@dataclass(frozen=True)
class EgoSpec:
    placement: PlacementQuery
    target_speed: float
    controller: str = "defensive"


# --- conditions ----------------------------------------------------------------


@dataclass(frozen=True)
class Condition:
    """Predicate over the world, evaluated for the vehicle owning the behavior.

    ``op`` is one of the leaf predicates (speed_below, same_lane_as, gap_below,
    ahead_of, passed_position, elapsed) or a combinator (all, any, not).
    Leaves keep their arguments in ``args``; combinators in ``children``.
    """

    op: str
    args: tuple = ()
    children: tuple["Condition", ...] = ()


LEAF_CONDITIONS = {
    # op: argument names, the first vehicle-typed argument (if any) is a reference
    "speed_below": ("speed",),
    "same_lane_as": ("vehicle",),
    "gap_below": ("vehicle", "distance"),
    "ahead_of": ("vehicle", "margin"),
    "passed_position": ("distance",),
    "elapsed": ("time",),
}
COMBINATORS = ("all", "any", "not")


# --- behavior nodes --------------------------------------------------------------


@dataclass(frozen=True)
class AtomicBehavior:
    kind: str
    agent: str
    config: dict = field(default_factory=dict)
    success: Optional[Condition] = None
    fail: Optional[Condition] = None
    timeout: Optional[float] = None


@dataclass(frozen=True)
class Sequential:
    children: tuple["BehaviorNode", ...]


@dataclass(frozen=True)
class Concurrent:
    children: tuple["BehaviorNode", ...]
    policy: str = "all-succeed"


BehaviorNode = Union[AtomicBehavior, Sequential, Concurrent]


def iter_atomics(node: BehaviorNode, path: str = "behavior"):
    """Yield ``(path, atomic)`` for every leaf of a behavior tree."""
    if isinstance(node, AtomicBehavior):
        yield path, node
    else:
        key = "sequential" if isinstance(node, Sequential) else "concurrent"
        for i, ch in enumerate(node.children):
            yield from iter_atomics(ch, f"{path}.{key}[{i}]")


# --- scenario ------------------------------------------------------------------


@dataclass(frozen=True)
class AdversarySpec:
    id: str
    vehicle_class: str
    placement: RelativePlacement
    behavior: BehaviorNode


@dataclass(frozen=True)
class BackgroundSpec:
    count: int = 0
    spawn_radius: float = 150.0
    density_profile: str = "none"


@dataclass(frozen=True)
class IntentSpec:
    criticality_band: str = "moderate"
    narrative: str = ""


@dataclass(frozen=True)
class ScenarioSpec:
    environment: EnvironmentSpec
    ego: EgoSpec
    adversaries: tuple[AdversarySpec, ...] = ()
    background: BackgroundSpec = BackgroundSpec()
    intent: IntentSpec = IntentSpec()
    seed: int = 0
    schema_version: int = SCHEMA_VERSION

    def adversary(self, adv_id: str) -> AdversarySpec:
        for a in self.adversaries:
            if a.id == adv_id:
                return a
        raise KeyError(adv_id)


def footprint(vehicle_class: str) -> tuple[float, float]:
    return FOOTPRINTS[vehicle_class]

