"""Behavior-kind registry: per-kind parameter schema and agent binding."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

from .model import Condition

STOP_SPEED = 1e-6
TURNS = ("straight", "left", "right")
PARAM_TYPES = ("vehicle", "speed", "fraction", "distance", "decel", "turn", "duration")


class DuplicateKindError(ValueError):
    pass


class UnknownKindError(KeyError):
    pass


@dataclass(frozen=True)
class Param:
    type: str
    required: bool = False
    default: object = None


@dataclass(frozen=True)
class KindEntry:
    kind: str
    schema: dict
    agents: tuple[str, ...]
    controls: bool = True
    default_success: Optional[Callable[[dict], Optional[Condition]]] = None
    doc: str = ""

    @property
    def default_agent(self) -> str:
        return self.agents[0]

    def resolved_config(self, config: dict) -> dict:
        out = {k: p.default for k, p in self.schema.items() if p.default is not None}
        out.update(config)
        return out


_REGISTRY: dict[str, KindEntry] = {}


def register_behavior_kind(
    kind: str,
    schema: dict,
    agents: tuple[str, ...] | str,
    *,
    controls: bool = True,
    default_success: Optional[Callable[[dict], Optional[Condition]]] = None,
    doc: str = "",
) -> KindEntry:
    """Add a behavior kind. Raises DuplicateKindError if already present."""
    if kind in _REGISTRY:
        raise DuplicateKindError(f"behavior kind {kind!r} is already registered")
    if isinstance(agents, str):
        agents = (agents,)
    for name, p in schema.items():
        if p.type not in PARAM_TYPES:
            raise ValueError(f"{kind}.{name}: unknown parameter type {p.type!r}")
    entry = KindEntry(kind, dict(schema), tuple(agents), controls, default_success, doc)
    _REGISTRY[kind] = entry
    return entry


def unregister_behavior_kind(kind: str) -> None:
    _REGISTRY.pop(kind, None)


def get_kind(kind: str) -> KindEntry:
    try:
        return _REGISTRY[kind]
    except KeyError:
        raise UnknownKindError(kind) from None


def registered_kinds() -> list[str]:
    return sorted(_REGISTRY)


def check_param(ptype: str, value) -> Optional[str]:
    """Problem text for a parameter value, or None when it is acceptable."""
    if ptype == "vehicle":
        return None if isinstance(value, str) and value else "must be a vehicle id"
    if ptype == "turn":
        return None if value in TURNS else f"must be one of {TURNS}"
    if ptype == "decel" and value == "max":
        return None
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        return "must be a number"
    v = float(value)
    if not math.isfinite(v):
        return "must be finite"
    if ptype == "fraction" and not 0.0 <= v <= 1.0:
        return "must lie in [0, 1]"
    if ptype in ("speed", "distance") and v < 0.0:
        return "must be >= 0"
    if ptype in ("decel", "duration") and v <= 0.0:
        return "must be > 0"
    return None


def validate_config(kind: str, config: dict) -> list[tuple[str, str, str]]:
    """Schema problems as ``(param, category, message)`` tuples."""
    entry = get_kind(kind)
    out = []
    for name in sorted(config):
        if name not in entry.schema:
            out.append((name, "range", f"unknown parameter for {kind}"))
            continue
        msg = check_param(entry.schema[name].type, config[name])
        if msg:
            out.append((name, "range", msg))
    for name, p in entry.schema.items():
        if p.required and name not in config:
            out.append((name, "range", f"required parameter missing for {kind}"))
    return out


def _builtins() -> None:
    register_behavior_kind(
        "FollowVehicle",
        {
            "target": Param("vehicle", True),
            "target_speed": Param("speed", True),
            "aggressiveness": Param("fraction", True),
            "reaction_time": Param("duration", False, 0.5),
        },
        "acc",
        doc="ACC car-following of a target vehicle.",
    )
    register_behavior_kind(
        "StopVehicle",
        {"deceleration": Param("decel", False, 3.0)},
        "brake",
        default_success=lambda c: Condition("speed_below", (STOP_SPEED,)),
        doc="Brake to a standstill.",
    )
    register_behavior_kind(
        "CutIn",
        {
            "victim": Param("vehicle", True),
            "target_speed": Param("speed", True),
            "trigger_gap": Param("distance", False, 10.0),
            "aggressiveness": Param("fraction", False, 0.5),
        },
        "cutin",
        default_success=lambda c: Condition("same_lane_as", (c["victim"],)),
        doc="Pass the victim on a neighbour lane, then change into its lane.",
    )
    register_behavior_kind(
        "FollowRoute",
        {"target_speed": Param("speed"), "turn": Param("turn", False, "straight")},
        ("route", "cautious"),
        doc="Signal-obeying route following.",
    )
    register_behavior_kind(
        "Overtake",
        {
            "target": Param("vehicle", True),
            "target_speed": Param("speed", True),
            "aggressiveness": Param("fraction", False, 0.5),
        },
        "overtake",
        default_success=lambda c: Condition("ahead_of", (c["target"], 0.0)),
        doc="Drive past the target on the current lane.",
    )
    register_behavior_kind(
        "RunRedLight",
        {"target_speed": Param("speed", True), "turn": Param("turn", False, "straight")},
        "red_light_runner",
        doc="Route following that ignores signals and never yields.",
    )
    register_behavior_kind(
        "SuddenBrake",
        {"deceleration": Param("decel", False, "max")},
        "brake",
        default_success=lambda c: Condition("speed_below", (STOP_SPEED,)),
        doc="Brake as hard as allowed until stopped.",
    )
    register_behavior_kind("IdleHold", {}, "idle", doc="Stay stopped.")
    register_behavior_kind(
        "Wait", {}, "none", controls=False,
        doc="Controls nothing; finishes through its conditions.",
    )


_builtins()

BUILTIN_KINDS = (
    "FollowVehicle", "StopVehicle", "CutIn", "FollowRoute", "Overtake", "RunRedLight", "SuddenBrake", "IdleHold",
)
