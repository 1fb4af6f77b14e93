"""Structured output contracts for the six generation agents.

Both backends must produce objects that validate against these models; the
remote backend retries when a reply does not.
"""

from __future__ import annotations

from typing import Literal

from pydantic import BaseModel, ConfigDict, Field

Band = Literal["safe", "moderate", "dangerous_no_collision", "collision_expected"]
Context = Literal["straight-lane", "intersection-approach", "curve"]
Relation = Literal["left", "right", "behind", "ahead", "opposite-approach"]
VehicleClass = Literal["sedan", "van", "truck"]


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class Elaboration(_Strict):
    """Interpreter output: one text per scenario layer plus the intent band."""

    general_environment: str = Field(min_length=1)
    ego_context: str = Field(min_length=1)
    adversarial_plan: str = Field(min_length=1)
    background_plan: str = Field(min_length=1)
    intent_band: Band
    adversary_texts: list[str] = Field(default_factory=list)
    improvised: list[str] = Field(default_factory=list)


class WeatherReport(_Strict):
    precipitation: float = Field(ge=0.0, le=1.0)
    fog_density: float = Field(ge=0.0, le=1.0)
    time_of_day: float = Field(ge=0.0, lt=24.0)
    friction_multiplier: float = Field(gt=0.0, le=1.0)
    notes: list[str] = Field(default_factory=list)


class EgoPlan(_Strict):
    map_id: str
    context: Context
    signal: Literal["any", "green", "red"] = "any"
    target_speed: float = Field(gt=0.0)
    controller: Literal["defensive", "cautious"] = "defensive"


class AdversaryPlan(_Strict):
    id: str = Field(min_length=1)
    vehicle_class: VehicleClass
    relation: Relation
    gap: float = Field(ge=0.0)
    text: str = ""


class AdversaryPlans(_Strict):
    adversaries: list[AdversaryPlan]
    notes: list[str] = Field(default_factory=list)


class ActionPlan(_Strict):
    """Behavior trees keyed by adversary id, in scenario-document form."""

    behaviors: dict[str, dict]


class ChaosPlan(_Strict):
    density_profile: Literal["none", "sparse", "heavy"]
    count: int = Field(ge=0)
    spawn_radius: float = Field(gt=0.0)


AGENT_SCHEMAS = {
    "interpreter": Elaboration,
    "weather_report": WeatherReport,
    "ego_locator": EgoPlan,
    "adv_locator": AdversaryPlans,
    "action_generator": ActionPlan,
    "chaos_maker": ChaosPlan,
}
