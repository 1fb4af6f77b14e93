"""Shipped scenario presets: six description texts and their scenario documents."""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources

import yaml

from .model import ScenarioSpec
from .scenario_io import parse_scenario

CUT_IN_BATCH = ("cut_in_dangerous", "cut_in_moderate", "cut_in_safe")


@dataclass(frozen=True)
class PresetDescription:
    id: str
    label: str
    text: str


def _data():
    return resources.files("scenariogen") / "data"


def descriptions() -> dict[str, PresetDescription]:
    """Preset descriptions by id, in shipping order."""
    doc = yaml.safe_load((_data() / "descriptions.yaml").read_text(encoding="utf-8"))
    return {p["id"]: PresetDescription(p["id"], p["label"], p["text"]) for p in doc["presets"]}


def preset_ids() -> list[str]:
    return list(descriptions())


def preset_text(preset_id: str) -> str:
    try:
        return descriptions()[preset_id].text
    except KeyError:
        raise KeyError(f"unknown preset {preset_id!r}; known: {preset_ids()}") from None


def preset_document(preset_id: str) -> str:
    preset_text(preset_id)  # unknown ids fail with the list of known ones
    return (_data() / "presets" / f"{preset_id}.yaml").read_text(encoding="utf-8")


def load_preset(preset_id: str) -> ScenarioSpec:
    return parse_scenario(preset_document(preset_id))
