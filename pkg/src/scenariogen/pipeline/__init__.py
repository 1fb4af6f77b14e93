"""Natural-language front end: description text to a validated scenario."""

from .backend import BackendError, BackendUnavailable, GenerationBackend, SchemaViolation
from .generate import (
    ElaboratedDescription, EgoPlacement, GenerationResult, generate_actions, generate_scenario, interpret,
    locate_adversaries, locate_ego, make_chaos, weather_report,
)
from .remote import RemoteBackend, RemoteConfig
from .template import TemplateBackend

__all__ = [
    "BackendError", "BackendUnavailable", "EgoPlacement", "ElaboratedDescription", "GenerationBackend",
    "GenerationResult", "RemoteBackend", "RemoteConfig", "SchemaViolation", "TemplateBackend",
    "generate_actions", "generate_scenario", "interpret", "locate_adversaries", "locate_ego", "make_chaos",
    "weather_report",
]
