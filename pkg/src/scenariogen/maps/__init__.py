from .lanegraph import (
    Intersection,
    Lane,
    LaneGraph,
    MapError,
    NoMatchError,
    NotSignalizedError,
    SignalPhase,
    UnsatisfiableRelationError,
    bundled_map_ids,
    load_map,
    load_map_file,
    map_from_dict,
    map_to_dict,
    validate_map,
)
from .placement import (
    APPROACH_WINDOW,
    CONTEXTS,
    RELATIONS,
    LanePosition,
    PlacementQuery,
    RelativePlacement,
    conflicting_approaches,
    distance_along_route,
    find_ego_spawn,
    resolve_relative_placement,
    signal_color_at,
)

__all__ = [
    "APPROACH_WINDOW", "CONTEXTS", "RELATIONS", "Intersection", "Lane", "LaneGraph",
    "LanePosition", "MapError", "NoMatchError", "NotSignalizedError", "PlacementQuery",
    "RelativePlacement", "SignalPhase", "UnsatisfiableRelationError", "bundled_map_ids",
    "conflicting_approaches", "distance_along_route", "find_ego_spawn", "load_map",
    "load_map_file", "map_from_dict", "map_to_dict", "resolve_relative_placement",
    "signal_color_at", "validate_map",
]
