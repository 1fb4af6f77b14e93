"""Spawn search, relative placement, route distance and signal lookup."""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from typing import Callable, Optional

from ..geometry import rect_corners, sat_overlap
from ..seeding import substream
from .lanegraph import LaneGraph, NoMatchError, UnsatisfiableRelationError

CONTEXTS = ("straight-lane", "intersection-approach", "curve")
RELATIONS = ("left", "right", "behind", "ahead", "opposite-approach")
SIGNAL_REQUIREMENTS = ("any", "green", "red")

# tunable constants
APPROACH_WINDOW = (40.0, 80.0)
SPAWN_STEP = 5.0
START_MARGIN = 120.0
STRAIGHT_RUNWAY = 700.0
CURVE_RUNWAY = 350.0
STRAIGHT_MAX_CURVATURE = 1e-4
CURVE_MIN_CURVATURE = 1.0 / 2000.0


@dataclass(frozen=True)
class LanePosition:
    lane_id: str
    s: float
    lateral_offset: float = 0.0


@dataclass(frozen=True)
class PlacementQuery:
    """Road-context request for the ego spawn."""

    context: str
    signal: str = "any"


@dataclass(frozen=True)
class RelativePlacement:
    """Where an adversary starts relative to the ego.

    ``gap`` is a centre-to-centre longitudinal offset: behind/ahead move along
    the ego lane, left/right place the adversary ``gap`` metres back on the
    neighbour lane, and opposite-approach adds ``gap`` to the ego's distance
    from its stop line.
    """

    relation: str
    gap: float = 0.0


def _candidates(graph: LaneGraph, query: PlacementQuery, window) -> list[LanePosition]:
    out = []
    if query.context == "intersection-approach":
        lo, hi = window
        for lane_id in sorted(graph.approach_of):
            lane = graph.lanes[lane_id]
            if query.signal != "any" and graph.signal_color(lane_id, 0.0) != query.signal:
                continue
            d = lo
            while d <= hi + 1e-9:
                if d <= lane.length:
                    out.append(LanePosition(lane_id, lane.length - d))
                d += SPAWN_STEP
        return out
    for lane_id in sorted(graph.lanes):
        if graph.is_connector(lane_id):
            continue
        lane = graph.lanes[lane_id]
        if query.context == "straight-lane":
            runway = STRAIGHT_RUNWAY
        elif query.context == "curve":
            runway = CURVE_RUNWAY
        else:
            raise ValueError(f"unknown placement context {query.context!r}")
        s = START_MARGIN if query.context == "straight-lane" else 0.0
        while s <= lane.length - runway + 1e-9:
            k = abs(lane.curvature_at(s))
            if query.context == "straight-lane" and k < STRAIGHT_MAX_CURVATURE:
                out.append(LanePosition(lane_id, s))
            elif query.context == "curve" and k >= CURVE_MIN_CURVATURE:
                out.append(LanePosition(lane_id, s))
            s += SPAWN_STEP
    return out


def find_ego_spawn(
    graph: LaneGraph,
    query: PlacementQuery,
    seed: int,
    accept: Optional[Callable[[LanePosition], bool]] = None,
    window: tuple[float, float] = APPROACH_WINDOW,
) -> LanePosition:
    """Pick an ego spawn matching ``query``; deterministic in ``seed``.

    Candidates are visited in a seeded permutation and the first one passing
    ``accept`` (if given) is returned.
    """
    cands = _candidates(graph, query, window)
    if not cands:
        raise NoMatchError(f"map {graph.map_id!r} has no {query.context} location (signal={query.signal})")
    order = substream(seed, "placement.ego").permutation(len(cands))
    for i in order:
        c = cands[int(i)]
        if accept is None or accept(c):
            return c
    raise NoMatchError(f"map {graph.map_id!r}: no {query.context} location satisfies the scenario placements")


def _pose(graph: LaneGraph, pos: LanePosition):
    return graph.lanes[pos.lane_id].pose_at(pos.s, pos.lateral_offset)


def footprints_overlap(graph, a: LanePosition, fa, b: LanePosition, fb, clearance: float = 0.0) -> bool:
    xa, ya, ha = _pose(graph, a)
    xb, yb, hb = _pose(graph, b)
    ca = rect_corners(xa, ya, ha, fa[0] + clearance, fa[1] + clearance)
    cb = rect_corners(xb, yb, hb, fb[0], fb[1])
    return sat_overlap(ca, cb)


def resolve_relative_placement(
    graph: LaneGraph,
    ego: LanePosition,
    rel: RelativePlacement,
    ego_footprint: tuple[float, float] = (4.5, 1.9),
    adv_footprint: tuple[float, float] = (4.5, 1.9),
    window: tuple[float, float] = APPROACH_WINDOW,
) -> LanePosition:
    """Resolve an adversary start position from the ego position and a relation."""
    lane = graph.lane(ego.lane_id)
    r = rel.relation
    if r == "behind" or r == "ahead":
        s = ego.s - rel.gap if r == "behind" else ego.s + rel.gap
        if not 0.0 <= s <= lane.length:
            raise UnsatisfiableRelationError(f"{r} gap {rel.gap} m leaves lane {lane.id}")
        pos = LanePosition(lane.id, s)
    elif r in ("left", "right"):
        nbr = lane.left if r == "left" else lane.right
        if nbr is None:
            raise UnsatisfiableRelationError(f"lane {lane.id} has no {r} neighbour")
        x, y, _ = lane.pose_at(max(0.0, ego.s - rel.gap))
        if ego.s - rel.gap < 0.0:
            raise UnsatisfiableRelationError(f"{r} gap {rel.gap} m leaves lane {lane.id}")
        s, _ = graph.lanes[nbr].project(x, y)
        pos = LanePosition(nbr, s)
    elif r == "opposite-approach":
        pos = _opposite_approach(graph, ego, rel.gap, window)
    else:
        raise ValueError(f"unknown relation {r!r}")
    if footprints_overlap(graph, pos, adv_footprint, ego, ego_footprint):
        raise UnsatisfiableRelationError(f"{r} placement with gap {rel.gap} m overlaps the ego footprint")
    return pos


def conflicting_approaches(graph: LaneGraph, approach_id: str) -> list[str]:
    """Approaches of the same intersection whose connectors cross this one's.

    Ordered with approaches entering from the ego's left first, then by id.
    """
    inter = graph.approach_of.get(approach_id)
    if inter is None:
        return []
    lane = graph.lanes[approach_id]
    own = set(lane.successors)
    ex, ey, eh = lane.pose_at(lane.length)
    found = []
    for other in inter.approaches:
        if other == approach_id:
            continue
        succ = graph.lanes[other].successors
        if any(graph.conflicts_with.get(c, frozenset()) & own for c in succ):
            ox, oy, _ = graph.lanes[other].pose_at(graph.lanes[other].length)
            cross = math.cos(eh) * (oy - ey) - math.sin(eh) * (ox - ex)
            found.append((0 if cross > 0 else 1, other))
    return [o for _, o in sorted(found)]


def _opposite_approach(graph, ego, gap, window):
    cands = conflicting_approaches(graph, ego.lane_id)
    if not cands:
        raise UnsatisfiableRelationError(f"lane {ego.lane_id} has no conflicting approach")
    other = graph.lanes[cands[0]]
    ego_dist = graph.lanes[ego.lane_id].length - ego.s
    d = min(max(ego_dist + gap, window[0]), window[1], other.length)
    return LanePosition(other.id, other.length - d)


def distance_along_route(graph: LaneGraph, a: LanePosition, b: LanePosition) -> Optional[float]:
    """Shortest drivable arc length from ``a`` to ``b``; ``None`` if unreachable.

    Lane changes to a neighbour are free (same projected station); moving to a
    successor costs the rest of the current lane.
    """
    start = (a.lane_id, round(a.s, 9))
    best: dict[tuple[str, float], float] = {start: 0.0}
    heap = [(0.0, a.lane_id, a.s)]
    result = math.inf
    while heap:
        cost, lane_id, s0 = heapq.heappop(heap)
        if cost >= result:
            break
        if cost > best.get((lane_id, round(s0, 9)), math.inf):
            continue
        lane = graph.lanes[lane_id]
        if lane_id == b.lane_id and b.s >= s0 - 1e-9:
            result = min(result, cost + max(0.0, b.s - s0))
        moves = [(nxt, 0.0, lane.length - s0) for nxt in lane.successors]
        for nbr in (lane.left, lane.right):
            if nbr is not None:
                x, y, _ = lane.pose_at(s0)
                ns, _ = graph.lanes[nbr].project(x, y)
                moves.append((nbr, ns, 0.0))
        for nxt, ns, step in moves:
            key = (nxt, round(ns, 9))
            c = cost + step
            if c < best.get(key, math.inf):
                best[key] = c
                heapq.heappush(heap, (c, nxt, ns))
    return None if math.isinf(result) else result


def signal_color_at(graph: LaneGraph, lane_id: str, t: float) -> str:
    return graph.signal_color(lane_id, t)
