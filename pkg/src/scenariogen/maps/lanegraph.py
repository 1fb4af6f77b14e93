"""Lane-graph data model and map file loader.

A map is a set of lanes (centerline polylines with width, speed limit,
successor and neighbour references) plus signalised intersections. Lanes that
cross an intersection box are *connectors*; the lanes feeding them are
*approaches*, whose end point is the stop line.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path

import numpy as np
import yaml
from shapely.geometry import LineString

MAP_SCHEMA_VERSION = 1
SIGNAL_SWEEP_DT = 0.05


class MapError(ValueError):
    """Malformed or inconsistent map data."""


class NoMatchError(LookupError):
    """The map has no location matching a placement query."""


class UnsatisfiableRelationError(LookupError):
    """A relative placement cannot be realised on the map."""


class NotSignalizedError(LookupError):
    """Signal lookup on a lane that is not a signalised approach."""


class Lane:
    """A directed lane with a polyline centerline."""

    __slots__ = (
        "id", "points", "width", "speed_limit", "successors", "left", "right",
        "_cum", "_heading", "_px", "_py", "_dx", "_dy", "_seglen", "length",
    )

    def __init__(self, id, points, width, speed_limit, successors=(), left=None, right=None):
        self.id = id
        self.points = tuple((float(x), float(y)) for x, y in points)
        self.width = float(width)
        self.speed_limit = float(speed_limit)
        self.successors = tuple(successors)
        self.left = left
        self.right = right
        if len(self.points) < 2:
            raise MapError(f"lane {id}: centerline needs at least two points")
        cum = [0.0]
        heading = []
        for (x0, y0), (x1, y1) in zip(self.points, self.points[1:]):
            seg = math.hypot(x1 - x0, y1 - y0)
            if seg <= 1e-9:
                raise MapError(f"lane {id}: zero-length centerline segment")
            cum.append(cum[-1] + seg)
            heading.append(math.atan2(y1 - y0, x1 - x0))
        self._cum = cum
        self._heading = heading
        self.length = cum[-1]
        arr = np.asarray(self.points)
        self._px = arr[:-1, 0]
        self._py = arr[:-1, 1]
        self._dx = np.diff(arr[:, 0])
        self._dy = np.diff(arr[:, 1])
        self._seglen = np.diff(np.asarray(cum))

    def __repr__(self):
        return f"Lane({self.id!r}, length={self.length:.1f})"

    def _segment(self, s: float) -> int:
        i = bisect.bisect_right(self._cum, s) - 1
        return min(max(i, 0), len(self._heading) - 1)

    def pose_at(self, s: float, lateral: float = 0.0) -> tuple[float, float, float]:
        """(x, y, heading) at arc length ``s``, offset ``lateral`` to the left."""
        i = self._segment(s)
        h = self._heading[i]
        x0, y0 = self.points[i]
        u = s - self._cum[i]
        c, sn = math.cos(h), math.sin(h)
        return (x0 + u * c - lateral * sn, y0 + u * sn + lateral * c, h)

    def heading_at(self, s: float) -> float:
        return self._heading[self._segment(s)]

    def smooth_heading_at(self, s: float) -> float:
        """Heading interpolated between segment midpoints.

        Polyline headings jump at vertices; blending them keeps the yaw rate
        of a vehicle driving along a sampled arc close to speed / radius.
        """
        i = self._segment(s)
        n = len(self._heading)
        if n == 1:
            return self._heading[0]
        mid = 0.5 * (self._cum[i] + self._cum[i + 1])
        j = i + 1 if s >= mid else i - 1
        if j < 0 or j >= n:
            return self._heading[i]
        mj = 0.5 * (self._cum[j] + self._cum[j + 1])
        w = (s - mid) / (mj - mid)
        return self._heading[i] + w * _wrap(self._heading[j] - self._heading[i])

    def project(self, x: float, y: float) -> tuple[float, float]:
        """Closest centerline point as (s, signed lateral offset, left positive)."""
        rx = x - self._px
        ry = y - self._py
        t = (rx * self._dx + ry * self._dy) / (self._seglen ** 2)
        t = np.clip(t, 0.0, 1.0)
        ex = rx - t * self._dx
        ey = ry - t * self._dy
        d2 = ex * ex + ey * ey
        i = int(np.argmin(d2))
        s = self._cum[i] + float(t[i]) * float(self._seglen[i])
        cross = self._dx[i] * ry[i] - self._dy[i] * rx[i]
        lat = math.sqrt(float(d2[i]))
        return s, (lat if cross >= 0 else -lat)

    def curvature_at(self, s: float, half_window: float = 10.0) -> float:
        """Mean signed heading rate over ``[s - w, s + w]`` in 1/m."""
        a = max(0.0, s - half_window)
        b = min(self.length, s + half_window)
        if b - a < 1e-6:
            return 0.0
        dh = _wrap(self.heading_at(min(b, self.length - 1e-9)) - self.heading_at(a))
        return dh / (b - a)

    def total_turn(self) -> float:
        return _wrap(self._heading[-1] - self._heading[0])


def _wrap(a: float) -> float:
    return (a + math.pi) % (2.0 * math.pi) - math.pi


@dataclass(frozen=True)
class SignalPhase:
    start: float
    end: float
    green: tuple[str, ...]


@dataclass(frozen=True)
class Intersection:
    id: str
    approaches: tuple[str, ...]
    connectors: tuple[str, ...]
    conflicts: tuple[tuple[str, str], ...]
    cycle: float
    phases: tuple[SignalPhase, ...]

    def color_at(self, lane_id: str, t: float) -> str:
        tm = t % self.cycle
        for ph in self.phases:
            if ph.start <= tm < ph.end and lane_id in ph.green:
                return "green"
        return "red"


@dataclass
class LaneGraph:
    """Immutable-after-load road network."""

    map_id: str
    lanes: dict[str, Lane]
    intersections: tuple[Intersection, ...] = ()
    description: str = ""
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.predecessors: dict[str, tuple[str, ...]] = {k: () for k in self.lanes}
        for lane in self.lanes.values():
            for nxt in lane.successors:
                if nxt in self.predecessors:
                    self.predecessors[nxt] += (lane.id,)
        self.approach_of: dict[str, Intersection] = {}
        self.connector_of: dict[str, Intersection] = {}
        self.conflicts_with: dict[str, frozenset[str]] = {}
        for inter in self.intersections:
            for a in inter.approaches:
                self.approach_of[a] = inter
            for c in inter.connectors:
                self.connector_of[c] = inter
            acc: dict[str, set[str]] = {}
            for a, b in inter.conflicts:
                acc.setdefault(a, set()).add(b)
                acc.setdefault(b, set()).add(a)
            for k, v in acc.items():
                self.conflicts_with[k] = frozenset(v)

    def lane(self, lane_id: str) -> Lane:
        try:
            return self.lanes[lane_id]
        except KeyError:
            raise MapError(f"unknown lane {lane_id!r} on map {self.map_id!r}") from None

    def is_connector(self, lane_id: str) -> bool:
        return lane_id in self.connector_of

    def signal_color(self, lane_id: str, t: float) -> str:
        inter = self.approach_of.get(lane_id)
        if inter is None:
            raise NotSignalizedError(f"lane {lane_id!r} is not a signalised approach")
        return inter.color_at(lane_id, t)

    def turn_of(self, from_lane: str, to_lane: str) -> str:
        """Classify a successor as 'straight', 'left' or 'right'."""
        a = self.lanes[from_lane]
        b = self.lanes[to_lane]
        dh = _wrap(b.heading_at(b.length) - a.heading_at(a.length))
        if abs(dh) < math.pi / 4:
            return "straight"
        return "left" if dh > 0 else "right"

    def choose_successor(self, lane_id: str, turn: str = "straight") -> str | None:
        """Successor lane matching ``turn``; falls back to the straightest one."""
        succ = self.lanes[lane_id].successors
        if not succ:
            return None
        ranked = sorted(succ)
        for s in ranked:
            if self.turn_of(lane_id, s) == turn:
                return s
        lane = self.lanes[lane_id]
        return min(
            ranked,
            key=lambda s: abs(_wrap(self.lanes[s].heading_at(self.lanes[s].length) - lane.heading_at(lane.length))),
        )


# --- loading -----------------------------------------------------------------


def map_from_dict(doc: dict) -> LaneGraph:
    known = {"schema_version", "map_id", "description", "lanes", "intersections", "metadata"}
    unknown = set(doc) - known
    if unknown:
        raise MapError(f"unknown map fields: {sorted(unknown)}")
    if int(doc.get("schema_version", 0)) > MAP_SCHEMA_VERSION:
        raise MapError(f"map schema_version {doc['schema_version']} is newer than supported {MAP_SCHEMA_VERSION}")
    lanes = {}
    for ld in doc.get("lanes") or []:
        lane = Lane(
            ld["id"], ld["centerline"], ld["width"], ld["speed_limit"],
            ld.get("successors") or (), ld.get("left"), ld.get("right"),
        )
        if lane.id in lanes:
            raise MapError(f"duplicate lane id {lane.id!r}")
        lanes[lane.id] = lane
    inters = []
    for d in doc.get("intersections") or []:
        sig = d["signal"]
        phases = tuple(
            SignalPhase(float(p["start"]), float(p["end"]), tuple(p["green"])) for p in sig["phases"]
        )
        inters.append(
            Intersection(
                d["id"], tuple(d["approaches"]), tuple(d["connectors"]),
                tuple(tuple(c) for c in d["conflicts"]), float(sig["cycle"]), phases,
            )
        )
    graph = LaneGraph(
        str(doc["map_id"]), lanes, tuple(inters), str(doc.get("description", "")), dict(doc.get("metadata") or {})
    )
    problems = validate_map(graph)
    if problems:
        raise MapError(f"map {graph.map_id!r} invalid: " + "; ".join(problems))
    return graph


def map_to_dict(graph: LaneGraph) -> dict:
    return {
        "schema_version": MAP_SCHEMA_VERSION,
        "map_id": graph.map_id,
        "description": graph.description,
        "metadata": dict(graph.metadata),
        "lanes": [
            {
                "id": ln.id,
                "width": ln.width,
                "speed_limit": ln.speed_limit,
                "successors": list(ln.successors),
                "left": ln.left,
                "right": ln.right,
                "centerline": [[round(x, 4), round(y, 4)] for x, y in ln.points],
            }
            for ln in graph.lanes.values()
        ],
        "intersections": [
            {
                "id": it.id,
                "approaches": list(it.approaches),
                "connectors": list(it.connectors),
                "conflicts": [list(c) for c in it.conflicts],
                "signal": {
                    "cycle": it.cycle,
                    "phases": [{"start": p.start, "end": p.end, "green": list(p.green)} for p in it.phases],
                },
            }
            for it in graph.intersections
        ],
    }


def validate_map(graph: LaneGraph) -> list[str]:
    """All structural, geometric and signal-safety problems of a map."""
    out = []
    lanes = graph.lanes
    for ln in lanes.values():
        for ref in (*ln.successors, ln.left, ln.right):
            if ref is not None and ref not in lanes:
                out.append(f"lane {ln.id}: reference to unknown lane {ref!r}")
        if not LineString(ln.points).is_simple:
            out.append(f"lane {ln.id}: centerline self-intersects")
        for side, ref in (("left", ln.left), ("right", ln.right)):
            if ref in lanes:
                back = lanes[ref].right if side == "left" else lanes[ref].left
                if back != ln.id:
                    out.append(f"lane {ln.id}: {side} neighbour {ref} does not point back")
    for it in graph.intersections:
        for ref in (*it.approaches, *it.connectors):
            if ref not in lanes:
                out.append(f"intersection {it.id}: unknown lane {ref!r}")
        if out:
            continue
        for a, b in it.conflicts:
            la, lb = lanes[a], lanes[b]
            ga = LineString(la.points).buffer(la.width / 2 - 0.25)
            gb = LineString(lb.points).buffer(lb.width / 2 - 0.25)
            if not ga.intersects(gb):
                out.append(f"intersection {it.id}: conflict pair {a}/{b} does not overlap")
        out.extend(_signal_conflicts(graph, it))
    return out


def _signal_conflicts(graph: LaneGraph, it: Intersection) -> list[str]:
    pairs = set()
    for a, b in it.conflicts:
        for pa in graph.predecessors.get(a, ()):
            for pb in graph.predecessors.get(b, ()):
                if pa in it.approaches and pb in it.approaches:
                    pairs.add(tuple(sorted((pa, pb))))
    out = []
    n = int(round(it.cycle / SIGNAL_SWEEP_DT))
    for k in range(n):
        t = k * SIGNAL_SWEEP_DT
        for pa, pb in sorted(pairs):
            if it.color_at(pa, t) == "green" and it.color_at(pb, t) == "green":
                out.append(f"intersection {it.id}: conflicting approaches {pa}/{pb} both green at t={t:.2f}")
                return out
    return out


def load_map_file(path: str | Path) -> LaneGraph:
    text = Path(path).read_text(encoding="utf-8")
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise MapError(f"{path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise MapError(f"{path}: map document must be a mapping")
    return map_from_dict(doc)


def bundled_map_ids() -> list[str]:
    root = resources.files("scenariogen") / "data" / "maps"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".yaml"))


@lru_cache(maxsize=None)
def load_map(map_id: str) -> LaneGraph:
    """Load a bundled map by id (cached; maps are read-only after load)."""
    root = resources.files("scenariogen") / "data" / "maps"
    f = root / f"{map_id}.yaml"
    if not f.is_file():
        raise MapError(f"no bundled map {map_id!r}; available: {bundled_map_ids()}")
    with resources.as_file(f) as p:
        return load_map_file(p)
