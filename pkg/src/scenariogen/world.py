"""Per-tick world state: vehicles bound to lanes, plus neighbourhood queries."""

from __future__ import annotations

import math
from typing import Optional

from .geometry import rect_distance
from .maps import LaneGraph

LEADER_HORIZON = 200.0
# how far sideways another vehicle may be and still count as "on the corridor"
CORRIDOR_LATERAL = 9.0


class LaneChange:
    __slots__ = ("from_lane", "to_lane", "elapsed", "duration", "start_lateral")

    def __init__(self, from_lane, to_lane, duration, start_lateral):
        self.from_lane = from_lane
        self.to_lane = to_lane
        self.elapsed = 0.0
        self.duration = duration
        self.start_lateral = start_lateral

    @property
    def progress(self) -> float:
        return min(1.0, self.elapsed / self.duration)


class VehicleState:
    """Mutable state of one vehicle.

    Args:
        id: vehicle identifier.
        role: 'ego', 'adversary' or 'background'.
        vehicle_class: footprint class name.
        length: footprint length in metres.
        width: footprint width in metres.
        lane_id: lane the vehicle is bound to (the target lane while changing).
        s: arc length along that lane.
        speed: initial speed in m/s.
    """

    __slots__ = (
        "id", "role", "vehicle_class", "length", "width", "lane_id", "s", "lateral", "x", "y", "heading",
        "speed", "accel", "odometer", "route", "lane_change", "alt_s", "alive", "turn",
    )

    def __init__(self, id, role, vehicle_class, length, width, lane_id, s, speed=0.0):
        self.id = id
        self.role = role
        self.vehicle_class = vehicle_class
        self.length = length
        self.width = width
        self.lane_id = lane_id
        self.s = s
        self.lateral = 0.0
        self.x = self.y = self.heading = 0.0
        self.speed = speed
        self.accel = 0.0
        self.odometer = 0.0
        self.route: list[str] = []
        self.lane_change: Optional[LaneChange] = None
        self.alt_s = 0.0
        self.alive = True
        self.turn = "straight"

    @property
    def current_lane(self) -> str:
        """Lane the vehicle centre is in: the old lane until halfway through a change."""
        lc = self.lane_change
        if lc is not None and lc.progress < 0.5:
            return lc.from_lane
        return self.lane_id

    @property
    def box(self):
        return (self.x, self.y, self.heading, self.length, self.width)

    def occupied_lanes(self):
        if self.lane_change is None:
            return ((self.lane_id, self.s),)
        return ((self.lane_id, self.s), (self.lane_change.from_lane, self.alt_s))


class WorldState:
    """Everything agents and conditions may look at during one tick.

    Args:
        graph: the road network.
        dt: fixed tick length in seconds.
        friction: weather friction multiplier applied to actuation limits.
    """

    def __init__(self, graph: LaneGraph, dt: float = 0.05, friction: float = 1.0):
        self.graph = graph
        self.dt = dt
        self.friction = friction
        self.tick_index = 0
        self.vehicles: dict[str, VehicleState] = {}
        self._by_lane: dict[str, list] = {}

    @property
    def t(self) -> float:
        return self.tick_index * self.dt

    # --- bookkeeping -------------------------------------------------------------

    def add(self, v: VehicleState) -> None:
        if v.id in self.vehicles:
            raise ValueError(f"duplicate vehicle id {v.id!r}")
        self.vehicles[v.id] = v
        self.update_pose(v)

    def get(self, vid: str) -> Optional[VehicleState]:
        v = self.vehicles.get(vid)
        return v if v is not None and v.alive else None

    def alive(self) -> list[VehicleState]:
        return [v for v in self.vehicles.values() if v.alive]

    def update_pose(self, v: VehicleState) -> None:
        lane = self.graph.lanes[v.lane_id]
        x, y, _ = lane.pose_at(v.s, v.lateral)
        h = lane.smooth_heading_at(v.s)
        if v.lane_change is not None and v.speed > 0.1:
            lc = v.lane_change
            tau = lc.progress
            dlat = lc.start_lateral * (-6.0 * tau + 6.0 * tau * tau) / lc.duration
            h += math.atan2(dlat, v.speed)
        v.x, v.y, v.heading = x, y, h
        if v.lane_change is not None:
            v.alt_s = self.graph.lanes[v.lane_change.from_lane].project(x, y)[0]

    def rebuild_index(self) -> None:
        idx: dict[str, list] = {}
        for v in self.vehicles.values():
            if not v.alive:
                continue
            for lane_id, s in v.occupied_lanes():
                idx.setdefault(lane_id, []).append((s, v))
        self._by_lane = idx

    def on_lane(self, lane_id: str) -> list:
        return self._by_lane.get(lane_id, [])

    # --- queries -----------------------------------------------------------------

    def distance(self, a: VehicleState, b: VehicleState) -> float:
        return rect_distance(a.box, b.box)

    def signal_color(self, lane_id: str, t: Optional[float] = None) -> Optional[str]:
        if lane_id not in self.graph.approach_of:
            return None
        return self.graph.signal_color(lane_id, self.t if t is None else t)

    def leader(self, v: VehicleState, horizon: float = LEADER_HORIZON, lane_id: Optional[str] = None,
               s: Optional[float] = None, route: Optional[list] = None):
        """Closest vehicle ahead on the lane sequence; ``(vehicle, bumper gap)`` or ``(None, inf)``.

        By default the search starts from the vehicle's own lane and follows its
        route; while changing lanes the lane being left is searched too.
        """
        starts = []
        if lane_id is not None:
            starts.append((lane_id, s, route if route is not None else []))
        else:
            starts.append((v.lane_id, v.s, v.route))
            if v.lane_change is not None:
                starts.append((v.lane_change.from_lane, v.alt_s, []))
        best, best_gap = None, math.inf
        for lid, s0, rt in starts:
            offset = -s0
            lanes = [lid] + list(rt)
            for k, cur in enumerate(lanes):
                if offset > horizon:
                    break
                for so, o in self.on_lane(cur):
                    if o is v:
                        continue
                    d = offset + so
                    if d <= 0.0 and k == 0:
                        continue
                    gap = d - (o.length + v.length) / 2.0
                    if d > 0.0 and gap < best_gap:
                        best, best_gap = o, gap
                if best is not None and best_gap < offset:
                    break
                offset += self.graph.lanes[cur].length
        if best_gap > horizon:
            return None, math.inf
        return best, best_gap

    def longitudinal_offset(self, a: VehicleState, b: VehicleState) -> Optional[float]:
        """Centre-to-centre offset of ``b`` ahead of ``a`` along a's path (negative behind).

        ``None`` when b is not on a's lane, a neighbour of it, or a lane of a's route.
        """
        lanes = self.graph.lanes
        offset = 0.0
        for k, lid in enumerate([a.lane_id] + list(a.route)):
            lane = lanes[lid]
            sb, lat = lane.project(b.x, b.y)
            if abs(lat) <= CORRIDOR_LATERAL and (0.0 < sb < lane.length or k == 0):
                return offset + sb - a.s
            offset += lane.length
        return None
