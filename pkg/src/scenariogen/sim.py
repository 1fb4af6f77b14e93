"""Fixed-step closed-loop simulation and the run trace.

Each tick: (1) the behavior engine and the non-scripted drivers produce
control targets from the current world, (2) kinematics are integrated, (3) the
clock and therefore the signals advance, (4) collisions are detected and (5) a
trace record is appended. Speeds are updated first and positions advance with
the new speed, so position differences reproduce the recorded speeds exactly.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import agents as ag
from .behavior import BehaviorEngine
from .geometry import bounding_radius, rect_corners, rect_distance, sat_overlap
from .maps import LaneGraph, NoMatchError, RelativePlacement, UnsatisfiableRelationError, load_map
from .maps.placement import LanePosition, find_ego_spawn, footprints_overlap, resolve_relative_placement
from .model import EGO_CLASS, EGO_ID, FOOTPRINTS, AtomicBehavior, ScenarioSpec, iter_atomics
from .seeding import substream
from .world import LaneChange, VehicleState, WorldState

DT = 0.05
DEFAULT_DURATION = 30.0
TRACE_FORMAT = 1
ROUTE_DEPTH = 12
# same-lane clearance (centre to centre) kept free around scripted vehicles when placing traffic
BACKGROUND_CLEARANCE = 30.0
BACKGROUND_SPACING = 15.0
BACKGROUND_SPEED_FACTOR = 0.8


class SpawnInfeasibleError(ValueError):
    """The scenario's placements cannot be realised on its map."""


class TraceFormatError(ValueError):
    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


@dataclass
class SimTrace:
    header: dict
    ticks: list = field(default_factory=list)
    events: list = field(default_factory=list)

    @property
    def dt(self) -> float:
        return self.header["dt"]

    @property
    def adversaries(self) -> list:
        return list(self.header["adversaries"])

    def collisions(self) -> list:
        return [e for e in self.events if e["type"] == "collision"]

    def behavior_events(self) -> list:
        return [e for e in self.events if e["type"] == "behavior_status"]

    def vehicle_series(self, vid: str, key: str) -> list:
        """Per-tick value of one vehicle field, ``None`` where the vehicle is absent."""
        out = []
        for rec in self.ticks:
            val = None
            for v in rec["vehicles"]:
                if v["id"] == vid:
                    val = v[key]
                    break
            out.append(val)
        return out

    def records(self):
        yield self.header
        by_tick: dict[int, list] = {}
        for e in self.events:
            by_tick.setdefault(e["tick"], []).append(e)
        for e in by_tick.pop(0, []):
            yield e
        for rec in self.ticks:
            yield rec
            for e in by_tick.pop(rec["tick"], []):
                yield e

    def to_jsonl(self) -> str:
        return "".join(json.dumps(r, sort_keys=True, separators=(",", ":")) + "\n" for r in self.records())

    def write(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_jsonl())

    @classmethod
    def from_jsonl(cls, text: str) -> "SimTrace":
        trace = None
        expected = 1
        for n, line in enumerate(text.splitlines(), 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise TraceFormatError(f"not valid JSON ({exc.msg})", n) from None
            if not isinstance(rec, dict) or "type" not in rec:
                raise TraceFormatError("record without a type", n)
            if trace is None:
                if rec["type"] != "header":
                    raise TraceFormatError("first record must be the header", n)
                trace = cls(rec)
                continue
            if rec["type"] == "tick":
                if rec.get("tick") != expected:
                    raise TraceFormatError(f"expected tick {expected}, found {rec.get('tick')}", n)
                expected += 1
                trace.ticks.append(rec)
            elif rec["type"] in ("collision", "behavior_status"):
                trace.events.append(rec)
            else:
                raise TraceFormatError(f"unknown record type {rec['type']!r}", n)
        if trace is None:
            raise TraceFormatError("empty trace", 1)
        want = trace.header.get("ticks")
        if want is not None and len(trace.ticks) != want:
            raise TraceFormatError(f"trace ends after {len(trace.ticks)} of {want} ticks", len(text.splitlines()))
        return trace

    @classmethod
    def read(cls, path) -> "SimTrace":
        with open(path, encoding="utf-8") as fh:
            return cls.from_jsonl(fh.read())


# --- geometry on states ---------------------------------------------------------------


def shortest_distance(a: VehicleState, b: VehicleState) -> float:
    return rect_distance(a.box, b.box)


def detect_collisions(world: WorldState, seen: Optional[set] = None) -> list[dict]:
    """Overlap events for every pair of alive vehicles.

    Pairs in ``seen`` are skipped and newly colliding pairs are added to it, so
    with a persistent set each pair is reported on its first overlapping tick.
    """
    vs = world.alive()
    if len(vs) < 2:
        return []
    xy = np.array([(v.x, v.y) for v in vs])
    r = np.array([bounding_radius(v.length, v.width) for v in vs])
    d2 = ((xy[:, None, :] - xy[None, :, :]) ** 2).sum(axis=2)
    near = d2 <= (r[:, None] + r[None, :]) ** 2
    out = []
    ii, jj = np.nonzero(np.triu(near, 1))
    for i, j in zip(ii.tolist(), jj.tolist()):
        a, b = vs[i], vs[j]
        pair = tuple(sorted((a.id, b.id)))
        if seen is not None and pair in seen:
            continue
        if sat_overlap(rect_corners(*a.box), rect_corners(*b.box)):
            rel = math.hypot(
                a.speed * math.cos(a.heading) - b.speed * math.cos(b.heading),
                a.speed * math.sin(a.heading) - b.speed * math.sin(b.heading),
            )
            out.append({"type": "collision", "tick": world.tick_index, "t": world.t, "pair": list(pair),
                        "relative_speed": rel})
            if seen is not None:
                seen.add(pair)
    return out


# --- setup ---------------------------------------------------------------------------


def build_route(graph: LaneGraph, lane_id: str, turn: str = "straight", rng=None) -> list[str]:
    route = []
    cur = lane_id
    for _ in range(ROUTE_DEPTH):
        succ = graph.lanes[cur].successors
        if not succ:
            break
        if rng is not None:
            cur = sorted(succ)[int(rng.integers(len(succ)))]
        else:
            cur = graph.choose_successor(cur, turn)
            turn = "straight"  # the turn applies at the next junction only
        route.append(cur)
    return route


def _initial_speed(node, speeds: dict) -> Optional[float]:
    """Start speed implied by the first atomic: a follower matches its target."""
    for _, a in iter_atomics(node):
        if a.kind == "FollowVehicle" and a.config.get("target") in speeds:
            return speeds[a.config["target"]]
        v = a.config.get("target_speed")
        if isinstance(v, (int, float)):
            return float(v)
    return None


@dataclass(frozen=True)
class Jitter:
    """Per-run perturbations drawn from the run seed."""

    ego_speed: float
    speed: dict
    gap: dict
    reaction: dict

    @classmethod
    def draw(cls, spec: ScenarioSpec, enabled: bool = True) -> "Jitter":
        rng = substream(spec.seed, "jitter")
        ego = float(rng.uniform(0.9, 1.1))
        speed, gap, reaction = {}, {}, {}
        for a in spec.adversaries:
            speed[a.id] = float(rng.uniform(0.9, 1.1))
            gap[a.id] = float(rng.uniform(0.85, 1.15))
            reaction[a.id] = float(rng.uniform(0.6, 1.4))
        if not enabled:
            return cls(1.0, {k: 1.0 for k in speed}, {k: 1.0 for k in gap}, {k: 1.0 for k in reaction})
        return cls(ego, speed, gap, reaction)

    def as_dict(self) -> dict:
        return {"ego_speed": self.ego_speed, "speed": self.speed, "gap": self.gap, "reaction": self.reaction}


def place_scenario(spec: ScenarioSpec, graph: LaneGraph, jitter: Jitter) -> tuple[LanePosition, dict]:
    """Ego spawn plus every adversary position; raises SpawnInfeasibleError."""
    ego_fp = FOOTPRINTS[EGO_CLASS]

    def resolve(ego_pos):
        out = {}
        placed = [(ego_pos, ego_fp)]
        for a in spec.adversaries:
            rel = RelativePlacement(a.placement.relation, a.placement.gap * jitter.gap[a.id])
            fp = FOOTPRINTS[a.vehicle_class]
            pos = resolve_relative_placement(graph, ego_pos, rel, ego_fp, fp)
            for other, ofp in placed[1:]:
                if footprints_overlap(graph, pos, fp, other, ofp, clearance=1.0):
                    raise UnsatisfiableRelationError(f"{a.id} overlaps another adversary")
            placed.append((pos, fp))
            out[a.id] = pos
        return out

    def accept(pos):
        try:
            resolve(pos)
            return True
        except UnsatisfiableRelationError:
            return False

    try:
        ego = find_ego_spawn(graph, spec.ego.placement, spec.seed, accept=accept)
    except NoMatchError as exc:
        raise SpawnInfeasibleError(str(exc)) from None
    return ego, resolve(ego)


class Simulation:
    """One scenario run. Use ``run_scenario`` for the common case.

    Args:
        spec: validated scenario.
        graph: map; loaded from the bundled library when omitted.
        dt: tick length.
        jitter: apply seeded per-run perturbations.
    """

    def __init__(self, spec: ScenarioSpec, graph: Optional[LaneGraph] = None, dt: float = DT, jitter: bool = True):
        self.spec = spec
        self.graph = graph or load_map(spec.environment.map_id)
        self.dt = dt
        self.jitter = Jitter.draw(spec, jitter)
        self.world = WorldState(self.graph, dt, spec.environment.weather.friction_multiplier)
        self.roamer_rng = substream(spec.seed, "roamer.routes")
        self.spawn_rng = substream(spec.seed, "placement.background")
        self.fallback: dict[str, ag.Agent] = {}
        self.seen_pairs: set = set()
        self._setup()

    # setup --------------------------------------------------------------------------

    def _setup(self):
        spec, g, w = self.spec, self.graph, self.world
        ego_pos, adv_pos = place_scenario(spec, g, self.jitter)
        L, W = FOOTPRINTS[EGO_CLASS]
        ego = VehicleState(EGO_ID, "ego", EGO_CLASS, L, W, ego_pos.lane_id, ego_pos.s,
                           spec.ego.target_speed * self.jitter.ego_speed)
        ego.route = build_route(g, ego.lane_id)
        w.add(ego)
        speeds = {EGO_ID: ego.speed}
        if spec.ego.controller == "cautious":
            self.fallback[EGO_ID] = ag.CautiousAgent(EGO_ID, spec.ego.target_speed)
        else:
            self.fallback[EGO_ID] = ag.EgoDefensive(EGO_ID, spec.ego.target_speed)
        for a in spec.adversaries:
            pos = adv_pos[a.id]
            L, W = FOOTPRINTS[a.vehicle_class]
            base = _initial_speed(a.behavior, speeds)
            if base is None:
                base = speeds[EGO_ID]
            v = VehicleState(a.id, "adversary", a.vehicle_class, L, W, pos.lane_id, pos.s,
                             base * self.jitter.speed[a.id])
            v.route = build_route(g, v.lane_id)
            w.add(v)
            speeds[a.id] = v.speed
            self.fallback[a.id] = ag.CautiousAgent(a.id, None)
        self._place_background()

        def factory(node: AtomicBehavior, owner: str, config: dict):
            return ag.make_agent(node.kind, node.agent, owner, config, self.jitter.reaction.get(owner, 1.0), self.dt)

        self.engine = BehaviorEngine.from_spec(spec, factory)
        w.rebuild_index()

    def _free(self, lane_id: str, s: float, length: float) -> bool:
        g = self.graph
        for v in self.world.alive():
            for lid, vs in v.occupied_lanes():
                if lid != lane_id:
                    continue
                need = BACKGROUND_SPACING if v.role == "background" else BACKGROUND_CLEARANCE
                if abs(vs - s) < need + (v.length + length) / 2.0:
                    return False
        x, y, h = g.lanes[lane_id].pose_at(s)
        me = rect_corners(x, y, h, length + 2.0, 4.0)
        for v in self.world.alive():
            if sat_overlap(me, rect_corners(*v.box)):
                return False
        return True

    def _spawn_candidates(self):
        g = self.graph
        ego = self.world.vehicles[EGO_ID]
        radius = self.spec.background.spawn_radius
        out = []
        for lane_id in sorted(g.lanes):
            if g.is_connector(lane_id):
                continue
            lane = g.lanes[lane_id]
            s = 5.0
            end = lane.length - 20.0
            while s <= end:
                x, y, _ = lane.pose_at(s)
                if math.hypot(x - ego.x, y - ego.y) <= radius:
                    out.append((lane_id, s))
                s += 5.0
        return out

    def _spawn_one(self, vid, cands) -> Optional[VehicleState]:
        L, W = FOOTPRINTS["sedan"]
        for i in self.spawn_rng.permutation(len(cands)).tolist():
            lane_id, s = cands[i]
            if self._free(lane_id, s, L):
                speed = BACKGROUND_SPEED_FACTOR * self.graph.lanes[lane_id].speed_limit
                v = VehicleState(vid, "background", "sedan", L, W, lane_id, s, speed)
                v.route = build_route(self.graph, lane_id, rng=self.roamer_rng)
                return v
        return None

    def _place_background(self):
        cands = self._spawn_candidates()
        for k in range(self.spec.background.count):
            vid = f"bg_{k}"
            v = self._spawn_one(vid, cands)
            if v is None:
                raise SpawnInfeasibleError(f"no free spawn point for background vehicle {k}")
            self.world.add(v)
            self.fallback[vid] = ag.RoamerAgent(vid)
            self.world.rebuild_index()

    # stepping -----------------------------------------------------------------------

    def _apply_turn(self, v: VehicleState, turn: Optional[str]):
        if turn is None or turn == v.turn or self.graph.is_connector(v.lane_id):
            return
        v.turn = turn
        v.route = build_route(self.graph, v.lane_id, turn)

    def _begin_lane_change(self, v: VehicleState, side: str):
        lane = self.graph.lanes[v.lane_id]
        nbr = lane.left if side == "begin_left" else lane.right
        if nbr is None or v.lane_change is not None:
            return
        s, lat = self.graph.lanes[nbr].project(v.x, v.y)
        v.lane_change = LaneChange(v.lane_id, nbr, ag.LANE_CHANGE_DURATION, lat)
        v.lane_id, v.s, v.lateral = nbr, s, lat
        v.route = build_route(self.graph, nbr, v.turn)

    def _integrate(self, v: VehicleState, ct: ag.ControlTarget) -> None:
        dt, w = self.dt, self.world
        a = ag.clamp_accel(ct.accel, w.friction)
        a = max(a, -v.speed / dt)
        v.accel = a
        v.speed = max(0.0, v.speed + a * dt)
        ds = v.speed * dt
        v.s += ds
        v.odometer += ds
        lc = v.lane_change
        if lc is not None:
            lc.elapsed += dt
            tau = lc.progress
            v.lateral = lc.start_lateral * (1.0 - (3.0 * tau * tau - 2.0 * tau * tau * tau))
            if tau >= 1.0:
                v.lane_change = None
                v.lateral = 0.0
        lanes = self.graph.lanes
        while v.s > lanes[v.lane_id].length:
            if not v.route:
                self._route_end(v)
                return
            v.s -= lanes[v.lane_id].length
            v.lane_id = v.route.pop(0)
            v.lane_change = None
            v.lateral = 0.0
            if v.role == "background" and len(v.route) < 2:
                v.route += build_route(self.graph, v.route[-1] if v.route else v.lane_id, rng=self.roamer_rng)
        w.update_pose(v)

    def _route_end(self, v: VehicleState):
        lane = self.graph.lanes[v.lane_id]
        if v.role == "ego":
            v.s, v.speed = lane.length, 0.0
            self.world.update_pose(v)
            return
        v.alive = False
        if v.role == "background":
            self.world.rebuild_index()
            fresh = self._spawn_one(v.id, self._spawn_candidates())
            if fresh is not None:
                self.world.vehicles[v.id] = fresh
                self.world.update_pose(fresh)

    def step(self) -> list[dict]:
        w = self.world
        w.rebuild_index()
        _, controls = self.engine.tick(w, self.dt)
        events = [dict(e, type="behavior_status", tick=w.tick_index + 1, t=(w.tick_index + 1) * self.dt)
                  for e in self.engine.last_events]
        targets = {}
        for v in w.alive():
            ct = controls.get(v.id)
            if ct is None:
                ct = self.fallback[v.id].control(w, None, self.dt)
            targets[v.id] = ct
        for vid, ct in targets.items():
            v = w.vehicles[vid]
            self._apply_turn(v, ct.route_turn)
            if ct.lane_change != "keep":
                self._begin_lane_change(v, ct.lane_change)
            self._integrate(v, ct)
        w.tick_index += 1
        events.extend(detect_collisions(w, self.seen_pairs))
        return events

    def vehicle_records(self) -> list[dict]:
        out = []
        for v in self.world.alive():
            out.append({
                "id": v.id, "role": v.role, "class": v.vehicle_class, "lane": v.lane_id, "s": v.s,
                "x": v.x, "y": v.y, "heading": v.heading, "speed": v.speed, "accel": v.accel,
                "lane_change": None if v.lane_change is None else v.lane_change.progress,
            })
        return out

    def tick_record(self) -> dict:
        w = self.world
        ego = w.get(EGO_ID)
        delta = {}
        for a in self.spec.adversaries:
            o = w.get(a.id)
            delta[a.id] = None if (o is None or ego is None) else shortest_distance(ego, o)
        return {
            "type": "tick", "tick": w.tick_index, "t": w.t,
            "vehicles": self.vehicle_records(),
            "delta": delta,
            "status": {vid: t.status for vid, t in self.engine.trees.items()},
        }

    def run(self, duration: float = DEFAULT_DURATION) -> SimTrace:
        from .scenario_io import spec_to_obj

        n = int(round(duration / self.dt))
        header = {
            "type": "header", "format": TRACE_FORMAT, "dt": self.dt, "duration": duration, "ticks": n,
            "seed": self.spec.seed, "map_id": self.spec.environment.map_id, "ego": EGO_ID,
            "adversaries": [a.id for a in self.spec.adversaries],
            "friction": self.world.friction, "jitter": self.jitter.as_dict(),
            "scenario": spec_to_obj(self.spec), "initial": self.vehicle_records(),
        }
        trace = SimTrace(header)
        trace.events.append({"type": "behavior_status", "tick": 0, "t": 0.0, "snapshot": self.engine.snapshot()})
        for _ in range(n):
            events = self.step()
            trace.ticks.append(self.tick_record())
            trace.events.extend(events)
        trace.events.append({"type": "behavior_status", "tick": n, "t": n * self.dt, "snapshot": self.engine.snapshot()})
        return trace


def run_scenario(spec: ScenarioSpec, duration: float = DEFAULT_DURATION, graph: Optional[LaneGraph] = None,
                 dt: float = DT, jitter: bool = True) -> SimTrace:
    """Simulate ``spec`` for ``duration`` seconds and return the full trace."""
    if duration <= 0:
        raise ValueError("duration must be > 0")
    return Simulation(spec, graph, dt, jitter).run(duration)
