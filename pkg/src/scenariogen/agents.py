"""Driving agents: longitudinal acceleration plus lane-change intent per tick.

All longitudinal laws are IDM-shaped:

    a = a_max * (1 - (v / v0)^4 - (s* / s)^2),  s* = s0 + v T + v dv / (2 sqrt(a_max b))

where s is the bumper gap to the leader and dv the approach rate. Agents that
take an ``aggressiveness`` in [0, 1] interpolate linearly between a safe and
an aggressive parameter set, documented on each agent.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Optional

from .world import VehicleState, WorldState

MAX_ACCEL = 3.0
MAX_DECEL = 8.0
LANE_CHANGE_DURATION = 2.0
TARGET_LOST_DECEL = 2.0
# a stop is attempted only when it needs at most this deceleration (m/s^2)
STOP_FEASIBLE_DECEL = 5.0
STOP_MARGIN = 1.0
YIELD_HORIZON = 8.0


@dataclass(frozen=True)
class ControlTarget:
    accel: float
    lane_change: str = "keep"  # keep | begin_left | begin_right
    target_lane_progress: float = 0.0
    route_turn: Optional[str] = None
    flags: tuple = field(default_factory=tuple)


@dataclass(frozen=True)
class AgentParams:
    """IDM tunables.

    Args:
        headway: desired time headway T in seconds.
        min_gap: standstill gap s0 in metres.
        max_accel: IDM acceleration a_max.
        comfort_decel: IDM comfortable deceleration b.
    """

    headway: float = 1.5
    min_gap: float = 2.0
    max_accel: float = 2.0
    comfort_decel: float = 3.0

    def __post_init__(self):
        if self.headway <= 0 or self.min_gap <= 0:
            raise ValueError("headway and min_gap must be > 0")


CAUTIOUS = AgentParams(headway=1.8, min_gap=3.0, max_accel=1.5, comfort_decel=2.5)
ROUTE = AgentParams(headway=1.4, min_gap=2.5, max_accel=2.0, comfort_decel=3.0)


def accel_limits(friction: float) -> tuple[float, float]:
    return -MAX_DECEL * friction, MAX_ACCEL * friction


def clamp_accel(a: float, friction: float) -> float:
    lo, hi = accel_limits(friction)
    return min(max(a, lo), hi)


def lerp(a: float, b: float, w: float) -> float:
    return a + (b - a) * w


def idm(v: float, v0: float, gap: float, dv: float, p: AgentParams) -> float:
    """IDM acceleration; ``gap`` may be ``inf`` for a free road."""
    free = 1.0 - (v / max(v0, 0.1)) ** 4 if v0 > 0 else -1.0
    if math.isinf(gap):
        return p.max_accel * free
    s_star = p.min_gap + max(0.0, v * p.headway + v * dv / (2.0 * math.sqrt(p.max_accel * p.comfort_decel)))
    return p.max_accel * (free - (s_star / max(gap, 0.1)) ** 2)


def follow_accel(world: WorldState, me: VehicleState, v0: float, p: AgentParams, **leader_kw) -> float:
    lead, gap = world.leader(me, **leader_kw)
    if lead is None:
        return idm(me.speed, v0, math.inf, 0.0, p)
    return idm(me.speed, v0, gap, me.speed - lead.speed, p)


def stop_accel(v: float, d: float, friction: float) -> float:
    """Constant deceleration that stops ``STOP_MARGIN`` before a line ``d`` metres ahead."""
    room = d - STOP_MARGIN
    if room <= 0.05:
        return -MAX_DECEL * friction if v > 0 else 0.0
    return -(v * v) / (2.0 * room)


class Agent:
    """Base class; ``control`` maps the world to a ControlTarget for ``vid``."""

    def __init__(self, vid: str):
        self.vid = vid

    def control(self, world: WorldState, run=None, dt: float = 0.05) -> ControlTarget:
        me = world.get(self.vid)
        if me is None:
            return ControlTarget(0.0, flags=("vehicle_gone",))
        return self.decide(world, me, run)

    def decide(self, world, me, run) -> ControlTarget:  # pragma: no cover - abstract
        raise NotImplementedError


# --- intersection logic --------------------------------------------------------------


def _next_connector(world: WorldState, me: VehicleState) -> Optional[str]:
    if me.lane_id not in world.graph.approach_of or not me.route:
        return None
    nxt = me.route[0]
    return nxt if world.graph.is_connector(nxt) else None


def _eta(d: float, v: float) -> float:
    return d / max(v, 0.5)


def must_yield(world: WorldState, me: VehicleState, connector: str, d: float) -> bool:
    """True when conflicting traffic has priority over ``me`` at ``connector``.

    Priority goes to vehicles already inside a conflicting connector and to
    moving, non-braking vehicles that reach their stop line earlier.
    """
    g = world.graph
    my_eta = _eta(d, me.speed)
    for other_c in g.conflicts_with.get(connector, ()):
        for _, o in world.on_lane(other_c):
            if o is not me and o.speed > 0.1:
                return True
        for pred in g.predecessors.get(other_c, ()):
            lane = g.lanes[pred]
            for so, o in world.on_lane(pred):
                if o is me or not o.route or o.route[0] != other_c:
                    continue
                if o.speed < 0.5 or o.accel < -1.0:
                    continue
                od = lane.length - so - o.length / 2.0
                oe = _eta(od, o.speed)
                if oe < min(my_eta, YIELD_HORIZON) or (oe == my_eta and o.id < me.id):
                    return True
    return False


def intersection_accel(world: WorldState, me: VehicleState, a: float, obey_signals=True, yield_conflicts=True):
    """Cap ``a`` so the vehicle stops at the line for red or for priority traffic."""
    conn = _next_connector(world, me)
    if conn is None:
        return a
    lane = world.graph.lanes[me.lane_id]
    d = lane.length - me.s - me.length / 2.0
    stop = False
    if obey_signals:
        color = world.signal_color(me.lane_id)
        arrival = world.signal_color(me.lane_id, world.t + _eta(d, me.speed))
        stop = color == "red" or arrival == "red"
    if not stop and yield_conflicts:
        stop = must_yield(world, me, conn, d)
    if not stop:
        return a
    need = me.speed * me.speed / (2.0 * max(d - STOP_MARGIN, 1e-3))
    if d > STOP_MARGIN and need > STOP_FEASIBLE_DECEL * world.friction and me.speed > 1.0:
        return a  # too late to stop comfortably: keep going
    return min(a, stop_accel(me.speed, d, world.friction))


# --- agents --------------------------------------------------------------------------


class CautiousAgent(Agent):
    """Rule-based careful driver: obeys signals, yields, follows at a long headway.

    Args:
        vid: controlled vehicle.
        target_speed: desired speed; ``None`` means the lane speed limit.
        params: IDM parameters.
        turn: preferred turn at the next junction.
    """

    def __init__(self, vid, target_speed=None, params: AgentParams = CAUTIOUS, turn: Optional[str] = None):
        super().__init__(vid)
        self.target_speed = target_speed
        self.params = params
        self.turn = turn

    def desired_speed(self, world, me):
        limit = world.graph.lanes[me.lane_id].speed_limit
        return limit if self.target_speed is None else self.target_speed

    def decide(self, world, me, run):
        a = follow_accel(world, me, self.desired_speed(world, me), self.params)
        a = intersection_accel(world, me, a)
        return ControlTarget(clamp_accel(a, world.friction), route_turn=self.turn)


class RouteAgent(CautiousAgent):
    """Signal-obeying route following with ordinary (not cautious) headways."""

    def __init__(self, vid, target_speed=None, turn=None):
        super().__init__(vid, target_speed, ROUTE, turn)


class EgoDefensive(CautiousAgent):
    """Cautious driving plus an emergency-brake override.

    Maximum braking is commanded whenever the leader is closing in and the gap
    would be used up within ``reaction_headway`` seconds at the current
    closing speed.
    """

    def __init__(self, vid, target_speed, reaction_headway: float = 1.2):
        super().__init__(vid, target_speed, CAUTIOUS)
        self.reaction_headway = reaction_headway

    def decide(self, world, me, run):
        ct = super().decide(world, me, run)
        lead, gap = world.leader(me)
        if lead is not None:
            closing = me.speed - lead.speed
            if closing > 0.0 and gap < self.reaction_headway * closing:
                return ControlTarget(-MAX_DECEL * world.friction, flags=("emergency_brake",))
        return ct


class RoamerAgent(CautiousAgent):
    """Background traffic: cautious driving along a randomly chosen route."""

    def __init__(self, vid):
        super().__init__(vid, None, CAUTIOUS)


class AccAgent(Agent):
    """Car following of a chosen target (FollowVehicle).

    Aggressiveness 0 -> 1 moves headway from 2.0 s to 0.4 s and the standstill
    gap from 4.0 m to 1.0 m. The command reaches the wheels after a reaction
    delay, so the vehicle responds late to sudden changes.

    Args:
        vid: controlled vehicle.
        target: vehicle to follow.
        target_speed: cruise speed when the target is far.
        aggressiveness: 0 (relaxed) to 1 (tailgating).
        reaction_delay: seconds between perceiving and acting.
    """

    def __init__(self, vid, target, target_speed, aggressiveness, reaction_delay=0.0, dt=0.05):
        super().__init__(vid)
        self.target = target
        self.target_speed = target_speed
        self.params = self.params_for(aggressiveness)
        n = int(round(reaction_delay / dt))
        self.pending = deque([0.0] * n)

    @staticmethod
    def params_for(aggressiveness: float) -> AgentParams:
        w = min(max(aggressiveness, 0.0), 1.0)
        return AgentParams(headway=lerp(2.0, 0.4, w), min_gap=lerp(4.0, 1.0, w), max_accel=2.0, comfort_decel=3.0)

    def decide(self, world, me, run):
        tgt = world.get(self.target)
        flags = ()
        if tgt is None:
            want = -TARGET_LOST_DECEL if me.speed > 0 else 0.0
            flags = ("target_lost",)
        else:
            want = follow_accel(world, me, self.target_speed, self.params)
            off = world.longitudinal_offset(me, tgt)
            if off is not None and off > 0:
                gap = off - (me.length + tgt.length) / 2.0
                want = min(want, idm(me.speed, self.target_speed, gap, me.speed - tgt.speed, self.params))
        self.pending.append(want)
        a = self.pending.popleft()
        return ControlTarget(clamp_accel(a, world.friction), flags=flags)


class OvertakeAgent(Agent):
    """Drive past the target on the current lane at ``target_speed``.

    Aggressiveness raises the IDM acceleration from 1.5 to 3.0 m/s^2.
    """

    def __init__(self, vid, target, target_speed, aggressiveness=0.5):
        super().__init__(vid)
        self.target = target
        self.target_speed = target_speed
        self.params = AgentParams(headway=lerp(1.5, 0.8, aggressiveness), min_gap=2.0,
                                  max_accel=lerp(1.5, 3.0, aggressiveness), comfort_decel=3.0)

    def decide(self, world, me, run):
        a = follow_accel(world, me, self.target_speed, self.params)
        flags = () if world.get(self.target) is not None else ("target_lost",)
        return ControlTarget(clamp_accel(a, world.friction), flags=flags)


class CutInAgent(Agent):
    """Pass the victim on a neighbour lane, then change into the victim's lane.

    The lane change starts once the bumper lead over the victim reaches
    ``trigger_gap * (1 - 0.75 * aggressiveness)``. From then on the cutter
    holds a speed just above the victim's, closer to it the more aggressive,
    so the gap it cuts into stays short.
    """

    def __init__(self, vid, victim, target_speed, trigger_gap=10.0, aggressiveness=0.5):
        super().__init__(vid)
        self.victim = victim
        self.target_speed = target_speed
        self.trigger = trigger_gap * (1.0 - 0.75 * aggressiveness)
        self.merge_margin = lerp(4.0, 0.5, aggressiveness)
        self.params = AgentParams(headway=lerp(1.5, 0.6, aggressiveness), min_gap=lerp(2.5, 1.0, aggressiveness),
                                  max_accel=lerp(1.5, 3.0, aggressiveness), comfort_decel=3.0)

    def lead_over(self, world, me, victim) -> Optional[float]:
        off = world.longitudinal_offset(victim, me)
        if off is None:
            return None
        return off - (me.length + victim.length) / 2.0

    def decide(self, world, me, run):
        victim = world.get(self.victim)
        a = follow_accel(world, me, self.target_speed, self.params)
        if victim is None:
            return ControlTarget(clamp_accel(a, world.friction), flags=("target_lost",))
        if me.lane_change is not None:
            a = follow_accel(world, me, min(self.target_speed, victim.speed + self.merge_margin), self.params)
            return ControlTarget(clamp_accel(a, world.friction), target_lane_progress=me.lane_change.progress)
        lane = world.graph.lanes[me.lane_id]
        side = "begin_left" if lane.left == victim.lane_id else "begin_right" if lane.right == victim.lane_id else None
        if side is None or world.graph.is_connector(me.lane_id):
            return ControlTarget(clamp_accel(a, world.friction))
        lead = self.lead_over(world, me, victim)
        if lead is not None and lead >= self.trigger:
            return ControlTarget(clamp_accel(a, world.friction), lane_change=side)
        return ControlTarget(clamp_accel(a, world.friction))


class BrakeAgent(Agent):
    """Constant braking to a standstill (StopVehicle, SuddenBrake).

    ``deceleration`` may be the string ``"max"`` for the vehicle limit; any
    value is capped at the friction-scaled limit.
    """

    def __init__(self, vid, deceleration="max"):
        super().__init__(vid)
        self.deceleration = deceleration

    def decide(self, world, me, run):
        limit = MAX_DECEL * world.friction
        d = limit if self.deceleration == "max" else min(float(self.deceleration), limit)
        if me.speed <= 0.0:
            return ControlTarget(0.0)
        return ControlTarget(-d)


class IdleAgent(Agent):
    """Stay stopped (brakes gently first if still moving)."""

    def decide(self, world, me, run):
        if me.speed <= 0.0:
            return ControlTarget(0.0)
        return ControlTarget(-min(3.0, MAX_DECEL * world.friction))


class RedLightRunner(Agent):
    """Route following that ignores signals and never yields; still avoids rear-ending its leader."""

    def __init__(self, vid, target_speed, turn="straight"):
        super().__init__(vid)
        self.target_speed = target_speed
        self.turn = turn

    def decide(self, world, me, run):
        a = follow_accel(world, me, self.target_speed, ROUTE)
        return ControlTarget(clamp_accel(a, world.friction), route_turn=self.turn)


def make_agent(kind: str, agent: str, vid: str, config: dict, reaction_scale: float = 1.0, dt: float = 0.05) -> Agent:
    """Instantiate the agent an atomic behavior is bound to.

    Args:
        kind: behavior kind.
        agent: agent identifier from the behavior.
        vid: controlled vehicle.
        config: resolved behavior configuration (defaults filled).
        reaction_scale: per-run multiplier on reaction delays.
        dt: tick length.
    """
    c = config
    if agent == "acc":
        return AccAgent(vid, c["target"], c["target_speed"], c["aggressiveness"],
                        c.get("reaction_time", 0.0) * reaction_scale, dt)
    if agent == "cutin":
        return CutInAgent(vid, c["victim"], c["target_speed"], c.get("trigger_gap", 10.0), c.get("aggressiveness", 0.5))
    if agent == "overtake":
        return OvertakeAgent(vid, c["target"], c["target_speed"], c.get("aggressiveness", 0.5))
    if agent == "brake":
        return BrakeAgent(vid, c.get("deceleration", "max"))
    if agent == "idle":
        return IdleAgent(vid)
    if agent == "red_light_runner":
        return RedLightRunner(vid, c["target_speed"], c.get("turn", "straight"))
    if agent == "route":
        return RouteAgent(vid, c.get("target_speed"), c.get("turn"))
    if agent == "cautious":
        return CautiousAgent(vid, c.get("target_speed"), CAUTIOUS, c.get("turn"))
    raise ValueError(f"no agent {agent!r} for behavior kind {kind!r}")
