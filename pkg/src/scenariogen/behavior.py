"""Behavior tree execution.

Each adversary owns one tree of atomic behaviors composed by sequential and
concurrent nodes. The engine mirrors the immutable spec tree with runtime
nodes that carry status, ticks them once per simulation step and collects the
control target produced by whichever atomic currently drives each vehicle.

Within one atomic tick the order is: agent control, fail condition, success
condition, timeout. Timeout counts as failure. Terminal statuses are absorbing:
a finished node is never ticked again, and children still running when their
parent finishes are simply left running (they are no longer ticked).
"""

from __future__ import annotations

from typing import Callable, Optional

from . import registry
from .model import AtomicBehavior, BehaviorNode, Concurrent, Condition, Sequential

RUNNING = "Running"
SUCCEEDED = "Succeeded"
FAILED = "Failed"
STATUSES = (RUNNING, SUCCEEDED, FAILED)


class BehaviorRuntimeError(RuntimeError):
    pass


class MissingVehicle(Exception):
    def __init__(self, vehicle_id):
        super().__init__(vehicle_id)
        self.vehicle_id = vehicle_id


class TickContext:
    """Per-tick data handed down the tree.

    Args:
        world: the world the conditions are evaluated against (may be None for
            scripted trees).
        tick_index: engine tick number, starting at 0.
        dt: tick length in seconds.
    """

    def __init__(self, world, tick_index: int, dt: float):
        self.world = world
        self.tick_index = tick_index
        self.dt = dt
        self.controls: dict = {}
        self.events: list = []


class NodeRun:
    kind = "node"

    def __init__(self):
        self.status = RUNNING
        self.first_tick: Optional[int] = None
        self.end_tick: Optional[int] = None
        self.ticks = 0
        self.reason = ""

    @property
    def children(self) -> list["NodeRun"]:
        return []

    def tick(self, ctx: TickContext) -> str:
        if self.status != RUNNING:
            return self.status
        if self.first_tick is None:
            self.first_tick = ctx.tick_index
        self.ticks += 1
        status = self._step(ctx)
        if status != RUNNING:
            self.status = status
            self.end_tick = ctx.tick_index
        return status

    def _step(self, ctx: TickContext) -> str:  # pragma: no cover - abstract
        raise NotImplementedError

    def elapsed(self, dt: float) -> float:
        """Active time including the current tick."""
        return self.ticks * dt

    def walk(self):
        yield self
        for c in self.children:
            yield from c.walk()


class SequentialRun(NodeRun):
    kind = "sequential"

    def __init__(self, children: list[NodeRun]):
        super().__init__()
        self._children = children
        self.index = 0

    @property
    def children(self):
        return self._children

    def _step(self, ctx):
        child = self._children[self.index]
        st = child.tick(ctx)
        if st == FAILED:
            self.reason = f"child {self.index} failed"
            return FAILED
        if st == SUCCEEDED:
            self.index += 1
            if self.index == len(self._children):
                return SUCCEEDED
        return RUNNING


class ConcurrentRun(NodeRun):
    kind = "concurrent"

    def __init__(self, children: list[NodeRun], policy: str = "all-succeed"):
        super().__init__()
        self._children = children
        self.policy = policy

    @property
    def children(self):
        return self._children

    def _step(self, ctx):
        for c in self._children:
            if c.status == RUNNING:
                c.tick(ctx)
        sts = [c.status for c in self._children]
        if self.policy == "any-succeeds":
            if SUCCEEDED in sts:
                return SUCCEEDED
            if all(s == FAILED for s in sts):
                self.reason = "all children failed"
                return FAILED
            return RUNNING
        if FAILED in sts:
            self.reason = f"child {sts.index(FAILED)} failed"
            return FAILED
        if all(s == SUCCEEDED for s in sts):
            return SUCCEEDED
        return RUNNING


class ScriptedRun(NodeRun):
    """Leaf that reports ``outcome`` on its ``duration``-th tick.

    Used to test composition without real agents.
    """

    kind = "scripted"

    def __init__(self, duration: int, outcome: str, label: str = ""):
        super().__init__()
        if duration < 1:
            raise ValueError("duration must be >= 1")
        self.duration = duration
        self.outcome = outcome
        self.label = label

    def _step(self, ctx):
        return self.outcome if self.ticks >= self.duration else RUNNING


# --- conditions ---------------------------------------------------------------------


def evaluate_condition(cond: Condition, world, owner: str, elapsed: float) -> bool:
    """Evaluate ``cond`` for vehicle ``owner``.

    Raises MissingVehicle if the owner or a referenced vehicle is absent.
    """
    op = cond.op
    if op == "all":
        return all(evaluate_condition(c, world, owner, elapsed) for c in cond.children)
    if op == "any":
        return any(evaluate_condition(c, world, owner, elapsed) for c in cond.children)
    if op == "not":
        return not evaluate_condition(cond.children[0], world, owner, elapsed)
    if op == "elapsed":
        return elapsed >= cond.args[0] - 1e-9
    me = world.get(owner)
    if me is None:
        raise MissingVehicle(owner)
    if op == "speed_below":
        return me.speed < cond.args[0]
    if op == "passed_position":
        return me.odometer >= cond.args[0]
    other = world.get(cond.args[0])
    if other is None:
        raise MissingVehicle(cond.args[0])
    if op == "same_lane_as":
        return me.current_lane == other.current_lane
    if op == "gap_below":
        return world.distance(me, other) < cond.args[1]
    if op == "ahead_of":
        off = world.longitudinal_offset(other, me)
        if off is None:
            return False
        return off - (me.length + other.length) / 2 >= cond.args[1]
    raise BehaviorRuntimeError(f"unknown condition {op!r}")


# --- atomics -------------------------------------------------------------------------


class AtomicRun(NodeRun):
    kind = "atomic"

    def __init__(self, spec: AtomicBehavior, owner: str, agent=None):
        super().__init__()
        self.spec = spec
        self.owner = owner
        self.agent = agent
        entry = registry.get_kind(spec.kind)
        self.config = entry.resolved_config(spec.config)
        self.controls = entry.controls
        if spec.success is not None:
            self.success = spec.success
        elif entry.default_success is not None:
            self.success = entry.default_success(self.config)
        else:
            self.success = None
        self.refs = [self.config[n] for n, p in entry.schema.items() if p.type == "vehicle" and n in self.config]

    def _step(self, ctx):
        world = ctx.world
        if self.agent is not None and self.controls:
            if self.owner in ctx.controls:
                raise BehaviorRuntimeError(f"two behaviors control {self.owner!r} in one tick")
            ctx.controls[self.owner] = self.agent.control(world, self, ctx.dt)
        try:
            for ref in [self.owner] + self.refs:
                if world.get(ref) is None:
                    raise MissingVehicle(ref)
            el = self.elapsed(ctx.dt)
            if self.spec.fail is not None and evaluate_condition(self.spec.fail, world, self.owner, el):
                self.reason = "fail condition met"
                return FAILED
            if self.success is not None and evaluate_condition(self.success, world, self.owner, el):
                return SUCCEEDED
        except MissingVehicle as exc:
            self.reason = f"vehicle {exc.vehicle_id!r} is gone"
            return FAILED
        if self.spec.timeout is not None and self.ticks >= round(self.spec.timeout / ctx.dt):
            self.reason = "timeout"
            return FAILED
        return RUNNING


AgentFactory = Callable[[AtomicBehavior, str, dict], object]


def build_run(node: BehaviorNode, owner: str, agent_factory: Optional[AgentFactory] = None) -> NodeRun:
    """Create the runtime mirror of a spec tree for vehicle ``owner``."""
    if isinstance(node, AtomicBehavior):
        run = AtomicRun(node, owner)
        if agent_factory is not None and run.controls:
            run.agent = agent_factory(node, owner, run.config)
        return run
    if isinstance(node, Sequential):
        return SequentialRun([build_run(c, owner, agent_factory) for c in node.children])
    if isinstance(node, Concurrent):
        return ConcurrentRun([build_run(c, owner, agent_factory) for c in node.children], node.policy)
    raise TypeError(f"not a behavior node: {node!r}")


def tick_node(run: NodeRun, world, tick_index: int, dt: float) -> tuple[str, dict]:
    """Tick one tree; returns its status and the control targets it produced."""
    ctx = TickContext(world, tick_index, dt)
    return run.tick(ctx), ctx.controls


class BehaviorEngine:
    """All adversary trees of one run.

    The trees run side by side and independently: one adversary failing does
    not stop the others. The overall status is Running while any tree runs,
    then Succeeded if every tree succeeded and Failed otherwise.
    """

    def __init__(self, trees: dict[str, NodeRun]):
        self.trees = dict(trees)
        self.tick_index = 0

    @classmethod
    def from_spec(cls, spec, agent_factory: Optional[AgentFactory] = None) -> "BehaviorEngine":
        return cls({a.id: build_run(a.behavior, a.id, agent_factory) for a in spec.adversaries})

    @property
    def status(self) -> str:
        sts = [t.status for t in self.trees.values()]
        if RUNNING in sts:
            return RUNNING
        return FAILED if FAILED in sts else SUCCEEDED

    def tick(self, world, dt: float) -> tuple[str, dict]:
        ctx = TickContext(world, self.tick_index, dt)
        for vid, tree in self.trees.items():
            before = {id(n): n.status for n in tree.walk()}
            tree.tick(ctx)
            for path, n in _paths(tree, vid):
                if n.status != RUNNING and before[id(n)] == RUNNING:
                    ctx.events.append(
                        {"vehicle": vid, "node": path, "status": n.status, "reason": n.reason,
                         "behavior": getattr(getattr(n, "spec", None), "kind", n.kind)}
                    )
        self.tick_index += 1
        self.last_events = ctx.events
        return self.status, ctx.controls

    def active_atomic(self, vid: str) -> Optional[AtomicRun]:
        """The running controlling atomic of a vehicle, if any."""
        tree = self.trees.get(vid)
        if tree is None or tree.status != RUNNING:
            return None
        return _active(tree)

    def snapshot(self) -> dict:
        return snapshot_web(self.trees)


def _active(n: NodeRun):
    if n.status != RUNNING:
        return None
    if isinstance(n, AtomicRun):
        return n if n.controls else None
    if isinstance(n, SequentialRun):
        return _active(n.children[n.index])
    for c in n.children:
        a = _active(c)
        if a is not None:
            return a
    return None


def _paths(n: NodeRun, path: str):
    yield path, n
    if isinstance(n, SequentialRun):
        for i, c in enumerate(n.children):
            yield from _paths(c, f"{path}.sequential[{i}]")
    elif isinstance(n, ConcurrentRun):
        for i, c in enumerate(n.children):
            yield from _paths(c, f"{path}.concurrent[{i}]")


def snapshot_node(n: NodeRun) -> dict:
    from .scenario_io import condition_to_obj

    out = {"type": n.kind, "status": n.status}
    if n.reason:
        out["reason"] = n.reason
    if isinstance(n, AtomicRun):
        out.update(kind=n.spec.kind, agent=n.spec.agent, config=dict(n.spec.config))
        if n.spec.success is not None:
            out["success"] = condition_to_obj(n.spec.success)
        if n.spec.fail is not None:
            out["fail"] = condition_to_obj(n.spec.fail)
        if n.spec.timeout is not None:
            out["timeout"] = n.spec.timeout
    elif isinstance(n, ScriptedRun):
        out.update(duration=n.duration, outcome=n.outcome, label=n.label)
    else:
        out["children"] = [snapshot_node(c) for c in n.children]
        if isinstance(n, ConcurrentRun):
            out["policy"] = n.policy
    return out


def snapshot_web(trees: dict[str, NodeRun]) -> dict:
    """Serializable description of every tree with per-node status."""
    return {vid: snapshot_node(t) for vid, t in trees.items()}


def node_from_snapshot(d: dict) -> BehaviorNode:
    """Rebuild the spec tree a snapshot was taken from."""
    from .scenario_io import condition_from_obj

    if d["type"] == "atomic":
        return AtomicBehavior(
            d["kind"], d["agent"], dict(d["config"]),
            condition_from_obj(d["success"]) if "success" in d else None,
            condition_from_obj(d["fail"]) if "fail" in d else None,
            d.get("timeout"),
        )
    ch = tuple(node_from_snapshot(c) for c in d["children"])
    if d["type"] == "sequential":
        return Sequential(ch)
    return Concurrent(ch, d["policy"])
