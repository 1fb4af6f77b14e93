"""Generator for the bundled maps.

Run ``python -m scenariogen.maps.build`` to rewrite ``data/maps/*.yaml``.
The shipped files are the output of this module and are checked by the tests.
"""

from __future__ import annotations

import math
from pathlib import Path

import yaml
from shapely.geometry import LineString

from .lanegraph import Intersection, Lane, LaneGraph, SignalPhase, map_to_dict

HIGHWAY_LENGTH = 2000.0
HIGHWAY_LANES = 3
LANE_WIDTH = 3.75
HIGHWAY_LIMIT = 25.0

CURVE_RADIUS = 150.0
CURVE_SWEEP = math.pi
CURVE_LEAD_IN = 150.0
CURVE_LEAD_OUT = 400.0
CURVE_LIMIT = 16.7

ARM_LENGTH = 300.0
XING_LANE_WIDTH = 3.5
STOP_OFFSET = 10.0
XING_LIMIT = 13.9
SIGNAL_CYCLE = 40.0
SIGNAL_PHASES = ((0.0, 17.0, ("n", "s")), (20.0, 37.0, ("e", "w")))


def highway() -> LaneGraph:
    lanes = {}
    for k in range(HIGHWAY_LANES):
        y = k * LANE_WIDTH
        lanes[f"lane_{k}"] = Lane(
            f"lane_{k}", [(0.0, y), (HIGHWAY_LENGTH, y)], LANE_WIDTH, HIGHWAY_LIMIT, (),
            f"lane_{k + 1}" if k + 1 < HIGHWAY_LANES else None,
            f"lane_{k - 1}" if k > 0 else None,
        )
    return LaneGraph(
        "highway_straight", lanes, (),
        "Straight one-way highway, three lanes; lane_0 is the rightmost.",
        {"length": HIGHWAY_LENGTH, "lane_width": LANE_WIDTH},
    )


def _curve_points(offset: float, step: float = 2.0):
    # left-hand bend; offset > 0 moves the lane to the left (inside of the bend)
    r = CURVE_RADIUS - offset
    pts = [(0.0, offset), (CURVE_LEAD_IN, offset)]
    cx, cy = CURVE_LEAD_IN, CURVE_RADIUS
    n = max(2, int(math.ceil(r * CURVE_SWEEP / step)))
    for i in range(1, n + 1):
        a = -math.pi / 2 + CURVE_SWEEP * i / n
        pts.append((cx + r * math.cos(a), cy + r * math.sin(a)))
    ex, ey = pts[-1]
    hx, hy = math.cos(CURVE_SWEEP), math.sin(CURVE_SWEEP)
    pts.append((ex + CURVE_LEAD_OUT * hx, ey + CURVE_LEAD_OUT * hy))
    return pts


def curved_road() -> LaneGraph:
    lanes = {
        "curve_0": Lane("curve_0", _curve_points(0.0), LANE_WIDTH, CURVE_LIMIT, (), "curve_1", None),
        "curve_1": Lane("curve_1", _curve_points(LANE_WIDTH), LANE_WIDTH, CURVE_LIMIT, (), None, "curve_0"),
    }
    return LaneGraph(
        "curved_road", lanes, (),
        "Two same-direction lanes: straight lead-in, constant-radius left bend, straight lead-out.",
        {"curve_radius": CURVE_RADIUS, "sweep_deg": math.degrees(CURVE_SWEEP), "lane_width": LANE_WIDTH},
    )


_ARM_ROT = {"s": 0.0, "e": math.pi / 2, "n": math.pi, "w": -math.pi / 2}


def _rot(p, a):
    c, s = math.cos(a), math.sin(a)
    return (round(p[0] * c - p[1] * s, 9), round(p[0] * s + p[1] * c, 9))


def _arm_right_of(arm: str) -> str:
    # a vehicle entering from ``arm`` that turns right leaves via this arm
    return {"s": "e", "e": "n", "n": "w", "w": "s"}[arm]


def four_way() -> LaneGraph:
    w = XING_LANE_WIDTH
    lanes: dict[str, Lane] = {}
    incoming: dict[tuple[str, int], Lane] = {}
    outgoing: dict[tuple[str, int], Lane] = {}
    for arm, a in _ARM_ROT.items():
        for k in range(2):
            x_in = 1.5 * w - k * w
            lid = f"{arm}_in_{k}"
            p0 = _rot((x_in, -STOP_OFFSET - ARM_LENGTH), a)
            p1 = _rot((x_in, -STOP_OFFSET), a)
            incoming[(arm, k)] = Lane(lid, [p0, p1], w, XING_LIMIT)
            oid = f"{arm}_out_{k}"
            q0 = _rot((-x_in, -STOP_OFFSET), a)
            q1 = _rot((-x_in, -STOP_OFFSET - ARM_LENGTH), a)
            outgoing[(arm, k)] = Lane(oid, [q0, q1], w, XING_LIMIT)
    opposite = {"s": "n", "n": "s", "e": "w", "w": "e"}
    connectors = []
    succ: dict[str, list[str]] = {}
    for (arm, k), lin in incoming.items():
        start = lin.points[-1]
        # straight
        lout = outgoing[(opposite[arm], k)]
        cid = f"x_{arm}{k}_{opposite[arm]}{k}"
        connectors.append(Lane(cid, [start, lout.points[0]], w, XING_LIMIT, (lout.id,)))
        succ.setdefault(lin.id, []).append(cid)
        if k == 0:
            lout = outgoing[(_arm_right_of(arm), 0)]
            a = _ARM_ROT[arm]
            centre = _rot((STOP_OFFSET, -STOP_OFFSET), a)
            r = STOP_OFFSET - 1.5 * w
            pts = [start]
            n = 12
            for i in range(1, n):
                ang = math.pi + (-math.pi / 2) * i / n + a
                # sweep clockwise from the west side of the corner centre
                pts.append((centre[0] + r * math.cos(ang), centre[1] + r * math.sin(ang)))
            pts.append(lout.points[0])
            cid = f"x_{arm}{k}_{_arm_right_of(arm)}0"
            connectors.append(Lane(cid, pts, w, XING_LIMIT, (lout.id,)))
            succ[lin.id].append(cid)
    for (arm, k), lin in incoming.items():
        left = incoming.get((arm, k + 1))
        right = incoming.get((arm, k - 1))
        lanes[lin.id] = Lane(lin.id, lin.points, w, XING_LIMIT, tuple(sorted(succ[lin.id])),
                             left.id if left else None, right.id if right else None)
    for (arm, k), lout in outgoing.items():
        left = outgoing.get((arm, k + 1))
        right = outgoing.get((arm, k - 1))
        lanes[lout.id] = Lane(lout.id, lout.points, w, XING_LIMIT, (),
                              left.id if left else None, right.id if right else None)
    for c in connectors:
        lanes[c.id] = c
    pred = {c.id: lin for lin in lanes.values() for c in connectors if c.id in lin.successors}
    conflicts = []
    ids = sorted(c.id for c in connectors)
    for i, a in enumerate(ids):
        for b in ids[i + 1:]:
            if pred[a].id.split("_")[0] == pred[b].id.split("_")[0]:
                continue
            la, lb = lanes[a], lanes[b]
            ga = LineString(la.points).buffer(la.width / 2 - 0.25)
            gb = LineString(lb.points).buffer(lb.width / 2 - 0.25)
            if ga.intersects(gb):
                conflicts.append((a, b))
    phases = tuple(
        SignalPhase(st, en, tuple(sorted(f"{arm}_in_{k}" for arm in arms for k in range(2))))
        for st, en, arms in SIGNAL_PHASES
    )
    inter = Intersection(
        "x0", tuple(sorted(l.id for l in incoming.values())), tuple(ids), tuple(conflicts), SIGNAL_CYCLE, phases
    )
    return LaneGraph(
        "four_way_signalized", dict(sorted(lanes.items())), (inter,),
        "Signalised 4-way crossing, two lanes per direction, right-hand traffic; "
        "lane 0 is the kerb lane and also carries the right turn.",
        {"arm_length": ARM_LENGTH, "lane_width": w, "stop_offset": STOP_OFFSET},
    )


def build_all() -> list[LaneGraph]:
    return [highway(), curved_road(), four_way()]


def write_all(out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    for g in build_all():
        text = yaml.safe_dump(map_to_dict(g), sort_keys=False, default_flow_style=None, width=120)
        (out_dir / f"{g.map_id}.yaml").write_text(text, encoding="utf-8")


if __name__ == "__main__":
    write_all(Path(__file__).resolve().parents[1] / "data" / "maps")
