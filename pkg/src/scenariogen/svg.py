"""Top-down SVG snapshots of a trace, centered on the ego."""

from __future__ import annotations

import math
from pathlib import Path
from typing import Optional

from .maps import LaneGraph, load_map
from .model import EGO_ID, footprint

VIEW = 120.0  # metres shown across the square frame
SCALE = 5.0  # pixels per metre
COLORS = {"ego": "#1f6fd1", "adversary": "#d1361f", "background": "#8a8a8a"}


def snapshot_ticks(trace, every: float) -> list[int]:
    """Tick records (0-based positions in ``trace.ticks``) at ``every``, 2*``every``, ... up to the end."""
    if every <= 0:
        raise ValueError("snapshot interval must be > 0")
    dt, n = trace.dt, len(trace.ticks)
    out = []
    k = 1
    while True:
        i = int(round(k * every / dt)) - 1
        if i >= n or k * every > n * dt + 1e-9:
            break
        out.append(i)
        k += 1
    return out


def _box(x, y, heading, length, width):
    c, s = math.cos(heading), math.sin(heading)
    hl, hw = length / 2, width / 2
    return [(x + c * dx - s * dy, y + s * dx + c * dy) for dx, dy in ((hl, hw), (hl, -hw), (-hl, -hw), (-hl, hw))]


def render_tick(record: dict, graph: LaneGraph) -> str:
    """One frame as an SVG document."""
    ego = next((v for v in record["vehicles"] if v["id"] == EGO_ID), record["vehicles"][0])
    cx, cy = ego["x"], ego["y"]
    size = VIEW * SCALE

    def px(x, y):
        return f"{(x - cx + VIEW / 2) * SCALE:.1f},{(VIEW / 2 - (y - cy)) * SCALE:.1f}"

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size:.0f}" height="{size:.0f}">',
             f'<rect width="{size:.0f}" height="{size:.0f}" fill="#f4f4f0"/>']
    for lid in sorted(graph.lanes):
        lane = graph.lanes[lid]
        pts = " ".join(px(x, y) for x, y in lane.points)
        parts.append(f'<polyline points="{pts}" fill="none" stroke="#c9c9c2" '
                     f'stroke-width="{lane.width * SCALE:.1f}" stroke-linejoin="round"/>')
    for v in record["vehicles"]:
        length, width = footprint(v["class"])
        pts = " ".join(px(x, y) for x, y in _box(v["x"], v["y"], v["heading"], length, width))
        parts.append(f'<polygon points="{pts}" fill="{COLORS.get(v["role"], "#444")}"><title>{v["id"]}</title></polygon>')
    parts.append(f'<text x="8" y="20" font-family="monospace" font-size="16">t = {record["t"]:.2f} s</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def write_snapshots(trace, out_dir, every: float, graph: Optional[LaneGraph] = None) -> list[Path]:
    """Write ``snapshot_<t>.svg`` files every ``every`` simulated seconds; returns their paths."""
    graph = graph or load_map(trace.header["map_id"])
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for i in snapshot_ticks(trace, every):
        rec = trace.ticks[i]
        path = out_dir / f"snapshot_{rec['t']:07.2f}.svg"
        path.write_text(render_tick(rec, graph), encoding="utf-8")
        paths.append(path)
    return paths
