"""Trace evaluation: anticipated collision time, comfortability, crash rate.

ACT per frame is the ego-adversary footprint distance divided by its closing
rate, the rate at which that distance shrinks, and is +inf whenever the pair
is not closing. Comfortability averages 1 / (|a| + 1) over frames whose
denoised ego acceleration magnitude is nonzero.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import asdict, dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from fractions import Fraction
from typing import Iterable, Optional, Sequence

from .model import EGO_ID

INF = math.inf
DENOISE_WINDOW = 5
ACCEL_EPS = 1e-3


class UnknownPairError(KeyError):
    pass


@dataclass(frozen=True)
class FramePairState:
    t: float
    delta: Optional[float]
    closing_rate: Optional[float]
    act: float


@dataclass(frozen=True)
class FrameKinematics:
    t: float
    raw: float
    denoised: float


def act_from_deltas(deltas: Sequence[Optional[float]], dt: float, times: Optional[Sequence[float]] = None):
    """ACT series from a distance series sampled every ``dt`` seconds.

    The first frame, frames with a missing distance on either side and frames
    where the distance does not shrink all get ``inf``.
    """
    out = []
    prev = None
    for k, d in enumerate(deltas):
        t = times[k] if times is not None else k * dt
        closing = None
        act = INF
        if d is not None and prev is not None:
            closing = (prev - d) / dt
            if closing > 0.0:
                act = d / closing
        out.append(FramePairState(t, d, closing, act))
        prev = d
    return out


def act_series(trace, adversary: str) -> list[FramePairState]:
    """Per-frame ACT between the ego and ``adversary``."""
    if adversary not in trace.header["adversaries"]:
        raise UnknownPairError(f"no ego-{adversary} pair in this trace")
    if len(trace.ticks) < 2:
        raise ValueError("act_series needs at least two frames")
    deltas = [rec["delta"].get(adversary) for rec in trace.ticks]
    return act_from_deltas(deltas, trace.dt, [rec["t"] for rec in trace.ticks])


def min_act(values: Iterable) -> float:
    """Minimum over ACT values or FramePairStates, with +inf as identity."""
    best = INF
    for v in values:
        a = v.act if isinstance(v, FramePairState) else v
        if a < best:
            best = a
    return best


def denoise(values: Sequence[float], window: int = DENOISE_WINDOW) -> list[float]:
    """Centred moving average; the window shrinks at the edges."""
    half = window // 2
    n = len(values)
    out = []
    for k in range(n):
        lo = max(0, k - half)
        hi = min(n, k + half + 1)
        out.append(math.fsum(values[lo:hi]) / (hi - lo))
    return out


def comfort_from_magnitudes(mags: Sequence[float], eps: float = ACCEL_EPS) -> float:
    """Mean of 1 / (m + 1) over magnitudes above ``eps``; 1.0 when there are none."""
    sel = [1.0 / (m + 1.0) for m in mags if m > eps]
    if not sel:
        return 1.0
    return math.fsum(sel) / len(sel)


def _wrap(a: float) -> float:
    return (a + math.pi) % (2.0 * math.pi) - math.pi


def acceleration_magnitudes(trace, vehicle: str = EGO_ID) -> list[float]:
    """Raw acceleration magnitude per frame: longitudinal and yaw-rate lateral parts."""
    dt = trace.dt
    prev_h = None
    for v in trace.header.get("initial", []):
        if v["id"] == vehicle:
            prev_h = v["heading"]
    out = []
    for rec in trace.ticks:
        st = next((v for v in rec["vehicles"] if v["id"] == vehicle), None)
        if st is None:
            prev_h = None
            out.append(0.0)
            continue
        lat = 0.0 if prev_h is None else st["speed"] * _wrap(st["heading"] - prev_h) / dt
        out.append(math.hypot(st["accel"], lat))
        prev_h = st["heading"]
    return out


def comfort_frames(trace, vehicle: str = EGO_ID, window: int = DENOISE_WINDOW) -> list[FrameKinematics]:
    raw = acceleration_magnitudes(trace, vehicle)
    den = denoise(raw, window)
    return [FrameKinematics(rec["t"], r, d) for rec, r, d in zip(trace.ticks, raw, den)]


def comfortability(trace, vehicle: str = EGO_ID, window: int = DENOISE_WINDOW, eps: float = ACCEL_EPS) -> float:
    if not trace.ticks:
        raise ValueError("empty trace")
    return comfort_from_magnitudes(denoise(acceleration_magnitudes(trace, vehicle), window), eps)


@dataclass(frozen=True)
class MetricsSummary:
    min_act: float
    comfortability: float
    collision: bool
    parties: tuple = ()
    min_delta: float = INF
    act_by_adversary: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["min_act"] = _num_out(self.min_act)
        d["min_delta"] = _num_out(self.min_delta)
        d["parties"] = list(self.parties)
        d["act_by_adversary"] = {k: _num_out(v) for k, v in sorted(self.act_by_adversary.items())}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "MetricsSummary":
        return cls(
            _num_in(d["min_act"]), d["comfortability"], d["collision"], tuple(d["parties"]),
            _num_in(d["min_delta"]), {k: _num_in(v) for k, v in d["act_by_adversary"].items()},
        )


def _num_out(x: float):
    return "inf" if math.isinf(x) else x


def _num_in(x):
    return INF if x == "inf" else float(x)


def ego_collisions(trace) -> list[dict]:
    ego = trace.header.get("ego", EGO_ID)
    return [e for e in trace.collisions() if ego in e["pair"]]


def evaluate_trace(trace) -> MetricsSummary:
    """Every per-run metric, computed from the trace alone."""
    per = {}
    min_delta = INF
    for adv in trace.header["adversaries"]:
        per[adv] = min_act(act_series(trace, adv)) if len(trace.ticks) >= 2 else INF
        for rec in trace.ticks:
            d = rec["delta"].get(adv)
            if d is not None and d < min_delta:
                min_delta = d
    hits = ego_collisions(trace)
    ego = trace.header.get("ego", EGO_ID)
    parties = tuple(sorted({p for e in hits for p in e["pair"] if p != ego}))
    return MetricsSummary(
        min_act=min_act(per.values()),
        comfortability=comfortability(trace, ego),
        collision=bool(hits),
        parties=parties,
        min_delta=min_delta,
        act_by_adversary=per,
    )


# --- batches -------------------------------------------------------------------------


@dataclass(frozen=True)
class BatchSummary:
    n: int
    mean_min_act: float
    infinite_act_runs: int
    global_min_act: float
    mean_comfortability: float
    collisions: int
    crash_rate: float
    party_histogram: dict

    def to_dict(self) -> dict:
        d = asdict(self)
        d["mean_min_act"] = _num_out(self.mean_min_act)
        d["global_min_act"] = _num_out(self.global_min_act)
        d["party_histogram"] = dict(sorted(self.party_histogram.items()))
        return d


def crash_rate(summaries: Sequence[MetricsSummary]) -> tuple[float, dict]:
    """Fraction of runs with an ego collision, plus how often each other party was involved."""
    if not summaries:
        raise ValueError("crash_rate needs at least one run")
    hits = sum(1 for s in summaries if s.collision)
    hist = Counter(p for s in summaries for p in s.parties)
    return hits / len(summaries), dict(hist)


def summarize_batch(summaries: Sequence[MetricsSummary]) -> BatchSummary:
    """Batch aggregates; runs whose min ACT is infinite are left out of the mean and counted."""
    cr, hist = crash_rate(summaries)
    finite = [s.min_act for s in summaries if math.isfinite(s.min_act)]
    return BatchSummary(
        n=len(summaries),
        mean_min_act=math.fsum(finite) / len(finite) if finite else INF,
        infinite_act_runs=len(summaries) - len(finite),
        global_min_act=min_act(s.min_act for s in summaries),
        mean_comfortability=math.fsum(s.comfortability for s in summaries) / len(summaries),
        collisions=sum(1 for s in summaries if s.collision),
        crash_rate=cr,
        party_histogram=hist,
    )


def format_rate(hits: int, n: int, digits: int = 1) -> str:
    """Percentage with half-up rounding on the exact ratio: 15/32 -> '46.9%'."""
    pct = Decimal(Fraction(100 * hits, n).numerator) / Decimal(Fraction(100 * hits, n).denominator)
    q = Decimal(1).scaleb(-digits)
    return f"{pct.quantize(q, rounding=ROUND_HALF_UP)}%"


def format_act(mean: float, infinite: int, n: int) -> str:
    if math.isinf(mean):
        return f"∞ ({infinite}/{n})"
    if infinite:
        return f"{mean:.3f} (∞ {infinite}/{n})"
    return f"{mean:.3f}"
