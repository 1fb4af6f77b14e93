import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import act_oracle
from scenariogen.geometry import rect_distance
from scenariogen.metrics import (
    MetricsSummary,
    UnknownPairError,
    acceleration_magnitudes,
    act_from_deltas,
    act_series,
    comfort_from_magnitudes,
    comfortability,
    crash_rate,
    denoise,
    evaluate_trace,
    format_act,
    format_rate,
    summarize_batch,
)
from scenariogen.sim import SimTrace

DT = 0.05


def synthetic_trace(ego_boxes, adv_boxes, dt=DT, ego_accel=None, events=()):
    """A trace with one adversary whose per-frame distance comes from the package geometry."""
    header = {"type": "header", "dt": dt, "ego": "ego", "adversaries": ["adv"], "initial": []}
    ticks = []
    for k, (e, a) in enumerate(zip(ego_boxes, adv_boxes), 1):
        acc = 0.0 if ego_accel is None else ego_accel[k - 1]
        ticks.append({
            "type": "tick", "tick": k, "t": k * dt,
            "vehicles": [
                {"id": "ego", "x": e[0], "y": e[1], "heading": e[2], "speed": 10.0, "accel": acc},
                {"id": "adv", "x": a[0], "y": a[1], "heading": a[2], "speed": 10.0, "accel": 0.0},
            ],
            "delta": {"adv": rect_distance(e, a)},
        })
    return SimTrace(header, ticks, list(events))


def random_trajectory(rng, frames=40):
    """Ego driving straight and an adversary on a random constant-curvature path."""
    ve = rng.uniform(0, 25)
    x0, y0 = rng.uniform(-40, 40), rng.uniform(-40, 40)
    h0, va, yaw = rng.uniform(-math.pi, math.pi), rng.uniform(0, 25), rng.uniform(-0.5, 0.5)
    la, wa = rng.uniform(3.5, 12), rng.uniform(1.6, 2.6)
    ego, adv = [], []
    x, y, h = x0, y0, h0
    for k in range(frames):
        ego.append((ve * k * DT, 0.0, 0.0, 4.7, 1.9))
        adv.append((x, y, h, la, wa))
        h += yaw * DT
        x += va * math.cos(h) * DT
        y += va * math.sin(h) * DT
    return ego, adv


# --- ACT -----------------------------------------------------------------------------


def test_act_matches_polygon_oracle_on_random_trajectories():
    rng = np.random.default_rng(20240601)
    finite = 0
    for _ in range(1000):
        ego, adv = random_trajectory(rng)
        got = [f.act for f in act_series(synthetic_trace(ego, adv), "adv")]
        _, want = act_oracle(ego, adv, DT)
        for g, w in zip(got, want):
            if math.isinf(w):
                assert math.isinf(g)
            else:
                finite += 1
                assert g == pytest.approx(w, abs=1e-6)
    assert finite > 1000


def test_constant_distance_is_never_critical():
    ego = [(10.0 * k * DT, 0.0, 0.0, 4.7, 1.9) for k in range(20)]
    adv = [(10.0 * k * DT + 20.0, 0.0, 0.0, 4.7, 1.9) for k in range(20)]
    assert all(math.isinf(f.act) for f in act_series(synthetic_trace(ego, adv), "adv"))


def test_growing_distance_is_never_critical():
    ego = [(10.0 * k * DT, 0.0, 0.0, 4.7, 1.9) for k in range(20)]
    adv = [(12.0 * k * DT + 20.0, 0.0, 0.0, 4.7, 1.9) for k in range(20)]
    assert all(math.isinf(f.act) for f in act_series(synthetic_trace(ego, adv), "adv"))


def test_act_of_closing_pair():
    # 20 m gap shrinking at 5 m/s leaves 4 s
    frames = act_from_deltas([20.25, 20.0], 0.05)
    assert math.isinf(frames[0].act)
    assert frames[1].closing_rate == pytest.approx(5.0)
    assert frames[1].act == pytest.approx(4.0)


def test_missing_distance_breaks_the_difference():
    frames = act_from_deltas([10.0, None, 9.0, 8.0], 1.0)
    assert [math.isinf(f.act) for f in frames] == [True, True, True, False]


def test_unknown_pair():
    ego = [(0.0, 0.0, 0.0, 4.7, 1.9)] * 3
    with pytest.raises(UnknownPairError):
        act_series(synthetic_trace(ego, ego), "nobody")


# --- comfortability ------------------------------------------------------------------


def test_unit_acceleration_gives_one_half():
    assert comfort_from_magnitudes([1.0] * 50) == 0.5
    boxes = [(0.0, 0.0, 0.0, 4.7, 1.9)] * 50
    assert comfortability(synthetic_trace(boxes, boxes, ego_accel=[1.0] * 50)) == 0.5


def test_zero_frames_are_left_out():
    assert comfort_from_magnitudes([0.0, 1.0, 3.0]) == 0.375


def test_standing_still_is_fully_comfortable():
    assert comfort_from_magnitudes([0.0, 0.0]) == 1.0


@given(st.lists(st.floats(0, 50, allow_nan=False), min_size=1, max_size=60))
def test_comfort_is_in_unit_interval(mags):
    c = comfort_from_magnitudes(mags)
    assert 0.0 < c <= 1.0


def test_denoise_is_a_centred_moving_average():
    assert denoise([0, 0, 5, 0, 0]) == [5 / 3, 5 / 4, 1.0, 5 / 4, 5 / 3]
    assert denoise([2.0] * 7) == [2.0] * 7


def test_turning_adds_lateral_acceleration():
    # constant speed v on a circle of radius r: |a| = v^2 / r
    v, r = 10.0, 50.0
    omega = v / r
    boxes = [(0.0, 0.0, k * omega * DT, 4.7, 1.9) for k in range(1, 21)]
    trace = synthetic_trace(boxes, boxes)
    trace.header["initial"] = [{"id": "ego", "heading": 0.0}]
    mags = acceleration_magnitudes(trace)
    assert mags == pytest.approx([v * v / r] * 20)


# --- per run and per batch -----------------------------------------------------------


def test_evaluate_trace_collision_parties():
    boxes = [(0.0, 0.0, 0.0, 4.7, 1.9)] * 5
    hit = {"type": "collision", "tick": 3, "t": 0.15, "pair": ["adv", "ego"], "relative_speed": 4.0}
    m = evaluate_trace(synthetic_trace(boxes, boxes, events=[hit]))
    assert m.collision and m.parties == ("adv",)
    assert MetricsSummary.from_dict(m.to_dict()) == m


def _run(act, comfort=0.9, hit=False):
    return MetricsSummary(act, comfort, hit, ("truck_1",) if hit else ())


def test_batch_mean_excludes_infinite_runs():
    s = summarize_batch([_run(1.0), _run(3.0), _run(math.inf)])
    assert s.mean_min_act == 2.0 and s.infinite_act_runs == 1 and s.global_min_act == 1.0
    assert format_act(s.mean_min_act, s.infinite_act_runs, s.n) == "2.000 (∞ 1/3)"


def test_all_infinite_batch():
    s = summarize_batch([_run(math.inf)] * 32)
    assert math.isinf(s.mean_min_act)
    assert format_act(s.mean_min_act, s.infinite_act_runs, s.n) == "∞ (32/32)"


def test_crash_rate_and_party_histogram():
    runs = [_run(0.5, hit=True)] * 15 + [_run(1.0)] * 17
    cr, hist = crash_rate(runs)
    assert cr == 15 / 32 and hist == {"truck_1": 15}
    with pytest.raises(ValueError):
        crash_rate([])


@pytest.mark.parametrize("hits, n, text", [(15, 32, "46.9%"), (2, 32, "6.3%"), (0, 32, "0.0%"), (32, 32, "100.0%")])
def test_format_rate(hits, n, text):
    assert format_rate(hits, n) == text


@given(st.integers(1, 10_000).flatmap(lambda n: st.tuples(st.integers(0, n), st.just(n))))
def test_format_rate_rounds_half_up(pair):
    hits, n = pair
    tenths = (2000 * hits + n) // (2 * n)  # round(1000 * hits / n) with ties going up
    assert format_rate(hits, n) == f"{tenths // 10}.{tenths % 10}%"
