import dataclasses
import math

import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from scenariogen.metrics import MetricsSummary
from scenariogen.model import AtomicBehavior, iter_atomics
from scenariogen.refine import (
    INCREASE,
    REDUCE,
    AlignmentTarget,
    KnobExhausted,
    RefinementGoal,
    check_alignment,
    rank,
    refine,
    refine_until_aligned,
    target_for,
)
from scenariogen.scenario_io import parse_scenario, serialize_scenario, validate_cross_references
from strategies import scenario_specs

DANGEROUS = target_for("dangerous_no_collision")


def summary(act, hit=False):
    return MetricsSummary(act, 0.8, hit)


def knobs(spec, key):
    return [a.config[key] for adv in spec.adversaries for _, a in iter_atomics(adv.behavior)
            if isinstance(a.config.get(key), (int, float))]


@pytest.mark.parametrize("act, hit, band, goal", [
    (0.3, False, "dangerous_no_collision", None),
    (0.0, True, "dangerous_no_collision", RefinementGoal(REDUCE, "collision", 2)),
    (0.01, False, "dangerous_no_collision", RefinementGoal(REDUCE, "act_below", 1)),
    (0.9, False, "dangerous_no_collision", RefinementGoal(INCREASE, "act_above", 1)),
    (0.0, True, "collision_expected", None),
    (math.inf, False, "safe", None),
    (1.0, False, "safe", RefinementGoal(REDUCE, "act_below", 1)),
    (math.inf, False, "moderate", RefinementGoal(INCREASE, "act_above", 1)),
])
def test_check_alignment(act, hit, band, goal):
    assert check_alignment(summary(act, hit), target_for(band)) == goal


def test_band_validation():
    with pytest.raises(ValueError):
        AlignmentTarget(False, (1.0, 1.0))
    with pytest.raises(KeyError):
        target_for("thrilling")


def test_rank_prefers_aligned_then_collision_free():
    ranked = sorted([summary(0.0, True), summary(0.9), summary(0.3), summary(0.6)], key=lambda s: rank(s, DANGEROUS))
    assert [s.min_act for s in ranked] == [0.3, 0.6, 0.9, 0.0]


def test_collision_goal_moves_two_knob_classes(presets):
    spec = presets["cut_in_dangerous"]
    new, muts = refine(spec, RefinementGoal(REDUCE, "collision", 2))
    paths = {m.path: (m.old, m.new) for m in muts}
    assert paths["adversaries[0].behavior.sequential[0].config.aggressiveness"] == (1.0, 0.8)
    assert paths["adversaries[0].behavior.sequential[1].config.aggressiveness"] == (1.0, 0.8)
    assert paths["adversaries[1].behavior.config.aggressiveness"] == (1.0, 0.8)
    assert paths["adversaries[1].placement.gap"] == (10.0, 13.0)
    # the truck starts level with the ego: a zero gap has no direction to scale in
    assert new.adversaries[0].placement.gap == 0.0
    assert len(muts) == 4
    assert validate_cross_references(new) == []


def test_act_goal_moves_one_class(presets):
    _, muts = refine(presets["cut_in_safe"], RefinementGoal(INCREASE, "act_above", 1))
    assert {m.path.rsplit(".", 1)[-1] for m in muts} == {"aggressiveness"}
    assert all(m.new > m.old for m in muts)


def test_saturated_class_is_skipped(presets):
    spec = presets["cut_in_dangerous"]
    _, muts = refine(spec, RefinementGoal(INCREASE, "act_above", 1))
    # aggressiveness is already 1.0 everywhere, so the placement gap moves instead
    assert [m.path for m in muts] == ["adversaries[1].placement.gap"]
    assert muts[0].new == pytest.approx(10.0 / 1.3, abs=1e-6)


def test_knobs_exhausted(presets):
    spec = presets["sudden_stop"]
    bare = dataclasses.replace(spec, adversaries=tuple(
        dataclasses.replace(a, behavior=AtomicBehavior("SuddenBrake", "brake", {"deceleration": "max"}),
                            placement=dataclasses.replace(a.placement, gap=0.0))
        for a in spec.adversaries))
    with pytest.raises(KnobExhausted):
        refine(bare, RefinementGoal(REDUCE, "collision", 2))


@settings(max_examples=80, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(scenario_specs(), st.sampled_from([REDUCE, INCREASE]), st.integers(1, 4))
def test_refiner_output_revalidates_and_moves_monotonically(spec, direction, magnitude):
    try:
        new, muts = refine(spec, RefinementGoal(direction, "act_below", magnitude))
    except KnobExhausted:
        return
    assert validate_cross_references(new) == []
    assert parse_scenario(serialize_scenario(new)) == new
    for m in muts:
        softer = m.new < m.old if m.path.endswith(("aggressiveness", "target_speed")) else m.new > m.old
        assert softer == (direction == REDUCE), m


# --- loop ----------------------------------------------------------------------------


def test_loop_reaches_the_band(presets):
    spec = dataclasses.replace(presets["cut_in_dangerous"], seed=0)
    res = refine_until_aligned(spec, budget=5)
    assert res.initial.collision
    assert res.aligned and not res.summary.collision
    lo, hi = DANGEROUS.act_band
    assert lo <= res.summary.min_act <= hi
    assert res.selected == len(res.episodes) and res.episodes
    # episodes chain: each starts from the previous result
    for a, b in zip(res.episodes, res.episodes[1:]):
        assert a.post == b.pre
    assert res.episodes[0].pre == res.initial
    assert res.spec.seed == spec.seed
    assert validate_cross_references(res.spec) == []


def test_loop_keeps_the_best_version(presets):
    res = refine_until_aligned(dataclasses.replace(presets["cut_in_dangerous"], seed=2), budget=5)
    candidates = [res.initial] + [e.post for e in res.episodes]
    assert rank(res.summary, DANGEROUS) == min(rank(c, DANGEROUS) for c in candidates)


def test_budget_zero(presets):
    spec = dataclasses.replace(presets["cut_in_dangerous"], seed=0)
    res = refine_until_aligned(spec, budget=0, duration=5.0)
    assert res.episodes == [] and res.spec == spec and res.summary == res.initial


def test_already_aligned_runs_no_episode(presets):
    lenient = {"dangerous_no_collision": AlignmentTarget(True, (0.0, math.inf))}
    res = refine_until_aligned(presets["cut_in_dangerous"], budget=5, duration=5.0, bands=lenient)
    assert res.aligned and res.episodes == []


def test_loop_is_deterministic(presets):
    spec = dataclasses.replace(presets["cut_in_dangerous"], seed=5)
    a = refine_until_aligned(spec, budget=3, duration=10.0)
    b = refine_until_aligned(spec, budget=3, duration=10.0)
    assert [e.to_dict() for e in a.episodes] == [e.to_dict() for e in b.episodes]
    assert serialize_scenario(a.spec) == serialize_scenario(b.spec)


def test_negative_budget(presets):
    with pytest.raises(ValueError):
        refine_until_aligned(presets["cut_in_safe"], budget=-1)
