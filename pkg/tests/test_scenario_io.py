import dataclasses
import difflib

import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from scenariogen.maps import PlacementQuery, RelativePlacement
from scenariogen.model import (
    AdversarySpec, AtomicBehavior, BackgroundSpec, Concurrent, EgoSpec, EnvironmentSpec, IntentSpec, ScenarioSpec,
    Sequential,
)
from scenariogen.presets import preset_document, preset_ids
from scenariogen.scenario_io import (
    ScenarioOwnershipError, ScenarioRangeError, ScenarioReferenceError, ScenarioSyntaxError, parse_scenario,
    serialize_scenario, validate_cross_references,
)
from strategies import scenario_specs

MINIMAL = """\
schema_version: 1
environment: {map_id: highway_straight}
ego:
  placement: {context: straight-lane}
  target_speed: 20
"""


def with_adversary(behavior: str, extra: str = "") -> str:
    return MINIMAL + f"""\
adversaries:
- id: truck_1
  vehicle_class: truck
  placement: {{relation: left, gap: 0}}
  behavior: {behavior}
{extra}"""


def test_minimal_document():
    spec = parse_scenario(MINIMAL)
    assert spec.adversaries == ()
    assert spec.background.count == 0
    assert spec.background.density_profile == "none"
    assert spec.seed == 0


def test_undeclared_vehicle_reference():
    text = with_adversary("{atomic: {kind: FollowVehicle, config: {target: sedan_9, target_speed: 20, aggressiveness: 0.5}}}")
    with pytest.raises(ScenarioReferenceError, match="sedan_9"):
        parse_scenario(text)


def test_dangerous_preset_matches_hand_built_value():
    truck = Sequential((
        AtomicBehavior("Overtake", "overtake", {"target": "ego", "target_speed": 25.0, "aggressiveness": 1.0}),
        AtomicBehavior("CutIn", "cutin", {"victim": "ego", "target_speed": 25.0, "trigger_gap": 10.0,
                                          "aggressiveness": 1.0}),
        AtomicBehavior("SuddenBrake", "brake", {"deceleration": "max"}),
        AtomicBehavior("FollowRoute", "route", {"target_speed": 25.0}),
    ))
    sedan = AtomicBehavior("FollowVehicle", "acc", {"target": "ego", "target_speed": 25.0, "aggressiveness": 1.0,
                                                    "reaction_time": 1.2})
    spec = parse_scenario(preset_document("cut_in_dangerous"))
    expected = ScenarioSpec(
        EnvironmentSpec("highway_straight"),
        EgoSpec(PlacementQuery("straight-lane"), 20.0, "defensive"),
        (AdversarySpec("truck_1", "truck", RelativePlacement("left", 0.0), truck),
         AdversarySpec("sedan_1", "sedan", RelativePlacement("behind", 10.0), sedan)),
        BackgroundSpec(12, 150.0, "heavy"),
        IntentSpec("dangerous_no_collision", spec.intent.narrative),
        0,
    )
    assert spec == expected
    assert len(spec.adversaries) == 2


@pytest.mark.parametrize("pid", preset_ids())
def test_presets_validate_and_round_trip(pid):
    text = preset_document(pid)
    spec = parse_scenario(text)
    assert validate_cross_references(spec) == []
    assert serialize_scenario(spec) == text
    assert parse_scenario(serialize_scenario(spec)) == spec


def test_empty_adversaries_written_explicitly():
    assert "adversaries: []" in serialize_scenario(parse_scenario(MINIMAL))


def test_duplicate_ids_named_in_one_violation():
    spec = parse_scenario(with_adversary("{atomic: {kind: IdleHold}}"))
    dup = dataclasses.replace(spec, adversaries=spec.adversaries * 2)
    out = validate_cross_references(dup)
    assert len(out) == 1
    assert "adversaries[0]" in out[0].path and "adversaries[1]" in out[0].path


def test_negative_gap_is_one_range_violation():
    spec = parse_scenario(with_adversary("{atomic: {kind: IdleHold}}"))
    a = dataclasses.replace(spec.adversaries[0], placement=RelativePlacement("left", -5.0))
    out = validate_cross_references(dataclasses.replace(spec, adversaries=(a,)))
    assert [(v.path, v.category) for v in out] == [("adversaries[0].placement.gap", "range")]
    with pytest.raises(ScenarioRangeError):
        parse_scenario(with_adversary("{atomic: {kind: IdleHold}}").replace("gap: 0", "gap: -5"))


def test_unknown_field_rejected_with_position():
    with pytest.raises(ScenarioSyntaxError) as exc:
        parse_scenario(MINIMAL + "colour: red\n")
    assert exc.value.line == 6


def test_malformed_yaml_reports_position():
    with pytest.raises(ScenarioSyntaxError) as exc:
        parse_scenario(MINIMAL + "  bad: [unclosed\n")
    assert exc.value.line is not None


def test_wrong_type_names_path():
    with pytest.raises(ScenarioSyntaxError) as exc:
        parse_scenario(MINIMAL.replace("target_speed: 20", "target_speed: fast"))
    assert "ego.target_speed" in str(exc.value)


def test_newer_schema_rejected():
    with pytest.raises(ScenarioSyntaxError, match="newer"):
        parse_scenario(MINIMAL.replace("schema_version: 1", "schema_version: 2"))


def test_background_count_profile_invariant():
    with pytest.raises(ScenarioRangeError):
        parse_scenario(MINIMAL + "background: {count: 3, density_profile: none}\n")


def test_friction_must_be_positive():
    with pytest.raises(ScenarioRangeError, match="friction"):
        parse_scenario(MINIMAL.replace("{map_id: highway_straight}",
                                       "{map_id: highway_straight, weather: {friction_multiplier: 0}}"))


def test_unknown_map_rejected():
    with pytest.raises(ScenarioReferenceError, match="map"):
        parse_scenario(MINIMAL.replace("highway_straight", "moon_base"))


def test_two_controlling_branches_rejected():
    tree = "{concurrent: {children: [{atomic: {kind: IdleHold}}, {atomic: {kind: SuddenBrake}}]}}"
    with pytest.raises(ScenarioOwnershipError):
        parse_scenario(with_adversary(tree))


def test_wait_branch_may_run_beside_a_controller():
    tree = "{concurrent: {policy: any-succeeds, children: [{atomic: {kind: IdleHold}}, {atomic: {kind: Wait, success: {elapsed: 2}}}]}}"
    spec = parse_scenario(with_adversary(tree))
    assert isinstance(spec.adversaries[0].behavior, Concurrent)


def test_self_target_rejected():
    tree = "{atomic: {kind: FollowVehicle, config: {target: truck_1, target_speed: 10, aggressiveness: 0}}}"
    with pytest.raises(ScenarioReferenceError, match="itself"):
        parse_scenario(with_adversary(tree))


def test_agent_must_match_kind():
    with pytest.raises(ScenarioReferenceError, match="agent"):
        parse_scenario(with_adversary("{atomic: {kind: IdleHold, agent: acc}}"))


def test_parsing_is_deterministic():
    text = preset_document("cut_in_dangerous")
    assert parse_scenario(text) == parse_scenario(text.encode().decode())


@pytest.mark.parametrize("narrative", ["z\x85", "a\u2028b", "line\nbreak", " padded "])
def test_narrative_line_breaks_survive(narrative):
    spec = dataclasses.replace(parse_scenario(MINIMAL), intent=IntentSpec("safe", narrative))
    assert parse_scenario(serialize_scenario(spec)).intent.narrative == narrative


@settings(max_examples=150, deadline=None, suppress_health_check=list(HealthCheck))
@given(scenario_specs())
def test_round_trip_generated(spec):
    assert validate_cross_references(spec) == []
    text = serialize_scenario(spec)
    assert parse_scenario(text) == spec
    assert serialize_scenario(parse_scenario(text)) == text


def _scalar_paths(obj, path=()):
    if isinstance(obj, dict):
        for k, v in obj.items():
            yield from _scalar_paths(v, path + (k,))
    elif isinstance(obj, list):
        for i, v in enumerate(obj):
            yield from _scalar_paths(v, path + (i,))
    elif isinstance(obj, float):
        yield path


def _set(obj, path, value):
    for k in path[:-1]:
        obj = obj[k]
    obj[path[-1]] = value


@settings(max_examples=100, deadline=None, suppress_health_check=list(HealthCheck))
@given(scenario_specs(), st.data())
def test_single_parameter_change_is_single_line_diff(spec, data):
    # change one numeric behavior parameter and compare the two documents line by line
    from scenariogen.scenario_io import spec_from_obj, spec_to_obj

    obj = spec_to_obj(spec)
    paths = [p for p in _scalar_paths(obj["adversaries"]) if "config" in p]
    if not paths:
        return
    path = data.draw(st.sampled_from(paths))
    other = spec_to_obj(spec)
    old = obj["adversaries"]
    for k in path[:-1]:
        old = old[k]
    new_value = old[path[-1]] + 0.25
    _set(other["adversaries"], path, new_value)
    a, b = serialize_scenario(spec), serialize_scenario(spec_from_obj(other))
    diff = [ln for ln in difflib.unified_diff(a.splitlines(), b.splitlines(), lineterm="", n=0)
            if ln[:1] in "+-" and not ln.startswith(("+++", "---"))]
    assert len(diff) == 2
    assert diff[0].startswith("-") and diff[1].startswith("+")
    assert diff[1].strip().endswith(repr(new_value))
