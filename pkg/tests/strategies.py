"""Hypothesis strategies for valid scenario specs."""

from hypothesis import strategies as st

from scenariogen.maps import CONTEXTS, PlacementQuery, RelativePlacement
from scenariogen.maps.placement import SIGNAL_REQUIREMENTS
from scenariogen.model import (
    CRITICALITY_BANDS, EGO_CONTROLLERS, VEHICLE_CLASSES, AdversarySpec, AtomicBehavior, BackgroundSpec, Concurrent,
    Condition, EgoSpec, EnvironmentSpec, IntentSpec, ScenarioSpec, Sequential, WeatherConfig,
)

MAPS = ("highway_straight", "curved_road", "four_way_signalized")

fraction = st.floats(0, 1, allow_nan=False)
speed = st.floats(0.5, 40, allow_nan=False)
dist = st.floats(0, 120, allow_nan=False)
ident = st.from_regex(r"[a-z]{1,6}_[0-9]{1,2}", fullmatch=True)


def conditions(vehicles):
    leaf = st.one_of(
        st.builds(lambda v: Condition("speed_below", (v,)), speed),
        st.builds(lambda v: Condition("elapsed", (v,)), st.floats(0, 20, allow_nan=False)),
        st.builds(lambda v: Condition("passed_position", (v,)), dist),
        st.builds(lambda o: Condition("same_lane_as", (o,)), st.sampled_from(vehicles)),
        st.builds(lambda o, d: Condition("gap_below", (o, d)), st.sampled_from(vehicles), dist),
        st.builds(lambda o, d: Condition("ahead_of", (o, d)), st.sampled_from(vehicles), dist),
    )
    return st.recursive(leaf, lambda inner: st.one_of(
        st.builds(lambda cs: Condition("all", (), tuple(cs)), st.lists(inner, min_size=1, max_size=3)),
        st.builds(lambda cs: Condition("any", (), tuple(cs)), st.lists(inner, min_size=1, max_size=3)),
        st.builds(lambda c: Condition("not", (), (c,)), inner),
    ), max_leaves=4)


def atomics(others, controlling=True):
    """Atomic behaviors referencing only vehicles in ``others``."""
    target = st.sampled_from(others)
    opt_cond = st.none() | conditions(list(others))
    timeout = st.none() | st.floats(0.5, 30, allow_nan=False)
    kinds = [
        st.builds(lambda t, s, a: ("FollowVehicle", "acc", {"target": t, "target_speed": s, "aggressiveness": a}),
                  target, speed, fraction),
        st.builds(lambda d: ("StopVehicle", "brake", {"deceleration": d}), st.floats(0.5, 9, allow_nan=False)),
        st.builds(lambda v, s, g, a: ("CutIn", "cutin", {"victim": v, "target_speed": s, "trigger_gap": g,
                                                          "aggressiveness": a}), target, speed, dist, fraction),
        st.builds(lambda s, t, ag: ("FollowRoute", ag, {"target_speed": s, "turn": t}), speed,
                  st.sampled_from(["straight", "left", "right"]), st.sampled_from(["route", "cautious"])),
        st.builds(lambda t, s, a: ("Overtake", "overtake", {"target": t, "target_speed": s, "aggressiveness": a}),
                  target, speed, fraction),
        st.builds(lambda s: ("RunRedLight", "red_light_runner", {"target_speed": s}), speed),
        st.just(("SuddenBrake", "brake", {"deceleration": "max"})),
        st.just(("IdleHold", "idle", {})),
    ]
    body = st.one_of(kinds) if controlling else st.just(("Wait", "none", {}))
    return st.builds(lambda b, s, f, t: AtomicBehavior(b[0], b[1], b[2], s, f, t), body, opt_cond, opt_cond, timeout)


def behaviors(others):
    """Trees of depth <= 2 where concurrent nodes have at most one controlling branch."""
    def composite(leaf_ctl, leaf_wait):
        seq = st.lists(leaf_ctl | leaf_wait, min_size=1, max_size=3).map(lambda cs: Sequential(tuple(cs)))
        conc = st.builds(
            lambda c, ws, pol, pos: Concurrent(tuple(ws[:pos] + [c] + ws[pos:]), pol),
            leaf_ctl, st.lists(leaf_wait, max_size=2), st.sampled_from(["all-succeed", "any-succeeds"]),
            st.integers(0, 2),
        )
        return seq | conc

    ctl, wait = atomics(others), atomics(others, controlling=False)
    lvl1 = composite(ctl, wait)
    return ctl | lvl1 | composite(ctl | lvl1, wait)


@st.composite
def scenario_specs(draw, max_adversaries=3):
    n = draw(st.integers(0, max_adversaries))
    ids = draw(st.lists(ident, min_size=n, max_size=n, unique=True))
    vehicles = ["ego"] + ids
    advs = []
    for aid in ids:
        others = [v for v in vehicles if v != aid]
        advs.append(AdversarySpec(
            aid, draw(st.sampled_from(VEHICLE_CLASSES)),
            RelativePlacement(draw(st.sampled_from(["left", "right", "behind", "ahead", "opposite-approach"])),
                              draw(dist)),
            draw(behaviors(others)),
        ))
    count = draw(st.integers(0, 20))
    profile = "none" if count == 0 else draw(st.sampled_from(["sparse", "heavy"]))
    return ScenarioSpec(
        EnvironmentSpec(draw(st.sampled_from(MAPS)), WeatherConfig(
            draw(fraction), draw(fraction), draw(st.floats(0, 23.99, allow_nan=False)),
            draw(st.floats(0.05, 1, allow_nan=False)))),
        EgoSpec(PlacementQuery(draw(st.sampled_from(CONTEXTS)), draw(st.sampled_from(SIGNAL_REQUIREMENTS))),
                draw(st.floats(0.5, 40, allow_nan=False)), draw(st.sampled_from(EGO_CONTROLLERS))),
        tuple(advs),
        BackgroundSpec(count, draw(st.floats(10, 300, allow_nan=False)), profile),
        IntentSpec(draw(st.sampled_from(CRITICALITY_BANDS)), draw(st.text(max_size=40))),
        draw(st.integers(0, 2 ** 64 - 1)),
    )
