"""Deterministic keyword-template backend.

Every agent is a small rule table over the (lowercased) text it is given. The
tables are plain module constants so they can be read, tested and versioned.
The engine is total: text it does not understand falls back to documented
defaults, and a layer the description leaves out is improvised and flagged.
"""

from __future__ import annotations

import re
from typing import Optional

from pydantic import ValidationError

from .backend import BackendError, Check, GenerationBackend

RULESET_ID = "template-v1"

# --- interpreter ----------------------------------------------------------------

VEHICLE_NOUNS = {"truck": "truck", "lorry": "truck", "van": "van", "sedan": "sedan", "car": "sedan"}
# only an indefinite article introduces a new vehicle; "the truck" refers back
VEHICLE_RE = re.compile(r"\b(?:a|an|one|another)\s+(?:(\w+)\s+)?(truck|lorry|van|sedan|car)\b")

WEATHER_CUE = re.compile(r"\b(rain\w*|snow\w*|mist\w*|fog\w*|sunny|beautiful day|clear|morning|evening|night|dusk)\b")
BACKGROUND_CUE = re.compile(r"\b(traffic(?! lights?)|no one|nobody|quiet|empty|crowded|busy)\b")
CONTEXT_CUE = re.compile(r"\b(crossroads?|intersection|junction|curved road|curve|bend|highway|motorway)\b")

# intent bands, checked in order; the first hit decides
BAND_RULES = (
    (re.compile(r"\b(almost|nearly) (hits?|gets? hit|collides?|crash\w*)|near[- ]miss"), "dangerous_no_collision"),
    (re.compile(r"\b(crash\w*|collid\w*|collision|hits the ego|rams?)\b"), "collision_expected"),
    (re.compile(r"\b(aggressive\w*|sudden\w*|very closely|ignor\w*|reckless\w*|forc\w*|maximum deceleration)"),
     "dangerous_no_collision"),
    (re.compile(r"\b(decent\w*|remotely|quiet|almost no one|gentl\w*|polite\w*|careful\w*)"), "safe"),
)
DEFAULT_BAND = "moderate"

IMPROVISED = {
    "general_environment": "clear weather around midday",
    "ego_context": "the ego vehicle cruises on a straight multi-lane highway",
    "adversarial_plan": "a sedan drives ahead of the ego vehicle and keeps going",
    "background_plan": "light background traffic",
}

# --- weather --------------------------------------------------------------------

# (pattern, category, values); within a category the earliest match in the text wins
WEATHER_RULES = (
    (r"\brain\w*", "precipitation", {"precipitation": 0.8, "friction_multiplier": 0.7}),
    (r"\bsnow\w*", "precipitation", {"precipitation": 0.6, "friction_multiplier": 0.5}),
    (r"\b(beautiful day|sunny|clear|dry)\b", "precipitation", {"precipitation": 0.0, "friction_multiplier": 1.0}),
    (r"\b(mist\w*|fog\w*)", "fog", {"fog_density": 0.6}),
    (r"\bmorning\b", "time", {"time_of_day": 8.0}),
    (r"\b(evening|dusk)\b", "time", {"time_of_day": 19.0}),
    (r"\bnight\b", "time", {"time_of_day": 23.0}),
)
CLEAR_WEATHER = {"precipitation": 0.0, "fog_density": 0.0, "time_of_day": 12.0, "friction_multiplier": 1.0}

# --- ego ------------------------------------------------------------------------

CONTEXT_RULES = (
    (r"\b(crossroads?|intersection|junction|traffic lights?)\b", "intersection-approach", "four_way_signalized"),
    (r"\b(curved road|curve|bend|winding)\b", "curve", "curved_road"),
    (r"\b(highway|motorway|straight road)\b", "straight-lane", "highway_straight"),
)
DEFAULT_CONTEXT = ("straight-lane", "highway_straight")
EGO_SPEED_FRACTION = 0.8

# --- adversaries ----------------------------------------------------------------

RELATION_RULES = (
    (r"\b(left|right) entrance\b|\bentrance of the intersection\b|\bcross(ing)? (street|road|traffic)\b",
     "opposite-approach"),
    (r"\bbehind\b|\bfollows? the ego\b|\btailgat\w*", "behind"),
    (r"\bahead of\b|\bin front of the ego\b", "ahead"),
    (r"\bon the left\b", "left"),
    (r"\bon the right\b", "right"),
)
DEFAULT_RELATION = "ahead"
FALLBACK_ORDER = ("behind", "ahead", "left", "right")
GAP_RULES = {
    # relation: ((pattern, gap), ...), default gap
    "behind": (((r"\bvery closely\b|\btailgat\w*", 10.0), (r"\bremotely\b|\bfar behind\b|\bat a distance\b", 40.0)),
               20.0),
    "ahead": (((r"\bclosely\b", 15.0), (r"\bfar ahead\b|\bremotely\b", 50.0)), 30.0),
    "left": ((), 0.0),
    "right": ((), 0.0),
    "opposite-approach": ((), 0.0),
}

# --- actions --------------------------------------------------------------------

AGGRESSIVE_CUE = re.compile(r"\b(aggressive\w*|very closely|sudden\w*|reckless\w*|forc\w*|tailgat\w*)")
GENTLE_CUE = re.compile(r"\b(decent\w*|remotely|gentl\w*|polite\w*|careful\w*|cautious\w*)")

# action cues in priority order; a later cue never claims text an earlier one matched
ACTION_RULES = (
    ("negated", r"\bwithout (fully )?overtaking( the ego( vehicle)?)?"),
    ("red_light", r"\b(ignor\w*|runs?|running) the red light( and drives through the intersection)?"),
    ("overtake", r"\bovertak\w*"),
    ("cut_in", r"\bcut(s|ting)? in\b"),
    ("brake", r"\bbrak\w*|\bstops? abruptly\b"),
    ("idle", r"\bremains? idle\b|\bstays? (still|stopped)\b|\bstands? still\b"),
    ("turn", r"\bturns? (left|right)\b"),
    ("follow", r"\bfollows? the ego\b"),
    ("keep_going", r"\bke(e|)pt going\b|\bkeeps? going\b|\bdrives on\b|\bcontinues\b|\bcarries on\b"),
    ("cruise", r"\b(is driving|drives|driving|cruis\w*)\b"),
)
SPEED_WORDS = ((r"\bmoderate speed\b", 0.6), (r"\bslow(ly)?\b", 0.4), (r"\b(fast|high speed|speeding)\b", 1.0))
PASS_MARGIN = 5.0  # overtakers and followers cruise this much faster than the ego
A_WHILE = 5.0  # seconds a non-terminating action lasts before the next one starts
TRIGGER_GAP = {"gentle": 20.0, "default": 10.0}
FORCED_TRIGGER_GAP = 0.5
LATE_REACTION = 1.2  # tailgaters react late


def _clauses(text: str) -> list[str]:
    parts = re.split(r"[,.;!?]+", text.lower())
    return [p.strip(" \"'“”") for p in parts if p.strip(" \"'“”")]


def _is_vehicle_clause(clause: str) -> Optional[str]:
    for m in VEHICLE_RE.finditer(clause):
        if m.group(1) == "ego":
            continue
        return VEHICLE_NOUNS[m.group(2)]
    return None


def interpret(description: str) -> dict:
    """Split a description into the four layer texts and pick an intent band."""
    env, ego, bg, advs = [], [], [], []
    for clause in _clauses(description):
        if _is_vehicle_clause(clause):
            advs.append([clause])
        elif BACKGROUND_CUE.search(clause):
            bg.append(clause)
        elif WEATHER_CUE.search(clause) and not advs:
            env.append(clause)
        elif CONTEXT_CUE.search(clause) and not advs:
            ego.append(clause)
        elif advs:
            advs[-1].append(clause)
        else:
            ego.append(clause)
    adversary_texts = [", ".join(a) for a in advs]
    layers = {
        "general_environment": ", ".join(env),
        "ego_context": ", ".join(ego),
        "adversarial_plan": "; ".join(adversary_texts),
        "background_plan": ", ".join(bg),
    }
    improvised = []
    for key, text in layers.items():
        if not text:
            layers[key] = IMPROVISED[key]
            improvised.append(key)
    if "adversarial_plan" in improvised:
        adversary_texts = [IMPROVISED["adversarial_plan"]]
    low = description.lower()
    band = DEFAULT_BAND
    for pattern, b in BAND_RULES:
        if pattern.search(low):
            band = b
            break
    return {**layers, "intent_band": band, "adversary_texts": adversary_texts, "improvised": improvised}


def weather_report(text: str) -> dict:
    """Weather values from the environment text; earliest match per category wins."""
    low = text.lower()
    out = dict(CLEAR_WEATHER)
    notes = []
    hits: dict[str, list] = {}
    for pattern, cat, values in WEATHER_RULES:
        for m in re.finditer(pattern, low):
            hits.setdefault(cat, []).append((m.start(), m.group(0), values))
    for cat in sorted(hits):
        found = sorted(hits[cat], key=lambda h: h[0])
        _, word, values = found[0]
        out.update(values)
        losers = sorted({w for _, w, _ in found[1:] if w != word})
        if losers:
            notes.append(f"{cat}: '{word}' wins over {', '.join(repr(w) for w in losers)} (first match)")
    return {**out, "notes": notes}


def locate_ego(context_text: str, adversarial_plan: str, map_limits: dict) -> dict:
    """Road context, map and cruise speed for the ego."""
    low = context_text.lower()
    context, map_id = DEFAULT_CONTEXT
    for pattern, ctx, mid in CONTEXT_RULES:
        if re.search(pattern, low):
            context, map_id = ctx, mid
            break
    signal = "green" if "red light" in adversarial_plan.lower() and context == "intersection-approach" else "any"
    limit = map_limits[map_id]
    return {"map_id": map_id, "context": context, "signal": signal,
            "target_speed": round(EGO_SPEED_FRACTION * limit, 1), "controller": "defensive"}


def relation_of(text: str) -> str:
    low = text.lower()
    for pattern, rel in RELATION_RULES:
        if re.search(pattern, low):
            return rel
    return DEFAULT_RELATION


def gap_for(relation: str, text: str) -> float:
    rules, default = GAP_RULES[relation]
    low = text.lower()
    for pattern, gap in rules:
        if re.search(pattern, low):
            return gap
    return default


def locate_adversaries(texts: list) -> dict:
    counts: dict[str, int] = {}
    out = []
    for text in texts:
        cls = _is_vehicle_clause(text.lower()) or "sedan"
        counts[cls] = counts.get(cls, 0) + 1
        rel = relation_of(text)
        out.append({"id": f"{cls}_{counts[cls]}", "vehicle_class": cls, "relation": rel,
                    "gap": gap_for(rel, text), "text": text})
    return {"adversaries": out, "notes": []}


def aggressiveness_of(text: str) -> float:
    low = text.lower()
    if AGGRESSIVE_CUE.search(low):
        return 1.0
    if GENTLE_CUE.search(low):
        return 0.0
    return 0.5


def _cues(text: str) -> list[tuple[int, str, re.Match]]:
    low = text.lower()
    taken: list[tuple[int, int]] = []
    found = []
    for name, pattern in ACTION_RULES:
        for m in re.finditer(pattern, low):
            if any(m.start() < b and a < m.end() for a, b in taken):
                continue
            taken.append((m.start(), m.end()))
            found.append((m.start(), name, m))
    return sorted(found, key=lambda f: f[0])


def _atomic(kind: str, config: dict) -> dict:
    return {"atomic": {"kind": kind, "config": config}}


def generate_actions(adversaries: list, ego_speed: float, speed_limit: float) -> dict:
    """One behavior tree per adversary from the action verbs in its text."""
    behaviors = {}
    for adv in adversaries:
        text = adv["text"].lower()
        aggr = aggressiveness_of(text)
        fast = round(min(40.0, ego_speed + PASS_MARGIN), 1)
        cruise = ego_speed
        for pattern, frac in SPEED_WORDS:
            if re.search(pattern, text):
                cruise = round(frac * speed_limit, 1)
                break
        cues = _cues(text)
        names = [c[1] for c in cues]
        forced = "negated" in names or bool(re.search(r"\bignor\w* the lane marks?\b", text))
        steps: list[dict] = []
        passing = False
        for _, name, m in cues:
            if name == "overtake":
                passing = True
                steps.append(_atomic("Overtake", {"target": "ego", "target_speed": fast, "aggressiveness": aggr}))
            elif name == "cut_in":
                passing = True
                trigger = TRIGGER_GAP["gentle"] if aggr == 0.0 else TRIGGER_GAP["default"]
                steps.append(_atomic("CutIn", {"victim": "ego", "target_speed": fast, "trigger_gap": trigger,
                                               "aggressiveness": aggr}))
            elif name == "brake":
                sudden = re.search(r"\b(sudden\w*|maximum|hard|emergency|abrupt\w*)", text)
                steps.append(_atomic("SuddenBrake", {"deceleration": "max"}) if sudden
                             else _atomic("StopVehicle", {"deceleration": 3.0}))
            elif name == "idle":
                steps.append(_atomic("IdleHold", {}))
            elif name == "red_light":
                steps.append(_atomic("RunRedLight", {"target_speed": round(speed_limit, 1), "turn": "straight"}))
            elif name == "turn":
                turn = m.group(1)
                side = {"left": "right", "right": "left"}[adv["relation"]] if adv["relation"] in ("left", "right") \
                    else None
                if forced and side == turn:
                    steps.append(_atomic("CutIn", {"victim": "ego", "target_speed": fast,
                                                   "trigger_gap": FORCED_TRIGGER_GAP, "aggressiveness": 1.0}))
                steps.append(_atomic("FollowRoute", {"target_speed": cruise, "turn": turn}))
            elif name == "follow":
                cfg = {"target": "ego", "target_speed": fast, "aggressiveness": aggr}
                if aggr == 1.0:
                    cfg["reaction_time"] = LATE_REACTION
                steps.append(_atomic("FollowVehicle", cfg))
            elif name == "keep_going":
                steps.append(_atomic("FollowRoute", {"target_speed": fast if passing else cruise}))
            elif name == "cruise":
                steps.append(_atomic("FollowRoute", {"target_speed": cruise}))
        if not steps:
            steps.append(_atomic("FollowRoute", {"target_speed": cruise}))
        # actions that never finish by themselves hand over after a while
        for st in steps[:-1]:
            if st["atomic"]["kind"] in ("FollowRoute", "FollowVehicle", "RunRedLight", "IdleHold"):
                st["atomic"]["success"] = {"elapsed": A_WHILE}
        behaviors[adv["id"]] = steps[0] if len(steps) == 1 else {"sequential": steps}
    return {"behaviors": behaviors}


DENSITY_RULES = (
    (r"\b(heavy|dense|busy|crowded|rush hour)\b", "heavy"),
    (r"\b(almost no one|no one|nobody|empty|quiet|deserted)\b", "none"),
    (r"\b(light|sparse|few)\b", "sparse"),
)
DENSITY_COUNTS = {"heavy": 12, "sparse": 4, "none": 0}
DEFAULT_DENSITY = "sparse"
SPAWN_RADIUS = 150.0


def make_chaos(text: str) -> dict:
    low = text.lower()
    profile = DEFAULT_DENSITY
    for pattern, p in DENSITY_RULES:
        if re.search(pattern, low):
            profile = p
            break
    return {"density_profile": profile, "count": DENSITY_COUNTS[profile], "spawn_radius": SPAWN_RADIUS}


_AGENTS = {
    "interpreter": lambda p: interpret(p["description"]),
    "weather_report": lambda p: weather_report(p["general_environment"]),
    "ego_locator": lambda p: locate_ego(p["ego_context"], p.get("adversarial_plan", ""), p["map_limits"]),
    "adv_locator": lambda p: locate_adversaries(p["adversary_texts"]),
    "action_generator": lambda p: generate_actions(p["adversaries"], p["ego_speed"], p["speed_limit"]),
    "chaos_maker": lambda p: make_chaos(p["background_plan"]),
}


class TemplateBackend(GenerationBackend):
    """The rule engine behind the generation agents; a pure function of its inputs."""

    name = "template"

    def __init__(self, ruleset: str = RULESET_ID):
        if ruleset != RULESET_ID:
            raise ValueError(f"unknown template rule set {ruleset!r}")
        self.ruleset = ruleset

    def ask(self, agent, payload, schema, check: Check = None):
        if agent not in _AGENTS:
            raise BackendError(f"template backend has no agent {agent!r}")
        try:
            out = schema.model_validate(_AGENTS[agent](payload))
            if check is not None:
                check(out)
        except (ValidationError, ValueError) as exc:
            # the rule tables are supposed to be total; this is a bug, not bad luck
            raise BackendError(f"template {agent} produced invalid output: {exc}") from exc
        return out
