"""Deterministic symbolic simulator of the tabletop food-serving scene.

The robot base sits at the origin of the table frame, facing +y.  A tool
holder with the spoon stands on the left, a dumbwaiter on the right.  All
state is held in frozen dataclasses; :func:`apply_skill` returns a new state
and never mutates its input.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Iterable

STATE_SCHEMA_VERSION = 1
AMOUNT_EPS = 1e-9


class FoodKind(str, Enum):
    TOFU_PUDDING = "tofu_pudding"
    MUNG_BEANS = "mung_beans"
    KIDNEY_BEANS = "kidney_beans"
    RED_BEANS = "red_beans"
    BLACK_BEANS = "black_beans"
    PEANUTS = "peanuts"
    TARO_BALLS = "taro_balls"
    TAPIOCA_PEARLS = "tapioca_pearls"

    @property
    def display(self) -> str:
        return self.value.replace("_", " ")


TOPPINGS: tuple[FoodKind, ...] = tuple(k for k in FoodKind if k is not FoodKind.TOFU_PUDDING)


class SkillKind(str, Enum):
    GRASP_SPOON = "grasp_spoon"
    PUT_SPOON_BACK = "put_spoon_back"
    SCOOP = "scoop"
    DROP_FOOD = "drop_food"
    STIR = "stir"
    PULL_BOWL_CLOSER = "pull_bowl_closer"
    OPEN_DUMBWAITER = "open_dumbwaiter"
    CLOSE_DUMBWAITER = "close_dumbwaiter"
    PUT_BOWL_INTO_DUMBWAITER = "put_bowl_into_dumbwaiter"
    START_DUMBWAITER = "start_dumbwaiter"
    MOVE_TO_BOWL = "move_to_bowl"
    DONE = "done"


@dataclass(frozen=True, order=True)
class Skill:
    kind: SkillKind
    color: str | None = None

    def __post_init__(self) -> None:
        if (self.kind is SkillKind.MOVE_TO_BOWL) != (self.color is not None):
            raise ValueError(f"color must be given exactly for move_to_bowl, got {self.kind}/{self.color}")

    @property
    def name(self) -> str:
        """Canonical underscore name, e.g. ``move_to_white_bowl``."""
        if self.kind is SkillKind.MOVE_TO_BOWL:
            return f"move_to_{self.color}_bowl"
        return self.kind.value

    @property
    def display(self) -> str:
        """Name as shown in prompts, e.g. ``move to white bowl`` or ``DONE``."""
        if self.kind is SkillKind.DONE:
            return "DONE"
        return self.name.replace("_", " ")

    @classmethod
    def parse(cls, text: str) -> "Skill":
        """Accept ``grasp_spoon``, ``grasp spoon``, ``DONE``, ``move to red bowl``."""
        norm = "_".join(text.strip().lower().replace("_", " ").split())
        if norm.startswith("move_to_") and norm.endswith("_bowl") and len(norm) > len("move_to__bowl"):
            return cls(SkillKind.MOVE_TO_BOWL, norm[len("move_to_"):-len("_bowl")])
        try:
            kind = SkillKind(norm)
        except ValueError:
            raise ValueError(f"unknown skill {text!r}") from None
        if kind is SkillKind.MOVE_TO_BOWL:
            raise ValueError("move_to_bowl needs a color")
        return cls(kind)

    def __str__(self) -> str:
        return self.name


DONE = Skill(SkillKind.DONE)


def move_to(color: str) -> Skill:
    return Skill(SkillKind.MOVE_TO_BOWL, color)


@dataclass(frozen=True)
class Position:
    x: float
    y: float

    def dist(self, other: "Position") -> float:
        return math.hypot(self.x - other.x, self.y - other.y)

    @property
    def norm(self) -> float:
        return math.hypot(self.x, self.y)


@dataclass(frozen=True)
class Rect:
    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def dist_to(self, p: Position) -> float:
        dx = max(self.x_min - p.x, 0.0, p.x - self.x_max)
        dy = max(self.y_min - p.y, 0.0, p.y - self.y_max)
        return math.hypot(dx, dy)

    def contains(self, p: Position) -> bool:
        return self.x_min <= p.x <= self.x_max and self.y_min <= p.y <= self.y_max


@dataclass(frozen=True)
class Geometry:
    """Every spatial threshold of the simulator, in meters."""

    table: Rect = Rect(-0.6, 0.0, 0.6, 0.8)
    reach_radius: float = 0.6
    blocking_radius: float = 0.12
    pull_target_radius: float = 0.45
    bowl_radius: float = 0.06
    home: Position = Position(0.0, 0.0)
    holder: Position = Position(-0.52, 0.35)
    dumbwaiter_door: Position = Position(0.54, 0.45)
    sweep_zone: Rect = Rect(0.48, 0.35, 0.6, 0.55)
    insufficient_food: float = 1.0
    scoop_size: float = 1.0

    @property
    def table_center(self) -> Position:
        t = self.table
        return Position((t.x_min + t.x_max) / 2, (t.y_min + t.y_max) / 2)


GEOMETRY = Geometry()

# Fill-level thresholds in scoop-units, checked in order.
FILL_LEVELS: tuple[tuple[float, str], ...] = ((0.5, "empty"), (3.0, "low"), (6.0, "half"))


def fill_level(amount: float) -> str:
    for bound, label in FILL_LEVELS:
        if amount < bound:
            return label
    return "full"


@dataclass(frozen=True)
class Bowl:
    id: int
    color: str
    contents: FoodKind
    composition: tuple[tuple[FoodKind, float], ...]
    position: Position
    spilled: bool = False
    location: str = "table"

    @property
    def amount(self) -> float:
        return sum(a for _, a in self.composition)

    def amount_of(self, kind: FoodKind) -> float:
        return sum(a for k, a in self.composition if k is kind)

    @property
    def on_table(self) -> bool:
        return self.location == "table"

    @property
    def label(self) -> str:
        return f"{self.color}_bowl"

    def with_amount(self, kind: FoodKind, delta: float) -> "Bowl":
        comp = dict(self.composition)
        comp[kind] = comp.get(kind, 0.0) + delta
        if comp[kind] < AMOUNT_EPS:
            del comp[kind]
        return replace(self, composition=_sorted_comp(comp))


def _sorted_comp(comp: dict[FoodKind, float]) -> tuple[tuple[FoodKind, float], ...]:
    return tuple(sorted(comp.items(), key=lambda kv: kv[0].value))


def make_bowl(id: int, color: str, contents: FoodKind, amount: float, x: float, y: float) -> Bowl:
    comp = ((contents, float(amount)),) if amount > 0 else ()
    return Bowl(id, color, contents, comp, Position(x, y))


@dataclass(frozen=True)
class Dumbwaiter:
    door: str = "closed"
    running: bool = False
    position: Position = GEOMETRY.dumbwaiter_door
    sweep_zone: Rect = GEOMETRY.sweep_zone

    @property
    def is_open(self) -> bool:
        return self.door == "open"


@dataclass(frozen=True)
class Manipulator:
    at: str = "home"
    holding_spoon: bool = False
    spoon_contents: tuple[FoodKind, float] | None = None

    @property
    def at_bowl(self) -> int | None:
        if self.at.startswith("bowl:"):
            return int(self.at[5:])
        return None


@dataclass(frozen=True)
class SpillEvent:
    step: int
    description: str
    food: FoodKind | None = None
    amount: float = 0.0


@dataclass(frozen=True)
class WorldState:
    bowls: tuple[Bowl, ...]
    dumbwaiter: Dumbwaiter = field(default_factory=Dumbwaiter)
    holder_position: Position = GEOMETRY.holder
    manipulator: Manipulator = field(default_factory=Manipulator)
    step_count: int = 0
    spill_events: tuple[SpillEvent, ...] = ()

    def bowl(self, id: int) -> Bowl:
        for b in self.bowls:
            if b.id == id:
                return b
        raise KeyError(id)

    def bowl_by_color(self, color: str) -> Bowl | None:
        for b in self.bowls:
            if b.color == color:
                return b
        return None

    def table_bowls(self) -> list[Bowl]:
        """Non-spilled bowls standing on the table, ordered by id."""
        return sorted((b for b in self.bowls if b.on_table and not b.spilled), key=lambda b: b.id)

    def manipulator_position(self) -> Position:
        at = self.manipulator.at
        if at == "home":
            return GEOMETRY.home
        if at == "holder":
            return self.holder_position
        if at == "dumbwaiter":
            return self.dumbwaiter.position
        return self.bowl(self.manipulator.at_bowl).position

    def totals(self) -> dict[FoodKind, float]:
        """Per-kind food in bowls, on the spoon and recorded as spilled."""
        out: dict[FoodKind, float] = {}
        for b in self.bowls:
            for k, a in b.composition:
                out[k] = out.get(k, 0.0) + a
        if self.manipulator.spoon_contents:
            k, a = self.manipulator.spoon_contents
            out[k] = out.get(k, 0.0) + a
        for ev in self.spill_events:
            if ev.food is not None:
                out[ev.food] = out.get(ev.food, 0.0) + ev.amount
        return out

    def with_bowl(self, bowl: Bowl) -> "WorldState":
        return replace(self, bowls=tuple(bowl if b.id == bowl.id else b for b in self.bowls))

    # serialization -------------------------------------------------------

    def to_dict(self) -> dict[str, Any]:
        return {
            "version": STATE_SCHEMA_VERSION,
            "bowls": [_bowl_to_dict(b) for b in self.bowls],
            "dumbwaiter": {
                "door": self.dumbwaiter.door,
                "running": self.dumbwaiter.running,
                "position": _pos(self.dumbwaiter.position),
                "sweep_zone": list(_rect(self.dumbwaiter.sweep_zone)),
            },
            "holder_position": _pos(self.holder_position),
            "manipulator": {
                "at": self.manipulator.at,
                "holding_spoon": self.manipulator.holding_spoon,
                "spoon_contents": (
                    None if self.manipulator.spoon_contents is None
                    else [self.manipulator.spoon_contents[0].value, self.manipulator.spoon_contents[1]]
                ),
            },
            "step_count": self.step_count,
            "spill_events": [
                {"step": e.step, "description": e.description,
                 "food": e.food.value if e.food else None, "amount": e.amount}
                for e in self.spill_events
            ],
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "WorldState":
        if d.get("version") != STATE_SCHEMA_VERSION:
            raise ValueError(f"unsupported world state version {d.get('version')!r}")
        dw = d["dumbwaiter"]
        m = d["manipulator"]
        sc = m["spoon_contents"]
        return cls(
            bowls=tuple(_bowl_from_dict(b) for b in d["bowls"]),
            dumbwaiter=Dumbwaiter(dw["door"], dw["running"], _unpos(dw["position"]), Rect(*dw["sweep_zone"])),
            holder_position=_unpos(d["holder_position"]),
            manipulator=Manipulator(m["at"], m["holding_spoon"], None if sc is None else (FoodKind(sc[0]), sc[1])),
            step_count=d["step_count"],
            spill_events=tuple(
                SpillEvent(e["step"], e["description"], FoodKind(e["food"]) if e["food"] else None, e["amount"])
                for e in d["spill_events"]
            ),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _pos(p: Position) -> dict[str, float]:
    return {"x": p.x, "y": p.y}


def _unpos(d: dict[str, float]) -> Position:
    return Position(d["x"], d["y"])


def _rect(r: Rect) -> tuple[float, float, float, float]:
    return (r.x_min, r.y_min, r.x_max, r.y_max)


def _bowl_to_dict(b: Bowl) -> dict[str, Any]:
    return {
        "id": b.id,
        "color": b.color,
        "contents": b.contents.value,
        "amount": b.amount,
        "composition": {k.value: a for k, a in b.composition},
        "position": _pos(b.position),
        "spilled": b.spilled,
        "location": b.location,
    }


def _bowl_from_dict(d: dict[str, Any]) -> Bowl:
    comp = {FoodKind(k): float(a) for k, a in d["composition"].items()}
    return Bowl(d["id"], d["color"], FoodKind(d["contents"]), _sorted_comp(comp),
                _unpos(d["position"]), d["spilled"], d["location"])


# geometry queries ------------------------------------------------------------


class NoBowlsError(LookupError):
    pass


def nearest_bowl(state: WorldState) -> int:
    """Id of the non-spilled table bowl closest to the manipulator; ties go to the lowest id."""
    candidates = state.table_bowls()
    if not candidates:
        raise NoBowlsError("no bowl on the table")
    here = state.manipulator_position()
    return min(candidates, key=lambda b: (b.position.dist(here), b.id)).id


def holder_blockers(state: WorldState, geo: Geometry = GEOMETRY) -> list[Bowl]:
    return [b for b in state.table_bowls() if b.position.dist(state.holder_position) < geo.blocking_radius]


def dumbwaiter_blockers(state: WorldState, geo: Geometry = GEOMETRY) -> list[Bowl]:
    zone = state.dumbwaiter.sweep_zone
    return [b for b in state.table_bowls() if zone.dist_to(b.position) < geo.blocking_radius]


def is_reachable(pos: Position, geo: Geometry = GEOMETRY) -> bool:
    return pos.dist(geo.home) <= geo.reach_radius


def current_bowl(state: WorldState) -> Bowl | None:
    """The non-spilled table bowl the manipulator is at, if any."""
    bid = state.manipulator.at_bowl
    if bid is None:
        return None
    b = state.bowl(bid)
    if b.spilled or not b.on_table:
        return None
    return b


def pulled_position(pos: Position, geo: Geometry = GEOMETRY) -> Position:
    """Where pull_bowl_closer leaves a bowl standing at ``pos``.

    The bowl slides on the straight line toward the table center and stops on
    the circle of radius ``pull_target_radius`` around the base.  Bowls already
    inside that circle stay put.  The table center lies inside the circle, so
    the crossing is unique.
    """
    r = geo.pull_target_radius
    if pos.norm <= r:
        return pos
    c = geo.table_center
    dx, dy = c.x - pos.x, c.y - pos.y
    # |pos + s*d| = r, solve for the root in [0, 1]
    a = dx * dx + dy * dy
    b = 2 * (pos.x * dx + pos.y * dy)
    cc = pos.x * pos.x + pos.y * pos.y - r * r
    s = (-b - math.sqrt(b * b - 4 * a * cc)) / (2 * a)
    return Position(pos.x + s * dx, pos.y + s * dy)


# transitions -----------------------------------------------------------------


@dataclass(frozen=True)
class ExecutionOutcome:
    status: str  # ok | no_op | spill
    detail: str


def _spill_bowls(state: WorldState, bowls: Iterable[Bowl], why: str) -> WorldState:
    events = list(state.spill_events)
    for b in bowls:
        state = state.with_bowl(replace(b, spilled=True))
        events.append(SpillEvent(state.step_count + 1, f"{b.label} spilled: {why}"))
    return replace(state, spill_events=tuple(events))


def _dump_spoon(state: WorldState, why: str) -> WorldState:
    kind, amount = state.manipulator.spoon_contents
    ev = SpillEvent(state.step_count + 1, f"{amount:g} of {kind.display} dumped: {why}", kind, amount)
    return replace(
        state,
        manipulator=replace(state.manipulator, spoon_contents=None),
        spill_events=state.spill_events + (ev,),
    )


def _scoop_kind(bowl: Bowl) -> FoodKind:
    if bowl.amount_of(bowl.contents) > AMOUNT_EPS:
        return bowl.contents
    return max(bowl.composition, key=lambda kv: (kv[1], kv[0].value))[0]


def apply_skill(state: WorldState, skill: Skill, geo: Geometry = GEOMETRY) -> tuple[WorldState, ExecutionOutcome]:
    """Execute ``skill`` and return the successor state with its outcome.

    Infeasible executions never raise: they yield ``no_op`` or ``spill``
    outcomes so that ungated planners can be run and judged.  Only a
    move_to for a color absent from the scene is rejected (ValueError).
    """
    n_events = len(state.spill_events)
    new, detail, noop = _transition(state, skill, geo)
    new = replace(new, step_count=state.step_count + 1)
    if len(new.spill_events) > n_events:
        status = "spill"
    elif noop:
        status = "no_op"
    else:
        status = "ok"
    return new, ExecutionOutcome(status, detail)


def _transition(s: WorldState, skill: Skill, geo: Geometry) -> tuple[WorldState, str, bool]:
    m = s.manipulator
    k = skill.kind

    if k is SkillKind.DONE:
        return s, "done", False

    if k is SkillKind.MOVE_TO_BOWL:
        b = s.bowl_by_color(skill.color)
        if b is None:
            raise ValueError(f"no {skill.color} bowl in the scene")
        if not b.on_table:
            return s, f"{b.label} is not on the table", True
        return replace(s, manipulator=replace(m, at=f"bowl:{b.id}")), f"moved to {b.label}", False

    if k is SkillKind.GRASP_SPOON:
        if m.holding_spoon:
            return s, "spoon already in hand", True
        blockers = holder_blockers(s, geo)
        s = _spill_bowls(s, blockers, "knocked while reaching the holder")
        s = replace(s, manipulator=replace(s.manipulator, at="holder", holding_spoon=True))
        return s, "grasped spoon", False

    if k is SkillKind.PUT_SPOON_BACK:
        if not m.holding_spoon:
            return s, "no spoon in hand", True
        blockers = holder_blockers(s, geo)
        s = _spill_bowls(s, blockers, "knocked while reaching the holder")
        if s.manipulator.spoon_contents is not None:
            s = _dump_spoon(s, "spoon returned with food on it")
        s = replace(s, manipulator=replace(s.manipulator, at="holder", holding_spoon=False))
        return s, "spoon returned", False

    if k is SkillKind.SCOOP:
        if not m.holding_spoon:
            return s, "no spoon in hand", True
        b = current_bowl(s)
        if b is None:
            return s, "not at a bowl", True
        if not is_reachable(b.position, geo):
            return _spill_bowls(s, [b], "scooped beyond reach"), f"{b.label} out of reach", False
        if m.spoon_contents is not None:
            s = _dump_spoon(s, "scooped with a loaded spoon")
        if b.amount < AMOUNT_EPS:
            return s, f"{b.label} is empty", True
        kind = _scoop_kind(b)
        take = min(geo.scoop_size, b.amount_of(kind))
        s = s.with_bowl(b.with_amount(kind, -take))
        s = replace(s, manipulator=replace(s.manipulator, spoon_contents=(kind, take)))
        return s, f"scooped {take:g} of {kind.display} from {b.label}", False

    if k is SkillKind.DROP_FOOD:
        if not m.holding_spoon or m.spoon_contents is None:
            return s, "nothing on the spoon", True
        b = current_bowl(s)
        if b is None:
            return _dump_spoon(s, "dropped away from any bowl"), "food dropped on the table", False
        kind, amount = m.spoon_contents
        s = s.with_bowl(b.with_amount(kind, amount))
        s = replace(s, manipulator=replace(m, spoon_contents=None))
        return s, f"dropped {amount:g} of {kind.display} into {b.label}", False

    if k is SkillKind.STIR:
        if not m.holding_spoon or current_bowl(s) is None:
            return s, "nothing to stir", True
        return s, "stirred", False

    if k is SkillKind.PULL_BOWL_CLOSER:
        if not s.table_bowls():
            return s, "no bowl to pull", True
        b = s.bowl(nearest_bowl(s))
        if m.holding_spoon:
            return _spill_bowls(s, [b], "pulled with the spoon in hand"), f"{b.label} tipped over", False
        s = s.with_bowl(replace(b, position=pulled_position(b.position, geo)))
        s = replace(s, manipulator=replace(m, at=f"bowl:{b.id}"))
        return s, f"pulled {b.label}", False

    if k is SkillKind.OPEN_DUMBWAITER:
        if s.dumbwaiter.is_open or s.dumbwaiter.running:
            return s, "dumbwaiter cannot be opened now", True
        s = _spill_bowls(s, dumbwaiter_blockers(s, geo), "hit by the dumbwaiter door")
        s = replace(s, dumbwaiter=replace(s.dumbwaiter, door="open"), manipulator=replace(m, at="dumbwaiter"))
        return s, "dumbwaiter opened", False

    if k is SkillKind.CLOSE_DUMBWAITER:
        if not s.dumbwaiter.is_open:
            return s, "dumbwaiter already closed", True
        s = _spill_bowls(s, dumbwaiter_blockers(s, geo), "hit by the dumbwaiter door")
        s = replace(s, dumbwaiter=replace(s.dumbwaiter, door="closed"), manipulator=replace(m, at="dumbwaiter"))
        return s, "dumbwaiter closed", False

    if k is SkillKind.PUT_BOWL_INTO_DUMBWAITER:
        if not s.table_bowls():
            return s, "no bowl to place", True
        b = s.bowl(nearest_bowl(s))
        if m.holding_spoon:
            return _spill_bowls(s, [b], "grabbed with the spoon in hand"), f"{b.label} tipped over", False
        if not is_reachable(b.position, geo):
            return s, f"{b.label} out of reach", True
        if not s.dumbwaiter.is_open:
            return _spill_bowls(s, [b], "pushed against the closed door"), f"{b.label} hit the door", False
        s = s.with_bowl(replace(b, location="dumbwaiter", position=s.dumbwaiter.position))
        s = replace(s, manipulator=replace(m, at="dumbwaiter"))
        return s, f"{b.label} placed into the dumbwaiter", False

    if k is SkillKind.START_DUMBWAITER:
        if s.dumbwaiter.is_open or s.dumbwaiter.running:
            return s, "dumbwaiter cannot start now", True
        s = replace(s, dumbwaiter=replace(s.dumbwaiter, running=True), manipulator=replace(m, at="dumbwaiter"))
        return s, "dumbwaiter started", False

    raise AssertionError(k)


def run_skills(state: WorldState, skills: Iterable[Skill], geo: Geometry = GEOMETRY) -> tuple[WorldState, list[ExecutionOutcome]]:
    outcomes = []
    for sk in skills:
        state, out = apply_skill(state, sk, geo)
        outcomes.append(out)
    return state, outcomes


# scene description -----------------------------------------------------------


def object_line(bowl: Bowl) -> str:
    """``yellow_bowl (with mung beans)``."""
    return f"{bowl.label} (with {bowl.contents.display})"


def describe_scene(state: WorldState) -> str:
    lines = []
    for b in sorted(state.bowls, key=lambda b: b.id):
        where = "in dumbwaiter" if not b.on_table else f"at ({b.position.x:.2f}, {b.position.y:.2f})"
        extra = ", spilled" if b.spilled else ""
        lines.append(f"{object_line(b)} {where}, {fill_level(b.amount)}{extra}")
    dw = state.dumbwaiter
    lines.append(
        f"dumbwaiter: door {dw.door}, {'running' if dw.running else 'idle'}, "
        f"{sum(1 for b in state.bowls if not b.on_table)} bowl(s) inside"
    )
    spoon = "spoon in gripper" if state.manipulator.holding_spoon else "spoon in holder"
    lines.append(f"holder at ({state.holder_position.x:.2f}, {state.holder_position.y:.2f}): {spoon}")
    return "\n".join(lines)
