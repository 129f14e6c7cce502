"""Binary predicates over the world state and per-skill preconditions.

A skill is feasible when every conjunct of its precondition holds.  Each
violated conjunct yields one feedback sentence of the form
``Cannot do {skill} because {reason}, {suggestion}.``
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .world import (
    GEOMETRY,
    Bowl,
    Geometry,
    Skill,
    SkillKind,
    WorldState,
    current_bowl,
    dumbwaiter_blockers,
    holder_blockers,
    is_reachable,
    nearest_bowl,
)

PREDICATES = (
    "spoon_on_hand",
    "food_on_hand",
    "dumbwaiter_opened",
    "close_to_target",
    "obstacle_blocked_holder",
    "obstacle_blocked_dumbwaiter",
    "reachable",
)


@dataclass(frozen=True)
class PredicateSet:
    spoon_on_hand: bool
    food_on_hand: bool
    dumbwaiter_opened: bool
    close_to_target: bool
    obstacle_blocked_holder: bool
    obstacle_blocked_dumbwaiter: bool
    reachable: bool
    # target facts the preconditions also need; read here so check() never touches the state
    target_exists: bool = False
    target_color: str | None = None
    target_amount: float = 0.0
    dumbwaiter_running: bool = False
    holder_blocker_colors: tuple[str, ...] = ()
    dumbwaiter_blocker_colors: tuple[str, ...] = ()

    def as_dict(self) -> dict[str, bool]:
        return {p: getattr(self, p) for p in PREDICATES}


@dataclass(frozen=True)
class AffordanceVerdict:
    feasible: bool
    violations: tuple[tuple[str, bool], ...] = ()
    feedback: tuple[str, ...] = field(default=())

    def to_dict(self) -> dict:
        return {
            "feasible": self.feasible,
            "violations": [[name, expected] for name, expected in self.violations],
            "feedback": list(self.feedback),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AffordanceVerdict":
        return cls(d["feasible"], tuple((n, e) for n, e in d["violations"]), tuple(d["feedback"]))


def implied_target(state: WorldState, skill: Skill) -> Bowl | None:
    """The bowl a skill acts upon, or None when there is none."""
    k = skill.kind
    if k in (SkillKind.SCOOP, SkillKind.DROP_FOOD, SkillKind.STIR):
        return current_bowl(state)
    if k in (SkillKind.PULL_BOWL_CLOSER, SkillKind.PUT_BOWL_INTO_DUMBWAITER):
        if not state.table_bowls():
            return None
        return state.bowl(nearest_bowl(state))
    if k is SkillKind.MOVE_TO_BOWL:
        b = state.bowl_by_color(skill.color)
        if b is None or b.spilled or not b.on_table:
            return None
        return b
    return None


def eval_predicates(state: WorldState, skill: Skill, geo: Geometry = GEOMETRY) -> PredicateSet:
    m = state.manipulator
    target = implied_target(state, skill)
    hb = holder_blockers(state, geo)
    db = dumbwaiter_blockers(state, geo)
    return PredicateSet(
        spoon_on_hand=m.holding_spoon,
        food_on_hand=m.spoon_contents is not None,
        dumbwaiter_opened=state.dumbwaiter.is_open,
        close_to_target=target is not None and m.at_bowl == target.id,
        obstacle_blocked_holder=bool(hb),
        obstacle_blocked_dumbwaiter=bool(db),
        reachable=target is not None and is_reachable(target.position, geo),
        target_exists=target is not None,
        target_color=None if target is None else target.color,
        target_amount=0.0 if target is None else target.amount,
        dumbwaiter_running=state.dumbwaiter.running,
        holder_blocker_colors=tuple(b.color for b in hb),
        dumbwaiter_blocker_colors=tuple(b.color for b in db),
    )


# (condition name, required value) conjuncts per skill kind, in feedback order.
PRECONDITIONS: dict[SkillKind, tuple[tuple[str, bool], ...]] = {
    SkillKind.GRASP_SPOON: (("spoon_on_hand", False), ("obstacle_blocked_holder", False)),
    SkillKind.PUT_SPOON_BACK: (("spoon_on_hand", True), ("food_on_hand", False), ("obstacle_blocked_holder", False)),
    SkillKind.SCOOP: (
        ("spoon_on_hand", True), ("food_on_hand", False), ("close_to_target", True),
        ("reachable", True), ("sufficient_food", True),
    ),
    SkillKind.DROP_FOOD: (("spoon_on_hand", True), ("food_on_hand", True), ("close_to_target", True)),
    SkillKind.STIR: (("spoon_on_hand", True), ("close_to_target", True)),
    SkillKind.PULL_BOWL_CLOSER: (("spoon_on_hand", False), ("target_exists", True)),
    SkillKind.OPEN_DUMBWAITER: (("dumbwaiter_opened", False), ("obstacle_blocked_dumbwaiter", False)),
    SkillKind.CLOSE_DUMBWAITER: (("dumbwaiter_opened", True), ("obstacle_blocked_dumbwaiter", False)),
    SkillKind.PUT_BOWL_INTO_DUMBWAITER: (("dumbwaiter_opened", True), ("spoon_on_hand", False), ("reachable", True)),
    SkillKind.START_DUMBWAITER: (("dumbwaiter_opened", False), ("dumbwaiter_running", False)),
    SkillKind.MOVE_TO_BOWL: (("target_exists", True),),
    SkillKind.DONE: (),
}


def _value(preds: PredicateSet, name: str, geo: Geometry) -> bool:
    if name == "sufficient_food":
        return preds.target_amount >= geo.insufficient_food
    return getattr(preds, name)


def _bowls(colors: tuple[str, ...]) -> str:
    names = [f"{c} bowl" for c in colors]
    if len(names) == 1:
        return f"the {names[0]} is"
    return "the " + ", ".join(names[:-1]) + f" and {names[-1]} are"


def _reason(name: str, expected: bool, preds: PredicateSet, skill: Skill) -> tuple[str, str]:
    target = f"the target {preds.target_color} bowl" if preds.target_color else "the target bowl"
    if name == "spoon_on_hand":
        if expected:
            return "spoon is not on hand", "please grasp the spoon first"
        return "spoon is on hand", "please put it back first"
    if name == "food_on_hand":
        if expected:
            return "there is no food on the spoon", "please scoop some food first"
        return "there is food on the spoon", "please drop the food first"
    if name == "close_to_target":
        return "the robot is not close to any bowl", "please move to a bowl first"
    if name == "reachable":
        return f"{target} is too far", "please pull it closer"
    if name == "sufficient_food":
        return f"{target} has insufficient food", "please scoop from another bowl"
    if name == "obstacle_blocked_holder":
        return f"{_bowls(preds.holder_blocker_colors)} blocking the holder", "please move the blocking bowl first"
    if name == "obstacle_blocked_dumbwaiter":
        return (f"{_bowls(preds.dumbwaiter_blocker_colors)} blocking the dumbwaiter door",
                "please move the blocking bowl first")
    if name == "dumbwaiter_opened":
        if expected:
            return "the dumbwaiter is closed", "please open it first"
        return "the dumbwaiter is already open", "please do not open it again"
    if name == "dumbwaiter_running":
        return "the dumbwaiter is already running", "please do not start it again"
    if name == "target_exists":
        if skill.kind is SkillKind.MOVE_TO_BOWL:
            return f"the {skill.color} bowl is not available on the table", "please choose another bowl"
        return "there is no bowl on the table", "please choose another action"
    raise KeyError(name)


def feedback_line(skill: Skill, reason: str, suggestion: str) -> str:
    return f"Cannot do {skill.name} because {reason}, {suggestion}."


def check_predicates(preds: PredicateSet, skill: Skill, geo: Geometry = GEOMETRY) -> AffordanceVerdict:
    """Evaluate the precondition of ``skill`` from an already computed predicate set."""
    violations = []
    feedback = []
    for name, expected in PRECONDITIONS[skill.kind]:
        if _value(preds, name, geo) != expected:
            violations.append((name, expected))
            feedback.append(feedback_line(skill, *_reason(name, expected, preds, skill)))
    return AffordanceVerdict(not violations, tuple(violations), tuple(feedback))


def check(state: WorldState, skill: Skill, geo: Geometry = GEOMETRY) -> AffordanceVerdict:
    return check_predicates(eval_predicates(state, skill, geo), skill, geo)
