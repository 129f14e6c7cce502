"""Benchmark scenarios: seeded generation per task category and the symbolic oracle planner."""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Callable, Iterable

from .affordance import check
from .world import (
    AMOUNT_EPS,
    DONE,
    GEOMETRY,
    TOPPINGS,
    Bowl,
    FoodKind,
    Position,
    Skill,
    SkillKind,
    WorldState,
    apply_skill,
    dumbwaiter_blockers,
    holder_blockers,
    is_reachable,
    make_bowl,
    move_to,
)

SCENARIO_SCHEMA_VERSION = 1
COLORS = ("white", "green", "blue", "red", "purple", "pink", "yellow", "orange", "brown", "black")
MAX_PLACEMENT_ATTEMPTS = 1000
MAX_PLAN_LENGTH = 80
MAX_TOTAL_SCOOPS = 3
MAX_REFERENCE_LENGTH = 22  # leaves room for the +3 budget and recoveries within 30 iterations

# grounding margins: referents closer than these are ambiguous
AMOUNT_MARGIN = 1.0
LATERAL_MARGIN = 0.1
DISTANCE_MARGIN = 0.05


class TaskCategory(str, Enum):
    SEMANTIC_REASONING = "semantic_reasoning"
    QUANTITY_ESTIMATION = "quantity_estimation"
    RELATIVE_POSITIONING = "relative_positioning"
    REACHABILITY_ANALYSIS = "reachability_analysis"
    COLLISION_AVOIDANCE = "collision_avoidance"


class GenerationError(RuntimeError):
    pass


class UnsatisfiableGoal(RuntimeError):
    pass


@dataclass(frozen=True)
class Transfer:
    food: FoodKind
    source: int
    destination: int
    scoops: int
    source_ref: str  # how the instruction names the source, see ground_source

    def to_dict(self) -> dict[str, Any]:
        return {"food": self.food.value, "source": self.source, "destination": self.destination,
                "scoops": self.scoops, "source_ref": self.source_ref}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Transfer":
        return cls(FoodKind(d["food"]), d["source"], d["destination"], d["scoops"], d["source_ref"])


@dataclass(frozen=True)
class GoalSpec:
    transfers: tuple[Transfer, ...]
    dumbwaiter_bowl: int | None = None
    return_spoon: bool = False

    @property
    def dumbwaiter_ops(self) -> dict[str, bool]:
        need = self.dumbwaiter_bowl is not None
        return {"open": need, "close": need, "start": need, "insert": need}

    @property
    def forbidden(self) -> dict[str, Any]:
        """Everything the instruction does not ask for."""
        allowed = {(t.food, t.destination) for t in self.transfers}
        return {
            "transfers_other_than": sorted((f.value, d) for f, d in allowed),
            "dumbwaiter_ops": [op for op, need in self.dumbwaiter_ops.items() if not need],
        }

    def to_dict(self) -> dict[str, Any]:
        return {
            "transfers": [t.to_dict() for t in self.transfers],
            "dumbwaiter_ops": self.dumbwaiter_ops,
            "dumbwaiter_bowl": self.dumbwaiter_bowl,
            "return_spoon": self.return_spoon,
            "forbidden": self.forbidden,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "GoalSpec":
        return cls(tuple(Transfer.from_dict(t) for t in d["transfers"]), d["dumbwaiter_bowl"], d["return_spoon"])


@dataclass(frozen=True)
class Scenario:
    id: str
    category: TaskCategory
    seed: int
    instruction: str
    initial_state: WorldState
    goal: GoalSpec
    reference_plan: tuple[Skill, ...] = field(default=())

    @property
    def skills(self) -> list[Skill]:
        return scenario_skills(self.initial_state)

    def to_dict(self) -> dict[str, Any]:
        return {
            "version": SCENARIO_SCHEMA_VERSION,
            "id": self.id,
            "category": self.category.value,
            "seed": self.seed,
            "instruction": self.instruction,
            "initial_state": self.initial_state.to_dict(),
            "goal": self.goal.to_dict(),
            "reference_plan": [s.name for s in self.reference_plan],
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Scenario":
        if d.get("version") != SCENARIO_SCHEMA_VERSION:
            raise ValueError(f"unsupported scenario version {d.get('version')!r}")
        return cls(
            d["id"], TaskCategory(d["category"]), d["seed"], d["instruction"],
            WorldState.from_dict(d["initial_state"]), GoalSpec.from_dict(d["goal"]),
            tuple(Skill.parse(s) for s in d["reference_plan"]),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)


# skill set -------------------------------------------------------------------

_FIXED_ORDER = (
    SkillKind.SCOOP, SkillKind.STIR, SkillKind.DROP_FOOD, SkillKind.PULL_BOWL_CLOSER,
    SkillKind.OPEN_DUMBWAITER, SkillKind.CLOSE_DUMBWAITER, SkillKind.START_DUMBWAITER,
    SkillKind.PUT_BOWL_INTO_DUMBWAITER, SkillKind.DONE, SkillKind.GRASP_SPOON, SkillKind.PUT_SPOON_BACK,
)


def scenario_skills(state: WorldState) -> list[Skill]:
    """Skill set in prompt order: the eleven fixed skills, then one move-to per bowl."""
    return [Skill(k) for k in _FIXED_ORDER] + [move_to(b.color) for b in sorted(state.bowls, key=lambda b: b.id)]


# goal checking ---------------------------------------------------------------


def delivered(transfer: Transfer, initial: WorldState, state: WorldState) -> float:
    return state.bowl(transfer.destination).amount_of(transfer.food) - initial.bowl(transfer.destination).amount_of(transfer.food)


def goal_problems(goal: GoalSpec, initial: WorldState, final: WorldState) -> list[str]:
    """Reasons ``final`` does not satisfy ``goal``; empty when satisfied."""
    problems = []
    for t in goal.transfers:
        got = delivered(t, initial, final)
        if abs(got - t.scoops) > 1e-6:
            problems.append(f"{final.bowl(t.destination).label} received {got:g} of {t.food.value}, wanted {t.scoops}")
        for b in initial.bowls:
            if b.id in (t.source, t.destination):
                continue
            if final.bowl(b.id).amount_of(t.food) < b.amount_of(t.food) - 1e-6:
                problems.append(f"{t.food.value} taken from {b.label} instead of {initial.bowl(t.source).label}")
    in_dw = [b.id for b in final.bowls if not b.on_table]
    if goal.dumbwaiter_bowl is not None:
        if in_dw != [goal.dumbwaiter_bowl]:
            problems.append(f"dumbwaiter holds {in_dw}, wanted [{goal.dumbwaiter_bowl}]")
        if final.dumbwaiter.is_open:
            problems.append("dumbwaiter left open")
        if not final.dumbwaiter.running:
            problems.append("dumbwaiter not started")
    elif in_dw or final.dumbwaiter.running:
        problems.append("dumbwaiter used without instruction")
    if goal.return_spoon and final.manipulator.holding_spoon:
        problems.append("spoon not returned")
    return problems


# referent grounding ----------------------------------------------------------


def ground_source(state: WorldState, food: FoodKind, ref: str, destination: int) -> list[int]:
    """Bowl ids matching a source referent; more than one means the referent is ambiguous.

    ``ref`` is one of ``color:<c>``, ``food``, ``fuller``, ``less``, ``left``,
    ``right``, ``nearest_to:<c>``, ``closest_to_robot``.
    """
    if ref.startswith("color:"):
        b = state.bowl_by_color(ref[6:])
        return [] if b is None else [b.id]
    pool = [b for b in state.bowls if b.id != destination and b.contents is food and b.on_table]
    if ref == "food":
        return [b.id for b in pool]
    if not pool:
        return []
    key: Callable[[Bowl], float]
    if ref == "fuller":
        key, margin = (lambda b: -b.amount), AMOUNT_MARGIN
    elif ref == "less":
        key, margin = (lambda b: b.amount), AMOUNT_MARGIN
    elif ref == "left":
        key, margin = (lambda b: b.position.x), LATERAL_MARGIN
    elif ref == "right":
        key, margin = (lambda b: -b.position.x), LATERAL_MARGIN
    elif ref == "closest_to_robot":
        key, margin = (lambda b: b.position.norm), DISTANCE_MARGIN
    elif ref.startswith("nearest_to:"):
        anchor = state.bowl_by_color(ref[len("nearest_to:"):])
        if anchor is None:
            return []
        key, margin = (lambda b: b.position.dist(anchor.position)), DISTANCE_MARGIN
    else:
        raise ValueError(f"unknown referent {ref!r}")
    best = min(key(b) for b in pool)
    return sorted(b.id for b in pool if key(b) < best + margin)


# oracle planner --------------------------------------------------------------


def _goto(state: WorldState, bowl: Bowl, then: Skill) -> Skill:
    return then if state.manipulator.at_bowl == bowl.id else move_to(bowl.color)


def next_skill(scenario: Scenario, state: WorldState) -> Skill:
    """The oracle's choice in ``state``; a pure function of (scenario, state).

    Because the choice depends on the state alone, the plan from any state
    reached by following the oracle is a suffix of the plan from the start.
    Returns DONE when nothing useful is left or the goal can no longer be met.
    """
    goal, init = scenario.goal, scenario.initial_state
    m = state.manipulator
    geo = GEOMETRY
    open_transfers = [t for t in goal.transfers if delivered(t, init, state) < t.scoops - AMOUNT_EPS]
    if any(state.bowl(t.destination).spilled or state.bowl(t.source).spilled for t in open_transfers):
        return DONE

    if m.spoon_contents is not None:
        kind = m.spoon_contents[0]
        dest = next((t.destination for t in open_transfers if t.food is kind), None)
        if dest is None:
            # stray food goes back where it belongs
            homes = [b for b in state.table_bowls() if b.contents is kind]
            if not homes:
                return DONE
            dest = homes[0].id
        return _goto(state, state.bowl(dest), Skill(SkillKind.DROP_FOOD))

    if open_transfers:
        far_sources = sorted({t.source for t in open_transfers
                              if not is_reachable(state.bowl(t.source).position, geo)})
        blockers = [b.id for b in holder_blockers(state, geo)]
        if m.holding_spoon:
            if far_sources:
                return Skill(SkillKind.PUT_SPOON_BACK)
            t = open_transfers[0]
            src = state.bowl(t.source)
            if src.amount < geo.insufficient_food:
                return DONE
            return _goto(state, src, Skill(SkillKind.SCOOP))
        to_pull = blockers + [s for s in far_sources if s not in blockers]
        if to_pull:
            return _goto(state, state.bowl(to_pull[0]), Skill(SkillKind.PULL_BOWL_CLOSER))
        return Skill(SkillKind.GRASP_SPOON)

    if goal.dumbwaiter_bowl is not None:
        target = state.bowl(goal.dumbwaiter_bowl)
        dw = state.dumbwaiter
        if target.spilled:
            return DONE
        if target.on_table:
            if m.holding_spoon:
                return Skill(SkillKind.PUT_SPOON_BACK)
            to_pull = [b.id for b in dumbwaiter_blockers(state, geo)]
            if not is_reachable(target.position, geo) and target.id not in to_pull:
                to_pull.append(target.id)
            if to_pull:
                return _goto(state, state.bowl(to_pull[0]), Skill(SkillKind.PULL_BOWL_CLOSER))
            if not dw.is_open:
                return DONE if dw.running else Skill(SkillKind.OPEN_DUMBWAITER)
            return _goto(state, target, Skill(SkillKind.PUT_BOWL_INTO_DUMBWAITER))
        if dw.is_open:
            return Skill(SkillKind.CLOSE_DUMBWAITER)
        if not dw.running:
            return Skill(SkillKind.START_DUMBWAITER)

    if m.holding_spoon and goal.return_spoon:
        return Skill(SkillKind.PUT_SPOON_BACK)
    return DONE


def plan_from_state(scenario: Scenario, state: WorldState) -> list[Skill]:
    """Unroll :func:`next_skill` from ``state`` until DONE."""
    plan: list[Skill] = []
    while len(plan) < MAX_PLAN_LENGTH:
        sk = next_skill(scenario, state)
        plan.append(sk)
        if sk == DONE:
            return plan
        state, _ = apply_skill(state, sk)
    raise UnsatisfiableGoal(f"{scenario.id}: oracle exceeded {MAX_PLAN_LENGTH} steps")


def oracle_plan(scenario: Scenario) -> list[Skill]:
    """Reference plan from the initial state; raises UnsatisfiableGoal unless it meets the goal cleanly."""
    plan = plan_from_state(scenario, scenario.initial_state)
    problems = validate_plan(scenario, plan)
    if problems:
        raise UnsatisfiableGoal(f"{scenario.id}: " + "; ".join(problems))
    return plan


def validate_plan(scenario: Scenario, plan: Iterable[Skill]) -> list[str]:
    """Replay ``plan``: every step must pass the gate without spilling and the goal must hold."""
    state = scenario.initial_state
    problems = []
    for i, sk in enumerate(plan, 1):
        verdict = check(state, sk)
        if not verdict.feasible:
            problems.append(f"step {i} {sk.name} gated: {' '.join(verdict.feedback)}")
        state, out = apply_skill(state, sk)
        if out.status == "spill":
            problems.append(f"step {i} {sk.name} spilled: {out.detail}")
    problems += goal_problems(scenario.goal, scenario.initial_state, state)
    return problems


# generation ------------------------------------------------------------------

_MARGIN = 0.07
_MIN_SEPARATION = 0.15
_NEAR_MAX = 0.55
_NEAR_MIN = 0.22
_FAR_MIN = 0.66
_CLEAR = 0.03  # extra clearance around blocking zones for ordinary bowls


def _holder_dist(p: Position) -> float:
    return p.dist(GEOMETRY.holder)


def _sweep_dist(p: Position) -> float:
    return GEOMETRY.sweep_zone.dist_to(p)


def _clear_of_zones(p: Position) -> bool:
    r = GEOMETRY.blocking_radius + _CLEAR
    return _holder_dist(p) >= r and _sweep_dist(p) >= r


REGIONS: dict[str, Callable[[Position], bool]] = {
    "near": lambda p: _NEAR_MIN <= p.norm <= _NEAR_MAX and _clear_of_zones(p),
    "far": lambda p: p.norm >= _FAR_MIN and _clear_of_zones(p),
    "holder_block": lambda p: _holder_dist(p) < GEOMETRY.blocking_radius - 0.02 and p.norm <= 0.57
    and _sweep_dist(p) >= GEOMETRY.blocking_radius + _CLEAR,
    "dumbwaiter_block": lambda p: _sweep_dist(p) < GEOMETRY.blocking_radius - 0.02 and p.norm <= 0.57
    and _holder_dist(p) >= GEOMETRY.blocking_radius + _CLEAR,
}


def _sample_point(rng: random.Random, region: str, taken: list[Position]) -> Position | None:
    t = GEOMETRY.table
    ok = REGIONS[region]
    for _ in range(200):
        p = Position(round(rng.uniform(t.x_min + _MARGIN, t.x_max - _MARGIN), 3),
                     round(rng.uniform(t.y_min + _MARGIN, t.y_max - _MARGIN), 3))
        if ok(p) and all(p.dist(q) >= _MIN_SEPARATION for q in taken):
            return p
    return None


def _scoops(n: int) -> str:
    words = {1: "one scoop", 2: "two scoops", 3: "three scoops"}
    return words[n]


@dataclass
class _Draft:
    """Mutable builder used inside one placement attempt."""

    rng: random.Random
    bowls: list[Bowl] = field(default_factory=list)
    colors: list[str] = field(default_factory=list)

    def add(self, food: FoodKind, amount: float, region: str) -> Bowl:
        taken = [b.position for b in self.bowls]
        p = _sample_point(self.rng, region, taken)
        if p is None:
            raise _Retry
        color = self.colors[len(self.bowls)]
        b = make_bowl(len(self.bowls), color, food, amount, p.x, p.y)
        self.bowls.append(b)
        return b


class _Retry(Exception):
    pass


def _new_draft(rng: random.Random) -> _Draft:
    return _Draft(rng, colors=rng.sample(COLORS, 4))


def _pudding(d: _Draft, region: str = "near") -> Bowl:
    return d.add(FoodKind.TOFU_PUDDING, float(d.rng.randint(3, 6)), region)


def _dumbwaiter_suffix(dest: Bowl) -> str:
    return f" Then put the {dest.color} bowl into the dumbwaiter and start it."


def _spoon_suffix() -> str:
    return " Put the spoon back when you are done."


def _finish(d: _Draft) -> list[Bowl]:
    # shuffle ids so the destination is not always bowl 0
    order = list(range(len(d.bowls)))
    d.rng.shuffle(order)
    return [Bowl(order[i], b.color, b.contents, b.composition, b.position) for i, b in enumerate(d.bowls)]


def _remap(bowls_before: list[Bowl], bowls_after: list[Bowl], bid: int) -> int:
    return bowls_after[[b.id for b in bowls_before].index(bid)].id


def _gen_semantic(d: _Draft, far: bool = False) -> tuple[list[Bowl], str, GoalSpec]:
    rng = d.rng
    n_src = rng.randint(1, 3 if not far else 2)
    foods = rng.sample(TOPPINGS, n_src)
    dest = _pudding(d)
    far_idx = rng.randrange(n_src) if far else -1
    sources = [d.add(f, float(rng.randint(4, 9)), "far" if i == far_idx else "near") for i, f in enumerate(foods)]
    n_transfers = 2 if (n_src >= 2 and not far and rng.random() < 0.3) else 1
    chosen = [sources[far_idx]] if far else rng.sample(sources, n_transfers)
    transfers = []
    budget = MAX_TOTAL_SCOOPS
    for i, s in enumerate(chosen):
        ref = rng.choice(["food", "color"])
        n = rng.randint(1, budget - (len(chosen) - 1 - i))
        budget -= n
        transfers.append(Transfer(s.contents, s.id, dest.id, n,
                                  "food" if ref == "food" else f"color:{s.color}"))
    if len(transfers) == 2:
        a, b = transfers
        text = (f"Place {_scoops(a.scoops)} of {a.food.display} and {_scoops(b.scoops)} of {b.food.display} "
                f"into the {dest.color} bowl.")
        transfers = [Transfer(t.food, t.source, t.destination, t.scoops, "food") for t in transfers]
    else:
        t = transfers[0]
        if t.source_ref == "food":
            text = f"Place {_scoops(t.scoops)} of {t.food.display} into the {dest.color} bowl."
        else:
            text = (f"Transfer {_scoops(t.scoops)} of {t.food.display} from the {d.bowls[t.source].color} bowl "
                    f"into the {dest.color} bowl.")
    return _with_extras(d, dest, text, transfers, dw_chance=0.3 if not far else 0.2)


def _with_extras(d: _Draft, dest: Bowl, text: str, transfers: list[Transfer], dw_chance: float,
                 force_dw: bool = False) -> tuple[list[Bowl], str, GoalSpec]:
    rng = d.rng
    use_dw = force_dw or rng.random() < dw_chance
    return_spoon = False
    if use_dw:
        text += _dumbwaiter_suffix(dest)
    elif rng.random() < 0.4:
        return_spoon = True
        text += _spoon_suffix()
    before = list(d.bowls)
    after = _finish(d)
    transfers = [Transfer(t.food, _remap(before, after, t.source), _remap(before, after, t.destination),
                          t.scoops, t.source_ref) for t in transfers]
    goal = GoalSpec(tuple(transfers), _remap(before, after, dest.id) if use_dw else None, return_spoon)
    return after, text, goal


def _gen_quantity(d: _Draft) -> tuple[list[Bowl], str, GoalSpec]:
    rng = d.rng
    food = rng.choice(TOPPINGS)
    lesser = rng.randint(4, 5)
    fuller = rng.randint(lesser + 2, 9)
    amounts = [lesser, fuller]
    rng.shuffle(amounts)
    dest = _pudding(d)
    cands = [d.add(food, float(a), "near") for a in amounts]
    if rng.random() < 0.5:
        d.add(rng.choice([f for f in TOPPINGS if f is not food]), float(rng.randint(4, 9)), "near")
    ref = "fuller" if rng.random() < 0.7 else "less"
    src = max(cands, key=lambda b: b.amount) if ref == "fuller" else min(cands, key=lambda b: b.amount)
    n = rng.randint(1, 2)
    if ref == "fuller":
        text = rng.choice([
            f"Place {_scoops(n)} of {food.display} from the fuller {food.display} bowl into the bowl with tofu pudding.",
            f"Try your best to get more {food.display} into the bowl with tofu pudding: "
            f"take {_scoops(n)} from the {food.display} bowl that has more.",
        ])
    else:
        text = (f"Place {_scoops(n)} of {food.display} from the {food.display} bowl with less food "
                f"into the bowl with tofu pudding.")
    return _with_extras(d, dest, text, [Transfer(food, src.id, dest.id, n, ref)], dw_chance=0.2)


def _gen_relative(d: _Draft) -> tuple[list[Bowl], str, GoalSpec]:
    rng = d.rng
    food = rng.choice(TOPPINGS)
    dest = _pudding(d)
    cands = [d.add(food, float(rng.randint(4, 9)), "near") for _ in range(2)]
    if rng.random() < 0.4:
        d.add(rng.choice([f for f in TOPPINGS if f is not food]), float(rng.randint(4, 9)), "near")
    ref = rng.choice(["left", "right", "nearest_to", "closest_to_robot"])
    if ref == "left":
        if abs(cands[0].position.x - cands[1].position.x) < 0.15:
            raise _Retry
        src = min(cands, key=lambda b: b.position.x)
        phrase = "on the left"
    elif ref == "right":
        if abs(cands[0].position.x - cands[1].position.x) < 0.15:
            raise _Retry
        src = max(cands, key=lambda b: b.position.x)
        phrase = "on the right"
    elif ref == "nearest_to":
        dists = [c.position.dist(dest.position) for c in cands]
        if abs(dists[0] - dists[1]) < 0.1:
            raise _Retry
        src = cands[dists.index(min(dists))]
        ref = f"nearest_to:{dest.color}"
        phrase = f"nearest to the {dest.color} bowl"
    else:
        norms = [c.position.norm for c in cands]
        if abs(norms[0] - norms[1]) < 0.1:
            raise _Retry
        src = cands[norms.index(min(norms))]
        phrase = "closest to you"
    n = rng.randint(1, 2)
    text = f"Place {_scoops(n)} of {food.display} from the {food.display} bowl {phrase} into the bowl with tofu pudding."
    return _with_extras(d, dest, text, [Transfer(food, src.id, dest.id, n, ref)], dw_chance=0.2)


def _gen_collision(d: _Draft) -> tuple[list[Bowl], str, GoalSpec]:
    rng = d.rng
    at_holder = rng.random() < 0.5
    dest = _pudding(d)
    food = rng.choice(TOPPINGS)
    if at_holder and rng.random() < 0.5:
        # the source itself blocks the holder
        src = d.add(food, float(rng.randint(4, 9)), "holder_block")
    else:
        src = d.add(food, float(rng.randint(4, 9)), "near")
        other = rng.choice([f for f in TOPPINGS if f is not food])
        d.add(other, float(rng.randint(4, 9)), "holder_block" if at_holder else "dumbwaiter_block")
    if rng.random() < 0.3:
        used = {b.contents for b in d.bowls}
        d.add(rng.choice([f for f in TOPPINGS if f not in used]), float(rng.randint(4, 9)), "near")
    n = rng.randint(1, 2)
    text = f"Place {_scoops(n)} of {food.display} into the {dest.color} bowl."
    return _with_extras(d, dest, text, [Transfer(food, src.id, dest.id, n, "food")],
                        dw_chance=0.3, force_dw=not at_holder)


_GENERATORS: dict[TaskCategory, Callable[[_Draft], tuple[list[Bowl], str, GoalSpec]]] = {
    TaskCategory.SEMANTIC_REASONING: _gen_semantic,
    TaskCategory.QUANTITY_ESTIMATION: _gen_quantity,
    TaskCategory.RELATIVE_POSITIONING: _gen_relative,
    TaskCategory.REACHABILITY_ANALYSIS: lambda d: _gen_semantic(d, far=True),
    TaskCategory.COLLISION_AVOIDANCE: _gen_collision,
}


def scenario_id(category: TaskCategory, seed: int, index: int) -> str:
    return f"{category.value}-s{seed}-{index:03d}"


def generate_one(category: TaskCategory, seed: int, index: int) -> Scenario:
    rng = random.Random(f"{category.value}:{seed}:{index}")
    sid = scenario_id(category, seed, index)
    for _ in range(MAX_PLACEMENT_ATTEMPTS):
        d = _new_draft(rng)
        try:
            bowls, text, goal = _GENERATORS[category](d)
        except _Retry:
            continue
        state = WorldState(bowls=tuple(sorted(bowls, key=lambda b: b.id)))
        sc = Scenario(sid, category, seed, text, state, goal)
        try:
            plan = oracle_plan(sc)
        except UnsatisfiableGoal:
            continue
        sc = Scenario(sid, category, seed, text, state, goal, tuple(plan))
        if not category_problems(sc):
            return sc
    raise GenerationError(f"{sid}: constraints unsatisfied after {MAX_PLACEMENT_ATTEMPTS} attempts")


def generate(category: TaskCategory | str, seed: int, count: int) -> list[Scenario]:
    """``count`` scenarios of one category; scenario i depends only on (category, seed, i)."""
    if count < 1:
        raise ValueError("count must be >= 1")
    category = TaskCategory(category)
    return [generate_one(category, seed, i) for i in range(count)]


def generate_all(seed: int, count: int = 30) -> list[Scenario]:
    return [sc for cat in TaskCategory for sc in generate(cat, seed, count)]


# validation ------------------------------------------------------------------


def category_problems(sc: Scenario) -> list[str]:
    """Category constraint violations of a generated scenario (empty when valid)."""
    s = sc.initial_state
    problems = []
    bowls = s.table_bowls()
    colors = [b.color for b in s.bowls]
    if len(set(colors)) != len(colors):
        problems.append("duplicate bowl colors")
    if not 2 <= len(s.bowls) <= 4:
        problems.append(f"{len(s.bowls)} bowls")
    if sum(b.contents is FoodKind.TOFU_PUDDING for b in s.bowls) != 1:
        problems.append("needs exactly one tofu pudding bowl")
    far = [b for b in bowls if not is_reachable(b.position)]
    blocked = holder_blockers(s) + dumbwaiter_blockers(s)
    for t in sc.goal.transfers:
        got = ground_source(s, t.food, t.source_ref, t.destination)
        if got != [t.source]:
            problems.append(f"referent {t.source_ref!r} grounds to {got}, wanted [{t.source}]")
        if s.bowl(t.source).amount < t.scoops:
            problems.append("source holds too little food")
    cat = sc.category
    if cat in (TaskCategory.SEMANTIC_REASONING, TaskCategory.QUANTITY_ESTIMATION, TaskCategory.RELATIVE_POSITIONING):
        if far:
            problems.append("unreachable bowl in a non-reachability scenario")
        if blocked:
            problems.append("blocking bowl in a non-collision scenario")
    if cat is TaskCategory.SEMANTIC_REASONING:
        if any(t.source_ref != "food" and not t.source_ref.startswith("color:") for t in sc.goal.transfers):
            problems.append("semantic referent must be explicit")
    if cat is TaskCategory.QUANTITY_ESTIMATION:
        t = sc.goal.transfers[0]
        cands = [b for b in s.bowls if b.contents is t.food and b.id != t.destination]
        if len(cands) != 2 or abs(cands[0].amount - cands[1].amount) < 2:
            problems.append("quantity candidates must differ by at least two scoop-units")
        if t.source_ref not in ("fuller", "less"):
            problems.append("quantity referent must be relative fullness")
    if cat is TaskCategory.RELATIVE_POSITIONING:
        t = sc.goal.transfers[0]
        if t.source_ref not in ("left", "right", "closest_to_robot") and not t.source_ref.startswith("nearest_to:"):
            problems.append("relative referent must be spatial")
    if cat is TaskCategory.REACHABILITY_ANALYSIS:
        if not any(not is_reachable(s.bowl(t.source).position) or not is_reachable(s.bowl(t.destination).position)
                   for t in sc.goal.transfers):
            problems.append("no task bowl beyond reach")
        if blocked:
            problems.append("blocking bowl in a reachability scenario")
    if cat is TaskCategory.COLLISION_AVOIDANCE:
        if far:
            problems.append("unreachable bowl in a collision scenario")
        if not blocked:
            problems.append("no blocking bowl")
        if dumbwaiter_blockers(s) and sc.goal.dumbwaiter_bowl is None:
            problems.append("dumbwaiter blocked but never used")
    for name in _instruction_mentions(sc):
        if name not in colors and name not in {b.contents.display for b in s.bowls}:
            problems.append(f"instruction mentions absent {name!r}")
    if sc.reference_plan and validate_plan(sc, sc.reference_plan):
        problems.append("reference plan invalid")
    if len(sc.reference_plan) > MAX_REFERENCE_LENGTH:
        problems.append(f"reference plan has {len(sc.reference_plan)} steps")
    return problems


def _instruction_mentions(sc: Scenario) -> list[str]:
    text = sc.instruction.lower()
    out = [c for c in COLORS if f"{c} bowl" in text]
    out += [f.display for f in FoodKind if f.display in text]
    return out


# persistence -----------------------------------------------------------------


def save_scenarios(scenarios: list[Scenario], out_dir: str | Path) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = []
    for sc in scenarios:
        (out / f"{sc.id}.json").write_text(sc.to_json() + "\n")
        manifest.append({"id": sc.id, "category": sc.category.value, "seed": sc.seed, "file": f"{sc.id}.json"})
    path = out / "manifest.json"
    path.write_text(json.dumps({"version": SCENARIO_SCHEMA_VERSION, "scenarios": manifest}, indent=1) + "\n")
    return path


def load_scenarios(directory: str | Path) -> list[Scenario]:
    d = Path(directory)
    manifest = json.loads((d / "manifest.json").read_text())
    return [Scenario.from_dict(json.loads((d / e["file"]).read_text())) for e in manifest["scenarios"]]


def load_scenario(path: str | Path) -> Scenario:
    return Scenario.from_dict(json.loads(Path(path).read_text()))
