
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from foodplan.render import PALETTE, read_ppm, render_array, render_topdown, to_pixel
from foodplan.scenarios import generate_all, scenario_skills
from foodplan.world import (
    DONE,
    FoodKind,
    NoBowlsError,
    Position,
    Skill,
    SkillKind,
    WorldState,
    apply_skill,
    describe_scene,
    fill_level,
    make_bowl,
    move_to,
    nearest_bowl,
    object_line,
    pulled_position,
    run_skills,
)

S = SkillKind


def sk(kind, color=None):
    return Skill(kind, color)


def scene(*bowls, **kw):
    return WorldState(tuple(bowls), **kw)


# skills ----------------------------------------------------------------------


def test_twelve_skill_kinds():
    assert len(SkillKind) == 12


def test_seven_toppings_plus_pudding():
    assert len(FoodKind) == 8
    assert sum(1 for k in FoodKind if k is not FoodKind.TOFU_PUDDING) == 7


@pytest.mark.parametrize("text", ["grasp_spoon", "grasp spoon", "Grasp Spoon", "  grasp   spoon "])
def test_parse_accepts_both_spellings(text):
    assert Skill.parse(text) == sk(S.GRASP_SPOON)


def test_parse_move_and_done():
    assert Skill.parse("move to white bowl") == move_to("white")
    assert Skill.parse("move_to_white_bowl") == move_to("white")
    assert Skill.parse("DONE") == DONE
    assert Skill.parse("done") == DONE


@pytest.mark.parametrize("text", ["", "fly", "move to bowl", "move_to_bowl", "move to  _bowl"])
def test_parse_rejects_garbage(text):
    with pytest.raises(ValueError):
        Skill.parse(text)


def test_skill_names():
    assert move_to("white").name == "move_to_white_bowl"
    assert move_to("white").display == "move to white bowl"
    assert DONE.display == "DONE"
    with pytest.raises(ValueError):
        Skill(S.MOVE_TO_BOWL)
    with pytest.raises(ValueError):
        Skill(S.SCOOP, "red")


# geometry --------------------------------------------------------------------


def test_nearest_bowl_examples():
    only = scene(make_bowl(3, "red", FoodKind.PEANUTS, 2, 0.2, 0.3))
    assert nearest_bowl(only) == 3
    two = scene(make_bowl(0, "red", FoodKind.PEANUTS, 2, 0.5, 0.0), make_bowl(1, "blue", FoodKind.PEANUTS, 2, 0.3, 0.0))
    assert nearest_bowl(two) == 1
    tie = scene(make_bowl(5, "red", FoodKind.PEANUTS, 2, 0.3, 0.0), make_bowl(2, "blue", FoodKind.PEANUTS, 2, -0.3, 0.0))
    assert nearest_bowl(tie) == 2
    with pytest.raises(NoBowlsError):
        nearest_bowl(scene())


def test_nearest_bowl_measured_from_manipulator():
    s = scene(make_bowl(0, "red", FoodKind.PEANUTS, 2, 0.1, 0.2), make_bowl(1, "blue", FoodKind.PEANUTS, 2, 0.4, 0.5))
    s, _ = apply_skill(s, move_to("blue"))
    assert nearest_bowl(s) == 1


def _pull_by_bisection(p: Position, r: float, c: Position) -> Position:
    """Walk from p toward c and bisect for the point at distance r from the origin."""
    lo, hi = 0.0, 1.0
    at = lambda t: Position(p.x + t * (c.x - p.x), p.y + t * (c.y - p.y))
    for _ in range(200):
        mid = (lo + hi) / 2
        if at(mid).norm > r:
            lo = mid
        else:
            hi = mid
    return at(hi)


@pytest.mark.parametrize("x,y", [(0.05, 0.72), (-0.45, 0.6), (0.55, 0.7), (0.0, 0.79), (-0.58, 0.45)])
def test_pulled_position_matches_bisection(x, y):
    got = pulled_position(Position(x, y))
    want = _pull_by_bisection(Position(x, y), 0.45, Position(0.0, 0.4))
    assert got.x == pytest.approx(want.x, abs=1e-9)
    assert got.y == pytest.approx(want.y, abs=1e-9)
    assert got.norm == pytest.approx(0.45)


def test_pulled_position_leaves_close_bowls():
    p = Position(0.1, 0.3)
    assert pulled_position(p) == p


# semantics -------------------------------------------------------------------


def test_grasp_from_initial_state():
    s = scene(make_bowl(0, "red", FoodKind.MUNG_BEANS, 5, 0.15, 0.3))
    s2, out = apply_skill(s, sk(S.GRASP_SPOON))
    assert s2.manipulator.holding_spoon and s2.manipulator.at == "holder"
    assert out.status == "ok"
    assert not s.manipulator.holding_spoon  # input untouched


def test_two_scoops_move_two_units(two_scoop):
    plan = list(two_scoop.reference_plan[:9])
    final, outs = run_skills(two_scoop.initial_state, plan)
    init = two_scoop.initial_state
    assert final.bowl(0).amount - init.bowl(0).amount == pytest.approx(2.0)
    assert init.bowl(1).amount - final.bowl(1).amount == pytest.approx(2.0)
    assert all(o.status == "ok" for o in outs)


def test_open_dumbwaiter_spills_bowl_in_sweep_zone():
    s = scene(make_bowl(0, "red", FoodKind.PEANUTS, 3, 0.53, 0.45), make_bowl(1, "blue", FoodKind.PEANUTS, 3, 0.0, 0.3))
    s2, out = apply_skill(s, sk(S.OPEN_DUMBWAITER))
    assert out.status == "spill"
    assert s2.bowl(0).spilled and not s2.bowl(1).spilled


def test_done_only_counts_a_step():
    s = scene(make_bowl(0, "red", FoodKind.PEANUTS, 3, 0.1, 0.3))
    s2, out = apply_skill(s, DONE)
    assert out.status == "ok"
    assert s2.step_count == 1
    assert s2.to_dict() | {"step_count": 0} == s.to_dict()


def test_move_to_unknown_color_is_rejected():
    with pytest.raises(ValueError):
        apply_skill(scene(make_bowl(0, "red", FoodKind.PEANUTS, 3, 0.1, 0.3)), move_to("teal"))


def _state(*steps, bowls=None):
    bowls = bowls or (
        make_bowl(0, "red", FoodKind.PEANUTS, 4, 0.15, 0.3),
        make_bowl(1, "blue", FoodKind.TOFU_PUDDING, 4, -0.15, 0.3),
        make_bowl(2, "green", FoodKind.RED_BEANS, 4, 0.05, 0.72),
    )
    s, _ = run_skills(WorldState(tuple(bowls)), steps)
    return s


CONSEQUENCES = [
    # (setup steps, skill, expected status, spilled bowl ids, spill events with food)
    ((sk(S.GRASP_SPOON),), sk(S.SCOOP), "no_op", set(), 0),
    ((sk(S.GRASP_SPOON), move_to("green")), sk(S.SCOOP), "spill", {2}, 0),
    ((move_to("red"), sk(S.GRASP_SPOON)), sk(S.PULL_BOWL_CLOSER), "spill", {1}, 0),
    ((move_to("blue"),), sk(S.PUT_BOWL_INTO_DUMBWAITER), "spill", {1}, 0),
    ((sk(S.GRASP_SPOON), move_to("red"), sk(S.SCOOP)), sk(S.SCOOP), "spill", set(), 1),
    ((sk(S.GRASP_SPOON), move_to("red"), sk(S.SCOOP)), sk(S.PUT_SPOON_BACK), "spill", set(), 1),
    ((sk(S.GRASP_SPOON), move_to("red"), sk(S.SCOOP), sk(S.GRASP_SPOON)), sk(S.START_DUMBWAITER), "ok", set(), 0),
    ((), sk(S.CLOSE_DUMBWAITER), "no_op", set(), 0),
    ((), sk(S.DROP_FOOD), "no_op", set(), 0),
    ((sk(S.OPEN_DUMBWAITER),), sk(S.START_DUMBWAITER), "no_op", set(), 0),
]


@pytest.mark.parametrize("setup,skill,status,spilled,dumps", CONSEQUENCES)
def test_consequence_table(setup, skill, status, spilled, dumps):
    s = _state(*setup)
    s2, out = apply_skill(s, skill)
    assert out.status == status
    assert {b.id for b in s2.bowls if b.spilled} - {b.id for b in s.bowls if b.spilled} == spilled
    new_events = s2.spill_events[len(s.spill_events):]
    assert sum(1 for e in new_events if e.food is not None) == dumps


def test_grasp_spills_holder_blocker():
    s = _state(bowls=(make_bowl(0, "red", FoodKind.PEANUTS, 4, -0.45, 0.35),
                      make_bowl(1, "blue", FoodKind.TOFU_PUDDING, 4, 0.0, 0.3)))
    s2, out = apply_skill(s, sk(S.GRASP_SPOON))
    assert out.status == "spill" and s2.bowl(0).spilled


def test_pull_moves_far_bowl_into_reach():
    s = _state(move_to("green"))
    s2, out = apply_skill(s, sk(S.PULL_BOWL_CLOSER))
    assert out.status == "ok"
    assert s2.bowl(2).position.norm == pytest.approx(0.45)
    assert s2.manipulator.at_bowl == 2


def test_scoop_takes_at_most_one_unit():
    bowls = (make_bowl(0, "red", FoodKind.PEANUTS, 0.4, 0.15, 0.3), make_bowl(1, "blue", FoodKind.TOFU_PUDDING, 4, -0.1, 0.3))
    s = _state(sk(S.GRASP_SPOON), move_to("red"), sk(S.SCOOP), bowls=bowls)
    assert s.manipulator.spoon_contents == (FoodKind.PEANUTS, pytest.approx(0.4))
    s = _state(sk(S.GRASP_SPOON), move_to("red"), sk(S.SCOOP))
    assert s.manipulator.spoon_contents == (FoodKind.PEANUTS, 1.0)


# scene text and rendering ----------------------------------------------------


def test_object_line_format():
    assert object_line(make_bowl(0, "yellow", FoodKind.MUNG_BEANS, 3, 0, 0.3)) == "yellow_bowl (with mung beans)"


def test_describe_empty_table():
    lines = describe_scene(scene()).splitlines()
    assert len(lines) == 2
    assert lines[0].startswith("dumbwaiter") and lines[1].startswith("holder")


@pytest.mark.parametrize("amount,label", [(0, "empty"), (0.49, "empty"), (0.5, "low"), (2.0, "low"), (2.99, "low"),
                                          (3.0, "half"), (5.99, "half"), (6.0, "full"), (8.0, "full")])
def test_fill_levels(amount, label):
    assert fill_level(amount) == label


def test_describe_scene_distinguishes_fill():
    s = scene(make_bowl(0, "red", FoodKind.PEANUTS, 8.0, 0.1, 0.3), make_bowl(1, "blue", FoodKind.PEANUTS, 2.0, -0.1, 0.3))
    lines = describe_scene(s).splitlines()
    assert "full" in lines[0] and "low" in lines[1]
    assert lines[0].startswith("red_bowl (with peanuts)")


def test_render_deterministic_and_p6():
    s = generate_all(7, 1)[0].initial_state
    a, b = render_topdown(s), render_topdown(s)
    assert a == b
    assert a.startswith(b"P6\n960 540\n255\n")
    assert read_ppm(a).shape == (540, 960, 3)


def test_render_resolution_configurable():
    s = generate_all(7, 1)[0].initial_state
    assert read_ppm(render_topdown(s, 320, 180)).shape == (180, 320, 3)


def test_pixel_transform_by_hand():
    # 1.36 m x 0.96 m of drawn area: scale = min(960/1.36, 540/0.96) = 562.5 px/m,
    # horizontal padding (960 - 1.36*562.5)/2 = 97.5, no vertical padding
    for x, y in [(0.0, 0.4), (0.3, 0.2), (-0.5, 0.7)]:
        row = (0.88 - y) * 562.5
        col = 97.5 + (x + 0.68) * 562.5
        assert to_pixel(Position(x, y)) == (round(row), round(col))


def test_render_bowls_at_their_pixels(benchmark):
    for sc in benchmark[::15]:
        img = render_array(sc.initial_state)
        for b in sc.initial_state.bowls:
            r, c = to_pixel(b.position)
            assert tuple(img[r, c]) == PALETTE[b.color]


def test_render_marks_spills():
    s = scene(make_bowl(0, "red", FoodKind.PEANUTS, 4, 0.53, 0.45))
    s2, _ = apply_skill(s, sk(S.OPEN_DUMBWAITER))
    r, c = to_pixel(s2.bowl(0).position)
    assert tuple(render_array(s2)[r, c]) == (0, 0, 0)
    assert tuple(render_array(s)[r, c]) == PALETTE["red"]


def test_state_json_round_trip(benchmark):
    for sc in benchmark[::10]:
        s, _ = run_skills(sc.initial_state, sc.reference_plan)
        assert WorldState.from_dict(s.to_dict()) == s


# properties ------------------------------------------------------------------

_STARTS = generate_all(11, 4)


@st.composite
def walks(draw):
    sc = draw(st.sampled_from(_STARTS))
    skills = scenario_skills(sc.initial_state)
    return sc.initial_state, draw(st.lists(st.sampled_from(skills), max_size=25))


@settings(max_examples=300, deadline=None)
@given(walks())
def test_random_walk_invariants(walk):
    state, skills = walk
    totals = state.totals()
    for skill in skills:
        before = state
        state, out = apply_skill(before, skill)
        assert state.step_count == before.step_count + 1
        assert (out.status == "spill") == (len(state.spill_events) > len(before.spill_events))
        for k in set(totals) | set(state.totals()):
            assert state.totals().get(k, 0.0) == pytest.approx(totals.get(k, 0.0), abs=1e-9)
        for b in before.bowls:
            if b.spilled:
                assert state.bowl(b.id).spilled and state.bowl(b.id).amount == b.amount
        m = state.manipulator
        if m.spoon_contents is not None:
            assert m.holding_spoon and 0 < m.spoon_contents[1] <= 1.0
        assert all(b.amount >= 0 for b in state.bowls)
        assert apply_skill(before, skill)[0].to_json() == state.to_json()
