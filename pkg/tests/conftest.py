from pathlib import Path

import pytest

from foodplan.scenarios import GoalSpec, Scenario, TaskCategory, Transfer, generate_all, oracle_plan
from foodplan.world import FoodKind, WorldState, make_bowl

GOLDEN = Path(__file__).parent / "golden"


def build_scenario(bowls, instruction, goal, category=TaskCategory.SEMANTIC_REASONING, sid="hand-000"):
    state = WorldState(tuple(bowls))
    sc = Scenario(sid, category, 0, instruction, state, goal)
    return Scenario(sid, category, 0, instruction, state, goal, tuple(oracle_plan(sc)))


def two_scoop_scenario():
    """Red bowl of mung beans, purple bowl of tofu pudding, two scoops requested."""
    bowls = [
        make_bowl(0, "purple", FoodKind.TOFU_PUDDING, 4.0, -0.12, 0.32),
        make_bowl(1, "red", FoodKind.MUNG_BEANS, 5.0, 0.15, 0.30),
    ]
    goal = GoalSpec((Transfer(FoodKind.MUNG_BEANS, 1, 0, 2, "color:red"),))
    return build_scenario(bowls, "Place two scoop of beans into purple bowl.", goal, sid="hand-two-scoop")


def far_white_scenario():
    """Kidney beans in a white bowl beyond reach; the blue pudding bowl is close."""
    bowls = [
        make_bowl(0, "white", FoodKind.KIDNEY_BEANS, 5.0, 0.05, 0.72),
        make_bowl(1, "blue", FoodKind.TOFU_PUDDING, 4.0, -0.15, 0.28),
    ]
    goal = GoalSpec((Transfer(FoodKind.KIDNEY_BEANS, 0, 1, 1, "color:white"),))
    return build_scenario(bowls, "Place some kidney beans into the blue bowl.", goal,
                          TaskCategory.REACHABILITY_ANALYSIS, sid="hand-far-white")


@pytest.fixture(scope="session")
def benchmark():
    return generate_all(7)


@pytest.fixture
def two_scoop():
    return two_scoop_scenario()


@pytest.fixture
def far_white():
    return far_white_scenario()
