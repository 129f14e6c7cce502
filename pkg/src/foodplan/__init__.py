"""Closed-loop task planning for food-manipulation scenarios over a symbolic kitchen simulator."""

from .planner import PipelineConfig, run_episode
from .scenarios import Scenario, TaskCategory, generate_all
from .world import Skill, SkillKind, WorldState, apply_skill

__version__ = "0.1.0"

__all__ = [
    "PipelineConfig",
    "Scenario",
    "Skill",
    "SkillKind",
    "TaskCategory",
    "WorldState",
    "apply_skill",
    "generate_all",
    "run_episode",
]
