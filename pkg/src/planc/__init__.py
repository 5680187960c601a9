"""Reduced-order stepping-stone planner: pendulum timing and momentum shaping,
reference generation, CLF scoring, terrains and a hybrid rollout engine."""

from .config import Config, parse_config
from .lip import LipParams, LipState, flow, impact_reset, orbital_energy, time_to_target
from .reference import PlannerConfig, Side, StepPlan, plan_step, sample_references
from .sim import RolloutTrace, evaluate_success, kernel_name, rollout
from .terrain import FAMILIES, Stone, StoneSequence, generate_terrain

__version__ = "0.1.0"

__all__ = [
    "Config",
    "parse_config",
    "LipParams",
    "LipState",
    "flow",
    "impact_reset",
    "orbital_energy",
    "time_to_target",
    "PlannerConfig",
    "Side",
    "StepPlan",
    "plan_step",
    "sample_references",
    "RolloutTrace",
    "evaluate_success",
    "kernel_name",
    "rollout",
    "FAMILIES",
    "Stone",
    "StoneSequence",
    "generate_terrain",
]
