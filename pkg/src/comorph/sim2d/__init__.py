"""Planar five-joint fall-recovery evaluator."""

from .robot import RobotModel, build_model, load_robot, builtin_design_names, builtin_design_dir
from .env import (
    Episode,
    EvalResult,
    RewardBreakdown,
    SimSettings,
    SimState,
    evaluate,
    observation,
    reset,
    rollout,
    rollout_from,
    step,
    step_reward,
    write_trace,
)

__all__ = [
    "RobotModel",
    "build_model",
    "load_robot",
    "builtin_design_names",
    "builtin_design_dir",
    "Episode",
    "EvalResult",
    "RewardBreakdown",
    "SimSettings",
    "SimState",
    "evaluate",
    "observation",
    "reset",
    "rollout",
    "rollout_from",
    "step",
    "step_reward",
    "write_trace",
]
