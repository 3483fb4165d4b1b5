from .preprocess import (
    frame_stack_push,
    frame_stack_reset,
    preprocess_frame_pair,
)
from .toy import (
    ChainMDP,
    EnvSpec,
    GridWorld,
    GridWorldPixel,
    StepResult,
    chain_value_iteration,
    gridworld_optimal_return,
    gridworld_optimal_undiscounted,
    make_env,
    noop_start,
    reset_env,
)

__all__ = [
    "ChainMDP", "EnvSpec", "GridWorld", "GridWorldPixel", "StepResult",
    "chain_value_iteration", "frame_stack_push", "frame_stack_reset",
    "gridworld_optimal_return", "gridworld_optimal_undiscounted", "make_env",
    "noop_start", "preprocess_frame_pair", "reset_env",
]
