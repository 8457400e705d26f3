"""Sparse kernel-based occupancy mapping with complete collision checking."""

from .collision import (
    BoundMode,
    PolyCurve,
    Segment,
    StartInCollisionError,
    check_curve,
    check_segment,
    curve_ball_exit_time,
    free_ball_radius,
    ray_free_time,
    upper_bound,
)
from .geometry import KernelParams, RangeScan, RobotGeometry, SampleGrid
from .index import IndexedVector, SupportVectorIndex
from .model import (
    SupportVectorModel,
    TrainingBatch,
    TrainingConfig,
    TrainReport,
    rbf_kernel,
)
from .pipeline import AugmentationConfig, CSpaceObstacle, free_space_test, generate_batch, scan_to_obstacles
from .planner import (
    FirstOrderModel,
    GoalRegion,
    PlannerState,
    SecondOrderModel,
    motion_cost,
    plan,
    primitive_trajectory,
    successors,
)
from .sim import GroundTruthGrid, SimConfig, SimState, build_world, raycast, run_navigation, step_dynamics

__all__ = [
    "AugmentationConfig",
    "BoundMode",
    "CSpaceObstacle",
    "FirstOrderModel",
    "GoalRegion",
    "GroundTruthGrid",
    "IndexedVector",
    "KernelParams",
    "PlannerState",
    "PolyCurve",
    "RangeScan",
    "RobotGeometry",
    "SampleGrid",
    "SecondOrderModel",
    "Segment",
    "SimConfig",
    "SimState",
    "StartInCollisionError",
    "SupportVectorIndex",
    "SupportVectorModel",
    "TrainReport",
    "TrainingBatch",
    "TrainingConfig",
    "build_world",
    "check_curve",
    "check_segment",
    "curve_ball_exit_time",
    "free_ball_radius",
    "free_space_test",
    "generate_batch",
    "motion_cost",
    "plan",
    "primitive_trajectory",
    "raycast",
    "ray_free_time",
    "rbf_kernel",
    "run_navigation",
    "scan_to_obstacles",
    "step_dynamics",
    "successors",
    "upper_bound",
]
