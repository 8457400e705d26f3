"""Run configuration: one JSON document covering every component.

Unknown keys are rejected so typos fail loudly. Defaults follow the
reference parameterization (RBF eta=1, gamma=2.5, 0.25 m sampling grid,
200 training neighbors, segment checks with 10+10 neighbors, curve checks
with 2+2 and epsilon=0.2, tau=1 s, robot radius 0.25 m).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .collision import BoundMode
from .geometry import KernelParams, RobotGeometry, SampleGrid
from .model import TrainingConfig
from .pipeline import AugmentationConfig
from .planner import FirstOrderModel, MotionModel, SecondOrderModel
from .sim import NavigationConfig, SimConfig

CONFIG_VERSION = 1


class ConfigError(ValueError):
    """Invalid or malformed run configuration."""


def _take(section: dict, allowed: set[str], where: str) -> None:
    unknown = set(section) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")


@dataclass(frozen=True)
class EpisodeSpec:
    start: tuple[float, float] = (1.0, 1.0)
    heading: float = 0.0
    goal_center: tuple[float, float] = (5.0, 5.0)
    goal_radius: float = 1.0


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    kernel: KernelParams = KernelParams()
    grid: SampleGrid = SampleGrid(origin=(0.0, 0.0), resolution=0.25, extents=(80, 80))
    robot: RobotGeometry = RobotGeometry()
    training: TrainingConfig = TrainingConfig()
    augment: AugmentationConfig = AugmentationConfig()
    sim: SimConfig = SimConfig()
    motion: MotionModel = FirstOrderModel()
    mode_kind: str = "minimax"
    segment_knn: tuple[int, int] | None = (10, 10)
    curve_knn: tuple[int, int] | None = (2, 2)
    epsilon: float = 0.2
    approx_k: tuple[int, int] = (100, 100)
    nopath_abort: int = 10
    episode: EpisodeSpec = EpisodeSpec()

    @property
    def segment_mode(self) -> BoundMode:
        return BoundMode(kind=self.mode_kind, knn_limit=self.segment_knn)

    @property
    def curve_mode(self) -> BoundMode:
        return BoundMode(kind=self.mode_kind, knn_limit=self.curve_knn)

    def navigation(self) -> NavigationConfig:
        mode = (
            self.curve_mode if isinstance(self.motion, SecondOrderModel) else self.segment_mode
        )
        return NavigationConfig(
            sim=self.sim,
            kernel=self.kernel,
            training=self.training,
            augment=self.augment,
            motion=self.motion,
            mode=mode,
            epsilon=self.epsilon,
            robot_radius=self.robot.radius,
            approx_k=self.approx_k,
            nopath_abort=self.nopath_abort,
            seed=self.seed,
        )


def _pair(value, where: str) -> tuple[int, int] | None:
    if value is None:
        return None
    if not (isinstance(value, (list, tuple)) and len(value) == 2):
        raise ConfigError(f"{where} must be a [k_pos, k_neg] pair or null")
    return int(value[0]), int(value[1])


def load_config(source: dict | str | Path) -> RunConfig:
    """Parse and validate a config document (path or dict)."""
    if not isinstance(source, dict):
        try:
            with open(source) as fp:
                source = json.load(fp)
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read config: {e}") from e
    if not isinstance(source, dict):
        raise ConfigError("config must be a JSON object")
    doc = dict(source)
    version = doc.pop("version", CONFIG_VERSION)
    if version != CONFIG_VERSION:
        raise ConfigError(f"unsupported config version {version!r}")
    _take(
        doc,
        {
            "seed", "kernel", "grid", "robot", "training", "augment", "sim",
            "motion", "collision", "model", "episode",
        },
        "config",
    )
    try:
        kernel_doc = doc.get("kernel", {})
        _take(kernel_doc, {"eta", "gamma"}, "kernel")
        kernel = KernelParams(**kernel_doc)

        grid_doc = doc.get("grid", {})
        _take(grid_doc, {"origin", "resolution", "extents"}, "grid")
        grid = SampleGrid(
            origin=tuple(grid_doc.get("origin", (0.0, 0.0))),
            resolution=grid_doc.get("resolution", 0.25),
            extents=tuple(grid_doc.get("extents", (80, 80))),
        )

        robot_doc = doc.get("robot", {})
        _take(robot_doc, {"radius", "wheelbase"}, "robot")
        robot = RobotGeometry(**robot_doc)

        training_doc = doc.get("training", {})
        _take(training_doc, {"xi_plus", "xi_minus", "n_max", "anchor"}, "training")
        training = TrainingConfig(**training_doc)

        augment_doc = doc.get("augment", {})
        _take(
            augment_doc,
            {"neighbor_threshold", "free_cap_ratio", "free_cap_min", "suppress_occupied_collar"},
            "augment",
        )
        augment = AugmentationConfig(**augment_doc)

        sim_doc = doc.get("sim", {})
        _take(
            sim_doc,
            {"beam_count", "fov", "max_range", "range_noise_sigma", "scan_period", "time_limit"},
            "sim",
        )
        sim = SimConfig(**sim_doc)

        motion_doc = dict(doc.get("motion", {}))
        kind = motion_doc.pop("kind", "first_order")
        if kind == "first_order":
            _take(motion_doc, {"velocities", "tau"}, "motion")
            motion: MotionModel = FirstOrderModel(
                velocities=tuple(tuple(map(float, v)) for v in motion_doc["velocities"])
                if "velocities" in motion_doc
                else FirstOrderModel().velocities,
                tau=float(motion_doc.get("tau", 1.0)),
            )
        elif kind == "second_order":
            _take(motion_doc, {"accelerations", "tau", "max_speed"}, "motion")
            motion = SecondOrderModel(
                accelerations=tuple(tuple(map(float, a)) for a in motion_doc["accelerations"])
                if "accelerations" in motion_doc
                else SecondOrderModel().accelerations,
                tau=float(motion_doc.get("tau", 1.0)),
                max_speed=float(motion_doc.get("max_speed", 2.0)),
            )
        else:
            raise ConfigError(f"motion.kind must be 'first_order' or 'second_order', got {kind!r}")

        col_doc = doc.get("collision", {})
        _take(col_doc, {"mode", "segment_knn", "curve_knn", "epsilon"}, "collision")
        mode_name = col_doc.get("mode", "minimax")
        mode_kind = {"single-j": "single", "single": "single", "minimax": "minimax"}.get(mode_name)
        if mode_kind is None:
            raise ConfigError(f"collision.mode must be 'single-j' or 'minimax', got {mode_name!r}")

        model_doc = doc.get("model", {})
        _take(model_doc, {"approx_pos", "approx_neg"}, "model")
        approx_k = (int(model_doc.get("approx_pos", 100)), int(model_doc.get("approx_neg", 100)))

        episode_doc = doc.get("episode", {})
        _take(episode_doc, {"start", "heading", "goal_center", "goal_radius"}, "episode")
        episode = EpisodeSpec(
            start=tuple(episode_doc.get("start", (1.0, 1.0))),
            heading=float(episode_doc.get("heading", 0.0)),
            goal_center=tuple(episode_doc.get("goal_center", (5.0, 5.0))),
            goal_radius=float(episode_doc.get("goal_radius", 1.0)),
        )

        return RunConfig(
            seed=int(doc.get("seed", 0)),
            kernel=kernel,
            grid=grid,
            robot=robot,
            training=training,
            augment=augment,
            sim=sim,
            motion=motion,
            mode_kind=mode_kind,
            segment_knn=_pair(col_doc.get("segment_knn", (10, 10)), "collision.segment_knn"),
            curve_knn=_pair(col_doc.get("curve_knn", (2, 2)), "collision.curve_knn"),
            epsilon=float(col_doc.get("epsilon", 0.2)),
            approx_k=approx_k,
            nopath_abort=10,
            episode=episode,
        )
    except ConfigError:
        raise
    except (TypeError, ValueError, KeyError) as e:
        raise ConfigError(f"invalid config: {e}") from e
