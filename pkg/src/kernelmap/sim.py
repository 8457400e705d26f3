"""Synthetic world: ground-truth grid, lidar ray casting, robot stepping,
and the sense-train-plan-act navigation loop."""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from .collision import BoundMode, CURVE_EPSILON_DEFAULT, SEGMENT_MODE_DEFAULT
from .geometry import (
    KernelParams,
    RangeScan,
    SampleGrid,
    normalize_angle,
    read_grid_file,
    write_grid_file,
)
from .model import SupportVectorModel, TrainingConfig
from .pipeline import AugmentationConfig, generate_batch
from .planner import (
    FirstOrderModel,
    GoalRegion,
    MotionModel,
    PlannerState,
    SecondOrderModel,
    plan,
)

TWO_PI = 2.0 * math.pi


class SceneError(ValueError):
    """Malformed scene description."""


@dataclass(frozen=True)
class SimConfig:
    beam_count: int = 180
    fov: float = TWO_PI
    max_range: float = 10.0
    range_noise_sigma: float = 0.0
    scan_period: float = 1.0
    time_limit: float = 300.0

    def __post_init__(self) -> None:
        if self.beam_count < 2:
            raise ValueError(f"beam_count must be >= 2, got {self.beam_count}")
        if not (0.0 < self.fov <= TWO_PI + 1e-12):
            raise ValueError(f"fov must be in (0, 2*pi], got {self.fov}")
        if self.max_range <= 0.0:
            raise ValueError(f"max_range must be > 0, got {self.max_range}")
        if self.range_noise_sigma < 0.0:
            raise ValueError("range_noise_sigma must be >= 0")
        if self.scan_period <= 0.0 or self.time_limit <= 0.0:
            raise ValueError("scan_period and time_limit must be > 0")

    def beam_angles(self) -> np.ndarray:
        if self.fov >= TWO_PI - 1e-12:
            return np.linspace(-math.pi, math.pi, self.beam_count, endpoint=False)
        return np.linspace(-self.fov / 2.0, self.fov / 2.0, self.beam_count)


class GroundTruthGrid:
    """Binary occupancy over a sample grid; 1 = obstacle."""

    def __init__(self, occupancy: np.ndarray, geometry: SampleGrid) -> None:
        occ = np.asarray(occupancy, dtype=np.uint8)
        if occ.shape != tuple(geometry.extents):
            raise ValueError(f"occupancy shape {occ.shape} != extents {geometry.extents}")
        self.occ = occ
        self.geometry = geometry
        self._edt: np.ndarray | None = None

    def is_occupied_cell(self, cell: tuple[int, int]) -> bool:
        return bool(self.occ[cell])

    def obstacle_distance(self) -> np.ndarray:
        """Per-cell distance (meters, cell centers) to the nearest occupied cell."""
        if self._edt is None:
            if self.occ.any():
                self._edt = ndimage.distance_transform_edt(
                    self.occ == 0, sampling=self.geometry.resolution
                )
            else:
                self._edt = np.full(self.occ.shape, np.inf)
        return self._edt

    def point_in_inflated_obstacle(self, p, radius: float) -> bool:
        """Workspace safety test: within ``radius`` of an occupied cell center
        (out-of-bounds counts as unsafe)."""
        if not self.geometry.contains_point(p):
            return True
        cell = self.geometry.point_to_cell(p)
        return bool(self.obstacle_distance()[cell] <= radius)

    def save(self, path: str | Path) -> None:
        with open(path, "w") as fp:
            write_grid_file(fp, self.occ, self.geometry)

    @classmethod
    def load(cls, path: str | Path) -> "GroundTruthGrid":
        with open(path) as fp:
            occ, grid = read_grid_file(fp)
        return cls(occ, grid)


def build_world(scene: dict | str | Path) -> GroundTruthGrid:
    """Deterministic world from a scene description.

    Scene JSON: ``{resolution, extents, shapes: [...], seed}`` with shapes
    ``{"type": "rect", "x", "y", "w", "h"}``, ``{"type": "circle", "cx",
    "cy", "r"}``, or ``{"type": "clutter", "count", "min_size", "max_size"}``
    (seeded random rectangles). Cells are marked by center containment.
    """
    if not isinstance(scene, dict):
        try:
            with open(scene) as fp:
                scene = json.load(fp)
        except (OSError, json.JSONDecodeError) as e:
            raise SceneError(f"cannot read scene: {e}") from e
    try:
        resolution = float(scene["resolution"])
        extents = tuple(int(n) for n in scene["extents"])
        origin = tuple(float(c) for c in scene.get("origin", (0.0, 0.0)))
        shapes = scene.get("shapes", [])
        seed = int(scene.get("seed", 0))
    except (KeyError, TypeError, ValueError) as e:
        raise SceneError(f"malformed scene: {e}") from e
    if len(extents) != 2:
        raise SceneError("extents must have two entries")
    grid = SampleGrid(origin=origin, resolution=resolution, extents=extents)
    nx, ny = extents
    occ = np.zeros((nx, ny), dtype=np.uint8)
    xs = origin[0] + (np.arange(nx) + 0.5) * resolution
    ys = origin[1] + (np.arange(ny) + 0.5) * resolution
    cxg, cyg = np.meshgrid(xs, ys, indexing="ij")
    rng = np.random.default_rng(seed)

    def mark_rect(x, y, w, h):
        occ[(cxg >= x) & (cxg <= x + w) & (cyg >= y) & (cyg <= y + h)] = 1

    for shape in shapes:
        try:
            kind = shape["type"]
            if kind == "rect":
                mark_rect(float(shape["x"]), float(shape["y"]), float(shape["w"]), float(shape["h"]))
            elif kind == "circle":
                r = float(shape["r"])
                d2 = (cxg - float(shape["cx"])) ** 2 + (cyg - float(shape["cy"])) ** 2
                occ[d2 <= r * r] = 1
            elif kind == "clutter":
                lo, hi = float(shape["min_size"]), float(shape["max_size"])
                span_x = nx * resolution
                span_y = ny * resolution
                for _ in range(int(shape["count"])):
                    w = rng.uniform(lo, hi)
                    h = rng.uniform(lo, hi)
                    x = origin[0] + rng.uniform(0.0, span_x - w)
                    y = origin[1] + rng.uniform(0.0, span_y - h)
                    mark_rect(x, y, w, h)
            else:
                raise SceneError(f"unknown shape type {kind!r}")
        except (KeyError, TypeError, ValueError) as e:
            if isinstance(e, SceneError):
                raise
            raise SceneError(f"malformed shape {shape}: {e}") from e
    return GroundTruthGrid(occ, grid)


def raycast(
    world: GroundTruthGrid,
    position,
    heading: float,
    cfg: SimConfig,
    rng: np.random.Generator | None = None,
) -> RangeScan:
    """Simulated lidar scan via exact grid traversal.

    Each beam reports the distance to the first boundary crossing into an
    occupied cell, capped at ``max_range``; beams leaving the grid report
    ``max_range``. Optional Gaussian range noise is clamped to the sensor
    interval.
    """
    grid = world.geometry
    pos = np.asarray(position, dtype=float)
    if not grid.contains_point(pos):
        raise ValueError(f"scan pose {tuple(pos)} outside the world")
    start_cell = grid.point_to_cell(pos)
    if world.occ[start_cell]:
        raise ValueError(f"scan pose {tuple(pos)} inside an obstacle")
    angles = cfg.beam_angles()
    ranges = np.empty(angles.size)
    nx, ny = grid.extents
    res = grid.resolution
    for b, rel_angle in enumerate(angles):
        theta = heading + rel_angle
        dx, dy = math.cos(theta), math.sin(theta)
        cx, cy = start_cell
        step_x = 1 if dx > 0 else -1
        step_y = 1 if dy > 0 else -1
        # Parametric distance to the next cell boundary along each axis.
        if dx != 0.0:
            nx_bound = grid.origin[0] + (cx + (1 if dx > 0 else 0)) * res
            t_max_x = (nx_bound - pos[0]) / dx
            t_dx = res / abs(dx)
        else:
            t_max_x, t_dx = math.inf, math.inf
        if dy != 0.0:
            ny_bound = grid.origin[1] + (cy + (1 if dy > 0 else 0)) * res
            t_max_y = (ny_bound - pos[1]) / dy
            t_dy = res / abs(dy)
        else:
            t_max_y, t_dy = math.inf, math.inf
        hit = cfg.max_range
        while True:
            if t_max_x < t_max_y:
                t = t_max_x
                cx += step_x
                t_max_x += t_dx
            else:
                t = t_max_y
                cy += step_y
                t_max_y += t_dy
            if t > cfg.max_range:
                break
            if not (0 <= cx < nx and 0 <= cy < ny):
                break
            if world.occ[cx, cy]:
                hit = t
                break
        ranges[b] = hit
    if cfg.range_noise_sigma > 0.0:
        if rng is None:
            rng = np.random.default_rng()
        ranges = np.clip(
            ranges + rng.normal(0.0, cfg.range_noise_sigma, ranges.shape), 0.0, cfg.max_range
        )
    return RangeScan(
        position=pos, heading=heading, angles=angles, ranges=ranges, max_range=cfg.max_range
    )


@dataclass(frozen=True)
class SimState:
    """Simulated robot state; heading feeds the lidar frame."""

    position: tuple[float, float]
    velocity: tuple[float, float] = (0.0, 0.0)
    heading: float = 0.0


def step_dynamics(state: SimState, u, model: MotionModel) -> SimState:
    """Exact closed-form propagation of one primitive.

    Heading turns to the terminal velocity direction when the robot is
    moving; otherwise it is kept.
    """
    pos = np.asarray(state.position, dtype=float)
    u_vec = np.asarray(u, dtype=float)
    tau = model.tau
    if isinstance(model, FirstOrderModel):
        new_pos = pos + tau * u_vec
        new_vel = u_vec
    else:
        vel = np.asarray(state.velocity, dtype=float)
        new_pos = pos + tau * vel + 0.5 * tau * tau * u_vec
        new_vel = vel + tau * u_vec
    speed = float(np.linalg.norm(new_vel))
    heading = math.atan2(new_vel[1], new_vel[0]) if speed > 1e-6 else state.heading
    return SimState(
        position=(float(new_pos[0]), float(new_pos[1])),
        velocity=(float(new_vel[0]), float(new_vel[1])),
        heading=normalize_angle(heading),
    )


@dataclass
class CycleRecord:
    k: int
    pose: tuple[float, float, float]
    scan_ref: int
    sv_count: int
    plan_cost: float | None
    train_ms: float
    plan_ms: float
    violation: bool

    def to_json(self) -> dict:
        return {
            "k": self.k,
            "pose": list(self.pose),
            "scan_ref": self.scan_ref,
            "sv_count": self.sv_count,
            "plan_cost": self.plan_cost,
            "train_ms": self.train_ms,
            "plan_ms": self.plan_ms,
            "violation": self.violation,
        }


@dataclass
class EpisodeLog:
    reached: bool
    aborted: bool
    cycles: list[CycleRecord] = field(default_factory=list)
    scans: list[RangeScan] = field(default_factory=list)
    trajectory: list[tuple[float, float]] = field(default_factory=list)
    model: SupportVectorModel | None = None

    @property
    def violation_count(self) -> int:
        return sum(1 for c in self.cycles if c.violation)

    @property
    def path_length(self) -> float:
        pts = np.asarray(self.trajectory, dtype=float)
        if pts.shape[0] < 2:
            return 0.0
        return float(np.linalg.norm(np.diff(pts, axis=0), axis=1).sum())


@dataclass(frozen=True)
class NavigationConfig:
    """Everything run_navigation needs besides world, start, and goal."""

    sim: SimConfig = SimConfig()
    kernel: KernelParams = KernelParams()
    training: TrainingConfig = TrainingConfig()
    augment: AugmentationConfig = AugmentationConfig()
    motion: MotionModel = FirstOrderModel()
    mode: BoundMode = SEGMENT_MODE_DEFAULT
    epsilon: float = CURVE_EPSILON_DEFAULT
    robot_radius: float = 0.25
    approx_k: tuple[int, int] = (100, 100)
    nopath_abort: int = 10
    carry_velocity: bool = True
    seed: int = 0


def run_navigation(
    world: GroundTruthGrid,
    start: SimState,
    goal: GoalRegion,
    cfg: NavigationConfig = NavigationConfig(),
    model: SupportVectorModel | None = None,
) -> EpisodeLog:
    """Closed sense-train-plan-act loop until the goal region or timeout.

    Every executed primitive is re-validated against the ground truth; a
    crossing is recorded as a safety violation on that cycle's log record.
    Consecutive planning failures abort the episode.
    """
    grid = world.geometry
    if world.point_in_inflated_obstacle(start.position, cfg.robot_radius):
        raise ValueError("start state lies in (inflated) obstacle space")
    if model is None:
        model = SupportVectorModel(dim=2, kernel=cfg.kernel, approx_k=cfg.approx_k)
    rng = np.random.default_rng(cfg.seed)
    log = EpisodeLog(reached=False, aborted=False, model=model)
    state = start
    log.trajectory.append(state.position)
    t_sim = 0.0
    nopath_streak = 0
    bounds = (
        grid.origin[0],
        grid.origin[1],
        grid.origin[0] + grid.extents[0] * grid.resolution,
        grid.origin[1] + grid.extents[1] * grid.resolution,
    )
    k = 0
    while t_sim < cfg.sim.time_limit:
        if goal.contains(state.position):
            log.reached = True
            return log
        scan = raycast(world, state.position, state.heading, cfg.sim, rng)
        scan_ref = len(log.scans)
        log.scans.append(scan)

        t0 = time.perf_counter()
        batch = generate_batch(scan, grid, model, cfg.augment, cfg.robot_radius)
        if batch is not None:
            model.train_increment(batch, cfg.training, robot_position=state.position)
        train_ms = (time.perf_counter() - t0) * 1e3

        t0 = time.perf_counter()
        planner_state = PlannerState(
            position=state.position,
            velocity=state.velocity if isinstance(cfg.motion, SecondOrderModel) else None,
            k=k,
        )
        result = plan(
            planner_state,
            goal,
            cfg.motion,
            model,
            mode=cfg.mode,
            epsilon=cfg.epsilon,
            bounds=bounds,
            lattice_resolution=grid.resolution,
        )
        plan_ms = (time.perf_counter() - t0) * 1e3

        if result is None or not result.primitives:
            nopath_streak += 1
            log.cycles.append(
                CycleRecord(
                    k=k,
                    pose=(state.position[0], state.position[1], state.heading),
                    scan_ref=scan_ref,
                    sv_count=model.num_support_vectors,
                    plan_cost=None,
                    train_ms=train_ms,
                    plan_ms=plan_ms,
                    violation=False,
                )
            )
            if result is not None and not result.primitives:
                # Planner says we are already inside the goal.
                log.reached = True
                return log
            if nopath_streak >= cfg.nopath_abort:
                log.aborted = True
                return log
            k += 1
            t_sim += cfg.sim.scan_period
            continue
        nopath_streak = 0

        u = result.primitives[0]
        next_state = step_dynamics(state, u, cfg.motion)
        if not cfg.carry_velocity and isinstance(cfg.motion, SecondOrderModel):
            next_state = SimState(
                position=next_state.position, velocity=(0.0, 0.0), heading=next_state.heading
            )
        violation = _motion_violates(world, state, next_state, u, cfg)
        log.cycles.append(
            CycleRecord(
                k=k,
                pose=(state.position[0], state.position[1], state.heading),
                scan_ref=scan_ref,
                sv_count=model.num_support_vectors,
                plan_cost=result.cost,
                train_ms=train_ms,
                plan_ms=plan_ms,
                violation=violation,
            )
        )
        state = next_state
        log.trajectory.append(state.position)
        k += 1
        t_sim += cfg.sim.scan_period
    return log


def _motion_violates(
    world: GroundTruthGrid, state: SimState, next_state: SimState, u, cfg: NavigationConfig
) -> bool:
    """Dense ground-truth check of the executed motion."""
    start = np.asarray(state.position)
    if isinstance(cfg.motion, FirstOrderModel):
        end = np.asarray(next_state.position)
        length = float(np.linalg.norm(end - start))
        n = max(2, int(math.ceil(length / 0.02)) + 1)
        pts = start[None, :] + np.linspace(0.0, 1.0, n)[:, None] * (end - start)[None, :]
    else:
        vel = np.asarray(state.velocity)
        a = np.asarray(u, dtype=float)
        ts = np.linspace(0.0, cfg.motion.tau, 64)
        pts = start[None, :] + ts[:, None] * vel[None, :] + 0.5 * ts[:, None] ** 2 * a[None, :]
    return any(world.point_in_inflated_obstacle(p, cfg.robot_radius) for p in pts)
