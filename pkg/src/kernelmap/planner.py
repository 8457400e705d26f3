"""A* search over finite motion-primitive sets.

Two motion models: a first-order fully actuated robot (piecewise-constant
velocity, piecewise-linear trajectories) and a second-order point model
(piecewise-constant acceleration, piecewise-quadratic trajectories, the
feedback-linearized car). Edge feasibility is decided by the complete
collision checks; the search lattice is the quantized (position, velocity)
space.
"""

from __future__ import annotations

import heapq
import itertools
import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from .collision import (
    BoundMode,
    CURVE_EPSILON_DEFAULT,
    PolyCurve,
    Segment,
    SEGMENT_MODE_DEFAULT,
    check_curve,
    check_segment,
)
from .model import SupportVectorModel

DEFAULT_VISITED_CAP = 2_000_000

#: 8-connected unit velocities plus rest.
FIRST_ORDER_DEFAULT_VELOCITIES = tuple(
    (float(vx), float(vy)) for vx in (-1, 0, 1) for vy in (-1, 0, 1)
)

SECOND_ORDER_DEFAULT_ACCELERATIONS = tuple(
    (float(ax), float(ay)) for ax in (-1, 0, 1) for ay in (-1, 0, 1)
)


class PlannerResourceError(RuntimeError):
    """The search exceeded its visited-state budget."""


@dataclass(frozen=True)
class FirstOrderModel:
    """Finite velocity set applied for tau seconds per step."""

    velocities: tuple[tuple[float, float], ...] = FIRST_ORDER_DEFAULT_VELOCITIES
    tau: float = 1.0

    def __post_init__(self) -> None:
        if not self.velocities:
            raise ValueError("velocity set must be nonempty")
        if self.tau <= 0.0:
            raise ValueError(f"tau must be > 0, got {self.tau}")

    @property
    def primitives(self):
        return self.velocities


@dataclass(frozen=True)
class SecondOrderModel:
    """Finite acceleration set applied for tau seconds per step."""

    accelerations: tuple[tuple[float, float], ...] = SECOND_ORDER_DEFAULT_ACCELERATIONS
    tau: float = 1.0
    max_speed: float = 2.0

    def __post_init__(self) -> None:
        if not self.accelerations:
            raise ValueError("acceleration set must be nonempty")
        if self.tau <= 0.0:
            raise ValueError(f"tau must be > 0, got {self.tau}")
        if self.max_speed <= 0.0:
            raise ValueError(f"max_speed must be > 0, got {self.max_speed}")

    @property
    def primitives(self):
        return self.accelerations


MotionModel = Union[FirstOrderModel, SecondOrderModel]


@dataclass(frozen=True)
class PlannerState:
    """Search state: position, velocity (second-order only), step index."""

    position: tuple[float, float]
    velocity: tuple[float, float] | None = None
    k: int = 0


@dataclass(frozen=True)
class GoalRegion:
    center: tuple[float, float]
    radius: float

    def __post_init__(self) -> None:
        if self.radius <= 0.0:
            raise ValueError(f"goal radius must be > 0, got {self.radius}")

    def contains(self, p) -> bool:
        return bool(
            np.linalg.norm(np.asarray(p, dtype=float) - np.asarray(self.center)) <= self.radius
        )


def primitive_trajectory(
    state: PlannerState, u: tuple[float, float], model: MotionModel
) -> Segment | PolyCurve:
    """Trajectory piece produced by holding primitive ``u`` for one step.

    First-order primitives give line segments (a constant curve for the rest
    primitive); second-order primitives give degree-2 curves.
    """
    s = np.asarray(state.position, dtype=float)
    u_vec = np.asarray(u, dtype=float)
    tau = model.tau
    if isinstance(model, FirstOrderModel):
        if np.any(u_vec != 0.0):
            return Segment(a=tuple(s), b=tuple(s + tau * u_vec))
        return PolyCurve(coefficients=[s, np.zeros_like(s)], horizon=tau)
    vel = np.asarray(state.velocity if state.velocity is not None else (0.0, 0.0))
    return PolyCurve(coefficients=[s, vel, 0.5 * u_vec], horizon=tau)


def motion_cost(u: tuple[float, float], model: MotionModel) -> float:
    """(||u||^2 + 2) * tau: penalizes large inputs, rewards fast arrival."""
    u_vec = np.asarray(u, dtype=float)
    return float((u_vec @ u_vec + 2.0) * model.tau)


def _primitive_displacement_bound(u, model: MotionModel) -> float:
    u_norm = float(np.linalg.norm(np.asarray(u, dtype=float)))
    if isinstance(model, FirstOrderModel):
        return u_norm * model.tau
    return model.max_speed * model.tau + 0.5 * u_norm * model.tau**2


def _heuristic_rate(model: MotionModel) -> float:
    """min over primitives of cost / max displacement; admissible and
    consistent scaling for the Euclidean remaining distance."""
    best = math.inf
    for u in model.primitives:
        disp = _primitive_displacement_bound(u, model)
        if disp > 0.0:
            best = min(best, motion_cost(u, model) / disp)
    return 0.0 if math.isinf(best) else best


def successors(
    state: PlannerState,
    model: MotionModel,
    svm: SupportVectorModel,
    mode: BoundMode = SEGMENT_MODE_DEFAULT,
    epsilon: float = CURVE_EPSILON_DEFAULT,
) -> list[tuple[PlannerState, tuple[float, float], float]]:
    """Feasible (next_state, primitive, cost) triples from ``state``.

    A primitive is emitted only if its trajectory passes the complete
    collision check; second-order successors exceeding the speed limit are
    rejected.
    """
    out = []
    for u in model.primitives:
        if isinstance(model, SecondOrderModel):
            vel = np.asarray(state.velocity if state.velocity is not None else (0.0, 0.0))
            new_vel = vel + np.asarray(u) * model.tau
            if float(np.linalg.norm(new_vel)) > model.max_speed + 1e-12:
                continue
        traj = primitive_trajectory(state, u, model)
        if isinstance(traj, Segment):
            free = check_segment(traj, svm, mode)
            end = traj.b
        else:
            free = check_curve(traj, epsilon, svm, mode)
            end = tuple(float(c) for c in traj.position(traj.horizon))
        if not free:
            continue
        if isinstance(model, SecondOrderModel):
            nxt = PlannerState(position=end, velocity=tuple(float(c) for c in new_vel), k=state.k + 1)
        else:
            nxt = PlannerState(position=end, velocity=None, k=state.k + 1)
        out.append((nxt, u, motion_cost(u, model)))
    return out


@dataclass(frozen=True)
class PlanResult:
    primitives: tuple[tuple[float, float], ...]
    states: tuple[PlannerState, ...]
    cost: float


def _velocity_quantum(model: MotionModel) -> float:
    if isinstance(model, FirstOrderModel):
        return 1.0
    steps = [
        abs(c) for u in model.accelerations for c in u if abs(c) > 0.0
    ]
    return (min(steps) if steps else 1.0) * model.tau


def plan(
    start: PlannerState,
    goal: GoalRegion,
    model: MotionModel,
    svm: SupportVectorModel,
    mode: BoundMode = SEGMENT_MODE_DEFAULT,
    epsilon: float = CURVE_EPSILON_DEFAULT,
    bounds: tuple[float, float, float, float] | None = None,
    lattice_resolution: float = 0.25,
    visited_cap: int = DEFAULT_VISITED_CAP,
) -> PlanResult | None:
    """A* to the goal region; returns None when the bounded lattice holds no
    path.

    ``bounds`` (xmin, ymin, xmax, ymax) clips the searched lattice; by
    default a box around start and goal inflated by half their separation
    (at least 10 m). Ties on f break toward larger g. Exceeding
    ``visited_cap`` raises :class:`PlannerResourceError`.
    """
    if bounds is None:
        sx, sy = start.position
        gx, gy = goal.center
        d = math.hypot(gx - sx, gy - sy)
        margin = max(10.0, 0.5 * d) + goal.radius
        bounds = (min(sx, gx) - margin, min(sy, gy) - margin,
                  max(sx, gx) + margin, max(sy, gy) + margin)
    xmin, ymin, xmax, ymax = bounds

    pos_quant = lattice_resolution / 2.0
    vel_quant = _velocity_quantum(model)

    def key(st: PlannerState):
        pk = (round(st.position[0] / pos_quant), round(st.position[1] / pos_quant))
        if st.velocity is None:
            return pk
        return pk + (round(st.velocity[0] / vel_quant), round(st.velocity[1] / vel_quant))

    rate = _heuristic_rate(model)

    def h(st: PlannerState) -> float:
        d = math.hypot(st.position[0] - goal.center[0], st.position[1] - goal.center[1])
        return rate * max(0.0, d - goal.radius)

    if goal.contains(start.position):
        return PlanResult(primitives=(), states=(start,), cost=0.0)

    counter = itertools.count()
    start_key = key(start)
    g_best: dict = {start_key: 0.0}
    came_from: dict = {}
    open_heap = [(h(start), 0.0, next(counter), start)]
    closed: set = set()

    while open_heap:
        f, neg_g, _, current = heapq.heappop(open_heap)
        ckey = key(current)
        if ckey in closed:
            continue
        g = -neg_g
        if g > g_best.get(ckey, math.inf):
            continue
        if goal.contains(current.position):
            return _reconstruct(current, ckey, came_from, g)
        closed.add(ckey)
        if len(closed) > visited_cap:
            raise PlannerResourceError(f"visited-state cap {visited_cap} exceeded")
        for nxt, u, cost in successors(current, model, svm, mode, epsilon):
            x, y = nxt.position
            if not (xmin <= x <= xmax and ymin <= y <= ymax):
                continue
            nkey = key(nxt)
            if nkey in closed:
                continue
            ng = g + cost
            if ng < g_best.get(nkey, math.inf) - 1e-12:
                g_best[nkey] = ng
                came_from[nkey] = (ckey, current, u, nxt)
                heapq.heappush(open_heap, (ng + h(nxt), -ng, next(counter), nxt))
    return None


def _reconstruct(final_state, final_key, came_from, cost) -> PlanResult:
    primitives = []
    states = [final_state]
    k = final_key
    while k in came_from:
        pkey, parent, u, _ = came_from[k]
        primitives.append(u)
        states.append(parent)
        k = pkey
    primitives.reverse()
    states.reverse()
    return PlanResult(primitives=tuple(primitives), states=tuple(states), cost=cost)
