"""Complete collision checking against the kernel occupancy model.

The score F(x) is bounded above by

    U(x) = k(x, nearest positive) * W  -  k(x, x_j-) * w_j-

for any negative support vector j, where W is the total positive weight.
U < 0 certifies free space, and because the RBF kernel turns the comparison
into a quadratic inequality, the first time a ray s0 + t*v can reach the
U = 0 surface admits a closed form: with

    beta_j = (log w_j- - log W) / gamma
    num(i, j) = beta_j - ||s0 - x_j-||^2 + ||s0 - x_i+||^2

the pair (i, j) keeps the ray certified for t < num / (2 v.(x_i+ - x_j-))
when that inner product is positive, for all t when it is <= 0 and num > 0,
and for no leading interval otherwise. Minimizing over positives (and
optionally maximizing over negatives first) yields a sound free-time bound;
replacing the directional term by ||x_j- - x_i+|| via Cauchy-Schwarz yields a
free-ball radius, which Alg.-style iterative ball covering extends to
polynomial curves.

All operations are pure with respect to a frozen model snapshot; do not run
them concurrently with training on the same model.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.spatial.distance import cdist

from .geometry import as_point
from .model import SupportVectorModel

_BISECT_TOL = 1e-10
_SCAN_STEPS = 1024


class StartInCollisionError(Exception):
    """The query's start point already violates the upper bound."""


class DegenerateModelError(ValueError):
    """Bound computation requires at least one support vector per class."""


class CurveCheckStallError(RuntimeError):
    """Ball covering exceeded its iteration budget without a verdict."""


@dataclass(frozen=True)
class Segment:
    """Line segment between two distinct points."""

    a: tuple[float, ...]
    b: tuple[float, ...]

    def __post_init__(self) -> None:
        a = as_point(self.a)
        b = as_point(self.b, a.size)
        object.__setattr__(self, "a", tuple(float(c) for c in a))
        object.__setattr__(self, "b", tuple(float(c) for c in b))
        if np.allclose(a, b, rtol=0.0, atol=0.0):
            raise ValueError("segment endpoints must be distinct")

    @property
    def length(self) -> float:
        return float(np.linalg.norm(np.asarray(self.b) - np.asarray(self.a)))


class PolyCurve:
    """Polynomial curve s(t) = c0 + c1 t + ... + cd t^d over [0, horizon]."""

    __slots__ = ("coefficients", "horizon")

    def __init__(self, coefficients: Sequence[Sequence[float]], horizon: float) -> None:
        C = np.asarray(coefficients, dtype=float)
        if C.ndim != 2 or C.shape[0] < 2:
            raise ValueError("need at least constant and linear coefficient vectors")
        if not np.all(np.isfinite(C)):
            raise ValueError("coefficients must be finite")
        if not horizon > 0.0:
            raise ValueError(f"horizon must be > 0, got {horizon}")
        self.coefficients = C
        self.horizon = float(horizon)

    @property
    def degree(self) -> int:
        return self.coefficients.shape[0] - 1

    @property
    def dim(self) -> int:
        return self.coefficients.shape[1]

    def position(self, t) -> np.ndarray:
        """Evaluate the curve; accepts a scalar or an array of times."""
        t = np.asarray(t, dtype=float)
        powers = t[..., None, None] ** np.arange(self.coefficients.shape[0])[:, None]
        return (self.coefficients * powers).sum(axis=-2)

    def shifted_deltas(self, t_k: float) -> np.ndarray:
        """Coefficients b of s(t_k + u) - s(t_k) = sum_m b[m] u^m, b[0] = 0."""
        D = self.degree
        b = np.zeros_like(self.coefficients)
        for m in range(1, D + 1):
            for k in range(m, D + 1):
                b[m] += math.comb(k, m) * self.coefficients[k] * t_k ** (k - m)
        return b

    def speed_bound(self) -> float:
        """Upper bound on ||s'(t)|| over [0, horizon]."""
        total = 0.0
        for k in range(1, self.coefficients.shape[0]):
            total += k * float(np.linalg.norm(self.coefficients[k])) * self.horizon ** (k - 1)
        return total


@dataclass(frozen=True)
class BoundMode:
    """How the free-time / free-ball bound picks its support-vector pairs.

    ``kind`` is ``"single"`` (one negative vector, the nearest to the query
    anchor) or ``"minimax"`` (best negative per positive). ``knn_limit``
    restricts both classes, including the positive weight sum, to the given
    nearest counts; this trades the formal guarantee for speed and is
    validated empirically by the sampling oracle.
    """

    kind: str = "minimax"
    knn_limit: tuple[int, int] | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("single", "minimax"):
            raise ValueError(f"kind must be 'single' or 'minimax', got {self.kind!r}")
        if self.knn_limit is not None and (self.knn_limit[0] < 1 or self.knn_limit[1] < 1):
            raise ValueError(f"knn_limit entries must be >= 1, got {self.knn_limit}")


SEGMENT_MODE_DEFAULT = BoundMode(kind="minimax", knn_limit=(10, 10))
CURVE_MODE_DEFAULT = BoundMode(kind="minimax", knn_limit=(2, 2))
EXACT_MINIMAX = BoundMode(kind="minimax", knn_limit=None)
EXACT_SINGLE = BoundMode(kind="single", knn_limit=None)

CURVE_EPSILON_DEFAULT = 0.2


def upper_bound(x, model: SupportVectorModel, j: int | None = None) -> float:
    """Score upper bound at ``x`` using negative vector ``j`` (insertion
    index), or the nearest negative when ``j`` is None."""
    if model.num_positive == 0 or model.num_negative == 0:
        raise DegenerateModelError("upper bound needs >= 1 support vector in each class")
    q = as_point(x, model.dim)
    eta, gamma = model.kernel.eta, model.kernel.gamma
    pos_pts, pos_w, neg_pts, neg_w = model._arrays()
    d2_pos = np.sum((pos_pts - q) ** 2, axis=1)
    if j is None:
        d2_neg = np.sum((neg_pts - q) ** 2, axis=1)
        j = int(np.argmin(d2_neg))
        d2_j = float(d2_neg[j])
    else:
        d2_j = float(np.sum((neg_pts[j] - q) ** 2))
    return float(
        eta * math.exp(-gamma * float(d2_pos.min())) * pos_w.sum()
        - eta * math.exp(-gamma * d2_j) * neg_w[j]
    )


def _select_vectors(s0: np.ndarray, model: SupportVectorModel, mode: BoundMode):
    """Support vectors (and positive weight sum) the bound may use.

    Full mode keeps every vector and the global weight sum (formally sound);
    knn-limited mode restricts everything to the retrieved neighbors.
    """
    if model.num_positive == 0 or model.num_negative == 0:
        raise DegenerateModelError("bounds need >= 1 support vector in each class")
    if mode.knn_limit is None:
        pos_pts, pos_w, neg_pts, neg_w = model._arrays()
    else:
        k_pos, k_neg = mode.knn_limit
        near_pos = model.class_index(1).knn(s0, k_pos)
        near_neg = model.class_index(-1).knn(s0, k_neg)
        pos_pts = np.array([p for p, _, _ in near_pos], dtype=float)
        pos_w = np.array([w for _, w, _ in near_pos], dtype=float)
        neg_pts = np.array([p for p, _, _ in near_neg], dtype=float)
        neg_w = np.array([w for _, w, _ in near_neg], dtype=float)
    return pos_pts, pos_w, neg_pts, neg_w, float(pos_w.sum())


def _pair_numerators(s0, pos_pts, neg_pts, neg_w, w_sum, gamma):
    """num(i, j) matrix plus the start-point bound values per j.

    ``start_u[j] < 0`` iff the pair condition holds at t = 0 for the nearest
    positive, i.e. U_j(s0) < 0.
    """
    d2_pos = np.sum((pos_pts - s0) ** 2, axis=1)
    d2_neg = np.sum((neg_pts - s0) ** 2, axis=1)
    beta = (np.log(neg_w) - math.log(w_sum)) / gamma
    num = beta[None, :] - d2_neg[None, :] + d2_pos[:, None]
    start_u = np.exp(-gamma * d2_pos.min()) * w_sum - np.exp(-gamma * d2_neg) * neg_w
    return num, start_u, d2_neg


def _reduce(rho: np.ndarray, mode: BoundMode, start_u: np.ndarray, d2_neg: np.ndarray) -> float:
    """min over positives of the per-pair bounds, negatives handled per mode."""
    if mode.kind == "minimax":
        if not np.any(start_u < 0.0):
            raise StartInCollisionError("upper bound non-negative at the start point")
        return float(rho.max(axis=1).min())
    j = int(np.argmin(d2_neg))
    if start_u[j] >= 0.0:
        raise StartInCollisionError("upper bound non-negative at the start point")
    return float(rho[:, j].min())


def ray_free_time(s0, v, model: SupportVectorModel, mode: BoundMode = EXACT_MINIMAX) -> float:
    """Travel-time bound along ``s0 + t v``: every point with
    0 <= t < result is certified free. May be ``inf``.

    Raises :class:`StartInCollisionError` when the start itself cannot be
    certified (distinct from a zero bound).
    """
    s0 = as_point(s0, model.dim)
    v = as_point(v, model.dim)
    if not np.any(v != 0.0):
        raise ValueError("direction vector must be nonzero")
    pos_pts, pos_w, neg_pts, neg_w, w_sum = _select_vectors(s0, model, mode)
    num, start_u, d2_neg = _pair_numerators(
        s0, pos_pts, neg_pts, neg_w, w_sum, model.kernel.gamma
    )
    dots = (pos_pts @ v)[:, None] - (neg_pts @ v)[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        rho = np.where(dots > 0.0, num / (2.0 * dots), math.inf)
    # Pairs whose condition cannot hold on any interval [0, t) certify
    # nothing; they contribute 0, not infinity.
    rho = np.where(num > 0.0, rho, 0.0)
    return max(_reduce(rho, mode, start_u, d2_neg), 0.0)


def free_ball_radius(s0, model: SupportVectorModel, mode: BoundMode = EXACT_MINIMAX) -> float:
    """Radius of a ball around ``s0`` whose interior is certified free."""
    s0 = as_point(s0, model.dim)
    pos_pts, pos_w, neg_pts, neg_w, w_sum = _select_vectors(s0, model, mode)
    num, start_u, d2_neg = _pair_numerators(
        s0, pos_pts, neg_pts, neg_w, w_sum, model.kernel.gamma
    )
    sep = cdist(pos_pts, neg_pts)
    with np.errstate(divide="ignore", invalid="ignore"):
        rho = np.where(sep > 0.0, num / (2.0 * sep), math.inf)
    rho = np.where(num > 0.0, rho, 0.0)
    return max(_reduce(rho, mode, start_u, d2_neg), 0.0)


def check_segment(
    seg: Segment, model: SupportVectorModel, mode: BoundMode = SEGMENT_MODE_DEFAULT
) -> bool:
    """True iff the whole segment is certified free.

    Computes free-time bounds from both endpoints toward each other
    (t parameterized over [0, 1]); the segment is free iff they overlap.
    A degenerate model short-circuits: no positives means everything is
    free, no negatives means the bound is undefined and we stay conservative.
    """
    if model.num_positive == 0:
        return True
    if model.num_negative == 0:
        return False
    a = np.asarray(seg.a, dtype=float)
    b = np.asarray(seg.b, dtype=float)
    v = b - a
    try:
        t_a = ray_free_time(a, v, model, mode)
        if t_a > 1.0:
            return True
        t_b = ray_free_time(b, -v, model, mode)
    except StartInCollisionError:
        return False
    return t_a + t_b > 1.0


def curve_ball_exit_time(curve: PolyCurve, t_k: float, r: float) -> float | None:
    """Smallest t in [t_k, horizon] with ||s(t) - s(t_k)|| = r, or None if
    the curve never leaves the ball before the horizon."""
    if r <= 0.0:
        raise ValueError(f"ball radius must be > 0, got {r}")
    if not 0.0 <= t_k <= curve.horizon:
        raise ValueError(f"t_k {t_k} outside [0, {curve.horizon}]")
    u_max = curve.horizon - t_k
    if u_max <= 0.0:
        return None
    b = curve.shifted_deltas(t_k)
    deg = curve.degree

    if deg == 1:
        speed = float(np.linalg.norm(b[1]))
        if speed <= 0.0:
            return None
        u = r / speed
        return t_k + u if u <= u_max else None

    if deg == 2 and float(np.dot(b[1], b[2])) == 0.0:
        # ||b1 u + b2 u^2||^2 is biquadratic: closed form in u^2.
        b12 = float(np.dot(b[1], b[1]))
        b22 = float(np.dot(b[2], b[2]))
        if b22 == 0.0:
            if b12 == 0.0:
                return None
            u = r / math.sqrt(b12)
        else:
            x = (-b12 + math.sqrt(b12 * b12 + 4.0 * b22 * r * r)) / (2.0 * b22)
            u = math.sqrt(x)
        return t_k + u if u <= u_max else None

    # General case: bracket the first sign change of g(u) = ||ds||^2 - r^2 on
    # a uniform scan, then bisect.
    g_coeffs = np.zeros(2 * deg + 1)
    for axis in range(curve.dim):
        g_coeffs += np.convolve(b[:, axis], b[:, axis])
    g_coeffs[0] -= r * r

    def g(u):
        return np.polyval(g_coeffs[::-1], u)

    step = curve.horizon / _SCAN_STEPS
    us = np.linspace(0.0, u_max, max(2, int(math.ceil(u_max / step)) + 1))
    vals = g(us)
    crossing = np.nonzero(vals >= 0.0)[0]
    if crossing.size == 0:
        return None
    hi_idx = int(crossing[0])
    if hi_idx == 0:
        return t_k  # numerically on the sphere already
    lo, hi = us[hi_idx - 1], us[hi_idx]
    while hi - lo > _BISECT_TOL:
        mid = 0.5 * (lo + hi)
        if g(mid) >= 0.0:
            hi = mid
        else:
            lo = mid
    # Return the certified-inside side of the bracket so the covered stretch
    # never pokes beyond the ball.
    return t_k + lo


def check_curve(
    curve: PolyCurve,
    epsilon: float,
    model: SupportVectorModel,
    mode: BoundMode = CURVE_MODE_DEFAULT,
) -> bool:
    """True iff the whole curve is certified free by iterative ball covering.

    Colliding as soon as a covering ball shrinks below ``epsilon`` (or the
    current point cannot be certified at all). Degenerate models behave as in
    :func:`check_segment`.
    """
    if epsilon <= 0.0:
        raise ValueError(f"epsilon must be > 0, got {epsilon}")
    if model.num_positive == 0:
        return True
    if model.num_negative == 0:
        return False
    cap = max(10 * int(math.ceil(curve.speed_bound() * curve.horizon / epsilon)), 10)
    t_k = 0.0
    iterations = 0
    while True:
        iterations += 1
        if iterations > cap:
            raise CurveCheckStallError(
                f"ball covering stalled after {iterations - 1} balls at t={t_k:.6f} "
                f"(horizon {curve.horizon})"
            )
        try:
            r_k = free_ball_radius(curve.position(t_k), model, mode)
        except StartInCollisionError:
            return False
        if r_k < epsilon:
            return False
        t_next = curve_ball_exit_time(curve, t_k, r_k)
        if t_next is None or t_next >= curve.horizon:
            return True
        if t_next <= t_k:
            raise CurveCheckStallError(f"no progress at t={t_k:.6f}")
        t_k = t_next
