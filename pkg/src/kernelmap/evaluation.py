"""Quantitative evaluation: map accuracy/recall vs. ground truth, sparsity
and storage, collision-check timing, and the dense-sampling oracles used to
validate the complete checker."""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass
from typing import Iterable, Sequence, TextIO

import numpy as np
from scipy import ndimage

from .collision import BoundMode, PolyCurve, Segment, check_segment
from .geometry import RangeScan, SampleGrid
from .model import SupportVectorModel, TrainingConfig
from .pipeline import AugmentationConfig, generate_batch, observed_cell_mask
from .sim import GroundTruthGrid


@dataclass(frozen=True)
class MapReport:
    accuracy: float
    recall: float
    sv_count: int
    storage_bytes: int
    cells_evaluated: int

    def __post_init__(self) -> None:
        if not (0.0 <= self.accuracy <= 1.0 and 0.0 <= self.recall <= 1.0):
            raise ValueError("accuracy and recall must lie in [0, 1]")


def _truth_occupied(world: GroundTruthGrid, radius: float) -> np.ndarray:
    """C-space truth: cell center within ``radius`` of an occupied cell.
    radius = 0 reduces to the workspace grid itself."""
    if radius <= 0.0:
        return world.occ.astype(bool)
    return world.obstacle_distance() <= radius


def _upper_bound_many(model: SupportVectorModel, X: np.ndarray) -> np.ndarray:
    """Vectorized score upper bound with the nearest negative vector per query."""
    eta, gamma = model.kernel.eta, model.kernel.gamma
    pos_pts, pos_w, neg_pts, neg_w = model._arrays()
    d_pos, _, _ = model.class_index(1).knn_batch(X, 1)
    d_neg, _, w_neg = model.class_index(-1).knn_batch(X, 1)
    return (
        eta * np.exp(-gamma * d_pos[:, 0] ** 2) * pos_w.sum()
        - eta * np.exp(-gamma * d_neg[:, 0] ** 2) * w_neg[:, 0]
    )


def predict_cells(
    model: SupportVectorModel,
    X: np.ndarray,
    use_upper_bound: bool,
    approximate: bool = False,
) -> np.ndarray:
    """Boolean occupied predictions at the given points."""
    if model.num_support_vectors == 0:
        return np.zeros(X.shape[0], dtype=bool)
    if use_upper_bound:
        if model.num_positive == 0:
            return np.zeros(X.shape[0], dtype=bool)
        if model.num_negative == 0:
            return np.ones(X.shape[0], dtype=bool)
        return _upper_bound_many(model, X) >= 0.0
    return model.classify_many(X, approximate=approximate) > 0


def map_accuracy(
    model: SupportVectorModel,
    world: GroundTruthGrid,
    radius: float = 0.0,
    use_upper_bound: bool = False,
    approximate: bool = False,
    observed_mask: np.ndarray | None = None,
) -> MapReport:
    """Compare the model's cell-center predictions against ground truth.

    ``use_upper_bound`` evaluates the inflated map (sign of the score upper
    bound with the nearest negative vector) instead of the raw classifier.
    ``observed_mask`` restricts evaluation to observed cells.
    """
    grid = world.geometry
    nx, ny = grid.extents
    cx, cy = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
    mask = np.ones((nx, ny), dtype=bool) if observed_mask is None else observed_mask.astype(bool)
    cx = cx[mask]
    cy = cy[mask]
    centers = grid.cell_centers(cx, cy)
    truth = _truth_occupied(world, radius)[mask]
    pred = predict_cells(model, centers, use_upper_bound, approximate)
    n = truth.size
    matches = int(np.count_nonzero(pred == truth))
    occ_total = int(np.count_nonzero(truth))
    tp = int(np.count_nonzero(pred & truth))
    return MapReport(
        accuracy=matches / n if n else 1.0,
        recall=tp / occ_total if occ_total else 1.0,
        sv_count=model.num_support_vectors,
        storage_bytes=model.storage_estimate(),
        cells_evaluated=n,
    )


def accumulate_observed(
    scans: Iterable[RangeScan], grid: SampleGrid, radius: float
) -> np.ndarray:
    """Union of per-scan observed-cell masks."""
    out = np.zeros(tuple(grid.extents), dtype=bool)
    for scan in scans:
        observed_cell_mask(scan, grid, radius, out=out)
    return out


def baseline_endpoint_grid(
    scans: Iterable[RangeScan], grid: SampleGrid
) -> tuple[int, int, np.ndarray]:
    """Plain binary-grid baseline built by beam-endpoint marking.

    Returns (occupied_cell_count, total_cell_count, grid_array); the raw
    grid's total cell count is the storage stand-in for a tree-based map's
    node count.
    """
    occ = np.zeros(tuple(grid.extents), dtype=bool)
    nx, ny = grid.extents
    for scan in scans:
        for ex, ey in scan.beam_endpoints(hits_only=True):
            cx = int(math.floor((ex - grid.origin[0]) / grid.resolution))
            cy = int(math.floor((ey - grid.origin[1]) / grid.resolution))
            if 0 <= cx < nx and 0 <= cy < ny:
                occ[cx, cy] = True
    return int(occ.sum()), int(occ.size), occ


# ---------------------------------------------------------------------------
# Dense-sampling oracles

def _sample_count(length: float, delta: float) -> int:
    """Number of sample intervals: power of two so halving delta nests the
    sample set (Colliding verdicts can then never flip back to Free)."""
    raw = max(1, int(math.ceil(length / delta)))
    return 1 << (raw - 1).bit_length()


def _oracle_values(
    model: SupportVectorModel, X: np.ndarray, use_upper_bound: bool, j_policy: str
) -> np.ndarray:
    if not use_upper_bound:
        return model.score_many(X)
    eta, gamma = model.kernel.eta, model.kernel.gamma
    pos_pts, pos_w, neg_pts, neg_w = model._arrays()
    d2_pos = ((X[:, None, :] - pos_pts[None, :, :]) ** 2).sum(-1)
    pos_term = eta * np.exp(-gamma * d2_pos.min(axis=1)) * pos_w.sum()
    d2_neg = ((X[:, None, :] - neg_pts[None, :, :]) ** 2).sum(-1)
    if j_policy == "nearest":
        j = np.argmin(d2_neg, axis=1)
        neg_term = eta * np.exp(-gamma * d2_neg[np.arange(X.shape[0]), j]) * neg_w[j]
    elif j_policy == "best":
        neg_term = (eta * np.exp(-gamma * d2_neg) * neg_w[None, :]).max(axis=1)
    else:
        raise ValueError(f"j_policy must be 'nearest' or 'best', got {j_policy!r}")
    return pos_term - neg_term


def brute_force_segment_oracle(
    seg: Segment,
    model: SupportVectorModel,
    delta: float,
    use_upper_bound: bool = False,
    j_policy: str = "best",
) -> bool:
    """Free/colliding verdict by dense sampling: colliding iff any sample has
    score (or upper bound) >= 0. Endpoints are always included."""
    if delta <= 0.0:
        raise ValueError(f"delta must be > 0, got {delta}")
    a = np.asarray(seg.a)
    b = np.asarray(seg.b)
    n = _sample_count(seg.length, delta)
    X = a[None, :] + np.linspace(0.0, 1.0, n + 1)[:, None] * (b - a)[None, :]
    if model.num_support_vectors == 0:
        return True
    if use_upper_bound and model.num_positive == 0:
        return True
    if use_upper_bound and model.num_negative == 0:
        return False
    return bool(np.all(_oracle_values(model, X, use_upper_bound, j_policy) < 0.0))


def brute_force_curve_oracle(
    curve: PolyCurve,
    model: SupportVectorModel,
    dt: float,
    use_upper_bound: bool = False,
    j_policy: str = "best",
) -> bool:
    if dt <= 0.0:
        raise ValueError(f"dt must be > 0, got {dt}")
    n = _sample_count(curve.horizon, dt)
    X = curve.position(np.linspace(0.0, curve.horizon, n + 1))
    if model.num_support_vectors == 0:
        return True
    if use_upper_bound and model.num_positive == 0:
        return True
    if use_upper_bound and model.num_negative == 0:
        return False
    return bool(np.all(_oracle_values(model, X, use_upper_bound, j_policy) < 0.0))


def first_bound_crossing(
    s0, v, model: SupportVectorModel, dt: float, t_max: float, j_policy: str = "nearest"
) -> float | None:
    """First ray parameter where the sampled upper bound turns >= 0."""
    ts = np.arange(0.0, t_max + dt, dt)
    X = np.asarray(s0)[None, :] + ts[:, None] * np.asarray(v, dtype=float)[None, :]
    vals = _oracle_values(model, X, True, j_policy)
    hits = np.nonzero(vals >= 0.0)[0]
    return float(ts[hits[0]]) if hits.size else None


# ---------------------------------------------------------------------------
# Benchmarks

TIMING_FIELDS = ["method", "length", "delta", "trials", "mean_us", "p95_us"]


def _free_segment(model, length, rng, region, max_tries=200) -> Segment:
    xmin, ymin, xmax, ymax = region
    for _ in range(max_tries):
        a = np.array([rng.uniform(xmin, xmax), rng.uniform(ymin, ymax)])
        ang = rng.uniform(0.0, 2.0 * math.pi)
        b = a + length * np.array([math.cos(ang), math.sin(ang)])
        if model.num_support_vectors == 0 or (
            model.score(a) < 0.0 and model.score(b) < 0.0
        ):
            return Segment(a=tuple(a), b=tuple(b))
    return Segment(a=tuple(a), b=tuple(b))


def timing_bench(
    model: SupportVectorModel,
    lengths: Sequence[float],
    trials: int,
    mode: BoundMode,
    deltas: Sequence[float] = (0.01,),
    region: tuple[float, float, float, float] = (0.0, 0.0, 20.0, 20.0),
    seed: int = 0,
) -> list[dict]:
    """Wall-clock comparison of the complete check vs. the sampling oracle.

    Returns CSV-ready rows; trials = 0 yields no rows. Absolute times are
    machine-dependent and reported, not asserted.
    """
    rng = np.random.default_rng(seed)
    rows: list[dict] = []
    if trials <= 0:
        return rows
    for length in lengths:
        segs = [_free_segment(model, length, rng, region) for _ in range(trials)]
        for seg in segs[: min(5, trials)]:
            check_segment(seg, model, mode)  # warm-up
        samples = []
        for seg in segs:
            t0 = time.perf_counter_ns()
            check_segment(seg, model, mode)
            samples.append((time.perf_counter_ns() - t0) / 1e3)
        rows.append(
            {
                "method": "complete",
                "length": length,
                "delta": "",
                "trials": trials,
                "mean_us": float(np.mean(samples)),
                "p95_us": float(np.percentile(samples, 95)),
            }
        )
        for delta in deltas:
            samples = []
            for seg in segs:
                t0 = time.perf_counter_ns()
                brute_force_segment_oracle(seg, model, delta)
                samples.append((time.perf_counter_ns() - t0) / 1e3)
            rows.append(
                {
                    "method": "sampling",
                    "length": length,
                    "delta": delta,
                    "trials": trials,
                    "mean_us": float(np.mean(samples)),
                    "p95_us": float(np.percentile(samples, 95)),
                }
            )
    return rows


TRAINING_FIELDS = ["scan_index", "batch_size", "train_ms", "sv_count", "added", "removed"]


def training_bench(
    scans: Sequence[RangeScan],
    grid: SampleGrid,
    model: SupportVectorModel,
    training: TrainingConfig = TrainingConfig(),
    augment: AugmentationConfig = AugmentationConfig(),
    radius: float = 0.0,
) -> list[dict]:
    """Per-scan update timing and support-vector growth; mutates the model."""
    rows: list[dict] = []
    for i, scan in enumerate(scans):
        t0 = time.perf_counter()
        batch = generate_batch(scan, grid, model, augment, radius)
        if batch is None:
            report = None
        else:
            report = model.train_increment(batch, training, robot_position=scan.position)
        ms = (time.perf_counter() - t0) * 1e3
        rows.append(
            {
                "scan_index": i,
                "batch_size": 0 if batch is None else len(batch),
                "train_ms": ms,
                "sv_count": model.num_support_vectors,
                "added": 0 if report is None else report.added,
                "removed": 0 if report is None else report.removed,
            }
        )
    return rows


def write_csv(fp: TextIO, fields: Sequence[str], rows: Iterable[dict]) -> None:
    """CSV with a mandatory header row naming all columns."""
    writer = csv.DictWriter(fp, fieldnames=list(fields))
    writer.writeheader()
    for row in rows:
        writer.writerow(row)
