"""Range scan to C-space training batch conversion.

Beam endpoints become ball-shaped obstacles of the robot radius; cell centers
inside them are labeled occupied. Cell centers in the observed free wedge
(closer than the nearest beam's range minus the robot radius) are labeled
free, and a free collar of unobserved neighbors is added around every
occupied sample so the decision boundary closes behind obstacles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import RangeScan, SampleGrid, normalize_angles
from .model import SupportVectorModel, TrainingBatch


@dataclass(frozen=True)
class CSpaceObstacle:
    """A beam endpoint inflated to a ball of the robot radius."""

    center: tuple[float, float]
    radius: float

    def __post_init__(self) -> None:
        if self.radius < 0.0:
            raise ValueError(f"radius must be >= 0, got {self.radius}")


@dataclass(frozen=True)
class AugmentationConfig:
    """Batch generation knobs.

    Attributes
    ----------
    neighbor_threshold:
        Collar reach: grid points within this L-inf distance (strict) of an
        occupied sample become free samples. Must be >= the grid resolution.
    free_cap_ratio, free_cap_min:
        Observed-free samples are thinned (every k-th, row-major) to at most
        ``max(ratio * n_occupied, free_cap_min)``.
    suppress_occupied_collar:
        Drop collar candidates that fall inside another beam's obstacle ball.
    """

    neighbor_threshold: float = 0.5
    free_cap_ratio: float = 4.0
    free_cap_min: int = 64
    suppress_occupied_collar: bool = True

    def validate(self, grid: SampleGrid) -> None:
        if self.neighbor_threshold < grid.resolution:
            raise ValueError(
                f"neighbor_threshold {self.neighbor_threshold} must be >= grid resolution "
                f"{grid.resolution}"
            )


def scan_to_obstacles(scan: RangeScan, radius: float) -> list[CSpaceObstacle]:
    """One obstacle per hit beam, centered at the beam endpoint."""
    return [
        CSpaceObstacle(center=(float(p[0]), float(p[1])), radius=radius)
        for p in scan.beam_endpoints(hits_only=True)
    ]


def _nearest_beam(scan: RangeScan, bearings: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per query bearing (relative to heading): nearest beam's range and
    angular offset. Uses a sorted lookup with circular wraparound."""
    order = np.argsort(scan.angles, kind="stable")
    angles = scan.angles[order]
    ranges = scan.ranges[order]
    idx = np.searchsorted(angles, bearings)
    n = angles.size
    # Candidate neighbors on both sides, wrapping circularly.
    lo = (idx - 1) % n
    hi = idx % n
    d_lo = np.abs(normalize_angles(bearings - angles[lo]))
    d_hi = np.abs(normalize_angles(bearings - angles[hi]))
    take_hi = d_hi < d_lo
    best = np.where(take_hi, hi, lo)
    gap = np.where(take_hi, d_hi, d_lo)
    return ranges[best], gap


def _beam_gap_limit(scan: RangeScan) -> float:
    """Largest angular offset still considered covered by a beam."""
    if scan.beam_count < 2:
        return math.inf
    a = np.sort(scan.angles)
    gaps = np.diff(a)
    spacing = float(np.median(gaps)) if gaps.size else math.inf
    return max(spacing, 1e-12)


def _free_mask(points: np.ndarray, scan: RangeScan, radius: float) -> np.ndarray:
    """True where a point is inside the observed region and C-space free."""
    rel = points - scan.position[None, :]
    dist = np.hypot(rel[:, 0], rel[:, 1])
    bearings = normalize_angles(np.arctan2(rel[:, 1], rel[:, 0]) - scan.heading)
    beam_range, gap = _nearest_beam(scan, bearings)
    covered = gap <= _beam_gap_limit(scan)
    return covered & (dist <= beam_range - radius)


def free_space_test(p, scan: RangeScan, radius: float) -> bool:
    """Whether a single point is observed free space (C-space, nearest beam)."""
    return bool(_free_mask(np.asarray(p, dtype=float)[None, :], scan, radius)[0])


def observed_cell_mask(
    scan: RangeScan, grid: SampleGrid, radius: float, out: np.ndarray | None = None
) -> np.ndarray:
    """Boolean grid of cells observed by this scan (free wedge or obstacle ball)."""
    nx, ny = grid.extents
    if out is None:
        out = np.zeros((nx, ny), dtype=bool)
    occ_cells, _ = _occupied_cells(scan, grid, radius)
    for cx, cy in occ_cells:
        out[cx, cy] = True
    (x0, x1), (y0, y1) = _scan_cell_window(scan, grid)
    cx, cy = np.meshgrid(np.arange(x0, x1), np.arange(y0, y1), indexing="ij")
    cx = cx.ravel()
    cy = cy.ravel()
    centers = grid.cell_centers(cx, cy)
    free = _free_mask(centers, scan, radius)
    out[cx[free], cy[free]] = True
    return out


def _scan_cell_window(scan: RangeScan, grid: SampleGrid) -> tuple[tuple[int, int], tuple[int, int]]:
    nx, ny = grid.extents
    lo = scan.position - scan.max_range - grid.resolution
    hi = scan.position + scan.max_range + grid.resolution
    x0 = max(0, int(math.floor((lo[0] - grid.origin[0]) / grid.resolution)))
    y0 = max(0, int(math.floor((lo[1] - grid.origin[1]) / grid.resolution)))
    x1 = min(nx, int(math.ceil((hi[0] - grid.origin[0]) / grid.resolution)) + 1)
    y1 = min(ny, int(math.ceil((hi[1] - grid.origin[1]) / grid.resolution)) + 1)
    return (x0, x1), (y0, y1)


def _occupied_cells(
    scan: RangeScan, grid: SampleGrid, radius: float
) -> tuple[list[tuple[int, int]], np.ndarray]:
    """Cells labeled occupied: centers within ``radius`` of a hit endpoint,
    plus the cell containing each endpoint (so a point robot still marks
    surfaces). Returned row-major sorted, with the endpoint array."""
    endpoints = scan.beam_endpoints(hits_only=True)
    nx, ny = grid.extents
    res = grid.resolution
    found: set[tuple[int, int]] = set()
    reach = int(math.ceil(radius / res)) + 1
    for ex, ey in endpoints:
        ecx = int(math.floor((ex - grid.origin[0]) / res))
        ecy = int(math.floor((ey - grid.origin[1]) / res))
        if 0 <= ecx < nx and 0 <= ecy < ny:
            found.add((ecx, ecy))
        if radius <= 0.0:
            continue
        for cx in range(max(0, ecx - reach), min(nx, ecx + reach + 1)):
            px = grid.origin[0] + (cx + 0.5) * res
            for cy in range(max(0, ecy - reach), min(ny, ecy + reach + 1)):
                py = grid.origin[1] + (cy + 0.5) * res
                if (px - ex) ** 2 + (py - ey) ** 2 <= radius * radius:
                    found.add((cx, cy))
    return sorted(found), endpoints


def generate_batch(
    scan: RangeScan,
    grid: SampleGrid,
    model: SupportVectorModel,
    cfg: AugmentationConfig,
    radius: float = 0.0,
) -> TrainingBatch | None:
    """Build the labeled batch for one scan, or ``None`` if nothing was seen.

    Occupied samples come first, then observed-free samples (thinned), then
    the free collar; duplicate positions keep their first label.
    """
    cfg.validate(grid)
    if not grid.contains_point(scan.position):
        raise ValueError("scan pose must lie inside the sample grid")
    nx, ny = grid.extents
    res = grid.resolution

    occ_cells, endpoints = _occupied_cells(scan, grid, radius)
    occ_set = set(occ_cells)

    # Observed free cells, row-major within the scan window.
    (x0, x1), (y0, y1) = _scan_cell_window(scan, grid)
    cx, cy = np.meshgrid(np.arange(x0, x1), np.arange(y0, y1), indexing="ij")
    cx = cx.ravel()
    cy = cy.ravel()
    centers = grid.cell_centers(cx, cy)
    free = _free_mask(centers, scan, radius)
    free_cells = [
        (int(a), int(b)) for a, b in zip(cx[free], cy[free]) if (int(a), int(b)) not in occ_set
    ]
    cap = max(int(math.ceil(cfg.free_cap_ratio * len(occ_cells))), cfg.free_cap_min)
    if len(free_cells) > cap:
        stride = int(math.ceil(len(free_cells) / cap))
        free_cells = free_cells[::stride]
    free_set = set(free_cells)

    # Free collar around each occupied sample: unobserved neighbors assumed
    # free unless they are already in the batch or coincide with a support
    # vector.
    collar: list[tuple[int, int]] = []
    collar_seen: set[tuple[int, int]] = set()
    max_off = int(math.ceil(cfg.neighbor_threshold / res)) - 1
    r2 = radius * radius
    for ocx, ocy in occ_cells:
        for dx in range(-max_off, max_off + 1):
            ncx = ocx + dx
            if not (0 <= ncx < nx):
                continue
            for dy in range(-max_off, max_off + 1):
                ncy = ocy + dy
                if not (0 <= ncy < ny):
                    continue
                cell = (ncx, ncy)
                if cell in occ_set or cell in free_set or cell in collar_seen:
                    continue
                center = grid.cell_centers(np.array([ncx]), np.array([ncy]))[0]
                if cfg.suppress_occupied_collar and endpoints.shape[0]:
                    d2 = np.min(
                        (endpoints[:, 0] - center[0]) ** 2 + (endpoints[:, 1] - center[1]) ** 2
                    )
                    if d2 <= r2:
                        continue
                if center in model.class_index(1) or center in model.class_index(-1):
                    continue
                collar_seen.add(cell)
                collar.append(cell)

    samples: list[tuple[np.ndarray, int]] = []
    for cell in occ_cells:
        samples.append((grid.cell_center(cell), 1))
    for cell in free_cells:
        samples.append((grid.cell_center(cell), -1))
    for cell in collar:
        samples.append((grid.cell_center(cell), -1))
    if not samples:
        return None
    return TrainingBatch(samples)
