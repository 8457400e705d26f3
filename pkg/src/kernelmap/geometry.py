"""Shared geometric and configuration types.

Points live in a d-dimensional metric workspace (meters); the reference
scenarios are planar (d = 2). Configuration space uses the same coordinates:
a spherical robot of radius ``r`` becomes a point and obstacles are inflated
by ``r``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence, TextIO

import numpy as np

TWO_PI = 2.0 * math.pi


class OutOfBoundsError(ValueError):
    """A point or cell index fell outside the grid extents."""


def as_point(p: Sequence[float] | np.ndarray, dim: int | None = None) -> np.ndarray:
    """Coerce a coordinate sequence to a float64 vector and validate it.

    Raises ``ValueError`` on non-finite coordinates or dimension mismatch.
    """
    a = np.asarray(p, dtype=float)
    if a.ndim != 1:
        raise ValueError(f"point must be a 1-d coordinate vector, got shape {a.shape}")
    if dim is not None and a.size != dim:
        raise ValueError(f"expected {dim}-d point, got {a.size}-d")
    if not np.all(np.isfinite(a)):
        raise ValueError("point coordinates must be finite")
    return a


def normalize_angle(a: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    return math.pi - (math.pi - a) % TWO_PI


def normalize_angles(a: np.ndarray) -> np.ndarray:
    """Vectorized :func:`normalize_angle`."""
    return math.pi - np.mod(math.pi - np.asarray(a, dtype=float), TWO_PI)


@dataclass(frozen=True)
class KernelParams:
    """RBF kernel parameters: ``k(x, y) = eta * exp(-gamma * ||x - y||^2)``.

    Attributes
    ----------
    eta:
        Kernel amplitude, > 0.
    gamma:
        Kernel width (inverse squared length scale), > 0.
    """

    eta: float = 1.0
    gamma: float = 2.5

    def __post_init__(self) -> None:
        if not (self.eta > 0.0 and math.isfinite(self.eta)):
            raise ValueError(f"eta must be positive and finite, got {self.eta}")
        if not (self.gamma > 0.0 and math.isfinite(self.gamma)):
            raise ValueError(f"gamma must be positive and finite, got {self.gamma}")


@dataclass(frozen=True)
class RobotGeometry:
    """Spherical robot body: radius in meters, wheelbase for car-like models."""

    radius: float = 0.25
    wheelbase: float = 0.3

    def __post_init__(self) -> None:
        if self.radius < 0.0:
            raise ValueError(f"radius must be >= 0, got {self.radius}")
        if self.wheelbase <= 0.0:
            raise ValueError(f"wheelbase must be > 0, got {self.wheelbase}")


@dataclass(frozen=True)
class SampleGrid:
    """Regular sampling grid over the workspace.

    Attributes
    ----------
    origin:
        World coordinates of the grid's low corner (meters).
    resolution:
        Cell edge length, meters per cell, > 0.
    extents:
        Integer cell counts per axis, each >= 1.
    """

    origin: tuple[float, ...]
    resolution: float
    extents: tuple[int, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "origin", tuple(float(c) for c in self.origin))
        object.__setattr__(self, "extents", tuple(int(n) for n in self.extents))
        if self.resolution <= 0.0:
            raise ValueError(f"resolution must be > 0, got {self.resolution}")
        if len(self.origin) != len(self.extents):
            raise ValueError("origin and extents must have the same dimension")
        if any(n < 1 for n in self.extents):
            raise ValueError(f"extents must be >= 1 per axis, got {self.extents}")

    @property
    def dim(self) -> int:
        return len(self.extents)

    def point_to_cell(self, p: Sequence[float] | np.ndarray) -> tuple[int, ...]:
        """Map a point to its integer cell index: ``floor((p - origin) / resolution)``.

        Raises :class:`OutOfBoundsError` if the point lies outside the grid.
        """
        a = as_point(p, self.dim)
        cell = np.floor((a - np.asarray(self.origin)) / self.resolution).astype(int)
        if np.any(cell < 0) or np.any(cell >= np.asarray(self.extents)):
            raise OutOfBoundsError(f"point {tuple(a)} outside grid extents {self.extents}")
        return tuple(int(c) for c in cell)

    def cell_center(self, cell: Sequence[int]) -> np.ndarray:
        """World coordinates of a cell's center; inverse of :meth:`point_to_cell`."""
        c = np.asarray(cell, dtype=int)
        if c.shape != (self.dim,):
            raise ValueError(f"expected {self.dim}-d cell index, got {cell}")
        if np.any(c < 0) or np.any(c >= np.asarray(self.extents)):
            raise OutOfBoundsError(f"cell {tuple(c)} outside extents {self.extents}")
        return np.asarray(self.origin) + (c + 0.5) * self.resolution

    def contains_point(self, p: Sequence[float] | np.ndarray) -> bool:
        a = as_point(p, self.dim)
        rel = (a - np.asarray(self.origin)) / self.resolution
        return bool(np.all(rel >= 0.0) and np.all(rel < np.asarray(self.extents)))

    def cell_centers(self, cx: np.ndarray, cy: np.ndarray) -> np.ndarray:
        """Centers for arrays of 2-d cell indices, stacked as (n, 2)."""
        ox, oy = self.origin[0], self.origin[1]
        return np.stack(
            [ox + (np.asarray(cx) + 0.5) * self.resolution,
             oy + (np.asarray(cy) + 0.5) * self.resolution],
            axis=-1,
        )


class RangeScan:
    """One range-sensor observation.

    Parameters
    ----------
    position:
        Sensor position in world coordinates, meters.
    heading:
        Sensor heading, radians.
    angles:
        Beam angles relative to the heading, radians.
    ranges:
        Measured distances, meters; ``range == max_range`` encodes "no hit".
    max_range:
        Sensor range limit, meters, > 0.
    """

    __slots__ = ("position", "heading", "angles", "ranges", "max_range")

    def __init__(
        self,
        position: Sequence[float] | np.ndarray,
        heading: float,
        angles: Sequence[float] | np.ndarray,
        ranges: Sequence[float] | np.ndarray,
        max_range: float,
    ) -> None:
        self.position = as_point(position)
        self.heading = float(heading)
        self.angles = np.asarray(angles, dtype=float)
        self.ranges = np.asarray(ranges, dtype=float)
        self.max_range = float(max_range)
        if self.angles.shape != self.ranges.shape or self.angles.ndim != 1:
            raise ValueError("angles and ranges must be 1-d arrays of equal length")
        if self.max_range <= 0.0:
            raise ValueError(f"max_range must be > 0, got {self.max_range}")
        if np.any(self.ranges < 0.0) or np.any(self.ranges > self.max_range):
            raise ValueError("each range must satisfy 0 <= range <= max_range")

    @property
    def beam_count(self) -> int:
        return int(self.angles.size)

    @property
    def hit_mask(self) -> np.ndarray:
        """True for beams that hit an obstacle (range strictly below max_range)."""
        return self.ranges < self.max_range

    def beam_endpoints(self, hits_only: bool = True) -> np.ndarray:
        """World-frame beam endpoints as an (n, 2) array."""
        world = self.heading + self.angles
        pts = self.position[None, :] + self.ranges[:, None] * np.stack(
            [np.cos(world), np.sin(world)], axis=1
        )
        if hits_only:
            return pts[self.hit_mask]
        return pts


# ---------------------------------------------------------------------------
# File formats

def scan_to_record(t: float, scan: RangeScan) -> dict:
    return {
        "t": float(t),
        "pose": [float(scan.position[0]), float(scan.position[1]), float(scan.heading)],
        "angles": [float(a) for a in scan.angles],
        "ranges": [float(r) for r in scan.ranges],
        "max_range": float(scan.max_range),
    }


def record_to_scan(rec: dict) -> tuple[float, RangeScan]:
    pose = rec["pose"]
    scan = RangeScan(
        position=pose[:2],
        heading=pose[2],
        angles=rec["angles"],
        ranges=rec["ranges"],
        max_range=rec["max_range"],
    )
    return float(rec["t"]), scan


def write_scan_log(fp: TextIO, scans: Iterable[tuple[float, RangeScan]]) -> None:
    """Write newline-delimited JSON scan records."""
    for t, scan in scans:
        fp.write(json.dumps(scan_to_record(t, scan)) + "\n")


def read_scan_log(fp: TextIO) -> list[tuple[float, RangeScan]]:
    """Read newline-delimited JSON scan records; blank lines are skipped."""
    out = []
    for line in fp:
        line = line.strip()
        if not line:
            continue
        out.append(record_to_scan(json.loads(line)))
    return out


def write_grid_file(fp: TextIO, occupancy: np.ndarray, grid: SampleGrid) -> None:
    """Write a binary occupancy grid.

    Format: header line ``width height resolution origin_x origin_y`` followed
    by ``height`` lines of ``width`` 0/1 characters, row y per line.
    """
    occ = np.asarray(occupancy)
    nx, ny = grid.extents
    if occ.shape != (nx, ny):
        raise ValueError(f"occupancy shape {occ.shape} does not match extents {(nx, ny)}")
    fp.write(f"{nx} {ny} {grid.resolution!r} {grid.origin[0]!r} {grid.origin[1]!r}\n")
    for j in range(ny):
        fp.write("".join("1" if occ[i, j] else "0" for i in range(nx)) + "\n")


def read_grid_file(fp: TextIO) -> tuple[np.ndarray, SampleGrid]:
    header = fp.readline().split()
    if len(header) != 5:
        raise ValueError("grid file header must be 'width height resolution origin_x origin_y'")
    nx, ny = int(header[0]), int(header[1])
    grid = SampleGrid(
        origin=(float(header[3]), float(header[4])),
        resolution=float(header[2]),
        extents=(nx, ny),
    )
    occ = np.zeros((nx, ny), dtype=np.uint8)
    for j in range(ny):
        row = fp.readline().strip()
        if len(row) != nx:
            raise ValueError(f"grid row {j} has length {len(row)}, expected {nx}")
        occ[:, j] = [1 if ch == "1" else 0 for ch in row]
    return occ, grid
