import io
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from kernelmap.geometry import (
    KernelParams,
    OutOfBoundsError,
    RangeScan,
    RobotGeometry,
    SampleGrid,
    normalize_angle,
    read_grid_file,
    read_scan_log,
    write_grid_file,
    write_scan_log,
)


@pytest.fixture
def grid():
    return SampleGrid(origin=(0.0, 0.0), resolution=0.25, extents=(8, 8))


class TestPointToCell:
    def test_simple(self, grid):
        assert grid.point_to_cell((0.6, 0.3)) == (2, 1)

    def test_origin_maps_to_zero(self, grid):
        assert grid.point_to_cell((0.0, 0.0)) == (0, 0)

    def test_hand_evaluated_floor(self, grid):
        # floor(0.999 / 0.25) = floor(3.996) = 3 on both axes
        assert grid.point_to_cell((0.999, 0.999)) == (3, 3)

    def test_out_of_bounds_raises(self, grid):
        with pytest.raises(OutOfBoundsError):
            grid.point_to_cell((5.0, 0.1))
        with pytest.raises(OutOfBoundsError):
            grid.point_to_cell((-0.1, 0.1))


class TestCellCenter:
    def test_zero_cell(self, grid):
        np.testing.assert_allclose(grid.cell_center((0, 0)), [0.125, 0.125])

    def test_direct_arithmetic(self, grid):
        np.testing.assert_allclose(grid.cell_center((2, 1)), [0.625, 0.375])

    def test_out_of_range_cell(self, grid):
        with pytest.raises(OutOfBoundsError):
            grid.cell_center((8, 0))

    def test_round_trip_all_cells(self, grid):
        for cx in range(8):
            for cy in range(8):
                assert grid.point_to_cell(grid.cell_center((cx, cy))) == (cx, cy)


class TestAngles:
    @given(st.floats(min_value=-50.0, max_value=50.0))
    def test_normalized_to_half_open_interval(self, a):
        w = normalize_angle(a)
        assert -math.pi < w <= math.pi
        # same direction
        assert math.isclose(math.cos(w), math.cos(a), abs_tol=1e-9)
        assert math.isclose(math.sin(w), math.sin(a), abs_tol=1e-9)

    def test_boundary_maps_to_pi(self):
        assert normalize_angle(math.pi) == pytest.approx(math.pi)
        assert normalize_angle(-math.pi) == pytest.approx(math.pi)


class TestValidation:
    def test_kernel_params_positive(self):
        with pytest.raises(ValueError):
            KernelParams(eta=0.0)
        with pytest.raises(ValueError):
            KernelParams(gamma=-1.0)

    def test_robot_geometry(self):
        with pytest.raises(ValueError):
            RobotGeometry(radius=-0.1)
        assert RobotGeometry(radius=0.0).radius == 0.0

    def test_grid_invariants(self):
        with pytest.raises(ValueError):
            SampleGrid(origin=(0, 0), resolution=0.0, extents=(4, 4))
        with pytest.raises(ValueError):
            SampleGrid(origin=(0, 0), resolution=0.25, extents=(0, 4))

    def test_scan_invariants(self):
        with pytest.raises(ValueError):
            RangeScan((0, 0), 0.0, [0.0, 0.1], [1.0], max_range=5.0)
        with pytest.raises(ValueError):
            RangeScan((0, 0), 0.0, [0.0], [6.0], max_range=5.0)

    def test_scan_hit_mask(self):
        scan = RangeScan((0, 0), 0.0, [0.0, 0.5], [2.0, 5.0], max_range=5.0)
        assert scan.hit_mask.tolist() == [True, False]
        assert scan.beam_endpoints().shape == (1, 2)


class TestFileFormats:
    def test_scan_log_round_trip(self):
        scans = [
            (0.0, RangeScan((1.0, 2.0), 0.3, [-0.1, 0.0, 0.1], [2.0, 3.0, 5.0], 5.0)),
            (1.0, RangeScan((1.5, 2.0), 0.4, [-0.1, 0.0, 0.1], [5.0, 5.0, 5.0], 5.0)),
        ]
        buf = io.StringIO()
        write_scan_log(buf, scans)
        buf.seek(0)
        back = read_scan_log(buf)
        assert len(back) == 2
        for (t0, s0), (t1, s1) in zip(scans, back):
            assert t0 == t1
            np.testing.assert_allclose(s0.position, s1.position)
            np.testing.assert_allclose(s0.ranges, s1.ranges)
            assert s0.max_range == s1.max_range

    def test_grid_file_round_trip(self, grid):
        occ = np.zeros((8, 8), dtype=np.uint8)
        occ[2:5, 3] = 1
        buf = io.StringIO()
        write_grid_file(buf, occ, grid)
        buf.seek(0)
        occ2, grid2 = read_grid_file(buf)
        np.testing.assert_array_equal(occ, occ2)
        assert grid2.resolution == grid.resolution
        assert grid2.extents == grid.extents

    def test_grid_file_header(self, grid):
        buf = io.StringIO()
        write_grid_file(buf, np.zeros((8, 8), dtype=np.uint8), grid)
        header = buf.getvalue().splitlines()[0].split()
        assert header[:2] == ["8", "8"]
        assert float(header[2]) == 0.25
