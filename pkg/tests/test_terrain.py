"""Tests for ASCII-grid parsing, bilinear sampling, and DSM merging."""

import numpy as np
import pytest

from hazevis import terrain
from hazevis.terrain import GridFormatError, GridSpec, HeightGrid


def write_grid_file(path, text):
    path.write_text(text)
    return path


class TestLoadGrid:
    def test_two_by_two(self, tmp_path):
        p = write_grid_file(
            tmp_path / "g.asc",
            "ncols 2\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize 10\n1 2\n3 4\n",
        )
        g = terrain.load_grid(p)
        assert g.ncols == 2 and g.nrows == 2
        assert g.cell_size == 10
        np.testing.assert_array_equal(g.heights, [[1, 2], [3, 4]])

    def test_nodata_cell_flagged(self, tmp_path):
        p = write_grid_file(
            tmp_path / "g.asc",
            "ncols 2\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize 10\n"
            "nodata_value -9999\n1 -9999\n3 4\n",
        )
        g = terrain.load_grid(p)
        assert g.nodata == -9999
        # the flagged cell poisons samples at its center
        x, y = g.cell_center(1, 0)
        assert terrain.sample_height(g, x, y) is None

    def test_cell_count_mismatch(self, tmp_path):
        p = write_grid_file(
            tmp_path / "g.asc",
            "ncols 3\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize 10\n"
            "1 2 3\n4 5 6 7 8\n",
        )
        with pytest.raises(GridFormatError, match="expected 6 cells"):
            terrain.load_grid(p)

    def test_missing_header_key(self, tmp_path):
        p = write_grid_file(
            tmp_path / "g.asc",
            "ncols 2\nnrows 2\nxllcorner 0\ncellsize 10\n1 2\n3 4\n",
        )
        with pytest.raises(GridFormatError, match="yllcorner"):
            terrain.load_grid(p)

    def test_duplicate_header_key(self, tmp_path):
        p = write_grid_file(
            tmp_path / "g.asc",
            "ncols 2\nncols 2\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize 10\n1 2\n3 4\n",
        )
        with pytest.raises(GridFormatError, match="duplicate"):
            terrain.load_grid(p)

    def test_non_numeric_cell_names_line(self, tmp_path):
        p = write_grid_file(
            tmp_path / "g.asc",
            "ncols 2\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize 10\n1 2\n3 oops\n",
        )
        with pytest.raises(GridFormatError, match=r":7:"):
            terrain.load_grid(p)

    def test_case_insensitive_headers(self, tmp_path):
        p = write_grid_file(
            tmp_path / "g.asc",
            "NCOLS 2\nNROWS 2\nXLLCORNER 5\nYLLCORNER 6\nCELLSIZE 2\n"
            "NODATA_value -1\n1 2\n3 4\n",
        )
        g = terrain.load_grid(p)
        assert (g.origin_x, g.origin_y, g.nodata) == (5, 6, -1)

    def test_save_round_trip(self, tmp_path):
        g = HeightGrid(12.5, -3.25, 7.5, -9999.0, np.array([[1.5, -9999.0], [3.25, 4.125]]))
        terrain.save_grid(g, tmp_path / "g.asc")
        back = terrain.load_grid(tmp_path / "g.asc")
        assert back.origin_x == g.origin_x and back.origin_y == g.origin_y
        assert back.cell_size == g.cell_size and back.nodata == g.nodata
        np.testing.assert_array_equal(back.heights, g.heights)


class TestSampleHeight:
    def test_cell_center_identity(self):
        rng = np.random.default_rng(7)
        g = HeightGrid(0, 0, 10, -9999, rng.uniform(0, 50, (5, 6)))
        for row in range(g.nrows):
            for col in range(g.ncols):
                x, y = g.cell_center(col, row)
                assert terrain.sample_height(g, x, y) == g.heights[row, col]

    def test_flat_grid_interior(self):
        g = HeightGrid(0, 0, 10, -9999, np.full((4, 4), 5.0))
        rng = np.random.default_rng(3)
        for _ in range(20):
            x, y = rng.uniform(0, 40, 2)
            assert terrain.sample_height(g, x, y) == pytest.approx(5.0, abs=1e-12)

    def test_two_by_two_midpoint(self):
        # columns differ: left 0, right 10; hand-applied bilinear at the
        # extent midpoint averages all four centers: (0+10+0+10)/4 = 5
        g = HeightGrid(0, 0, 10, -9999, np.array([[0.0, 10.0], [0.0, 10.0]]))
        assert terrain.sample_height(g, 10.0, 10.0) == pytest.approx(5.0, abs=1e-12)

    def test_outside_extent_is_none(self):
        g = HeightGrid(0, 0, 10, -9999, np.zeros((3, 3)))
        assert terrain.sample_height(g, -0.01, 15.0) is None
        assert terrain.sample_height(g, 15.0, 30.01) is None

    def test_nodata_neighbor_poisons(self):
        h = np.full((3, 3), 2.0)
        h[1, 1] = -9999
        g = HeightGrid(0, 0, 10, -9999, h)
        # between center and a corner cell: center contributes -> no-data
        assert terrain.sample_height(g, 12.0, 12.0) is None
        # zero-weight neighbors do not poison: exactly on a valid center
        x, y = g.cell_center(0, 0)
        assert terrain.sample_height(g, x, y) == 2.0

    def test_continuity_across_cell_boundary(self, rng):
        g = HeightGrid(0, 0, 10, -9999, rng.uniform(0, 100, (6, 6)))
        # approach an interior cell-center line from both sides
        for eps in (1e-4, 1e-6):
            a = terrain.sample_height(g, 25.0 - eps, 17.0)
            b = terrain.sample_height(g, 25.0 + eps, 17.0)
            assert abs(a - b) < 50 * eps + 1e-9

    def test_sample_within_neighbor_bounds(self, rng):
        g = HeightGrid(0, 0, 10, -9999, rng.uniform(0, 100, (6, 6)))
        xs = rng.uniform(0, 60, 200)
        ys = rng.uniform(0, 60, 200)
        vals = terrain.sample_heights(g, xs, ys)
        assert np.all(vals >= g.heights.min() - 1e-12)
        assert np.all(vals <= g.heights.max() + 1e-12)


class TestMergeGrids:
    def _grid(self, value, origin=(0, 0), cell=10, shape=(4, 4), nodata=-9999.0):
        h = np.full(shape, float(value))
        return HeightGrid(origin[0], origin[1], cell, nodata, h)

    def test_fine_covers_everything(self):
        fine = self._grid(100)
        coarse = self._grid(50, cell=20, shape=(2, 2))
        merged = terrain.merge_grids(fine, coarse)
        np.testing.assert_allclose(merged.heights, 100.0)

    def test_fine_all_nodata_uses_coarse(self):
        fine = self._grid(-9999)
        coarse = self._grid(50, cell=20, shape=(2, 2))
        merged = terrain.merge_grids(fine, coarse)
        np.testing.assert_allclose(merged.heights, 50.0)

    def test_fine_left_half_valid(self):
        h = np.full((4, 4), 100.0)
        h[:, 2:] = -9999
        fine = HeightGrid(0, 0, 10, -9999.0, h)
        coarse = self._grid(50, cell=20, shape=(2, 2))
        merged = terrain.merge_grids(fine, coarse)
        # hand-applied rule: columns whose sample touches no-data fall back
        np.testing.assert_allclose(merged.heights[:, 0], 100.0)
        np.testing.assert_allclose(merged.heights[:, -1], 50.0)
        assert set(np.unique(merged.heights)) <= {50.0, 100.0}

    def test_merge_self_identity_at_centers(self, rng):
        h = rng.uniform(0, 30, (5, 7))
        h[2, 3] = -9999
        g = HeightGrid(4.0, -2.0, 3.0, -9999.0, h)
        merged = terrain.merge_grids(g, g, g.spec())
        np.testing.assert_array_equal(merged.heights, g.heights)

    def test_non_overlapping_extents_error(self):
        a = self._grid(1, origin=(0, 0))
        b = self._grid(2, origin=(1000, 1000))
        with pytest.raises(ValueError, match="overlap"):
            terrain.merge_grids(a, b)

    def test_default_target_is_coarse_extent_fine_resolution(self):
        fine = self._grid(7, origin=(10, 10), cell=5, shape=(4, 4))
        coarse = self._grid(3, origin=(0, 0), cell=20, shape=(3, 3))
        merged = terrain.merge_grids(fine, coarse)
        assert merged.cell_size == 5
        assert (merged.origin_x, merged.origin_y) == (0, 0)
        assert merged.ncols == 12 and merged.nrows == 12

    def test_explicit_target_spec(self):
        fine = self._grid(9)
        coarse = self._grid(4, cell=20, shape=(2, 2))
        target = GridSpec(3, 2, 5.0, 5.0, 8.0)
        merged = terrain.merge_grids(fine, coarse, target)
        assert (merged.ncols, merged.nrows) == (3, 2)
        assert merged.cell_size == 8.0
