"""Tests for ray casting, depth-map assembly, correction, and rendering."""

import numpy as np
import pytest

from hazevis import camera, depth, terrain
from hazevis.camera import Ray
from hazevis.depth import DegenerateViewpointError, DepthMap, RayCastOptions

from conftest import south_down_pose
from oracles import fine_step_cast, monotone_correct_reference


def flat_grid(h=0.0, cell=10.0, n=120):
    return terrain.HeightGrid(0, 0, cell, -9999.0, np.full((n, n), h))


def box_grid(cell=2.0, n=200, box_height=50.0):
    """Flat plane with one tall block in the middle."""
    heights = np.zeros((n, n))
    heights[80:120, 90:130] = box_height
    return terrain.HeightGrid(0, 0, cell, -9999.0, heights)


def south_ray(origin, depression):
    d = np.array([0.0, -np.cos(depression), -np.sin(depression)])
    return Ray(np.asarray(origin, float), d)


class TestCastRay:
    def test_flat_plane_30_degrees(self):
        grid = flat_grid()
        ray = south_ray((600, 1000, 100), np.radians(30))
        dist = depth.cast_ray(grid, ray, RayCastOptions(max_range=2000))
        assert dist == pytest.approx(200.0, abs=0.1)

    def test_horizontal_ray_above_terrain_misses(self):
        grid = flat_grid()
        ray = Ray(np.array([600.0, 1000.0, 100.0]), np.array([0.0, -1.0, 0.0]))
        assert depth.cast_ray(grid, ray, RayCastOptions(max_range=5000)) is None

    def test_box_wall_matches_fine_step_oracle(self):
        grid = box_grid()
        opts = RayCastOptions(max_range=1000, coarse_step=1.0, refine_iters=20)
        # aim at the wall mid-height from the south
        origin = np.array([220.0, 30.0, 25.0])
        target = np.array([220.0, 160.0, 25.0])
        d = target - origin
        d /= np.linalg.norm(d)
        ray = Ray(origin, d)
        got = depth.cast_ray(grid, ray, opts)
        oracle = fine_step_cast(grid, origin, d, step=0.01, max_range=1000)
        assert got is not None and oracle is not None
        assert abs(got - oracle) <= opts.coarse_step / 2**opts.refine_iters + 0.02

    def test_positive_and_bounded(self, rng):
        grid = flat_grid()
        opts = RayCastOptions(max_range=700)
        for _ in range(30):
            ray = south_ray((600, 1100, rng.uniform(20, 150)), rng.uniform(0.05, 1.4))
            dist = depth.cast_ray(grid, ray, opts)
            if dist is not None:
                assert 0 < dist <= opts.max_range

    def test_monotone_in_max_range(self, rng):
        grid = flat_grid()
        for _ in range(20):
            ray = south_ray((600, 1100, rng.uniform(20, 150)), rng.uniform(0.05, 1.0))
            short = depth.cast_ray(grid, ray, RayCastOptions(max_range=400))
            long = depth.cast_ray(grid, ray, RayCastOptions(max_range=4000))
            if short is not None:
                assert long == short

    def test_nodata_stretch_is_skipped(self):
        heights = np.zeros((100, 100))
        heights[:, 30:60] = -9999.0  # a no-data band across the path
        grid = terrain.HeightGrid(0, 0, 10, -9999.0, heights)
        # eastbound ray stays above the no-data band (no surface may be
        # fabricated there) and crosses the terrain east of it at x=850
        origin = np.array([250.0, 500.0, 30.0])
        direction = np.array([1.0, 0.0, -0.05])
        direction /= np.linalg.norm(direction)
        dist = depth.cast_ray(grid, Ray(origin, direction), RayCastOptions(max_range=3000))
        assert dist is not None
        hit = origin + dist * direction
        assert hit[0] >= 600.0  # first valid terrain east of the band
        assert abs(hit[2]) < 0.2


class TestBuildDepthMap:
    def test_horizontal_view_horizon_near_cy(self):
        grid = flat_grid(cell=50.0, n=400)
        pose = south_down_pose((10000, 19000, 100), 0.0, f=120.0, cx=79.5, cy=59.5)
        dm = depth.build_depth_map(grid, pose, 160, 120, RayCastOptions(max_range=16000))
        mid = dm.horizon_row[60:100]
        assert np.all(np.abs(mid - 59.5) < 6)
        # distances grow toward the horizon
        col = 80
        rows = np.nonzero(dm.valid[:, col])[0]
        dcol = dm.distances[rows, col]
        assert dcol[0] > dcol[-1]

    def test_nadir_camera_sees_height_everywhere(self):
        grid = flat_grid(cell=5.0, n=100)
        pose = camera.CameraPose(
            x0=250, y0=250, z0=80,
            omega_rot=np.pi, phi_rot=0.0, kappa_rot=0.0,
            f=100.0, cx=31.5, cy=23.5,
        )
        dm = depth.build_depth_map(grid, pose, 64, 48, RayCastOptions(max_range=1000))
        assert dm.valid.all()
        assert dm.distances[24, 32] == pytest.approx(80.0, abs=0.01)
        assert (dm.horizon_row == 0).all()

    def test_pixels_match_direct_cast(self, ground_scene, rng):
        grid, pose = ground_scene.grid, ground_scene.pose
        opts = RayCastOptions(max_range=4000)
        dm = depth.build_depth_map(grid, pose, 160, 120, opts)
        for _ in range(100):
            px = int(rng.integers(0, 160))
            py = int(rng.integers(0, 120))
            single = depth.cast_ray(grid, camera.pixel_ray(pose, px, py), opts)
            if single is None:
                assert not dm.valid[py, px]
            else:
                assert dm.distances[py, px] == single

    def test_rows_above_horizon_invalid(self, ground_scene):
        dm = depth.build_depth_map(
            ground_scene.grid, ground_scene.pose, 160, 120, RayCastOptions(max_range=4000)
        )
        for col in range(0, 160, 13):
            hr = dm.horizon_row[col]
            assert not dm.valid[:hr, col].any()
            if hr < 120:
                assert dm.valid[hr, col]

    def test_camera_below_terrain_rejected(self):
        grid = flat_grid(h=50.0)
        pose = south_down_pose((500, 900, 10), 0.3, 100.0, 31.5, 23.5)
        with pytest.raises(DegenerateViewpointError):
            depth.build_depth_map(grid, pose, 64, 48)


class TestCorrectDepthMap:
    def _column_map(self, distances, valid=None):
        d = np.asarray(distances, float)[:, None]
        v = np.ones_like(d, bool) if valid is None else np.asarray(valid, bool)[:, None]
        return DepthMap(d, v, np.array([0]))

    def test_pinned_leak_case(self):
        dm = self._column_map([100.0, 500.0, 90.0])
        out = depth.correct_depth_map(dm)
        np.testing.assert_array_equal(out.distances[:, 0], [100.0, 100.0, 90.0])

    def test_invalid_gap_bridged(self):
        dm = self._column_map([200.0, 0.0, 300.0], valid=[True, False, True])
        out = depth.correct_depth_map(dm)
        assert out.distances[0, 0] == 200.0
        assert not out.valid[1, 0]
        assert out.distances[2, 0] == 200.0

    def test_non_increasing_already_fixed_point(self):
        dm = self._column_map([500.0, 400.0, 400.0, 100.0])
        out = depth.correct_depth_map(dm)
        np.testing.assert_array_equal(out.distances, dm.distances)

    def test_random_columns_properties(self, rng):
        h, w = 60, 25
        distances = rng.uniform(10, 5000, (h, w))
        valid = rng.random((h, w)) > 0.25
        dm = DepthMap(distances, valid, np.zeros(w, int))
        out = depth.correct_depth_map(dm)
        # pointwise <= input on valid pixels
        assert np.all(out.distances[valid] <= distances[valid])
        # idempotent
        again = depth.correct_depth_map(out)
        np.testing.assert_array_equal(again.distances, out.distances)
        # per-column non-increasing over valid pixels
        for col in range(w):
            vals = out.distances[valid[:, col], col]
            assert np.all(np.diff(vals) <= 0)
        # matches the sequential reference sweep
        ref = monotone_correct_reference(distances, valid)
        np.testing.assert_array_equal(out.distances[valid], ref[valid])


class TestRenderDepthLog:
    def test_endpoints_and_log_midpoint(self):
        d_min, d_max = 60.0, 16000.0
        mid = float(np.sqrt(d_min * d_max))
        dm = DepthMap(
            np.array([[d_min, mid, d_max]]),
            np.ones((1, 3), bool),
            np.zeros(3, int),
        )
        img = depth.render_depth_log(dm, d_min, d_max)
        np.testing.assert_allclose(img.pixels[0, 0], depth.ramp_color(0.0), atol=1e-9)
        np.testing.assert_allclose(img.pixels[0, 1], depth.ramp_color(0.5), atol=1e-9)
        np.testing.assert_allclose(img.pixels[0, 2], depth.ramp_color(1.0), atol=1e-9)

    def test_ramp_monotone(self):
        pos = np.linspace(0, 1, 101)
        colors = depth.ramp_color(pos)
        # position along the ramp is strictly increasing in hue order:
        # consecutive colors never repeat and each channel is piecewise monotone
        assert not np.any(np.all(np.diff(colors, axis=0) == 0, axis=1))

    def test_sky_pixels_use_reserved_color(self):
        dm = DepthMap(
            np.array([[100.0, np.nan]]),
            np.array([[True, False]]),
            np.zeros(2, int),
        )
        img = depth.render_depth_log(dm, 60, 16000)
        np.testing.assert_allclose(img.pixels[0, 1], depth.SKY_COLOR)

    def test_out_of_range_clamped(self):
        dm = DepthMap(
            np.array([[1.0, 99999.0]]),
            np.ones((1, 2), bool),
            np.zeros(2, int),
        )
        img = depth.render_depth_log(dm, 60, 16000)
        np.testing.assert_allclose(img.pixels[0, 0], depth.ramp_color(0.0), atol=1e-12)
        np.testing.assert_allclose(img.pixels[0, 1], depth.ramp_color(1.0), atol=1e-12)

    def test_bad_range_rejected(self):
        dm = DepthMap(np.ones((1, 1)), np.ones((1, 1), bool), np.zeros(1, int))
        with pytest.raises(ValueError):
            depth.render_depth_log(dm, 100.0, 50.0)
