"""Shared fixtures: synthetic cameras, terrain, and scenes."""

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from hazevis import camera, synth


def south_down_pose(position, depression, f, cx, cy) -> camera.CameraPose:
    """Level-horizon camera looking South, pitched down by `depression` rad."""
    x, y, z = position
    target = (x, y - np.cos(depression), z - np.sin(depression))
    return camera.look_at_pose(position, target, f=f, cx=cx, cy=cy)


def make_ground_scene(
    width=640,
    height=480,
    camera_height=100.0,
    top_depth=2000.0,
    checker_period=4.0,
    f=None,
    texture="checker",
    seed=0,
) -> synth.SceneAssets:
    """Flat-ground scene whose pixel depths densely span ~100..top_depth m.

    The camera sits at the north edge looking south; the top image row
    grazes the ground at top_depth, the bottom rows reach near-nadir.
    """
    if f is None:
        f = height / 2.0
    cx, cy = (width - 1) / 2.0, (height - 1) / 2.0
    depression = np.arcsin(camera_height / top_depth) + np.arctan(cy / f)
    ground_reach = top_depth  # horizontal reach is bounded by the slant range
    margin = 200.0
    half_width = ground_reach * (cx / f) + margin

    cell = 16.0
    ncols = int(np.ceil(2 * half_width / cell))
    nrows = int(np.ceil((ground_reach + 2 * margin) / cell))
    cam_x = half_width
    cam_y = nrows * cell - margin

    pose = south_down_pose((cam_x, cam_y, camera_height), depression, f, cx, cy)
    spec = synth.SceneSpec(
        terrain="flat",
        flat_height=0.0,
        ncols=ncols,
        nrows=nrows,
        cell_size=cell,
        pose=pose,
        width=width,
        height=height,
        texture=texture,
        checker_period=checker_period,
        checker_colors=((0.9, 0.9, 0.9), (0.02, 0.02, 0.02)),
        seed=seed,
    )
    return synth.make_test_scene(spec)


def synthetic_gcps(pose: camera.CameraPose, rng, n=16, noise_sigma=0.0):
    """GCPs spread through the camera's field of view at varied depths."""
    pts = []
    attempts = 0
    while len(pts) < n and attempts < 10000:
        attempts += 1
        px = rng.uniform(20, 2 * pose.cx - 20)
        py = rng.uniform(20, 2 * pose.cy - 20)
        dist = rng.uniform(150, 2500)
        ray = camera.pixel_ray(pose, px, py)
        world = ray.origin + dist * ray.direction
        obs_x, obs_y = px, py
        if noise_sigma > 0:
            obs_x += rng.normal(0, noise_sigma)
            obs_y += rng.normal(0, noise_sigma)
        pts.append(
            camera.GroundControlPoint(f"p{len(pts)}", *world, obs_x, obs_y)
        )
    return camera.GcpSet(tuple(pts))


@pytest.fixture(scope="session")
def ground_scene():
    """Small flat-ground scene shared by fast unit tests."""
    return make_ground_scene(width=160, height=120)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
