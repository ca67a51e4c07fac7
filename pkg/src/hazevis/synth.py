"""Synthetic scenes with known geometry for exercising the pipeline.

A scene is a height grid, a camera pose, a textured radiance image, and
the analytically known per-pixel depth.  Pushing the radiance through the
homogeneous forward haze model then yields test images whose true
transmission e^(-beta * d) is available pixel by pixel.

Scenes carry shadow-like dark texels by default: the dark channel prior
needs them, and making that precondition explicit lets tests probe both
the supported and the unsupported regime.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .camera import CameraPose, pixel_rays
from .dehaze import AtmosphericLight
from .depth import DepthMap, RayCastOptions, _cast_ray_batch
from .pixmap import RgbImage
from .terrain import HeightGrid, sample_height


@dataclass(frozen=True)
class Atmosphere:
    """Homogeneous scattering medium."""

    beta: float  # 1/m
    airlight: AtmosphericLight

    def __post_init__(self):
        if self.beta < 0:
            raise ValueError("beta must be >= 0")


@dataclass(frozen=True)
class Box:
    """Axis-aligned block on the terrain: footprint corner, size, height."""

    x: float
    y: float
    w: float
    d: float
    height: float


@dataclass
class SceneSpec:
    """Recipe for a synthetic scene.

    terrain: "flat" (constant flat_height), "ramp" (height grows with y at
    ramp_slope), or "boxes" (blocks on a flat_height plane).  The texture
    is either a world-space checkerboard or seeded per-pixel noise.
    """

    terrain: str = "flat"
    flat_height: float = 0.0
    ramp_slope: float = 0.0
    boxes: tuple[Box, ...] = ()
    ncols: int = 64
    nrows: int = 64
    cell_size: float = 10.0
    origin_x: float = 0.0
    origin_y: float = 0.0
    pose: CameraPose | None = None
    width: int = 64
    height: int = 48
    texture: str = "checker"
    checker_period: float = 20.0
    checker_colors: tuple[tuple[float, float, float], tuple[float, float, float]] = (
        (0.9, 0.9, 0.9),
        (0.02, 0.02, 0.02),
    )
    seed: int = 0
    ensure_dark_pixels: bool = True

    def __post_init__(self):
        if self.terrain not in ("flat", "ramp", "boxes"):
            raise ValueError(f"unknown terrain kind {self.terrain!r}")
        if self.texture not in ("checker", "random"):
            raise ValueError(f"unknown texture kind {self.texture!r}")
        colors = np.asarray(self.checker_colors, dtype=np.float64)
        if colors.min() < 0.0 or colors.max() > 1.0:
            raise ValueError("texture colors must lie in [0, 1]")
        if (
            self.ensure_dark_pixels
            and self.texture == "checker"
            and colors.min(axis=1).min() > 0.1
        ):
            raise ValueError(
                "ensure_dark_pixels requires a texture color with a channel <= 0.1"
            )


@dataclass
class SceneAssets:
    radiance: RgbImage
    grid: HeightGrid
    pose: CameraPose
    true_depth: DepthMap


# ---------------------------------------------------------------------------
# Forward haze model
# ---------------------------------------------------------------------------


def transmission_from_depth(depth: DepthMap, beta: float) -> np.ndarray:
    """t = e^(-beta*d); sky pixels sit at infinite depth, so t=0 when beta>0.

    At beta == 0 the medium is absent and t is 1 everywhere, sky included.
    """
    if beta == 0.0:
        return np.ones(depth.distances.shape, dtype=np.float64)
    t = np.where(depth.valid, np.exp(-beta * np.where(depth.valid, depth.distances, 0.0)), 0.0)
    return t


def apply_haze(radiance: RgbImage, depth: DepthMap, atm: Atmosphere) -> RgbImage:
    """Composite scene radiance with airlight per the attenuation model."""
    if (depth.height, depth.width) != (radiance.height, radiance.width):
        raise ValueError("depth and radiance dimensions do not match")
    t = transmission_from_depth(depth, atm.beta)[:, :, None]
    a = atm.airlight.as_array()
    hazy = radiance.pixels * t + a * (1.0 - t)
    return RgbImage(np.clip(hazy, 0.0, 1.0))


# ---------------------------------------------------------------------------
# Scene construction
# ---------------------------------------------------------------------------


def _terrain_heights(spec: SceneSpec) -> np.ndarray:
    rows = np.arange(spec.nrows)  # row 0 = north
    cols = np.arange(spec.ncols)
    y = spec.origin_y + (spec.nrows - rows - 0.5) * spec.cell_size
    x = spec.origin_x + (cols + 0.5) * spec.cell_size
    xg, yg = np.meshgrid(x, y)

    if spec.terrain == "ramp":
        h = spec.flat_height + spec.ramp_slope * (yg - spec.origin_y)
    else:
        h = np.full(xg.shape, spec.flat_height, dtype=np.float64)
    if spec.terrain == "boxes":
        for box in spec.boxes:
            inside = (
                (xg >= box.x)
                & (xg < box.x + box.w)
                & (yg >= box.y)
                & (yg < box.y + box.d)
            )
            h = np.where(inside, spec.flat_height + box.height, h)
    return h


def _analytic_depth(spec: SceneSpec, grid: HeightGrid, pose: CameraPose) -> DepthMap:
    """Closed-form ray/terrain intersection for flat and ramp terrains."""
    cols, rows = np.meshgrid(np.arange(spec.width), np.arange(spec.height))
    dirs = pixel_rays(pose, cols.ravel().astype(np.float64), rows.ravel().astype(np.float64))
    o = pose.center

    if spec.terrain == "flat":
        # o_z + t*d_z = h
        denom = dirs[:, 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            t = (spec.flat_height - o[2]) / denom
    else:  # ramp: o_z + t*d_z = h0 + s*(o_y + t*d_y - origin_y)
        s = spec.ramp_slope
        denom = dirs[:, 2] - s * dirs[:, 1]
        numer = spec.flat_height + s * (o[1] - spec.origin_y) - o[2]
        with np.errstate(divide="ignore", invalid="ignore"):
            t = numer / denom

    hit = np.isfinite(t) & (t > 0)
    px = o[0] + t * dirs[:, 0]
    py = o[1] + t * dirs[:, 1]
    xmin, ymin, xmax, ymax = grid.extent
    hit &= (px >= xmin) & (px <= xmax) & (py >= ymin) & (py <= ymax)

    distances = np.where(hit, t, np.nan).reshape(spec.height, spec.width)
    valid = hit.reshape(spec.height, spec.width)
    any_hit = valid.any(axis=0)
    horizon = np.where(any_hit, np.argmax(valid, axis=0), spec.height)
    return DepthMap(distances=distances, valid=valid, horizon_row=horizon)


def _cast_depth(spec: SceneSpec, grid: HeightGrid, pose: CameraPose) -> DepthMap:
    """Fine-step cast for terrains without a closed form (boxes)."""
    cols, rows = np.meshgrid(np.arange(spec.width), np.arange(spec.height))
    dirs = pixel_rays(pose, cols.ravel().astype(np.float64), rows.ravel().astype(np.float64))
    origins = np.broadcast_to(pose.center, dirs.shape)
    opts = RayCastOptions(
        max_range=16000.0, coarse_step=spec.cell_size / 8.0, refine_iters=30
    )
    dist, found = _cast_ray_batch(grid, origins, dirs, opts)
    distances = dist.reshape(spec.height, spec.width)
    valid = found.reshape(spec.height, spec.width)
    any_hit = valid.any(axis=0)
    horizon = np.where(any_hit, np.argmax(valid, axis=0), spec.height)
    return DepthMap(distances=distances, valid=valid, horizon_row=horizon)


def _texture_colors(spec: SceneSpec, hit_x: np.ndarray, hit_y: np.ndarray) -> np.ndarray:
    """Color of the terrain surface at world points, shape (N, 3)."""
    if spec.texture == "checker":
        cells = np.floor(hit_x / spec.checker_period) + np.floor(
            hit_y / spec.checker_period
        )
        parity = (cells.astype(np.int64) % 2).astype(bool)
        colors = np.asarray(spec.checker_colors, dtype=np.float64)
        return np.where(parity[:, None], colors[1], colors[0])
    rng = np.random.default_rng(spec.seed)
    return rng.random((hit_x.size, 3))


def make_test_scene(spec: SceneSpec) -> SceneAssets:
    """Build grid, pose, radiance, and ground-truth depth for a SceneSpec."""
    if spec.pose is None:
        raise ValueError("SceneSpec.pose is required")
    grid = HeightGrid(
        origin_x=spec.origin_x,
        origin_y=spec.origin_y,
        cell_size=spec.cell_size,
        nodata=-9999.0,
        heights=_terrain_heights(spec),
    )
    pose = spec.pose

    ground = sample_height(grid, pose.x0, pose.y0)
    if ground is not None and pose.z0 <= ground:
        raise ValueError("camera placed inside the terrain")

    if spec.terrain in ("flat", "ramp"):
        true_depth = _analytic_depth(spec, grid, pose)
    else:
        true_depth = _cast_depth(spec, grid, pose)

    cols, rows = np.meshgrid(np.arange(spec.width), np.arange(spec.height))
    dirs = pixel_rays(pose, cols.ravel().astype(np.float64), rows.ravel().astype(np.float64))
    t = np.where(true_depth.valid.ravel(), true_depth.distances.ravel(), 0.0)
    hit_x = pose.x0 + t * dirs[:, 0]
    hit_y = pose.y0 + t * dirs[:, 1]

    texels = _texture_colors(spec, hit_x, hit_y)
    pixels = np.where(true_depth.valid.ravel()[:, None], texels, 0.0)
    radiance = RgbImage(pixels.reshape(spec.height, spec.width, 3))
    return SceneAssets(radiance=radiance, grid=grid, pose=pose, true_depth=true_depth)
