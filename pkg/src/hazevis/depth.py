"""Per-pixel distance maps from line-of-sight / DSM intersection.

Rays march outward in fixed steps; the first sign change of
(ray height - terrain height) between two consecutive valid samples is
bisected down to sub-step accuracy.  Distances are 3D slant ranges from
the projection center, the quantity that attenuates light along the path.

Columns are processed independently: the horizon of a column is the
topmost pixel whose ray strikes the terrain, and a monotone running-min
sweep below the horizon removes see-through-facade leaks by carrying
roof-edge distances down the facade.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .camera import CameraPose, Ray, pixel_rays
from .pixmap import RgbImage
from .terrain import HeightGrid, sample_height, sample_heights


class DegenerateViewpointError(ValueError):
    """Camera placed at or below the terrain surface."""


@dataclass
class RayCastOptions:
    """Marching controls.

    coarse_step defaults to half the grid cell size (None = derive from
    the grid) to avoid tunneling through single-cell spikes; max_range
    caps the march at the far end of scenes of interest.
    """

    max_range: float = 16000.0
    coarse_step: float | None = None
    refine_iters: int = 20

    def __post_init__(self):
        if not self.max_range > 0:
            raise ValueError("max_range must be positive")
        if self.coarse_step is not None and not self.coarse_step > 0:
            raise ValueError("coarse_step must be positive")

    def step_for(self, grid: HeightGrid) -> float:
        return self.coarse_step if self.coarse_step is not None else grid.cell_size / 2.0


@dataclass
class DepthMap:
    """Distances in meters; invalid pixels are sky or no-intersection.

    horizon_row[j] is the topmost valid row of column j, or the image
    height when the column never strikes terrain.
    """

    distances: np.ndarray  # (H, W) float64
    valid: np.ndarray  # (H, W) bool
    horizon_row: np.ndarray  # (W,) int

    def __post_init__(self):
        self.distances = np.asarray(self.distances, dtype=np.float64)
        self.valid = np.asarray(self.valid, dtype=bool)
        self.horizon_row = np.asarray(self.horizon_row, dtype=np.int64)

    @property
    def width(self) -> int:
        return self.distances.shape[1]

    @property
    def height(self) -> int:
        return self.distances.shape[0]


# ---------------------------------------------------------------------------
# Ray marching
# ---------------------------------------------------------------------------


def _cast_ray_batch(
    grid: HeightGrid,
    origins: np.ndarray,
    directions: np.ndarray,
    opts: RayCastOptions,
) -> tuple[np.ndarray, np.ndarray]:
    """March many rays at once; returns (distances, hit_mask).

    A crossing requires two consecutive valid terrain samples with the
    height difference changing from positive to non-positive; stretches of
    no-data terrain break the bracket (no surface there).  The bracket is
    then bisected refine_iters times.
    """
    origins = np.atleast_2d(np.asarray(origins, dtype=np.float64))
    directions = np.atleast_2d(np.asarray(directions, dtype=np.float64))
    n = origins.shape[0]
    step = opts.step_for(grid)

    xmin, ymin, xmax, ymax = grid.extent
    max_h = grid.max_height

    # Per-ray march limit: stop where the ray leaves the extent rectangle
    # (a straight line cannot re-enter a convex region).
    t_limit = np.full(n, opts.max_range, dtype=np.float64)
    for axis, lo, hi in ((0, xmin, xmax), (1, ymin, ymax)):
        o = origins[:, axis]
        d = directions[:, axis]
        with np.errstate(divide="ignore", invalid="ignore"):
            t_lo = (lo - o) / d
            t_hi = (hi - o) / d
        t_far = np.where(d != 0, np.maximum(t_lo, t_hi), np.inf)
        inside = (o >= lo) & (o <= hi)
        # Parallel rays outside the slab never enter it.
        t_far = np.where((d == 0) & ~inside, -np.inf, t_far)
        t_limit = np.minimum(t_limit, t_far)

    # Rays already above the highest terrain and not descending can't cross.
    hopeless = (origins[:, 2] > max_h) & (directions[:, 2] >= 0)
    t_limit = np.where(hopeless, -np.inf, t_limit)

    lo_t = np.zeros(n, dtype=np.float64)
    hi_t = np.zeros(n, dtype=np.float64)
    found = np.zeros(n, dtype=bool)

    prev_t = np.zeros(n, dtype=np.float64)
    prev_diff_pos = np.zeros(n, dtype=bool)  # previous sample valid with ray above terrain
    active = t_limit >= 0.0

    nsteps = int(np.ceil(opts.max_range / step))
    for k in range(nsteps + 1):
        if not active.any():
            break
        t = k * step
        idx = np.nonzero(active)[0]
        pos = origins[idx] + t * directions[idx]
        terrain = sample_heights(grid, pos[:, 0], pos[:, 1])
        diff = pos[:, 2] - terrain
        valid = np.isfinite(diff)

        crossing = valid & (diff <= 0.0) & prev_diff_pos[idx]
        if crossing.any():
            hit = idx[crossing]
            lo_t[hit] = prev_t[hit]
            hi_t[hit] = t
            found[hit] = True
            active[hit] = False

        prev_diff_pos[idx] = valid & (diff > 0.0)
        prev_t[idx] = t
        beyond = t >= np.minimum(t_limit[idx], opts.max_range)
        active[idx[beyond]] = False

    # Bisect the brackets.  An invalid midpoint sample (no-data hole inside
    # the bracket) moves the lower bound: the far endpoint is known valid.
    if found.any():
        fidx = np.nonzero(found)[0]
        f_lo = lo_t[fidx]
        f_hi = hi_t[fidx]
        f_origins = origins[fidx]
        f_dirs = directions[fidx]
        for _ in range(opts.refine_iters):
            mid = 0.5 * (f_lo + f_hi)
            pos = f_origins + mid[:, None] * f_dirs
            terrain = sample_heights(grid, pos[:, 0], pos[:, 1])
            diff = pos[:, 2] - terrain
            below = np.isfinite(diff) & (diff <= 0.0)
            f_hi = np.where(below, mid, f_hi)
            f_lo = np.where(below, f_lo, mid)
        lo_t[fidx] = f_lo
        hi_t[fidx] = f_hi

    distances = np.where(found, 0.5 * (lo_t + hi_t), np.nan)
    return distances, found


def cast_ray(grid: HeightGrid, ray: Ray, opts: RayCastOptions | None = None) -> float | None:
    """First intersection distance of one ray with the DSM, or None."""
    opts = opts or RayCastOptions()
    dist, found = _cast_ray_batch(grid, ray.origin[None, :], ray.direction[None, :], opts)
    return float(dist[0]) if found[0] else None


# ---------------------------------------------------------------------------
# Depth maps
# ---------------------------------------------------------------------------


def build_depth_map(
    grid: HeightGrid,
    pose: CameraPose,
    width: int,
    height: int,
    opts: RayCastOptions | None = None,
) -> DepthMap:
    """Cast the line of sight of every pixel and record slant distances.

    The horizon of each column is the topmost intersecting pixel; pixels
    above it are invalid (sky), as are below-horizon rays that never
    strike valid terrain.
    """
    opts = opts or RayCastOptions()
    ground = sample_height(grid, pose.x0, pose.y0)
    if ground is not None and pose.z0 <= ground:
        raise DegenerateViewpointError(
            f"camera at z={pose.z0} is at or below terrain ({ground}) at its position"
        )

    cols, rows = np.meshgrid(np.arange(width), np.arange(height))
    dirs = pixel_rays(pose, cols.ravel().astype(np.float64), rows.ravel().astype(np.float64))
    origins = np.broadcast_to(pose.center, dirs.shape)

    dist, found = _cast_ray_batch(grid, origins, dirs, opts)
    distances = dist.reshape(height, width)
    valid = found.reshape(height, width)

    any_hit = valid.any(axis=0)
    first_hit = np.argmax(valid, axis=0)
    horizon = np.where(any_hit, first_hit, height)
    return DepthMap(distances=distances, valid=valid, horizon_row=horizon)


def correct_depth_map(raw: DepthMap) -> DepthMap:
    """Enforce non-increasing distances down each column.

    Replaces every valid distance by the running minimum over the valid
    pixels above it in the same column (invalid gaps are bridged, not
    reset), which projects roof-edge distances onto the facade pixels the
    2.5D model cannot represent.
    """
    padded = np.where(raw.valid, raw.distances, np.inf)
    running = np.minimum.accumulate(padded, axis=0)
    corrected = np.where(raw.valid, running, raw.distances)
    return DepthMap(
        distances=corrected,
        valid=raw.valid.copy(),
        horizon_row=raw.horizon_row.copy(),
    )


# ---------------------------------------------------------------------------
# Rendering
# ---------------------------------------------------------------------------

# Piecewise-linear ramp, position 0 -> near, 1 -> far.  Monotone in hue:
# dark blue, cyan, green, yellow, red at equal spacing.
_RAMP_STOPS = np.array(
    [
        [0.0, 0.0, 0.5],
        [0.0, 0.75, 0.75],
        [0.0, 1.0, 0.0],
        [1.0, 1.0, 0.0],
        [1.0, 0.0, 0.0],
    ]
)
SKY_COLOR = (0.7, 0.85, 1.0)


def ramp_color(pos: np.ndarray) -> np.ndarray:
    """Map positions in [0, 1] onto the depth ramp, shape (..., 3)."""
    pos = np.clip(np.asarray(pos, dtype=np.float64), 0.0, 1.0)
    scaled = pos * (len(_RAMP_STOPS) - 1)
    idx = np.clip(scaled.astype(np.int64), 0, len(_RAMP_STOPS) - 2)
    frac = (scaled - idx)[..., None]
    return _RAMP_STOPS[idx] * (1.0 - frac) + _RAMP_STOPS[idx + 1] * frac


def render_depth_log(depth: DepthMap, d_min: float, d_max: float) -> RgbImage:
    """Color valid distances on a log scale from d_min to d_max.

    Invalid (sky) pixels get the reserved sky color.
    """
    if not 0 < d_min < d_max:
        raise ValueError("need 0 < d_min < d_max")
    safe = np.where(depth.valid, np.maximum(depth.distances, d_min), d_min)
    pos = (np.log(safe) - np.log(d_min)) / (np.log(d_max) - np.log(d_min))
    colors = ramp_color(pos)
    out = np.where(depth.valid[:, :, None], colors, np.array(SKY_COLOR))
    return RgbImage(out)
