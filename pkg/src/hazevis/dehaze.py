"""Single-image transmission estimation via the dark channel prior.

The per-pixel atmospheric transmission is recovered from one hazy frame:
a windowed channel minimum (dark channel) normalized by the atmospheric
light gives a coarse transmission map, which a color-guided filter then
sharpens along the image's own edges.

All window operations clip at the image border; no padding values are
invented.  Everything here is pure and deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .pixmap import RgbImage, ScalarMap


@dataclass(frozen=True)
class AtmosphericLight:
    """Global airlight color; strictly positive so normalization is safe."""

    a_r: float
    a_g: float
    a_b: float

    def __post_init__(self):
        for c in (self.a_r, self.a_g, self.a_b):
            if not 0.0 < c <= 1.0:
                raise ValueError(f"airlight component {c} outside (0, 1]")

    def as_array(self) -> np.ndarray:
        return np.array([self.a_r, self.a_g, self.a_b], dtype=np.float64)


@dataclass
class DehazeParams:
    """Tuning knobs for the transmission estimator.

    patch_radius 7 gives the customary 15x15 dark-channel window; omega
    keeps a trace of haze on distant objects; guided_radius/guided_eps
    drive the refinement filter; bright_fraction selects the candidate
    pool for the airlight estimate.
    """

    patch_radius: int = 7
    omega: float = 0.95
    guided_radius: int = 30
    guided_eps: float = 1e-4
    bright_fraction: float = 0.001

    def __post_init__(self):
        if self.patch_radius < 0:
            raise ValueError("patch_radius must be >= 0")
        if not 0.0 < self.omega <= 1.0:
            raise ValueError("omega must lie in (0, 1]")
        if not self.guided_eps > 0:
            raise ValueError("guided_eps must be positive")
        if not 0.0 < self.bright_fraction <= 1.0:
            raise ValueError("bright_fraction must lie in (0, 1]")


_A_FLOOR = 0.05  # per-channel airlight floor; keeps the normalization well-posed


# ---------------------------------------------------------------------------
# Window primitives (border-clipped)
# ---------------------------------------------------------------------------


def _window_min(arr: np.ndarray, radius: int) -> np.ndarray:
    """Minimum over the (2r+1)^2 window around each pixel, clipped at borders.

    Separable: a sliding min along rows then along columns.  Exact (mins
    carry no rounding), and windows never read outside the image.
    """
    if radius <= 0:
        return arr.copy()

    def axis_min(a: np.ndarray, axis: int) -> np.ndarray:
        out = a.copy()
        for shift in range(1, radius + 1):
            src = [slice(None)] * a.ndim
            dst = [slice(None)] * a.ndim
            src[axis] = slice(shift, None)
            dst[axis] = slice(None, -shift)
            np.minimum(out[tuple(dst)], a[tuple(src)], out=out[tuple(dst)])
            src[axis] = slice(None, -shift)
            dst[axis] = slice(shift, None)
            np.minimum(out[tuple(dst)], a[tuple(src)], out=out[tuple(dst)])
        return out

    return axis_min(axis_min(arr, 0), 1)


def _box_mean(arr: np.ndarray, radius: int) -> np.ndarray:
    """Mean over the border-clipped (2r+1)^2 window, via integral images."""
    h, w = arr.shape
    integral = np.zeros((h + 1, w + 1), dtype=np.float64)
    np.cumsum(np.cumsum(arr, axis=0), axis=1, out=integral[1:, 1:])
    y = np.arange(h)
    x = np.arange(w)
    y0 = np.clip(y - radius, 0, h)
    y1 = np.clip(y + radius + 1, 0, h)
    x0 = np.clip(x - radius, 0, w)
    x1 = np.clip(x + radius + 1, 0, w)
    total = (
        integral[np.ix_(y1, x1)]
        - integral[np.ix_(y0, x1)]
        - integral[np.ix_(y1, x0)]
        + integral[np.ix_(y0, x0)]
    )
    count = np.outer(y1 - y0, x1 - x0)
    return total / count


# ---------------------------------------------------------------------------
# Dark channel and atmospheric light
# ---------------------------------------------------------------------------


def dark_channel(img: RgbImage, patch_radius: int) -> ScalarMap:
    """Windowed minimum over both the channel axis and the spatial patch."""
    if patch_radius < 0:
        raise ValueError("patch_radius must be >= 0")
    per_pixel = img.pixels.min(axis=2)
    return ScalarMap(_window_min(per_pixel, patch_radius))


def estimate_atmospheric_light(
    img: RgbImage, dark: ScalarMap, bright_fraction: float = 0.001
) -> AtmosphericLight:
    """Airlight from the brightest dark-channel pixels.

    Candidates are the ceil(bright_fraction * N) pixels with the largest
    dark-channel value; among them the pixel with the largest RGB sum wins
    (ties resolved by row-major order).  Components are floored at 0.05 so
    the downstream division stays well-posed on pathological frames.
    """
    if not 0.0 < bright_fraction <= 1.0:
        raise ValueError("bright_fraction must lie in (0, 1]")
    if (dark.height, dark.width) != (img.height, img.width):
        raise ValueError("dark channel dimensions do not match the image")

    flat_dark = dark.values.ravel()
    n_candidates = int(np.ceil(bright_fraction * flat_dark.size))
    order = np.argsort(-flat_dark, kind="stable")[:n_candidates]

    rgb = img.pixels.reshape(-1, 3)[order]
    sums = rgb.sum(axis=1)
    best_sum = sums.max()
    winner = order[sums == best_sum].min()  # row-major tie break

    a = np.maximum(img.pixels.reshape(-1, 3)[winner], _A_FLOOR)
    return AtmosphericLight(float(a[0]), float(a[1]), float(a[2]))


# ---------------------------------------------------------------------------
# Transmission
# ---------------------------------------------------------------------------


def estimate_transmission(
    img: RgbImage, light: AtmosphericLight, params: DehazeParams
) -> ScalarMap:
    """Coarse transmission: one minus the dark channel of the normalized image.

    The normalized quotient is clamped at 1 before the omega product, so
    pixels brighter than the airlight cannot push the estimate below
    1 - omega.  Output range is [1 - omega, 1].
    """
    normalized = (img.pixels / light.as_array()).min(axis=2)
    windowed = _window_min(normalized, params.patch_radius)
    t = 1.0 - params.omega * np.minimum(windowed, 1.0)
    return ScalarMap(t)


def guided_filter(
    guide: RgbImage, inp: ScalarMap, radius: int, eps: float
) -> ScalarMap:
    """Color-guidance guided filter with border-clipped box windows.

    Per window the regularized 3x3 covariance system of the guide is
    solved for the local linear coefficients; each output pixel averages
    the coefficients of every window covering it.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    if (inp.height, inp.width) != (guide.height, guide.width):
        raise ValueError("guide and input dimensions do not match")

    I = guide.pixels
    p = inp.values
    h, w = p.shape

    mean_i = np.stack([_box_mean(I[:, :, c], radius) for c in range(3)], axis=2)
    mean_p = _box_mean(p, radius)
    mean_ip = np.stack(
        [_box_mean(I[:, :, c] * p, radius) for c in range(3)], axis=2
    )
    cov_ip = mean_ip - mean_i * mean_p[:, :, None]

    var = np.empty((h, w, 3, 3), dtype=np.float64)
    for c in range(3):
        for d in range(c, 3):
            v = _box_mean(I[:, :, c] * I[:, :, d], radius) - mean_i[:, :, c] * mean_i[:, :, d]
            var[:, :, c, d] = v
            var[:, :, d, c] = v
    var[:, :, 0, 0] += eps
    var[:, :, 1, 1] += eps
    var[:, :, 2, 2] += eps

    a = np.linalg.solve(var.reshape(-1, 3, 3), cov_ip.reshape(-1, 3, 1)).reshape(h, w, 3)
    b = mean_p - np.einsum("ijc,ijc->ij", a, mean_i)

    mean_a = np.stack([_box_mean(a[:, :, c], radius) for c in range(3)], axis=2)
    mean_b = _box_mean(b, radius)
    return ScalarMap(np.einsum("ijc,ijc->ij", mean_a, I) + mean_b)


def refine_transmission(
    img: RgbImage, coarse: ScalarMap, params: DehazeParams
) -> ScalarMap:
    """Guided-filter the coarse map with the hazy image itself as guidance."""
    refined = guided_filter(img, coarse, params.guided_radius, params.guided_eps)
    return ScalarMap(np.clip(refined.values, 0.0, 1.0))


def recover_radiance(
    img: RgbImage, light: AtmosphericLight, t: ScalarMap, t_floor: float = 0.1
) -> RgbImage:
    """Invert the haze formation model to recover the scene radiance.

    Not used by the visibility pipeline; provided for inspection of the
    dehazed frame.
    """
    if not t_floor > 0:
        raise ValueError("t_floor must be positive")
    a = light.as_array()
    denom = np.maximum(t.values, t_floor)[:, :, None]
    j = (img.pixels - a) / denom + a
    return RgbImage(np.clip(j, 0.0, 1.0))
