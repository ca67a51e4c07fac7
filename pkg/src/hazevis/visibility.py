"""Visibility distance from a transmission map and a depth map.

Pixels whose transmission clears the threshold are "visible"; the
distances of those that also carry a valid depth feed a histogram whose
percentile (or plain maximum) is the reported visibility.  Sky pixels
never contribute: visibility must be evidenced by an actual surface.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .depth import DepthMap
from .pixmap import BitMask, RgbImage, ScalarMap


class NoVisibleSurfaceError(RuntimeError):
    """No pixel is both above the transmission threshold and on terrain."""


@dataclass
class VisibilityParams:
    threshold: float = 0.75
    method: str = "percentile"  # "percentile" | "max"
    percentile_rank: float = 99.0
    bin_width: float = 10.0

    def __post_init__(self):
        if not 0.0 < self.threshold < 1.0:
            raise ValueError("threshold must lie in (0, 1)")
        if self.method not in ("percentile", "max"):
            raise ValueError(f"unknown method {self.method!r}")
        if not 0.0 < self.percentile_rank <= 100.0:
            raise ValueError("percentile_rank must lie in (0, 100]")
        if not self.bin_width > 0:
            raise ValueError("bin_width must be positive")


@dataclass
class VisibilityReport:
    visibility: float  # meters
    method: str
    threshold: float
    percentile_rank: float
    bin_width: float
    visible_pixel_count: int
    valid_pixel_count: int
    histogram_edges: np.ndarray  # lower bin edges, meters
    histogram_counts: np.ndarray

    def to_json(self) -> str:
        doc = {
            "visibility_m": self.visibility,
            "method": self.method,
            "threshold": self.threshold,
            "percentile_rank": self.percentile_rank,
            "bin_width_m": self.bin_width,
            "visible_pixels": self.visible_pixel_count,
            "valid_pixels": self.valid_pixel_count,
            "histogram": {
                "edges_m": [float(e) for e in self.histogram_edges],
                "counts": [int(c) for c in self.histogram_counts],
            },
        }
        return json.dumps(doc, indent=2)


def visibility_mask(t: ScalarMap, threshold: float) -> BitMask:
    """Pixels whose transmission meets or exceeds the threshold."""
    return BitMask(t.values >= threshold)


def haze_border(mask: BitMask) -> BitMask:
    """True pixels with at least one false 4-neighbor.

    The image border counts as false, so a fully visible frame still
    produces its outer one-pixel rim.
    """
    m = mask.mask
    padded = np.zeros((m.shape[0] + 2, m.shape[1] + 2), dtype=bool)
    padded[1:-1, 1:-1] = m
    has_false_neighbor = ~(
        padded[:-2, 1:-1] & padded[2:, 1:-1] & padded[1:-1, :-2] & padded[1:-1, 2:]
    )
    return BitMask(m & has_false_neighbor)


def overlay_border(img: RgbImage, border: BitMask) -> RgbImage:
    """Recolor border pixels pure red on a copy of the input image."""
    out = img.pixels.copy()
    out[border.mask] = (1.0, 0.0, 0.0)
    return RgbImage(out)


def estimate_visibility(
    depth: DepthMap, mask: BitMask, params: VisibilityParams
) -> VisibilityReport:
    """Distance statistic over visible surface pixels.

    method "max" reports the largest qualifying depth.  method
    "percentile" bins the depths at bin_width and reports the lower edge
    of the first bin where the cumulative fraction reaches
    percentile_rank/100, which never exceeds the maximum observed depth.
    """
    if (depth.height, depth.width) != (mask.height, mask.width):
        raise ValueError("depth and mask dimensions do not match")

    qualifying = depth.valid & mask.mask
    depths = depth.distances[qualifying]
    valid_count = int(depth.valid.sum())
    visible_count = int(qualifying.sum())
    if visible_count == 0:
        raise NoVisibleSurfaceError(
            "no pixel is both above the transmission threshold and on valid terrain"
        )

    bw = params.bin_width
    nbins = int(np.floor(depths.max() / bw)) + 1
    edges = np.arange(nbins + 1) * bw
    counts, _ = np.histogram(depths, bins=edges)

    if params.method == "max":
        vis = float(depths.max())
    else:
        cum = np.cumsum(counts) / visible_count
        idx = int(np.argmax(cum >= params.percentile_rank / 100.0))
        vis = float(edges[idx])

    return VisibilityReport(
        visibility=vis,
        method=params.method,
        threshold=params.threshold,
        percentile_rank=params.percentile_rank,
        bin_width=bw,
        visible_pixel_count=visible_count,
        valid_pixel_count=valid_count,
        histogram_edges=edges[:-1].astype(np.float64),
        histogram_counts=counts.astype(np.int64),
    )
