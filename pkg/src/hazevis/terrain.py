"""2.5D digital surface models: ASCII-grid ingestion, sampling, and merging.

Grids live in a local planar coordinate frame in meters.  Cell values are
heights at cell centers; queries between centers are bilinearly
interpolated.  Row 0 of the height array is the northernmost row, matching
the file order of ESRI-style ASCII grids.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

_CENTER_SNAP = 1e-9  # fractional offsets this close to a cell center collapse onto it


class GridFormatError(ValueError):
    """Malformed ASCII grid file."""


@dataclass(frozen=True)
class GridSpec:
    """Extent and resolution of a target grid (lower-left corner origin)."""

    ncols: int
    nrows: int
    origin_x: float
    origin_y: float
    cell_size: float


@dataclass(frozen=True)
class HeightGrid:
    """Georeferenced elevation raster with a no-data sentinel.

    heights is (nrows, ncols), row 0 = northernmost row.  origin_x/origin_y
    is the lower-left corner of the extent; the extent spans
    (ncols * cell_size) x (nrows * cell_size) meters.
    """

    origin_x: float
    origin_y: float
    cell_size: float
    nodata: float
    heights: np.ndarray

    def __post_init__(self):
        h = np.asarray(self.heights, dtype=np.float64)
        object.__setattr__(self, "heights", h)
        if h.ndim != 2 or h.shape[0] < 2 or h.shape[1] < 2:
            raise ValueError("grid needs at least 2x2 cells")
        if not self.cell_size > 0:
            raise ValueError("cell_size must be positive")
        finite = h[h != self.nodata]
        if finite.size and not np.all(np.isfinite(finite)):
            raise ValueError("non-sentinel heights must be finite")

    @property
    def nrows(self) -> int:
        return self.heights.shape[0]

    @property
    def ncols(self) -> int:
        return self.heights.shape[1]

    @property
    def extent(self) -> tuple[float, float, float, float]:
        """(xmin, ymin, xmax, ymax) of the covered rectangle."""
        return (
            self.origin_x,
            self.origin_y,
            self.origin_x + self.ncols * self.cell_size,
            self.origin_y + self.nrows * self.cell_size,
        )

    @cached_property
    def _values(self) -> np.ndarray:
        """Heights with the no-data sentinel replaced by NaN (south-up rows).

        Row 0 of this array is the *southernmost* row so that the row index
        grows with y, which keeps the sampling math sign-free.
        """
        v = np.flipud(self.heights).copy()
        v[v == self.nodata] = np.nan
        return v

    @cached_property
    def max_height(self) -> float:
        v = self._values
        return float(np.nanmax(v)) if np.any(np.isfinite(v)) else float("-inf")

    def spec(self) -> GridSpec:
        return GridSpec(self.ncols, self.nrows, self.origin_x, self.origin_y, self.cell_size)

    def cell_center(self, col: int, row: int) -> tuple[float, float]:
        """World (x, y) of the center of cell (col, row); row 0 = north."""
        x = self.origin_x + (col + 0.5) * self.cell_size
        y = self.origin_y + (self.nrows - row - 0.5) * self.cell_size
        return x, y


# ---------------------------------------------------------------------------
# ASCII-grid I/O
# ---------------------------------------------------------------------------

_HEADER_KEYS = ("ncols", "nrows", "xllcorner", "yllcorner", "cellsize")


def load_grid(path) -> HeightGrid:
    """Parse an ESRI-style ASCII grid.

    Header lines: ncols, nrows, xllcorner, yllcorner, cellsize, and an
    optional nodata_value (keys case-insensitive, any order), followed by
    nrows lines of ncols numbers, first row = northernmost.
    """
    with open(path, "r", encoding="ascii") as fh:
        lines = fh.read().splitlines()

    header: dict[str, float] = {}
    body_start = 0
    for lineno, line in enumerate(lines, start=1):
        parts = line.split()
        if len(parts) == 2 and parts[0].lower() in (*_HEADER_KEYS, "nodata_value"):
            key = parts[0].lower()
            if key in header:
                raise GridFormatError(f"{path}:{lineno}: duplicate header key {key!r}")
            try:
                header[key] = float(parts[1])
            except ValueError:
                raise GridFormatError(
                    f"{path}:{lineno}: non-numeric header value {parts[1]!r}"
                ) from None
            body_start = lineno
        else:
            break

    missing = [k for k in _HEADER_KEYS if k not in header]
    if missing:
        raise GridFormatError(f"{path}: missing header keys {missing}")

    ncols = int(header["ncols"])
    nrows = int(header["nrows"])
    nodata = header.get("nodata_value", -9999.0)

    cells: list[float] = []
    for lineno, line in enumerate(lines[body_start:], start=body_start + 1):
        for tok in line.split():
            try:
                cells.append(float(tok))
            except ValueError:
                raise GridFormatError(
                    f"{path}:{lineno}: non-numeric cell value {tok!r}"
                ) from None
    if len(cells) != ncols * nrows:
        raise GridFormatError(
            f"{path}: expected {ncols * nrows} cells ({ncols}x{nrows}), got {len(cells)}"
        )

    heights = np.array(cells, dtype=np.float64).reshape(nrows, ncols)
    return HeightGrid(
        origin_x=header["xllcorner"],
        origin_y=header["yllcorner"],
        cell_size=header["cellsize"],
        nodata=nodata,
        heights=heights,
    )


def save_grid(grid: HeightGrid, path) -> None:
    """Write a HeightGrid in the same ASCII format load_grid reads."""
    with open(path, "w", encoding="ascii") as fh:
        fh.write(f"ncols {grid.ncols}\n")
        fh.write(f"nrows {grid.nrows}\n")
        fh.write(f"xllcorner {float(grid.origin_x)!r}\n")
        fh.write(f"yllcorner {float(grid.origin_y)!r}\n")
        fh.write(f"cellsize {float(grid.cell_size)!r}\n")
        fh.write(f"nodata_value {float(grid.nodata)!r}\n")
        for row in grid.heights:
            fh.write(" ".join(repr(float(v)) for v in row))
            fh.write("\n")


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------


def sample_heights(grid: HeightGrid, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Bilinear height samples at arrays of world points; NaN where no-data.

    A sample is no-data when the point lies outside the grid extent or when
    any cell that contributes with nonzero weight is no-data.  In the
    half-cell margin between the boundary and the outermost cell centers the
    edge value continues (clamped interpolation).
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    values = grid._values
    nrows, ncols = values.shape
    cs = grid.cell_size

    gx = (x - grid.origin_x) / cs - 0.5
    gy = (y - grid.origin_y) / cs - 0.5
    inside = (
        (x >= grid.origin_x)
        & (x <= grid.origin_x + ncols * cs)
        & (y >= grid.origin_y)
        & (y <= grid.origin_y + nrows * cs)
    )

    i0 = np.clip(np.floor(gx), 0, ncols - 2).astype(np.int64)
    j0 = np.clip(np.floor(gy), 0, nrows - 2).astype(np.int64)
    fx = np.clip(gx - i0, 0.0, 1.0)
    fy = np.clip(gy - j0, 0.0, 1.0)
    fx = np.where(fx < _CENTER_SNAP, 0.0, np.where(fx > 1.0 - _CENTER_SNAP, 1.0, fx))
    fy = np.where(fy < _CENTER_SNAP, 0.0, np.where(fy > 1.0 - _CENTER_SNAP, 1.0, fy))

    h00 = values[j0, i0]
    h10 = values[j0, i0 + 1]
    h01 = values[j0 + 1, i0]
    h11 = values[j0 + 1, i0 + 1]
    w00 = (1.0 - fx) * (1.0 - fy)
    w10 = fx * (1.0 - fy)
    w01 = (1.0 - fx) * fy
    w11 = fx * fy

    poisoned = (
        ((w00 > 0) & np.isnan(h00))
        | ((w10 > 0) & np.isnan(h10))
        | ((w01 > 0) & np.isnan(h01))
        | ((w11 > 0) & np.isnan(h11))
    )
    out = (
        np.where(w00 > 0, h00, 0.0) * w00
        + np.where(w10 > 0, h10, 0.0) * w10
        + np.where(w01 > 0, h01, 0.0) * w01
        + np.where(w11 > 0, h11, 0.0) * w11
    )
    return np.where(inside & ~poisoned, out, np.nan)


def sample_height(grid: HeightGrid, x: float, y: float) -> float | None:
    """Bilinear height at one world point; None outside the extent or over no-data."""
    v = float(sample_heights(grid, np.array([x]), np.array([y]))[0])
    return None if np.isnan(v) else v


# ---------------------------------------------------------------------------
# Merging
# ---------------------------------------------------------------------------


def merge_grids(
    fine: HeightGrid, coarse: HeightGrid, target: GridSpec | None = None
) -> HeightGrid:
    """Blend a fine and a coarse DSM onto one target grid.

    Each output cell takes the fine grid's bilinear sample where valid,
    falling back to the coarse grid's sample, else no-data.  The default
    target covers the coarse grid's extent at the fine grid's resolution.
    """
    fx0, fy0, fx1, fy1 = fine.extent
    cx0, cy0, cx1, cy1 = coarse.extent
    if fx1 <= cx0 or cx1 <= fx0 or fy1 <= cy0 or cy1 <= fy0:
        raise ValueError("fine and coarse extents do not overlap")

    if target is None:
        ncols = max(2, int(round((cx1 - cx0) / fine.cell_size)))
        nrows = max(2, int(round((cy1 - cy0) / fine.cell_size)))
        target = GridSpec(ncols, nrows, cx0, cy0, fine.cell_size)

    cols = np.arange(target.ncols)
    rows = np.arange(target.nrows)  # row 0 = north
    xs = target.origin_x + (cols + 0.5) * target.cell_size
    ys = target.origin_y + (target.nrows - rows - 0.5) * target.cell_size
    xg, yg = np.meshgrid(xs, ys)

    merged = sample_heights(fine, xg, yg)
    gaps = np.isnan(merged)
    if gaps.any():
        merged[gaps] = sample_heights(coarse, xg[gaps], yg[gaps])

    nodata = fine.nodata
    heights = np.where(np.isnan(merged), nodata, merged)
    return HeightGrid(
        origin_x=target.origin_x,
        origin_y=target.origin_y,
        cell_size=target.cell_size,
        nodata=nodata,
        heights=heights,
    )
