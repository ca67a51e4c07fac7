"""Pixel-map containers and image I/O shared by all pipeline stages.

Conventions:
    * intensities are stored as float64 in [0, 1], pixel (0, 0) is the
      top-left corner, rows grow downward
    * PNG read/write goes through OpenCV (8-bit and 16-bit, gray or RGB)
    * scalar maps persist as PFM (32-bit float, little-endian, scale -1.0,
      rows stored bottom-up) or as affinely quantized 8/16-bit PNG
"""

from __future__ import annotations

from dataclasses import dataclass

import cv2
import numpy as np


class PixmapError(ValueError):
    """Unsupported or corrupt image data."""


@dataclass
class RgbImage:
    """Float RGB image, channel values normalized to [0, 1]."""

    pixels: np.ndarray  # (H, W, 3) float64

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels, dtype=np.float64)
        if self.pixels.ndim != 3 or self.pixels.shape[2] != 3:
            raise PixmapError(f"expected (H, W, 3) array, got {self.pixels.shape}")
        if self.pixels.shape[0] == 0 or self.pixels.shape[1] == 0:
            raise PixmapError("image must contain at least one pixel")
        if self.pixels.min() < 0.0 or self.pixels.max() > 1.0:
            raise PixmapError("intensities must lie in [0, 1]")

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]


@dataclass
class ScalarMap:
    """Single-channel float map with an optional per-pixel validity mask.

    ``valid is None`` means every pixel carries a value.  Invalid pixels
    hold an unspecified number and must be ignored by consumers.
    """

    values: np.ndarray  # (H, W) float64
    valid: np.ndarray | None = None  # (H, W) bool

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise PixmapError(f"expected (H, W) array, got {self.values.shape}")
        if self.valid is not None:
            self.valid = np.asarray(self.valid, dtype=bool)
            if self.valid.shape != self.values.shape:
                raise PixmapError("validity mask shape does not match values")

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]

    def valid_mask(self) -> np.ndarray:
        """Validity as a dense bool array (all-true when no mask is set)."""
        if self.valid is None:
            return np.ones(self.values.shape, dtype=bool)
        return self.valid


@dataclass
class BitMask:
    """Per-pixel boolean mask."""

    mask: np.ndarray  # (H, W) bool

    def __post_init__(self):
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.mask.ndim != 2:
            raise PixmapError(f"expected (H, W) array, got {self.mask.shape}")

    @property
    def width(self) -> int:
        return self.mask.shape[1]

    @property
    def height(self) -> int:
        return self.mask.shape[0]


# ---------------------------------------------------------------------------
# PNG I/O
# ---------------------------------------------------------------------------


def load_image(path) -> RgbImage:
    """Load an 8-bit or 16-bit RGB/grayscale PNG as a normalized RgbImage.

    Channels are scaled to [0, 1] by dividing by the bit-depth maximum;
    grayscale input is replicated to three channels.
    """
    raw = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if raw is None:
        raise PixmapError(f"cannot read image: {path}")
    if raw.dtype == np.uint8:
        maxval = 255.0
    elif raw.dtype == np.uint16:
        maxval = 65535.0
    else:
        raise PixmapError(f"unsupported bit depth {raw.dtype} in {path}")
    if raw.ndim == 2:
        rgb = np.repeat(raw[:, :, None], 3, axis=2)
    elif raw.ndim == 3 and raw.shape[2] == 3:
        rgb = raw[:, :, ::-1]  # BGR -> RGB
    elif raw.ndim == 3 and raw.shape[2] == 4:
        rgb = raw[:, :, 2::-1]  # drop alpha
    else:
        raise PixmapError(f"unsupported color layout {raw.shape} in {path}")
    return RgbImage(rgb.astype(np.float64) / maxval)


def save_image(img: RgbImage, path, bit_depth: int = 8) -> None:
    """Write an RgbImage as an 8-bit or 16-bit RGB PNG."""
    if bit_depth == 8:
        maxval, dtype = 255.0, np.uint8
    elif bit_depth == 16:
        maxval, dtype = 65535.0, np.uint16
    else:
        raise PixmapError(f"unsupported bit depth {bit_depth}")
    quant = np.rint(np.clip(img.pixels, 0.0, 1.0) * maxval).astype(dtype)
    ok = cv2.imwrite(str(path), quant[:, :, ::-1])
    if not ok:
        raise OSError(f"cannot write image: {path}")


# ---------------------------------------------------------------------------
# Scalar-map persistence
# ---------------------------------------------------------------------------


def save_scalar_map(
    smap: ScalarMap,
    path,
    encoding: str = "pfm",
    vmin: float | None = None,
    vmax: float | None = None,
) -> None:
    """Persist a ScalarMap.

    encoding:
        "pfm"   -- raw 32-bit floats, lossless; invalid pixels stored as 0
        "png16" -- clamp to [vmin, vmax], affine map to 0..65535
        "png8"  -- clamp to [vmin, vmax], affine map to 0..255

    PNG encodings store invalid pixels as 0.
    """
    if encoding == "pfm":
        data = np.where(smap.valid_mask(), smap.values, 0.0)
        write_pfm(path, data.astype(np.float32))
        return
    if encoding not in ("png16", "png8"):
        raise PixmapError(f"unknown encoding {encoding!r}")
    if vmin is None or vmax is None or not vmin < vmax:
        raise PixmapError("png encodings require vmin < vmax")
    maxint = 65535 if encoding == "png16" else 255
    dtype = np.uint16 if encoding == "png16" else np.uint8
    clamped = np.clip(smap.values, vmin, vmax)
    quant = np.rint((clamped - vmin) / (vmax - vmin) * maxint)
    quant = np.where(smap.valid_mask(), quant, 0).astype(dtype)
    ok = cv2.imwrite(str(path), quant)
    if not ok:
        raise OSError(f"cannot write image: {path}")


def load_scalar_map(path) -> ScalarMap:
    """Read a single-channel PFM back into a ScalarMap (all pixels valid)."""
    return ScalarMap(read_pfm(path).astype(np.float64))


# ---------------------------------------------------------------------------
# PFM (portable float map)
# ---------------------------------------------------------------------------


def write_pfm(path, data: np.ndarray) -> None:
    """Write a single-channel float32 PFM (little-endian, bottom-up rows)."""
    arr = np.asarray(data, dtype="<f4")
    if arr.ndim != 2:
        raise PixmapError("PFM writer expects a 2-D array")
    height, width = arr.shape
    with open(path, "wb") as fh:
        fh.write(b"Pf\n")
        fh.write(f"{width} {height}\n".encode("ascii"))
        fh.write(b"-1.0\n")
        fh.write(np.flipud(arr).tobytes())


def read_pfm(path) -> np.ndarray:
    """Read a single-channel PFM into a float32 array (top-down rows)."""
    with open(path, "rb") as fh:
        tag = fh.readline().strip()
        if tag != b"Pf":
            raise PixmapError(f"not a single-channel PFM: {path}")
        dims = fh.readline().split()
        if len(dims) != 2:
            raise PixmapError(f"malformed PFM dimensions in {path}")
        width, height = int(dims[0]), int(dims[1])
        scale = float(fh.readline())
        endian = "<f4" if scale < 0 else ">f4"
        buf = fh.read(width * height * 4)
    if len(buf) != width * height * 4:
        raise PixmapError(f"truncated PFM payload in {path}")
    arr = np.frombuffer(buf, dtype=endian).reshape(height, width)
    return np.flipud(arr).astype(np.float32)
