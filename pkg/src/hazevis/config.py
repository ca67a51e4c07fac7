"""Flat key=value configuration shared by every CLI command.

Keys are dotted (section.name), live in a plain text file with ``#``
comments, and every key can be overridden by a CLI flag of the same
name.  A single registry defines type, default, and help text, so the
file parser and the argument parser cannot drift apart.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any


class ConfigError(ValueError):
    """Bad key, bad value, or missing required input."""


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


@dataclass(frozen=True)
class KeySpec:
    name: str
    type: type
    default: Any
    help: str


# fmt: off
REGISTRY: tuple[KeySpec, ...] = (
    KeySpec("paths.image", str, None, "input hazy image (PNG)"),
    KeySpec("paths.dsm_fine", str, None, "fine-resolution DSM (ASCII grid)"),
    KeySpec("paths.dsm_coarse", str, None, "optional coarse fallback DSM (ASCII grid)"),
    KeySpec("paths.gcps", str, None, "ground control point file"),
    KeySpec("paths.pose", str, None, "camera pose file (written by orient)"),
    KeySpec("paths.output_dir", str, "out", "directory for generated artifacts"),

    KeySpec("dehaze.patch_radius", int, 7, "dark-channel window radius (15x15 window)"),
    KeySpec("dehaze.omega", float, 0.95, "haze retention factor in (0, 1]"),
    KeySpec("dehaze.guided_radius", int, 30, "guided filter window radius"),
    KeySpec("dehaze.guided_eps", float, 1e-4, "guided filter regularizer"),
    KeySpec("dehaze.bright_fraction", float, 0.001, "airlight candidate fraction"),

    KeySpec("ray.max_range", float, 16000.0, "maximum ray march distance (m)"),
    KeySpec("ray.coarse_step", float, 0.0, "march step in m (0 = half the grid cell)"),
    KeySpec("ray.refine_iters", int, 20, "bisection refinements per intersection"),

    KeySpec("visibility.threshold", float, 0.75, "transmission threshold for visible pixels"),
    KeySpec("visibility.method", str, "percentile", "visibility statistic: percentile or max"),
    KeySpec("visibility.percentile_rank", float, 99.0, "histogram percentile rank (0, 100]"),
    KeySpec("visibility.bin_width", float, 10.0, "depth histogram bin width (m)"),

    KeySpec("pose.x0", float, 0.0, "initial camera x (m)"),
    KeySpec("pose.y0", float, 0.0, "initial camera y (m)"),
    KeySpec("pose.z0", float, 0.0, "initial camera z (m)"),
    KeySpec("pose.omega", float, -1.5707963267948966, "initial omega (rad); default points South"),
    KeySpec("pose.phi", float, 0.0, "initial phi (rad)"),
    KeySpec("pose.kappa", float, 3.141592653589793, "initial kappa (rad); default keeps v-down upright"),
    KeySpec("pose.f", float, 1000.0, "initial focal length (px)"),
    KeySpec("pose.cx", float, None, "principal point x (px); default: image center"),
    KeySpec("pose.cy", float, None, "principal point y (px); default: image center"),

    KeySpec("flags.estimate_f", bool, True, "estimate focal length during resection"),
    KeySpec("flags.save_intermediates", bool, False, "write dark channel, coarse map, raw depth, ..."),

    KeySpec("orient.max_iters", int, 100, "resection iteration cap"),
    KeySpec("orient.tol", float, 1e-12, "relative RMSE change for convergence"),

    KeySpec("render.d_min", float, 60.0, "log depth render near limit (m)"),
    KeySpec("render.d_max", float, 16000.0, "log depth render far limit (m)"),

    KeySpec("synth.terrain", str, "flat", "terrain kind: flat, ramp, or boxes"),
    KeySpec("synth.flat_height", float, 0.0, "base terrain height (m)"),
    KeySpec("synth.ramp_slope", float, 0.0, "ramp dz/dy"),
    KeySpec("synth.boxes", str, "", "boxes as 'x,y,w,d,h;...'"),
    KeySpec("synth.ncols", int, 64, "grid columns"),
    KeySpec("synth.nrows", int, 64, "grid rows"),
    KeySpec("synth.cell_size", float, 10.0, "grid cell size (m)"),
    KeySpec("synth.origin_x", float, 0.0, "grid lower-left x (m)"),
    KeySpec("synth.origin_y", float, 0.0, "grid lower-left y (m)"),
    KeySpec("synth.width", int, 64, "rendered image width (px)"),
    KeySpec("synth.height", int, 48, "rendered image height (px)"),
    KeySpec("synth.texture", str, "checker", "texture kind: checker or random"),
    KeySpec("synth.checker_period", float, 20.0, "checker cell size (m)"),
    KeySpec("synth.checker_colors", str, "0.9,0.9,0.9;0.02,0.02,0.02", "two RGB triples"),
    KeySpec("synth.seed", int, 0, "texture RNG seed"),
    KeySpec("synth.beta", float, 0.001, "scattering coefficient (1/m)"),
    KeySpec("synth.airlight", str, "0.85,0.87,0.9", "airlight RGB triple"),
    KeySpec("synth.ensure_dark_pixels", bool, True, "require a dark texture color"),
)
# fmt: on

_BY_NAME = {spec.name: spec for spec in REGISTRY}


class Config:
    """Resolved key/value store with typed access."""

    def __init__(self, values: dict[str, Any] | None = None):
        self.values = {spec.name: spec.default for spec in REGISTRY}
        if values:
            for key, val in values.items():
                self.set(key, val)

    def set(self, key: str, raw: Any) -> None:
        spec = _BY_NAME.get(key)
        if spec is None:
            raise ConfigError(f"unknown configuration key {key!r}")
        if raw is None or isinstance(raw, spec.type):
            self.values[key] = raw
            return
        try:
            if spec.type is bool:
                self.values[key] = _parse_bool(str(raw))
            else:
                self.values[key] = spec.type(raw)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {exc}") from None

    def get(self, key: str) -> Any:
        if key not in _BY_NAME:
            raise ConfigError(f"unknown configuration key {key!r}")
        return self.values[key]

    def require(self, key: str) -> Any:
        val = self.get(key)
        if val is None:
            raise ConfigError(f"configuration key {key} is required for this command")
        return val


def parse_config_file(path) -> dict[str, str]:
    """Read `key=value` lines; `#` starts a comment, blank lines ignored."""
    out: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            body = line.split("#", 1)[0].strip()
            if not body:
                continue
            if "=" not in body:
                raise ConfigError(f"{path}:{lineno}: expected key=value, got {body!r}")
            key, val = body.split("=", 1)
            out[key.strip()] = val.strip()
    return out


def load_config(config_path=None, overrides: dict[str, str] | None = None) -> Config:
    """Defaults, then the config file, then CLI overrides."""
    cfg = Config()
    if config_path is not None:
        for key, val in parse_config_file(config_path).items():
            cfg.set(key, val)
    if overrides:
        for key, val in overrides.items():
            cfg.set(key, val)
    return cfg


def parse_triple(text: str, what: str) -> tuple[float, float, float]:
    parts = [p for p in text.replace(";", ",").split(",") if p.strip()]
    if len(parts) != 3:
        raise ConfigError(f"{what}: expected three comma-separated numbers, got {text!r}")
    try:
        r, g, b = (float(p) for p in parts)
    except ValueError:
        raise ConfigError(f"{what}: non-numeric component in {text!r}") from None
    return (r, g, b)


def parse_color_pair(
    text: str,
) -> tuple[tuple[float, float, float], tuple[float, float, float]]:
    halves = text.split(";")
    if len(halves) != 2:
        raise ConfigError(f"checker colors need two triples separated by ';', got {text!r}")
    return (parse_triple(halves[0], "checker color"), parse_triple(halves[1], "checker color"))


def parse_boxes(text: str):
    """Parse 'x,y,w,d,h;x,y,w,d,h;...' into Box tuples."""
    from .synth import Box

    boxes = []
    for chunk in text.split(";"):
        chunk = chunk.strip()
        if not chunk:
            continue
        parts = chunk.split(",")
        if len(parts) != 5:
            raise ConfigError(f"box needs 5 numbers 'x,y,w,d,h', got {chunk!r}")
        try:
            boxes.append(Box(*(float(p) for p in parts)))
        except ValueError:
            raise ConfigError(f"non-numeric box component in {chunk!r}") from None
    return tuple(boxes)
