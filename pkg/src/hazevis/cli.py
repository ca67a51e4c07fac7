"""Command-line pipeline: orient, transmission, visibility, synth, pipeline.

Exit codes: 0 success, 1 usage/config error, 2 I/O or numeric failure,
3 no visible surface pixel (fog at the lens).
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import dataclass

import numpy as np

from . import camera, dehaze, depth, pixmap, synth, terrain, visibility
from .config import (
    REGISTRY,
    Config,
    ConfigError,
    load_config,
    parse_boxes,
    parse_color_pair,
    parse_triple,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_FAILURE = 2
EXIT_NO_SURFACE = 3


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems as exit code 1, not 2."""

    def error(self, message):
        raise _UsageError(message)


def _add_registry_flags(parser: argparse.ArgumentParser) -> None:
    for spec in REGISTRY:
        parser.add_argument(
            f"--{spec.name}",
            dest=spec.name.replace(".", "__"),
            metavar="VALUE",
            help=f"{spec.help} (default: {spec.default})",
        )


def build_parser() -> _Parser:
    parser = _Parser(prog="hazevis", description=__doc__)
    sub = parser.add_subparsers(dest="command")
    descriptions = {
        "orient": "resect the camera pose from ground control points",
        "transmission": "estimate the transmission map of a hazy image",
        "visibility": "full chain: transmission, depth, visibility report",
        "synth": "generate a synthetic scene with known depth",
        "pipeline": "transmission followed by visibility, one output dir",
    }
    for name, desc in descriptions.items():
        p = sub.add_parser(name, description=desc, help=desc)
        p.add_argument("--config", metavar="FILE", help="key=value config file")
        _add_registry_flags(p)
    return parser


def _collect_overrides(args: argparse.Namespace) -> dict[str, str]:
    overrides = {}
    for spec in REGISTRY:
        val = getattr(args, spec.name.replace(".", "__"), None)
        if val is not None:
            overrides[spec.name] = val
    return overrides


def _out_dir(cfg: Config) -> str:
    out = cfg.require("paths.output_dir")
    os.makedirs(out, exist_ok=True)
    return out


def _require_file(cfg: Config, key: str) -> str:
    path = cfg.require(key)
    if not os.path.exists(path):
        raise ConfigError(f"{key}: no such file: {path}")
    return path


def _dehaze_params(cfg: Config) -> dehaze.DehazeParams:
    return dehaze.DehazeParams(
        patch_radius=cfg.get("dehaze.patch_radius"),
        omega=cfg.get("dehaze.omega"),
        guided_radius=cfg.get("dehaze.guided_radius"),
        guided_eps=cfg.get("dehaze.guided_eps"),
        bright_fraction=cfg.get("dehaze.bright_fraction"),
    )


def _ray_options(cfg: Config) -> depth.RayCastOptions:
    step = cfg.get("ray.coarse_step")
    return depth.RayCastOptions(
        max_range=cfg.get("ray.max_range"),
        coarse_step=None if step == 0 else step,
        refine_iters=cfg.get("ray.refine_iters"),
    )


def _visibility_params(cfg: Config) -> visibility.VisibilityParams:
    return visibility.VisibilityParams(
        threshold=cfg.get("visibility.threshold"),
        method=cfg.get("visibility.method"),
        percentile_rank=cfg.get("visibility.percentile_rank"),
        bin_width=cfg.get("visibility.bin_width"),
    )


def _initial_pose(cfg: Config, image_size: tuple[int, int] | None) -> camera.CameraPose:
    cx, cy = cfg.get("pose.cx"), cfg.get("pose.cy")
    if (cx is None or cy is None) and image_size is not None:
        width, height = image_size
        cx = (width - 1) / 2.0 if cx is None else cx
        cy = (height - 1) / 2.0 if cy is None else cy
    if cx is None or cy is None:
        raise ConfigError("pose.cx/pose.cy required (or provide paths.image)")
    return camera.CameraPose(
        x0=cfg.get("pose.x0"),
        y0=cfg.get("pose.y0"),
        z0=cfg.get("pose.z0"),
        omega_rot=cfg.get("pose.omega"),
        phi_rot=cfg.get("pose.phi"),
        kappa_rot=cfg.get("pose.kappa"),
        f=cfg.get("pose.f"),
        cx=cx,
        cy=cy,
    )


def _depth_as_scalar_map(dm: depth.DepthMap) -> pixmap.ScalarMap:
    """Distances with invalid pixels baked to the -1.0 sentinel."""
    return pixmap.ScalarMap(np.where(dm.valid, dm.distances, -1.0))


# ---------------------------------------------------------------------------
# Stage runners (shared by commands and tests)
# ---------------------------------------------------------------------------


@dataclass
class TransmissionStage:
    dark: pixmap.ScalarMap
    light: dehaze.AtmosphericLight
    coarse: pixmap.ScalarMap
    refined: pixmap.ScalarMap


def run_transmission(img: pixmap.RgbImage, params: dehaze.DehazeParams) -> TransmissionStage:
    dark = dehaze.dark_channel(img, params.patch_radius)
    light = dehaze.estimate_atmospheric_light(img, dark, params.bright_fraction)
    coarse = dehaze.estimate_transmission(img, light, params)
    refined = dehaze.refine_transmission(img, coarse, params)
    return TransmissionStage(dark=dark, light=light, coarse=coarse, refined=refined)


@dataclass
class VisibilityStage:
    transmission: TransmissionStage
    raw_depth: depth.DepthMap
    corrected_depth: depth.DepthMap
    mask: pixmap.BitMask
    border: pixmap.BitMask
    report: visibility.VisibilityReport


def run_visibility_pipeline(
    img: pixmap.RgbImage,
    grid: terrain.HeightGrid,
    pose: camera.CameraPose,
    dehaze_params: dehaze.DehazeParams,
    ray_opts: depth.RayCastOptions,
    vis_params: visibility.VisibilityParams,
) -> VisibilityStage:
    """transmission -> depth -> correction -> mask -> visibility report."""
    stage = run_transmission(img, dehaze_params)
    raw = depth.build_depth_map(grid, pose, img.width, img.height, ray_opts)
    corrected = depth.correct_depth_map(raw)
    mask = visibility.visibility_mask(stage.refined, vis_params.threshold)
    report = visibility.estimate_visibility(corrected, mask, vis_params)
    border = visibility.haze_border(mask)
    return VisibilityStage(
        transmission=stage,
        raw_depth=raw,
        corrected_depth=corrected,
        mask=mask,
        border=border,
        report=report,
    )


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_orient(cfg: Config) -> int:
    gcps = camera.load_gcps(_require_file(cfg, "paths.gcps"))
    image_size = None
    if cfg.get("paths.image") and os.path.exists(cfg.get("paths.image")):
        img = pixmap.load_image(cfg.get("paths.image"))
        image_size = (img.width, img.height)
    initial = _initial_pose(cfg, image_size)
    options = camera.ResectOptions(
        estimate_f=cfg.get("flags.estimate_f"),
        max_iters=cfg.get("orient.max_iters"),
        tol=cfg.get("orient.tol"),
    )
    result = camera.resect(gcps, initial, options)
    pose_path = cfg.get("paths.pose")
    if pose_path is None:
        pose_path = os.path.join(_out_dir(cfg), "pose.txt")
    camera.save_pose_file(pose_path, result.pose, result.rmse)
    print(f"pose written to {pose_path}")
    print(f"rmse_px={result.rmse!r} iterations={result.iterations}")
    return EXIT_OK


def _write_transmission(out: str, stage: TransmissionStage, save_intermediates: bool) -> None:
    pixmap.save_scalar_map(stage.coarse, os.path.join(out, "transmission_coarse.pfm"))
    pixmap.save_scalar_map(stage.refined, os.path.join(out, "transmission_refined.pfm"))
    pixmap.save_scalar_map(
        stage.refined, os.path.join(out, "transmission_preview.png"), "png8", 0.0, 1.0
    )
    if save_intermediates:
        pixmap.save_scalar_map(stage.dark, os.path.join(out, "dark_channel.pfm"))


def cmd_transmission(cfg: Config) -> int:
    img = pixmap.load_image(_require_file(cfg, "paths.image"))
    stage = run_transmission(img, _dehaze_params(cfg))
    out = _out_dir(cfg)
    _write_transmission(out, stage, cfg.get("flags.save_intermediates"))
    a = stage.light
    print(f"airlight=({a.a_r!r}, {a.a_g!r}, {a.a_b!r})")
    return EXIT_OK


def _load_terrain(cfg: Config) -> terrain.HeightGrid:
    grid = terrain.load_grid(_require_file(cfg, "paths.dsm_fine"))
    coarse_path = cfg.get("paths.dsm_coarse")
    if coarse_path:
        if not os.path.exists(coarse_path):
            raise ConfigError(f"paths.dsm_coarse: no such file: {coarse_path}")
        grid = terrain.merge_grids(grid, terrain.load_grid(coarse_path))
    return grid


def _run_and_write_visibility(cfg: Config, write_transmission_maps: bool) -> int:
    img = pixmap.load_image(_require_file(cfg, "paths.image"))
    pose, _ = camera.load_pose_file(_require_file(cfg, "paths.pose"))
    grid = _load_terrain(cfg)

    stage = run_visibility_pipeline(
        img,
        grid,
        pose,
        _dehaze_params(cfg),
        _ray_options(cfg),
        _visibility_params(cfg),
    )

    out = _out_dir(cfg)
    with open(os.path.join(out, "report.json"), "w", encoding="ascii") as fh:
        fh.write(stage.report.to_json())
        fh.write("\n")
    overlay = visibility.overlay_border(img, stage.border)
    pixmap.save_image(overlay, os.path.join(out, "overlay.png"))

    if write_transmission_maps:
        _write_transmission(out, stage.transmission, cfg.get("flags.save_intermediates"))
    if cfg.get("flags.save_intermediates"):
        if not write_transmission_maps:
            _write_transmission(out, stage.transmission, True)
        pixmap.save_scalar_map(
            _depth_as_scalar_map(stage.raw_depth), os.path.join(out, "depth_raw.pfm")
        )
        pixmap.save_scalar_map(
            _depth_as_scalar_map(stage.corrected_depth),
            os.path.join(out, "depth_corrected.pfm"),
        )
        render = depth.render_depth_log(
            stage.corrected_depth, cfg.get("render.d_min"), cfg.get("render.d_max")
        )
        pixmap.save_image(render, os.path.join(out, "depth_render.png"))

    print(f"visibility_m={stage.report.visibility!r}")
    return EXIT_OK


def cmd_visibility(cfg: Config) -> int:
    return _run_and_write_visibility(cfg, write_transmission_maps=False)


def cmd_pipeline(cfg: Config) -> int:
    return _run_and_write_visibility(cfg, write_transmission_maps=True)


def _scene_spec(cfg: Config) -> synth.SceneSpec:
    width = cfg.get("synth.width")
    height = cfg.get("synth.height")
    pose = _initial_pose(cfg, (width, height))
    return synth.SceneSpec(
        terrain=cfg.get("synth.terrain"),
        flat_height=cfg.get("synth.flat_height"),
        ramp_slope=cfg.get("synth.ramp_slope"),
        boxes=parse_boxes(cfg.get("synth.boxes")),
        ncols=cfg.get("synth.ncols"),
        nrows=cfg.get("synth.nrows"),
        cell_size=cfg.get("synth.cell_size"),
        origin_x=cfg.get("synth.origin_x"),
        origin_y=cfg.get("synth.origin_y"),
        pose=pose,
        width=width,
        height=height,
        texture=cfg.get("synth.texture"),
        checker_period=cfg.get("synth.checker_period"),
        checker_colors=parse_color_pair(cfg.get("synth.checker_colors")),
        seed=cfg.get("synth.seed"),
        ensure_dark_pixels=cfg.get("synth.ensure_dark_pixels"),
    )


def cmd_synth(cfg: Config) -> int:
    spec = _scene_spec(cfg)
    assets = synth.make_test_scene(spec)
    airlight = dehaze.AtmosphericLight(*parse_triple(cfg.get("synth.airlight"), "synth.airlight"))
    atm = synth.Atmosphere(beta=cfg.get("synth.beta"), airlight=airlight)
    hazy = synth.apply_haze(assets.radiance, assets.true_depth, atm)

    out = _out_dir(cfg)
    pixmap.save_image(assets.radiance, os.path.join(out, "radiance.png"))
    pixmap.save_image(hazy, os.path.join(out, "hazy.png"))
    terrain.save_grid(assets.grid, os.path.join(out, "dsm.asc"))
    camera.save_pose_file(os.path.join(out, "pose.txt"), assets.pose)
    pixmap.save_scalar_map(
        _depth_as_scalar_map(assets.true_depth), os.path.join(out, "true_depth.pfm")
    )
    print(f"scene written to {out}")
    return EXIT_OK


COMMANDS = {
    "orient": cmd_orient,
    "transmission": cmd_transmission,
    "visibility": cmd_visibility,
    "synth": cmd_synth,
    "pipeline": cmd_pipeline,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE

    try:
        cfg = load_config(args.config, _collect_overrides(args))
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    try:
        return COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except visibility.NoVisibleSurfaceError as exc:
        print(f"no visible surface: {exc}", file=sys.stderr)
        return EXIT_NO_SURFACE
    except (OSError, ValueError, RuntimeError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
