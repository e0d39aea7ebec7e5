"""Command-line front end: grow, mesh, sample, gaussians, render, fit, pipeline.

Every command is deterministic given its inputs and the seed; all randomness
derives from the master seed through named substreams (attractors, sampling,
cameras, fitting), so stages can be re-run independently and reproduce the
same bytes. Exit codes: 0 success, 1 I/O error, 2 validation error.

BONSAI_THREADS (default: all cores) caps the worker count; the current
implementation computes sequentially, so outputs are identical for any value.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from . import __version__
from .attractors import sample_attractors, write_attractors_ply
from .config import PipelineConfig, load_config, override_seed
from .errors import BonsaiError, UnsizedSkeletonError, ValidationError
from .fitting import FitResult, fit, stats_from_mask
from .formats import fmt, read_mask, read_obj, write_pfm, write_pgm16_depth, write_ppm
from .gaussians import init_gaussians, load_gaussians
from .growth import grow
from .meshing import build_mesh, compute_sizes, load_surface_cloud, sample_surface
from .model import Skeleton, load_skeleton, save_skeleton
from .render import default_camera_rig, render_views, scene_bounds
from .rng import stream_seed

_CONFIG_HELP = (
    "pipeline TOML config; see the bonsaigen.config module docstring for the "
    "full key reference (crown radius R, attractor count, growth step and "
    "distances, weight vector theta, sizing, sampling density, palette, "
    "camera rig and fitting settings)"
)


def _check_threads_env() -> None:
    raw = os.environ.get("BONSAI_THREADS")
    if raw is None:
        return
    try:
        value = int(raw)
    except ValueError:
        raise ValidationError(f"BONSAI_THREADS must be an integer, got {raw!r}") from None
    if value < 1:
        raise ValidationError(f"BONSAI_THREADS must be >= 1, got {value}")


def _load_config(args) -> PipelineConfig:
    path = Path(args.config)
    if not path.exists():
        raise FileNotFoundError(f"config file not found: {path}")
    cfg = load_config(path)
    if getattr(args, "seed", None) is not None:
        cfg = override_seed(cfg, args.seed)
    return cfg


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _ensure_sized(skeleton: Skeleton, cfg: PipelineConfig, auto_size: bool):
    if skeleton.is_sized():
        return skeleton
    if not auto_size:
        raise UnsizedSkeletonError(
            "input skeleton has no sizes; pass --auto-size or mesh it first"
        )
    return compute_sizes(skeleton, cfg.sizing)


def cmd_grow(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(args)
    field = sample_attractors(
        cfg.growth.R,
        cfg.growth.n_attractors,
        stream_seed(cfg.seed, "attractors"),
        uniform_volume=cfg.uniform_volume,
    )
    skeleton, trace = grow(field, cfg.growth)
    save_skeleton(skeleton, out / "skeleton.json")
    trace.to_csv(out / "trace.csv")
    if args.dump_attractors:
        write_attractors_ply(field, out / "attractors.ply")
    killed = trace.total_killed
    print(
        f"grew {len(skeleton)} nodes ({skeleton.n_branches} branches) in "
        f"{trace.iterations} iterations; killed {killed}/{len(field)} attractors"
    )
    print(f"wrote {out / 'skeleton.json'} and {out / 'trace.csv'}")
    return 0


def cmd_mesh(args) -> int:
    cfg = _load_config(args)
    skeleton = load_skeleton(args.infile)
    sized = _ensure_sized(skeleton, cfg, auto_size=True)
    mesh = build_mesh(sized, cfg.sizing)
    out = _out_dir(args)
    mesh.save_obj(out / "tree.obj")
    print(
        f"vertices={mesh.n_vertices} faces={mesh.n_faces} "
        f"(branches={sized.n_branches}, ring_segments={cfg.sizing.ring_segments})"
    )
    print(f"wrote {out / 'tree.obj'}")
    return 0


def cmd_sample(args) -> int:
    cfg = _load_config(args)
    skeleton = load_skeleton(args.infile)
    sized = _ensure_sized(skeleton, cfg, auto_size=args.auto_size)
    mesh = build_mesh(sized, cfg.sizing)
    cloud = sample_surface(mesh, cfg.density, stream_seed(cfg.seed, "sampling"))
    out = _out_dir(args)
    cloud.save_ply(out / "cloud.ply")
    print(f"sampled {len(cloud)} surface points (area={fmt(mesh.total_area())})")
    print(f"wrote {out / 'cloud.ply'}")
    return 0


def cmd_gaussians(args) -> int:
    cfg = _load_config(args)
    cloud = load_surface_cloud(args.infile)
    splats = init_gaussians(
        cloud,
        opacity0=cfg.opacity0,
        trunk_color=cfg.trunk_color,
        extremity_color=cfg.extremity_color,
    )
    out = _out_dir(args)
    splats.save_ply(out / "gaussians.ply")
    print(f"initialized {len(splats)} splats")
    print(f"wrote {out / 'gaussians.ply'}")
    return 0


def _render_source(path: Path):
    """Returns (render source, points used for the camera-rig bounds)."""
    if path.suffix == ".obj":
        vertices, faces = read_obj(path)
        return (vertices, faces), vertices
    cloud = load_gaussians(path)
    return cloud, cloud.mu


def _write_views(source, bounds_points, cfg: PipelineConfig, out: Path, views: int) -> list[Path]:
    if len(bounds_points) == 0:
        from .model import Vec3

        center, radius = Vec3(0.0, 0.0, 0.0), 1.0  # empty scene renders background only
    else:
        center, radius = scene_bounds(bounds_points)
    cams = default_camera_rig(
        center,
        radius,
        n_views=views,
        distance_range=cfg.render.distance_range,
        seed=stream_seed(cfg.seed, "cameras"),
        width=cfg.render.width,
        height=cfg.render.height,
        fov_deg=cfg.render.fov_deg,
    )
    written = []
    for i, (color, depth) in enumerate(render_views(source, cams)):
        color_path = out / f"view{i}_color.ppm"
        write_ppm(color_path, color.data)
        if cfg.render.depth_format == "pgm":
            depth_path = out / f"view{i}_depth.pgm"
            write_pgm16_depth(depth_path, depth.data)
        else:
            depth_path = out / f"view{i}_depth.pfm"
            write_pfm(depth_path, depth.data)
        written += [color_path, depth_path]
    return written


def cmd_render(args) -> int:
    cfg = _load_config(args)
    source, bounds_points = _render_source(Path(args.infile))
    out = _out_dir(args)
    views = args.views if args.views is not None else cfg.render.views
    if views < 1:
        raise ValidationError(f"--views must be >= 1, got {views}")
    written = _write_views(source, bounds_points, cfg, out, views)
    print(f"wrote {len(written)} files to {out}")
    return 0


def _load_mask_targets(masks_dir: Path):
    paths = sorted(
        p for p in masks_dir.iterdir() if p.suffix.lower() in (".png", ".pgm")
    )
    targets = []
    for p in paths:
        try:
            targets.append(stats_from_mask(read_mask(p)))
        except BonsaiError as exc:
            print(f"warning: skipping mask {p.name}: {exc}", file=sys.stderr)
    return targets


def cmd_fit(args) -> int:
    cfg = _load_config(args)
    masks_dir = Path(args.masks)
    if not masks_dir.is_dir():
        raise FileNotFoundError(f"masks directory not found: {masks_dir}")
    targets = _load_mask_targets(masks_dir)
    if not targets:
        raise ValidationError(f"no valid masks found in {masks_dir}")
    fit_cfg = cfg.fit
    if args.budget is not None:
        from dataclasses import replace

        fit_cfg = replace(fit_cfg, budget=args.budget)
    result = fit(
        fit_cfg,
        targets,
        cfg.growth,
        cfg.sizing,
        resolution=cfg.fit_resolution,
        distance_range=cfg.render.distance_range,
        fov_deg=cfg.render.fov_deg,
    )
    out = _out_dir(args)
    _write_fit_outputs(result, out)
    print(f"fitted {len(targets)} target masks over {fit_cfg.budget} evaluations")
    print(f"initial loss {fmt(result.loss_initial)} -> final loss {fmt(result.loss_best)}")
    print(f"wrote {out / 'theta_best.json'} and {out / 'fit_trace.csv'}")
    return 0


def _write_fit_outputs(result: FitResult, out: Path) -> None:
    theta = ",".join(fmt(t) for t in result.theta_best)
    doc = (
        "{"
        + f'"loss_best":{fmt(result.loss_best)},'
        + f'"loss_initial":{fmt(result.loss_initial)},'
        + f'"theta":[{theta}]'
        + "}\n"
    )
    (out / "theta_best.json").write_text(doc, encoding="utf-8")
    result.write_trace_csv(out / "fit_trace.csv")


def cmd_pipeline(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(args)
    field = sample_attractors(
        cfg.growth.R,
        cfg.growth.n_attractors,
        stream_seed(cfg.seed, "attractors"),
        uniform_volume=cfg.uniform_volume,
    )
    skeleton, trace = grow(field, cfg.growth)
    save_skeleton(skeleton, out / "skeleton.json")
    trace.to_csv(out / "trace.csv")
    print(f"grow: {len(skeleton)} nodes, {trace.total_killed}/{len(field)} attractors killed")

    sized = compute_sizes(skeleton, cfg.sizing)
    mesh = build_mesh(sized, cfg.sizing)
    mesh.save_obj(out / "tree.obj")
    print(f"mesh: vertices={mesh.n_vertices} faces={mesh.n_faces}")

    cloud = sample_surface(mesh, cfg.density, stream_seed(cfg.seed, "sampling"))
    cloud.save_ply(out / "cloud.ply")
    print(f"sample: {len(cloud)} points")

    splats = init_gaussians(
        cloud,
        opacity0=cfg.opacity0,
        trunk_color=cfg.trunk_color,
        extremity_color=cfg.extremity_color,
    )
    splats.save_ply(out / "gaussians.ply")
    print(f"gaussians: {len(splats)} splats")

    written = _write_views(splats, skeleton.positions(), cfg, out, cfg.render.views)
    print(f"render: {len(written)} image files")

    if args.masks is not None:
        args_out = argparse.Namespace(
            config=args.config, seed=getattr(args, "seed", None),
            masks=args.masks, budget=None, out=str(out),
        )
        cmd_fit(args_out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bonsai",
        description=(
            "Deterministic bonsai toolkit: grow branch skeletons from attraction "
            "points, convert them to tube meshes / surface clouds / Gaussian "
            "splats, render multi-view color and depth images, and fit the "
            "growth weights to reference silhouettes."
        ),
        epilog=_CONFIG_HELP,
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, needs_in=False):
        p.add_argument("--config", required=True, help=_CONFIG_HELP)
        p.add_argument("--seed", type=int, default=None,
                       help="override the config master seed")
        p.add_argument("--out", default=".", help="output directory (created if missing)")
        if needs_in:
            p.add_argument("--in", dest="infile", required=True, help="input file")

    p = sub.add_parser("grow", help="grow a skeleton and write skeleton.json + trace.csv")
    add_common(p)
    p.add_argument("--dump-attractors", action="store_true",
                   help="also write the surviving attraction points as attractors.ply")
    p.set_defaults(func=cmd_grow)

    p = sub.add_parser("mesh", help="size a skeleton and write the tube mesh as tree.obj")
    add_common(p, needs_in=True)
    p.set_defaults(func=cmd_mesh)

    p = sub.add_parser("sample", help="sample the tube mesh surface into cloud.ply")
    add_common(p, needs_in=True)
    p.add_argument("--auto-size", action="store_true",
                   help="run the sizing pass when the input skeleton is unsized")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("gaussians", help="initialize splats from a surface cloud PLY")
    add_common(p, needs_in=True)
    p.set_defaults(func=cmd_gaussians)

    p = sub.add_parser("render", help="render color + depth views from gaussians.ply or tree.obj")
    add_common(p, needs_in=True)
    p.add_argument("--views", type=int, default=None, help="number of views (default from config)")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("fit", help="fit growth weights against a directory of silhouette masks")
    add_common(p)
    p.add_argument("--masks", required=True, help="directory of 8-bit PNG/PGM masks (>127 = foreground)")
    p.add_argument("--budget", type=int, default=None, help="override fit evaluation budget")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("pipeline", help="run grow -> mesh -> sample -> gaussians -> render")
    add_common(p)
    p.add_argument("--masks", default=None,
                   help="optional masks directory; appends the fitting stage")
    p.set_defaults(func=cmd_pipeline)
    return parser


def main(argv=None) -> int:
    try:
        _check_threads_env()
        args = build_parser().parse_args(argv)
        return args.func(args)
    except BonsaiError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
