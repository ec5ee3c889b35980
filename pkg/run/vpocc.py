"""vpocc command line: zoom | sample | lift | fuse | density | synth.

Exit codes: 0 success, 2 I/O or parse error, 3 geometry / dimension error.
"""
import logging
import os
import sys

import numpy as np

sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))
from dataset.synthetic_road import KITTI_HEIGHT, KITTI_WIDTH, SyntheticRoadScene, image_feature_pyramid
from models.fusion import BalancedFusion, bfvf, upsample_head
from models.lifting import (
    DeformableCrossAttention,
    VPCrossAttention,
    initial_query_volume,
    lift_volume,
    propose_voxel_queries,
)
from models.vpsampler import multi_scale_samples
from models.vpzoomer import VPZoomer, ZoomGeometry
from utils.density import rebalancing_report
from utils.errors import DimensionMismatch, FormatError, ReferenceOutOfBounds, VPOccError
from utils.geometry import CameraModel, back_project_depth
from utils.io_utils import (
    VELO_TO_CAM,
    read_depth_png,
    read_image,
    read_kitti_calib,
    read_pyramid,
    read_volume,
    read_vp,
    write_depth_png,
    write_image,
    write_kitti_calib,
    write_point_cloud_ply,
    write_pyramid,
    write_semantic_grid,
    write_volume,
    write_vp,
)
from utils.parser import SUBCOMMANDS
from utils.utils import grid_spec, log_args, log_string, pyramid_dims, sampler_config, set_threads, setup_logging
from utils.visualizations import draw_sample_overlay, plot_density_report


def _vp(args):
    if args.vp is not None:
        return args.vp
    if args.vp_file is not None:
        return read_vp(args.vp_file)
    raise FormatError("a vanishing point is required (--vp or --vp-file)")


def cmd_zoom(args):
    img = read_image(args.image)
    zoomer = VPZoomer(alpha=args.alpha, clamp=not args.no_clamp)
    zoom, geom = zoomer(img, _vp(args))
    write_image(args.out, zoom)
    log_string(f"zoom image {geom.width}x{geom.height} for VP ({geom.vp.x:.2f}, {geom.vp.y:.2f}) -> {args.out}")


def cmd_sample(args):
    vp, ref = _vp(args), args.ref
    img = read_image(args.overlay) if args.overlay else None
    if args.image_dims is not None:
        width, height = args.image_dims
    elif img is not None:
        height, width = img.shape[:2]
    else:
        raise FormatError("--image-dims or --overlay is required")
    if not (0 <= ref.x < width and 0 <= ref.y < height):
        raise ReferenceOutOfBounds(f"reference {tuple(ref)} outside the {width}x{height} image")

    config = sampler_config(args)
    samples = multi_scale_samples(vp, ref, pyramid_dims(width, height, config.strides), config)
    # table in full-image pixels
    level_points = np.stack([s.points * stride for s, stride in zip(samples, config.strides)])
    lines = ["level px py"] + [
        f"{level} {x:.6f} {y:.6f}" for level, pts in enumerate(level_points) for x, y in pts
    ]
    table = "\n".join(lines) + "\n"
    sys.stdout.write(table)
    if args.out:
        with open(args.out, "w") as f:
            f.write(table)

    if img is not None:
        out = args.overlay_out or os.path.splitext(args.overlay)[0] + "_samples.png"
        write_image(out, draw_sample_overlay(img, level_points, vp))
        log_string(f"overlay -> {out}")


def _attention(mode, args, num_levels, seed):
    if mode == "vpca":
        return VPCrossAttention(args.channels, num_levels, num_points=9, seed=seed)
    return DeformableCrossAttention(args.channels, num_levels, args.dca_points, args.dca_max_offset, seed=seed)


def cmd_lift(args):
    depth = read_depth_png(args.depth)
    cam = read_kitti_calib(args.calib)
    pyramid_o = read_pyramid(args.features_o)
    pyramid_z = read_pyramid(args.features_z)
    vp = _vp(args)
    width, height = args.image_dims or (depth.width, depth.height)

    config = sampler_config(args)
    spec = grid_spec(args)
    expected = pyramid_dims(width, height, config.strides)
    for name, pyramid in (("original", pyramid_o), ("zoom", pyramid_z)):
        dims = [tuple(level.shape[:2]) for level in pyramid]
        if dims != expected:
            raise DimensionMismatch(f"{name} pyramid levels {dims}, expected {expected} for {width}x{height}")

    init = initial_query_volume(spec, args.channels, args.seed)
    queries = propose_voxel_queries(depth, cam, spec, init)
    geom = VPZoomer(alpha=args.alpha, clamp=True).geometry(vp, width, height)

    attn_o = _attention(args.lift_mode_o, args, config.num_levels, args.seed)
    attn_z = _attention("dca", args, config.num_levels, args.seed + 1)
    vol_o = lift_volume(
        queries, pyramid_o, vp, cam, args.lift_mode_o, attn_o, (width, height), config, progress=args.verbose
    )
    vol_z = lift_volume(
        queries, pyramid_z, vp, cam, "dca", attn_z, (width, height), config, zoom=geom, progress=args.verbose
    )

    write_volume(f"{args.out_volume}_o.vol", vol_o)
    write_volume(f"{args.out_volume}_z.vol", vol_z)
    log_string(f"volumes {vol_o.shape} -> {args.out_volume}_o.vol, {args.out_volume}_z.vol")

    if args.out_points:
        write_point_cloud_ply(args.out_points, back_project_depth(cam, depth.values, depth.valid))


def cmd_fuse(args):
    vol_o = read_volume(args.vol_o)
    vol_z = read_volume(args.vol_z)
    fusion = BalancedFusion(args.channels, args.num_classes, args.seed, args.fusion_mode)
    labels = upsample_head(bfvf(vol_o, vol_z, fusion), fusion)
    write_semantic_grid(args.out_grid, labels)
    log_string(f"semantic grid {labels.shape} ({args.fusion_mode}) -> {args.out_grid}")


def cmd_density(args):
    depth = read_depth_png(args.depth)
    if args.no_zoom:
        geom = ZoomGeometry.identity(depth.width, depth.height)
    else:
        geom = VPZoomer(alpha=args.alpha, clamp=True).geometry(_vp(args), depth.width, depth.height)
    report = rebalancing_report(depth, geom, args.bands)
    if args.out_csv:
        report.write_csv(args.out_csv)
        log_string(f"density report -> {args.out_csv}")
    else:
        sys.stdout.write(report.format_csv())
    if args.out_plot:
        plot_density_report(report, args.out_plot)


def cmd_synth(args):
    width, height = args.image_dims or (KITTI_WIDTH, KITTI_HEIGHT)
    cam = CameraModel(fx=707.0912, fy=707.0912, cx=width / 2, cy=height / 2)
    scene = SyntheticRoadScene(cam, width, height, max_depth=args.max_depth)
    write_image(args.out_image, scene.image)
    write_depth_png(args.out_depth, scene.depth)
    write_vp(args.out_vp, scene.vp)
    if args.out_calib:
        # the scene camera seen from a velodyne-style world frame
        write_kitti_calib(args.out_calib, CameraModel(cam.fx, cam.fy, cam.cx, cam.cy, rotation=VELO_TO_CAM))
    if args.out_features_o:
        write_pyramid(args.out_features_o, image_feature_pyramid(scene.image, args.channels, args.strides, args.seed))
    if args.out_features_z:
        zoom, _ = VPZoomer(alpha=args.alpha, clamp=True)(scene.image, scene.vp)
        write_pyramid(args.out_features_z, image_feature_pyramid(zoom, args.channels, args.strides, args.seed))
    log_string(f"{args.scene} scene {width}x{height}, VP ({scene.vp.x:.2f}, {scene.vp.y:.2f})")


COMMANDS = {
    "zoom": cmd_zoom,
    "sample": cmd_sample,
    "lift": cmd_lift,
    "fuse": cmd_fuse,
    "density": cmd_density,
    "synth": cmd_synth,
}


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    if not argv or argv[0] not in COMMANDS:
        sys.stderr.write(f"usage: vpocc {{{','.join(COMMANDS)}}} [options]\n")
        return 2
    name = argv[0]
    try:
        args = SUBCOMMANDS[name](argv[1:])
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else 2

    setup_logging(args.log_file, args.verbose)
    logging.captureWarnings(True)
    log_args(args)
    try:
        set_threads(args.threads)
        COMMANDS[name](args)
    except VPOccError as e:
        logging.error(f"{name}: {type(e).__name__}: {e}")
        return 3
    except (OSError, ValueError) as e:
        logging.error(f"{name}: {type(e).__name__}: {e}")
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
