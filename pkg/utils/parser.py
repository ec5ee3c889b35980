import configargparse

from utils.density import DEFAULT_BANDS
from utils.errors import FormatError
from utils.io_utils import parse_point


def parse_dims(text):
    # "W,H"
    parts = text.replace(",", " ").split()
    if len(parts) != 2:
        raise FormatError(f"expected W,H, got '{text}'")
    w, h = (int(p) for p in parts)
    if w <= 0 or h <= 0:
        raise FormatError(f"image dims must be positive, got '{text}'")
    return w, h


def parse_band(text):
    # "lo,hi"
    lo, hi = parse_point(text)
    return lo, hi


def _base_parser(name, description):
    parser = configargparse.ArgParser(
        prog=f"vpocc {name}",
        description=description,
        ignore_unknown_config_file_keys=True,
    )
    parser.add_argument("--config", is_config_file=True, help="Config file path (key = value lines).")
    parser.add_argument("--log-file", type=str, default=None, help="Also write the log to this file.")
    parser.add_argument("--verbose", action="store_true", help="Debug logging and progress bars.")
    parser.add_argument("--threads", type=int, default=1, help="Number of torch CPU threads.")
    return parser


def add_pipeline_args(parser):
    group = parser.add_argument_group("pipeline")
    group.add_argument("--alpha", type=float, default=0.2, help="Zoom-in level (shared segment / image height).")
    group.add_argument("--beta", type=float, default=30.0, help="Upper bound of the sampling offset (px).")
    group.add_argument(
        "--scale-factors", nargs="+", type=float, default=[1.0, 1.5, 2.0], help="Offset scale per pyramid level."
    )
    group.add_argument("--strides", nargs="+", type=int, default=[4, 8, 16], help="Pyramid strides.")
    group.add_argument("--offset-exponent", type=float, default=2.0, help="Exponent on the VP distance.")
    group.add_argument("--seed", type=int, default=42, help="Seed for queries and weights.")
    group.add_argument("--channels", type=int, default=32, help="Feature channels C.")
    group.add_argument("--grid-dims", nargs="+", type=int, default=[128, 128, 8], help="Voxel grid X Y Z.")
    group.add_argument("--voxel-size", nargs="+", type=float, default=[0.4, 0.4, 0.8], help="Voxel size (m).")
    group.add_argument("--grid-origin", nargs="+", type=float, default=[0.0, -25.6, -2.0], help="Grid origin (m).")
    group.add_argument("--num-classes", type=int, default=20, help="Semantic classes including empty.")
    group.add_argument("--dca-points", type=int, default=9, help="Deformable sampling points per level.")
    group.add_argument("--dca-max-offset", type=float, default=4.0, help="Deformable offset bound (px).")
    group.add_argument(
        "--fusion-mode", type=str, default="bfvf", choices=["bfvf", "sum", "conv", "gated"], help="Volume fusion."
    )
    return parser


def _add_vp_args(parser, required=True):
    vp = parser.add_mutually_exclusive_group(required=required)
    vp.add_argument("--vp", type=parse_point, help="Vanishing point 'x,y' in original-image pixels.")
    vp.add_argument("--vp-file", type=str, help="File holding one 'x y' line.")


def get_zoom_args(argv):
    parser = add_pipeline_args(_base_parser("zoom", "Synthesize the VP-anchored zoom-in image."))
    parser.add_argument("--image", type=str, required=True, help="Input PNG/PPM/PGM image.")
    _add_vp_args(parser)
    parser.add_argument("--out", type=str, required=True, help="Output image path.")
    parser.add_argument("--no-clamp", action="store_true", help="Reject VPs whose segment leaves the image.")
    return parser.parse_args(argv)


def get_sample_args(argv):
    parser = add_pipeline_args(_base_parser("sample", "Print the 27-point VP-guided sampling set."))
    _add_vp_args(parser)
    parser.add_argument("--ref", type=parse_point, required=True, help="Reference point 'x,y'.")
    parser.add_argument("--image-dims", type=parse_dims, default=None, help="Image size 'W,H'.")
    parser.add_argument("--overlay", type=str, default=None, help="Image to draw the sampling grid on.")
    parser.add_argument("--overlay-out", type=str, default=None, help="Overlay output path.")
    parser.add_argument("--out", type=str, default=None, help="Also write the table to this file.")
    return parser.parse_args(argv)


def get_lift_args(argv):
    parser = add_pipeline_args(_base_parser("lift", "Lift feature pyramids into voxel feature volumes."))
    parser.add_argument("--depth", type=str, required=True, help="16-bit depth PNG (m = raw / 256).")
    parser.add_argument("--calib", type=str, required=True, help="KITTI-style calibration file.")
    parser.add_argument("--features-o", type=str, required=True, help="Original-image feature pyramid.")
    parser.add_argument("--features-z", type=str, required=True, help="Zoom-image feature pyramid.")
    _add_vp_args(parser)
    parser.add_argument("--image-dims", type=parse_dims, default=None, help="Image size 'W,H' (default: depth size).")
    parser.add_argument("--out-volume", type=str, required=True, help="Output prefix: PREFIX_o.vol, PREFIX_z.vol.")
    parser.add_argument(
        "--lift-mode-o", type=str, default="vpca", choices=["vpca", "dca"], help="Attention on the original branch."
    )
    parser.add_argument("--out-points", type=str, default=None, help="Write the depth point cloud as PLY.")
    return parser.parse_args(argv)


def get_fuse_args(argv):
    parser = add_pipeline_args(_base_parser("fuse", "Fuse voxel volumes and predict the semantic grid."))
    parser.add_argument("--vol-o", type=str, required=True, help="Original-branch volume.")
    parser.add_argument("--vol-z", type=str, required=True, help="Zoom-branch volume.")
    parser.add_argument("--out-grid", type=str, required=True, help="Output VPOC grid.")
    return parser.parse_args(argv)


def get_density_args(argv):
    parser = add_pipeline_args(_base_parser("density", "Per-depth-band pixel density before and after zoom."))
    parser.add_argument("--depth", type=str, required=True, help="16-bit depth PNG.")
    _add_vp_args(parser, required=False)
    parser.add_argument("--no-zoom", action="store_true", help="Use identity warps.")
    parser.add_argument(
        "--bands", nargs="+", type=parse_band, default=list(DEFAULT_BANDS), help="Depth bands 'lo,hi' (m)."
    )
    parser.add_argument("--out-csv", type=str, default=None, help="CSV report path (default: stdout).")
    parser.add_argument("--out-plot", type=str, default=None, help="Bar chart PNG path.")
    return parser.parse_args(argv)


def get_synth_args(argv):
    parser = add_pipeline_args(_base_parser("synth", "Render the synthetic road scene fixture."))
    parser.add_argument("--scene", type=str, default="road", choices=["road"], help="Scene to render.")
    parser.add_argument("--image-dims", type=parse_dims, default=None, help="Image size 'W,H' (default 1226,370).")
    parser.add_argument("--max-depth", type=float, default=51.2, help="Depth beyond this is invalid (m).")
    parser.add_argument("--out-image", type=str, required=True, help="Output image.")
    parser.add_argument("--out-depth", type=str, required=True, help="Output 16-bit depth PNG.")
    parser.add_argument("--out-vp", type=str, required=True, help="Output VP file.")
    parser.add_argument("--out-calib", type=str, default=None, help="Output KITTI-style calibration.")
    parser.add_argument("--out-features-o", type=str, default=None, help="Stand-in pyramid of the image.")
    parser.add_argument("--out-features-z", type=str, default=None, help="Stand-in pyramid of the zoom image.")
    return parser.parse_args(argv)


SUBCOMMANDS = {
    "zoom": get_zoom_args,
    "sample": get_sample_args,
    "lift": get_lift_args,
    "fuse": get_fuse_args,
    "density": get_density_args,
    "synth": get_synth_args,
}
