import logging
import sys

import numpy as np
import torch

from models.vpsampler import SamplerConfig
from models.lifting import VoxelGridSpec
from utils.errors import DimensionMismatch


def setup_logging(log_file=None, verbose=False):
    # one configuration per process; repeated CLI calls in a test session replace it
    handlers = [logging.StreamHandler(sys.stderr)]
    if log_file:
        handlers.append(logging.FileHandler(log_file, mode="w"))
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(message)s",
        handlers=handlers,
        force=True,
    )


def log_string(out_str):
    logging.info(out_str)


def log_args(args):
    log_string("input params:")
    for key, value in sorted(vars(args).items()):
        log_string(f"  {key}: {value}")


def set_threads(threads):
    if threads < 1:
        raise ValueError(f"thread count must be positive, got {threads}")
    torch.set_num_threads(threads)


def sampler_config(args):
    if len(args.scale_factors) != len(args.strides):
        raise DimensionMismatch(
            f"{len(args.scale_factors)} scale factors for {len(args.strides)} pyramid strides"
        )
    return SamplerConfig(
        beta=args.beta,
        scale_factors=tuple(args.scale_factors),
        strides=tuple(args.strides),
        offset_exponent=args.offset_exponent,
    )


def grid_spec(args):
    return VoxelGridSpec(dims=tuple(args.grid_dims), origin=tuple(args.grid_origin), voxel_size=tuple(args.voxel_size))


def pyramid_dims(width, height, strides):
    # (h, w) per level, rounding up
    return [(int(np.ceil(height / s)), int(np.ceil(width / s))) for s in strides]
