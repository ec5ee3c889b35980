"""Depth-proposed voxel queries and attention lifting of 2D feature pyramids into voxel volumes.

VPCrossAttention samples the original-image pyramid on the VP-guided grid of
models/vpsampler.py, DeformableCrossAttention samples the zoom-image pyramid
at predicted offsets around the reference point. Both use one head and a
softmax taken jointly over every level and point.
"""
import logging
import math
import warnings
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F
from tqdm import tqdm

from models.vpsampler import SamplerConfig, multi_scale_grid
from models.vpzoomer import zoom_points
from utils.errors import DimensionMismatch, EmptyProposal
from utils.geometry import Point2, back_project_depth, project_points

logger = logging.getLogger(__name__)

MAX_DEPTH = 200.0


@dataclass(eq=False)
class DepthMap:
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise DimensionMismatch(f"depth map must be 2D, got shape {self.values.shape}")

    @property
    def height(self):
        return self.values.shape[0]

    @property
    def width(self):
        return self.values.shape[1]

    @property
    def valid(self):
        v = self.values
        return np.isfinite(v) & (v > 0) & (v < MAX_DEPTH)


@dataclass(frozen=True)
class VoxelGridSpec:
    dims: tuple = (128, 128, 8)
    origin: tuple = (0.0, -25.6, -2.0)
    voxel_size: tuple = (0.4, 0.4, 0.8)

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        origin = tuple(float(o) for o in self.origin)
        size = tuple(float(s) for s in self.voxel_size)
        if len(dims) != 3 or len(origin) != 3 or len(size) != 3:
            raise DimensionMismatch("grid dims, origin and voxel size need three components each")
        if min(dims) <= 0 or min(size) <= 0:
            raise DimensionMismatch(f"grid dims {dims} and voxel size {size} must be positive")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "voxel_size", size)

    @property
    def num_voxels(self):
        return math.prod(self.dims)

    def centers(self, indices):
        indices = np.asarray(indices, dtype=np.float64).reshape(-1, 3)
        return np.asarray(self.origin) + (indices + 0.5) * np.asarray(self.voxel_size)


@dataclass(eq=False)
class VoxelQueryGrid:
    spec: VoxelGridSpec
    occupancy: np.ndarray
    # (N, 3) occupied voxel indices in np.argwhere order, one query row each
    indices: np.ndarray
    queries: np.ndarray

    @property
    def channels(self):
        return self.queries.shape[1]

    def __len__(self):
        return len(self.indices)


class VoxelProjection(NamedTuple):
    pixel: Point2
    depth: float
    behind: bool
    in_view: bool


def initial_query_volume(spec, channels, seed=42):
    # seeded uniform values in [-0.1, 0.1] for every voxel of the grid
    rng = np.random.default_rng(seed)
    return rng.uniform(-0.1, 0.1, size=spec.dims + (channels,))


def voxelize(points, spec):
    """Voxel index of each world point under half-open bounds; returns (N, 3) indices and an inside mask."""
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    origin = np.asarray(spec.origin)
    size = np.asarray(spec.voxel_size)
    idx = np.floor((points - origin) / size).astype(np.int64)
    # floor of a quotient can land one cell off the bounds origin + i * size
    idx += points >= origin + (idx + 1) * size
    idx -= points < origin + idx * size
    inside = np.all((idx >= 0) & (idx < np.asarray(spec.dims)), axis=1)
    return idx, inside


def propose_voxel_queries(depth, cam, spec, init_queries):
    """Occupy every voxel hit by a back-projected depth point and give it its initial query."""
    if not isinstance(depth, DepthMap):
        depth = DepthMap(depth)
    init_queries = np.asarray(init_queries, dtype=np.float64)
    if init_queries.shape[:3] != spec.dims:
        raise DimensionMismatch(f"initial queries {init_queries.shape[:3]} do not match grid {spec.dims}")

    points = back_project_depth(cam, depth.values, depth.valid)
    idx, inside = voxelize(points, spec)
    occupancy = np.zeros(spec.dims, dtype=bool)
    occupancy[tuple(idx[inside].T)] = True

    indices = np.argwhere(occupancy)
    if len(indices) == 0:
        warnings.warn(f"no voxel of the {spec.dims} grid received a depth point", EmptyProposal)
    logger.info(f"{len(points)} depth points occupy {len(indices)} of {spec.num_voxels} voxels")
    return VoxelQueryGrid(
        spec=spec,
        occupancy=occupancy,
        indices=indices,
        queries=init_queries[occupancy],
    )


def project_voxel_centers(spec, indices, cam, width=None, height=None):
    """Project voxel centers; returns (N, 2) pixels, (N,) depths and an in-view mask."""
    uv, z = project_points(cam, spec.centers(indices))
    in_view = z > 0
    if width is not None and height is not None:
        with np.errstate(invalid="ignore"):
            in_view &= (uv[:, 0] >= 0) & (uv[:, 0] < width) & (uv[:, 1] >= 0) & (uv[:, 1] < height)
    return uv, z, in_view


def project_voxel_center(spec, index, cam, width=None, height=None):
    index = np.asarray(index)
    if np.any(index < 0) or np.any(index >= np.asarray(spec.dims)):
        raise DimensionMismatch(f"voxel index {tuple(index)} outside grid {spec.dims}")
    uv, z, in_view = project_voxel_centers(spec, index[None], cam, width, height)
    return VoxelProjection(Point2(*uv[0].tolist()), float(z[0]), bool(z[0] <= 0), bool(in_view[0]))


def check_pyramid(pyramid, num_levels=3):
    if len(pyramid) != num_levels:
        raise DimensionMismatch(f"expected {num_levels} pyramid levels, got {len(pyramid)}")
    channels = {np.shape(level)[-1] for level in pyramid}
    if len(channels) != 1 or any(np.ndim(level) != 3 for level in pyramid):
        raise DimensionMismatch(f"pyramid levels must be (h, w, C) with one C, got {[np.shape(l) for l in pyramid]}")
    for level in pyramid:
        if not np.all(np.isfinite(level)):
            raise DimensionMismatch("pyramid holds non-finite features")
    return channels.pop()


def _to_level_tensor(level):
    # (h, w, C) -> (1, C, h, w) float64
    return torch.as_tensor(np.asarray(level, dtype=np.float64)).permute(2, 0, 1)[None].contiguous()


def _normalize(coord, size):
    if size == 1:
        return torch.zeros_like(coord)
    return 2.0 * coord / (size - 1) - 1.0


def _grid_sample_level(level_t, points):
    """Bilinear samples of a (1, C, h, w) tensor at (N, P, 2) pixel points -> (N, P, C)."""
    _, _, h, w = level_t.shape
    points = torch.as_tensor(points, dtype=torch.float64)
    grid = torch.stack([_normalize(points[..., 0], w), _normalize(points[..., 1], h)], dim=-1)
    out = F.grid_sample(level_t, grid[None], mode="bilinear", padding_mode="border", align_corners=True)
    return out[0].permute(1, 2, 0)


def bilinear_sample(level, p):
    """Bilinear blend of the 4 neighbours of p in an (h, w, C) grid, p clamped into the grid."""
    level = np.asarray(level, dtype=np.float64)
    h, w = level.shape[:2]
    x = min(max(float(p[0]), 0.0), w - 1.0)
    y = min(max(float(p[1]), 0.0), h - 1.0)
    return _grid_sample_level(_to_level_tensor(level), [[[x, y]]])[0, 0].numpy()


def sample_pyramid(pyramid_t, grid):
    """Sample every level at its (N, L, P, 2) grid points -> (N, L, P, C)."""
    grid = torch.as_tensor(grid, dtype=torch.float64)
    return torch.stack([_grid_sample_level(level_t, grid[:, l]) for l, level_t in enumerate(pyramid_t)], dim=1)


def weighted_sum(logits, values):
    """Softmax over all samples of each query, then the weighted sum of (N, S, C) values."""
    weights = torch.softmax(logits, dim=-1)
    return torch.einsum("ns,nsc->nc", weights, values), weights


class VPCrossAttention(nn.Module):
    def __init__(self, channels=32, num_levels=3, num_points=9, seed=42):
        super().__init__()
        self.channels = channels
        self.num_levels = num_levels
        self.num_points = num_points
        self.attention_weights = nn.Linear(channels, num_levels * num_points, bias=False, dtype=torch.float64)
        self.value_proj = nn.ModuleList(
            [nn.Linear(channels, channels, bias=False, dtype=torch.float64) for _ in range(num_levels)]
        )
        self.init_weights(seed)

    def init_weights(self, seed):
        generator = torch.Generator().manual_seed(seed)
        with torch.no_grad():
            for param in self.parameters():
                bound = 1.0 / math.sqrt(param.shape[-1])
                param.uniform_(-bound, bound, generator=generator)

    def project_values(self, sampled):
        # (N, L, P, C) -> (N, L*P, C), each level through its own projection
        projected = torch.stack([self.value_proj[l](sampled[:, l]) for l in range(self.num_levels)], dim=1)
        return projected.reshape(sampled.shape[0], -1, self.channels)

    def forward(self, queries, sampled):
        """queries (N, C), sampled features (N, L, P, C) -> outputs (N, C), attention (N, L*P)."""
        logits = self.attention_weights(queries)
        return weighted_sum(logits, self.project_values(sampled))


class DeformableCrossAttention(VPCrossAttention):
    def __init__(self, channels=32, num_levels=3, num_points=9, max_offset=4.0, seed=43):
        super().__init__(channels, num_levels, num_points, seed)
        self.max_offset = max_offset
        self.sampling_offsets = nn.Linear(channels, num_levels * num_points * 2, bias=False, dtype=torch.float64)
        self.init_weights(seed)

    def sampling_locations(self, queries, refs, level_dims):
        """Per-level reference points (N, L, 2) plus bounded offsets -> (N, L, P, 2), clamped per level."""
        n = queries.shape[0]
        offsets = torch.tanh(self.sampling_offsets(queries)).view(n, self.num_levels, self.num_points, 2)
        locations = torch.as_tensor(refs, dtype=torch.float64)[:, :, None, :] + offsets * self.max_offset
        bounds = torch.tensor([[w - 1, h - 1] for h, w in level_dims], dtype=torch.float64)
        return torch.minimum(locations.clamp(min=0.0), bounds[None, :, None, :])


def _level_dims(pyramid):
    return [tuple(np.shape(level)[:2]) for level in pyramid]


def level_references(r_full, config, level_dims):
    """Full-image reference points (N, 2) -> per-level points (N, L, 2) clamped into each level."""
    r_full = np.asarray(r_full, dtype=np.float64).reshape(-1, 2)
    refs = np.stack([r_full / s for s in config.strides], axis=1)
    for l, (h, w) in enumerate(level_dims):
        refs[:, l, 0] = np.clip(refs[:, l, 0], 0.0, w - 1)
        refs[:, l, 1] = np.clip(refs[:, l, 1], 0.0, h - 1)
    return refs


def vpca(query, r_full, vp_full, pyramid, attn, config=None):
    config = config or SamplerConfig()
    check_pyramid(pyramid, config.num_levels)
    grid = multi_scale_grid(vp_full, [r_full], _level_dims(pyramid), config)
    with torch.no_grad():
        sampled = sample_pyramid([_to_level_tensor(l) for l in pyramid], grid)
        out, _ = attn(torch.as_tensor(np.asarray(query, dtype=np.float64))[None], sampled)
    return out[0].numpy()


def dca(query, r_full, pyramid, attn, config=None):
    config = config or SamplerConfig()
    check_pyramid(pyramid, config.num_levels)
    dims = _level_dims(pyramid)
    with torch.no_grad():
        q = torch.as_tensor(np.asarray(query, dtype=np.float64))[None]
        locations = attn.sampling_locations(q, level_references([r_full], config, dims), dims)
        sampled = sample_pyramid([_to_level_tensor(l) for l in pyramid], locations)
        out, _ = attn(q, sampled)
    return out[0].numpy()


def lift_volume(
    queries, pyramid, vp, cam, mode, attn, image_size, config=None, zoom=None, chunk_size=4096, progress=False
):
    """Attention outputs for every occupied, in-view voxel; every other voxel stays zero.

    mode "vpca" samples on the VP-guided grid around the voxel's projection,
    mode "dca" on learned offsets. With a zoom geometry the dca reference
    points are first moved into the zoom image.
    """
    config = config or SamplerConfig()
    channels = check_pyramid(pyramid, config.num_levels)
    if channels != attn.channels or queries.channels != attn.channels:
        raise DimensionMismatch(
            f"channel widths differ: pyramid {channels}, queries {queries.channels}, attention {attn.channels}"
        )
    if mode not in ("vpca", "dca"):
        raise ValueError(f"unknown lifting mode {mode}")

    width, height = image_size
    spec = queries.spec
    volume = np.zeros(spec.dims + (channels,))
    if len(queries) == 0:
        return volume

    uv, _, in_view = project_voxel_centers(spec, queries.indices, cam, width, height)
    if mode == "dca" and zoom is not None:
        uv, ok = zoom_points(zoom, np.where(in_view[:, None], uv, 0.0))
        in_view &= ok
        with np.errstate(invalid="ignore"):
            in_view &= (uv[:, 0] >= 0) & (uv[:, 0] < width) & (uv[:, 1] >= 0) & (uv[:, 1] < height)

    rows = np.flatnonzero(in_view)
    logger.info(f"{mode}: lifting {len(rows)} in-view queries of {len(queries)}")
    dims = _level_dims(pyramid)
    pyramid_t = [_to_level_tensor(l) for l in pyramid]
    out = np.zeros((len(rows), channels))

    with torch.no_grad():
        for start in tqdm(range(0, len(rows), chunk_size), desc=mode, disable=not progress):
            sel = rows[start : start + chunk_size]
            q = torch.as_tensor(queries.queries[sel])
            if mode == "vpca":
                locations = multi_scale_grid(vp, uv[sel], dims, config)
            else:
                locations = attn.sampling_locations(q, level_references(uv[sel], config, dims), dims)
            values, _ = attn(q, sample_pyramid(pyramid_t, locations))
            out[start : start + len(sel)] = values.numpy()

    volume[tuple(queries.indices[rows].T)] = out
    return volume
