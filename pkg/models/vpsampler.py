"""VP-guided sampling grid.

For a reference point r and vanishing point v a cross of four points at offset d
is rotated to face v, then the two side points are replaced by the corners of a
trapezoid whose top and bottom edges run toward v. Together with r this gives
nine points per pyramid level; three levels give the 27-point set consumed by
the VP-guided cross-attention.

All grid helpers broadcast over leading dimensions so the lifting stage can
build grids for every voxel query at once.
"""
from dataclasses import dataclass, field

import numpy as np

from utils.errors import CoincidentVpRef
from utils.geometry import Point2, intersect, lines_through

COINCIDENT_VP_EPS = 1e-9
# smaller offsets collapse to r
MIN_SAMPLE_OFFSET = 1e-6


@dataclass(frozen=True)
class SamplerConfig:
    beta: float = 30.0
    scale_factors: tuple = (1.0, 1.5, 2.0)
    strides: tuple = (4, 8, 16)
    offset_exponent: float = 2.0

    @property
    def num_levels(self):
        return len(self.strides)


@dataclass(frozen=True, eq=False)
class SampleSet:
    reference: Point2
    level: int
    scale_c: float
    offset_d: float
    points: np.ndarray = field(repr=False)

    def as_points(self):
        return [Point2(*p) for p in self.points.tolist()]


def sampling_offset(vp, r, c, beta, exponent=2.0):
    dist = np.linalg.norm(np.asarray(vp, dtype=np.float64) - np.asarray(r, dtype=np.float64), axis=-1)
    return np.clip(c * dist**exponent, 0.0, beta)


def initial_grid(r, d):
    """Cross of four points (l, r, t, b) at distance d from r, shape (..., 4, 2)."""
    r = np.asarray(r, dtype=np.float64)
    d = np.asarray(d, dtype=np.float64)[..., None]
    zero = np.zeros_like(d)
    offsets = np.stack(
        [
            np.concatenate([-d, zero], axis=-1),
            np.concatenate([d, zero], axis=-1),
            np.concatenate([zero, -d], axis=-1),
            np.concatenate([zero, d], axis=-1),
        ],
        axis=-2,
    )
    return r[..., None, :] + offsets


def rotate_grid(grid, r, vp):
    """Rotate the cross about r by atan2(v - r) so o_r points at the VP."""
    grid = np.asarray(grid, dtype=np.float64)
    r = np.asarray(r, dtype=np.float64)
    delta = np.asarray(vp, dtype=np.float64) - r
    if np.any(np.linalg.norm(delta, axis=-1) < COINCIDENT_VP_EPS):
        raise CoincidentVpRef("reference point coincides with the vanishing point")
    theta = np.arctan2(delta[..., 1], delta[..., 0])
    cos, sin = np.cos(theta)[..., None], np.sin(theta)[..., None]
    rel = grid - r[..., None, :]
    return np.stack(
        [cos * rel[..., 0] - sin * rel[..., 1], sin * rel[..., 0] + cos * rel[..., 1]], axis=-1
    ) + r[..., None, :]


def intersection_grid(rotated, vp):
    """Trapezoid corners (tl, tr, bl, br) from the rotated cross, shape (..., 4, 2)."""
    rotated = np.asarray(rotated, dtype=np.float64)
    vp = np.broadcast_to(np.asarray(vp, dtype=np.float64), rotated.shape[:-2] + (2,))
    o_l, o_r, o_t, o_b = (rotated[..., i, :] for i in range(4))

    l_t = lines_through(vp, o_t)
    l_b = lines_through(vp, o_b)
    direction = o_t - o_b
    l_l = lines_through(o_l, o_l + direction)
    l_r = lines_through(o_r, o_r + direction)

    return np.stack(
        [intersect(l_l, l_t), intersect(l_r, l_t), intersect(l_l, l_b), intersect(l_r, l_b)],
        axis=-2,
    )


def sample_grid(vp, refs, level, config, bounds=None):
    """Nine-point grids for many reference points of one level.

    vp: (2,) or one VP per reference (N, 2); refs: (N, 2). Both in feature-map
    coordinates of the level.
    bounds: optional (w, h) of the level; points are clamped into [0, w-1] x [0, h-1].
    Returns (N, 9, 2) points and (N,) offsets.
    """
    refs = np.asarray(refs, dtype=np.float64).reshape(-1, 2)
    vp = np.broadcast_to(np.asarray(vp, dtype=np.float64), refs.shape)
    c = config.scale_factors[level]
    d = sampling_offset(vp, refs, c, config.beta, config.offset_exponent)

    # a query sitting on or next to the VP collapses to r
    points = np.repeat(refs[:, None, :], 9, axis=1)
    live = (np.linalg.norm(vp - refs, axis=-1) >= COINCIDENT_VP_EPS) & (d >= MIN_SAMPLE_OFFSET)
    if np.any(live):
        rotated = rotate_grid(initial_grid(refs[live], d[live]), refs[live], vp[live])
        points[live, 0:4] = rotated
        points[live, 4:8] = intersection_grid(rotated, vp[live])

    if bounds is not None:
        w, h = bounds
        points[..., 0] = np.clip(points[..., 0], 0.0, w - 1)
        points[..., 1] = np.clip(points[..., 1], 0.0, h - 1)
    return points, d


def sample_points(vp, r, level, config, bounds=None):
    points, d = sample_grid(vp, np.asarray(r, dtype=np.float64)[None], level, config, bounds)
    return SampleSet(
        reference=Point2(*points[0, 8].tolist()),
        level=level,
        scale_c=config.scale_factors[level],
        offset_d=float(d[0]),
        points=points[0],
    )


def multi_scale_grid(vp_full, refs_full, pyramid_dims, config):
    """(N, L, 9, 2) level-coordinate grids for full-image reference points."""
    vp_full = np.asarray(vp_full, dtype=np.float64)
    refs_full = np.asarray(refs_full, dtype=np.float64).reshape(-1, 2)
    grids = []
    for level, (stride, (h, w)) in enumerate(zip(config.strides, pyramid_dims)):
        points, _ = sample_grid(vp_full / stride, refs_full / stride, level, config, bounds=(w, h))
        grids.append(points)
    return np.stack(grids, axis=1)


def multi_scale_samples(vp_full, r_full, pyramid_dims, config=None):
    config = config or SamplerConfig()
    if len(pyramid_dims) != config.num_levels:
        raise ValueError(f"expected {config.num_levels} pyramid levels, got {len(pyramid_dims)}")
    vp_full = np.asarray(vp_full, dtype=np.float64)
    r_full = np.asarray(r_full, dtype=np.float64)
    return [
        sample_points(vp_full / stride, r_full / stride, level, config, bounds=(w, h))
        for level, (stride, (h, w)) in enumerate(zip(config.strides, pyramid_dims))
    ]
