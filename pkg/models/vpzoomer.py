"""VP-anchored zoom-in: two source trapezoids sharing a vertical segment through the
vanishing point are warped onto two image-centred rectangles and composited
with a hard seam at x = W/2.
"""
import logging
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from utils.errors import DegenerateQuad, DimensionMismatch, VpOutOfBounds
from utils.geometry import (
    Homography,
    Point2,
    Quad,
    apply_homography,
    homography_from_quads,
    invert_homography,
    to_homogeneous,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class ZoomGeometry:
    vp: Point2
    alpha: float
    width: int
    height: int
    src_left: Quad
    src_right: Quad
    dst_left: Quad
    dst_right: Quad
    h_left: Homography
    h_right: Homography

    @classmethod
    def identity(cls, width, height):
        left = Quad(((0, 0), (width / 2, 0), (width / 2, height), (0, height)))
        right = Quad(((width / 2, 0), (width, 0), (width, height), (width / 2, height)))
        return cls(
            vp=Point2(width / 2, height / 2),
            alpha=0.0,
            width=width,
            height=height,
            src_left=left,
            src_right=right,
            dst_left=left,
            dst_right=right,
            h_left=Homography.identity(),
            h_right=Homography.identity(),
        )


def shared_vertical_line(vp, height, alpha):
    half = alpha * height / 2.0
    return Point2(vp[0], vp[1] - half), Point2(vp[0], vp[1] + half)


def _shared_segment_inside(vp, width, height, alpha):
    if not 0 < alpha < 1:
        raise DegenerateQuad(f"zoom level alpha must lie in (0, 1), got {alpha}")
    s_t, s_b = shared_vertical_line(vp, height, alpha)
    if not (0 < vp[0] < width) or s_t.y < 0 or s_b.y > height:
        raise VpOutOfBounds(
            f"segment {tuple(s_t)}-{tuple(s_b)} through VP {tuple(vp)} leaves the {width}x{height} image"
        )
    return s_t, s_b


def clamp_vp(vp, width, height, alpha):
    """Move the VP inside the image so the shared segment fits (tool-side policy)."""
    half = alpha * height / 2.0
    x = float(np.clip(vp[0], 1.0, width - 1.0))
    y = float(np.clip(vp[1], half, height - half))
    if (x, y) != (vp[0], vp[1]):
        logger.warning(f"VP {tuple(vp)} clamped to ({x:.3f}, {y:.3f}) to fit the zoom segment")
    return Point2(x, y)


def source_trapezoids(vp, width, height, alpha):
    s_t, s_b = _shared_segment_inside(vp, width, height, alpha)
    s_left = Quad(((0.0, 0.0), s_t, s_b, (0.0, height)))
    s_right = Quad((s_t, (width, 0.0), (width, height), s_b))
    return s_left, s_right


def target_rectangles(vp, width, height, alpha):
    s_t, s_b = _shared_segment_inside(vp, width, height, alpha)
    t_t = Point2(width / 2.0, s_t.y / 2.0)
    t_b = Point2(width / 2.0, (height + s_b.y) / 2.0)
    r_left = Quad(((0.0, t_t.y), t_t, t_b, (0.0, t_b.y)))
    r_right = Quad((t_t, (width, t_t.y), (width, t_b.y), t_b))
    return r_left, r_right


def build_zoom_geometry(vp, width, height, alpha):
    vp = Point2(float(vp[0]), float(vp[1]))
    src_left, src_right = source_trapezoids(vp, width, height, alpha)
    dst_left, dst_right = target_rectangles(vp, width, height, alpha)
    geom = ZoomGeometry(
        vp=vp,
        alpha=alpha,
        width=width,
        height=height,
        src_left=src_left,
        src_right=src_right,
        dst_left=dst_left,
        dst_right=dst_right,
        h_left=homography_from_quads(src_left, dst_left),
        h_right=homography_from_quads(src_right, dst_right),
    )
    logger.debug(f"zoom geometry for VP {tuple(vp)}, alpha={alpha}: t_t={dst_left.vertices[1]}")
    return geom


def _sample(img, x, y, interpolation):
    if interpolation == "nearest":
        xi = np.floor(x + 0.5).astype(np.int64)
        yi = np.floor(y + 0.5).astype(np.int64)
        return img[yi, xi]
    if interpolation == "bilinear":
        return np.stack(
            [
                ndimage.map_coordinates(img[..., c], [y, x], order=1, mode="nearest")
                for c in range(img.shape[-1])
            ],
            axis=-1,
        )
    raise ValueError(f"unsupported interpolation {interpolation}")


def warp_image(img, h, out_w, out_h, interpolation="bilinear"):
    """Inverse warp: output pixel q samples img at h^-1(q); preimages off the source are 0."""
    img = np.asarray(img, dtype=np.float64)
    squeeze = img.ndim == 2
    if squeeze:
        img = img[..., None]
    if img.size == 0:
        raise DimensionMismatch("cannot warp an empty image")
    src_h, src_w = img.shape[:2]
    h_inv = invert_homography(h)

    jj, ii = np.meshgrid(np.arange(out_w, dtype=np.float64), np.arange(out_h, dtype=np.float64))
    mapped = to_homogeneous(np.stack([jj.ravel(), ii.ravel()], axis=-1)) @ h_inv.m.T
    w = mapped[:, 2]
    finite = np.abs(w) > 1e-12
    safe_w = np.where(finite, w, 1.0)
    x = mapped[:, 0] / safe_w
    y = mapped[:, 1] / safe_w

    tol = 1e-9
    valid = finite & (x >= -tol) & (x <= src_w - 1 + tol) & (y >= -tol) & (y <= src_h - 1 + tol)
    x = np.clip(np.where(valid, x, 0.0), 0.0, src_w - 1)
    y = np.clip(np.where(valid, y, 0.0), 0.0, src_h - 1)

    out = np.zeros((out_h * out_w, img.shape[-1]))
    out[valid] = _sample(img, x[valid], y[valid], interpolation)
    out = out.reshape(out_h, out_w, img.shape[-1])
    return out[..., 0] if squeeze else out


def synthesize_zoom(img, geom, interpolation="bilinear"):
    img = np.asarray(img)
    if img.shape[:2] != (geom.height, geom.width):
        raise DimensionMismatch(
            f"image is {img.shape[1]}x{img.shape[0]}, zoom geometry expects {geom.width}x{geom.height}"
        )
    left = warp_image(img, geom.h_left, geom.width, geom.height, interpolation)
    right = warp_image(img, geom.h_right, geom.width, geom.height, interpolation)
    mask = np.arange(geom.width) < geom.width / 2.0
    mask = mask.reshape((1, -1) + (1,) * (img.ndim - 2))
    return np.where(mask, left, right)


def zoom_point(geom, p):
    """Position of an original-image point inside the zoom image."""
    h = geom.h_left if p[0] < geom.vp.x else geom.h_right
    return apply_homography(h, Point2(float(p[0]), float(p[1])))


def zoom_points(geom, points):
    """Vectorised zoom_point; returns (N, 2) positions and a mask of finite mappings."""
    points = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    left = points[:, 0] < geom.vp.x
    m = np.where(left[:, None, None], geom.h_left.m, geom.h_right.m)
    mapped = np.einsum("nij,nj->ni", m, to_homogeneous(points))
    # each half stays on its own side of its map's vanishing line, so only |w| matters
    ok = np.abs(mapped[:, 2]) > 1e-12
    out = np.full_like(points, np.nan)
    out[ok] = mapped[ok, :2] / mapped[ok, 2:3]
    return out, ok


class VPZoomer:
    """Callable wrapper: VPZoomer(alpha)(image, vp) -> (zoom image, geometry)."""

    def __init__(self, alpha=0.2, clamp=False, interpolation="bilinear"):
        self.alpha = alpha
        self.clamp = clamp
        self.interpolation = interpolation

    def geometry(self, vp, width, height):
        if self.clamp:
            vp = clamp_vp(vp, width, height, self.alpha)
        return build_zoom_geometry(vp, width, height, self.alpha)

    def __call__(self, img, vp):
        height, width = np.asarray(img).shape[:2]
        geom = self.geometry(vp, width, height)
        return synthesize_zoom(img, geom, self.interpolation), geom
