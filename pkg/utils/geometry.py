"""Projective-geometry primitives shared by the zoomer, the sampler and the voxel lifting.

Points live in the image frame (+x right, +y down, pixel units). Lines are
homogeneous triples (a, b, c) with a*x + b*y + c = 0 and compare up to scale.
Everything here is a pure function on immutable values.
"""
import logging
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from utils.errors import (
    CoincidentPoints,
    DegenerateQuad,
    GeometryError,
    NearSingular,
    NonPositiveDepth,
    ParallelLines,
    PointAtInfinity,
)

logger = logging.getLogger(__name__)

COINCIDENT_EPS = 1e-12
PARALLEL_EPS = 1e-12
INFINITY_EPS = 1e-12
SVD_GAP_EPS = 1e-10
MAX_CONDITION = 1e12


class Point2(NamedTuple):
    x: float
    y: float


class HomogeneousLine(NamedTuple):
    a: float
    b: float
    c: float

    def scaled(self, s):
        return HomogeneousLine(self.a * s, self.b * s, self.c * s)


def to_homogeneous(points):
    # (..., 2) -> (..., 3) with w = 1
    points = np.asarray(points, dtype=np.float64)
    return np.concatenate([points, np.ones(points.shape[:-1] + (1,))], axis=-1)


def lines_through(p, q):
    """Vectorised line_through on (..., 2) arrays, returns (..., 3)."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if np.any(np.linalg.norm(p - q, axis=-1) < COINCIDENT_EPS):
        raise CoincidentPoints("cannot draw a line through coincident points")
    return np.cross(to_homogeneous(p), to_homogeneous(q))


def intersect(l1, l2):
    """Vectorised intersect_lines on (..., 3) arrays, returns (..., 2)."""
    x = np.cross(np.asarray(l1, dtype=np.float64), np.asarray(l2, dtype=np.float64))
    scale = np.abs(x).max(axis=-1)
    if np.any(np.abs(x[..., 2]) < PARALLEL_EPS * scale) or np.any(scale == 0):
        raise ParallelLines("lines do not meet at a finite point")
    return x[..., :2] / x[..., 2:3]


def line_through(p, q):
    return HomogeneousLine(*lines_through(p, q).tolist())


def intersect_lines(l1, l2):
    return Point2(*intersect(l1, l2).tolist())


@dataclass(frozen=True)
class Quad:
    # vertex order: top-left, top-right, bottom-right, bottom-left
    vertices: tuple

    def __post_init__(self):
        vertices = tuple(Point2(float(v[0]), float(v[1])) for v in self.vertices)
        if len(vertices) != 4:
            raise DegenerateQuad(f"a quad needs 4 vertices, got {len(vertices)}")
        pts = np.array(vertices)
        if not np.all(np.isfinite(pts)):
            raise DegenerateQuad("quad vertices must be finite")
        extent = np.ptp(pts, axis=0).max()
        for i in range(4):
            a, b, c = pts[i - 1], pts[i], pts[(i + 1) % 4]
            (ux, uy), (vx, vy) = b - a, c - b
            turn = ux * vy - uy * vx
            if abs(turn) <= 1e-12 * max(extent, 1e-300) ** 2:
                raise DegenerateQuad(f"vertices around index {i} are collinear: {vertices}")
        object.__setattr__(self, "vertices", vertices)

    @classmethod
    def from_points(cls, points):
        return cls(tuple(map(tuple, np.asarray(points, dtype=np.float64))))

    def as_array(self):
        return np.array(self.vertices, dtype=np.float64)

    def area(self):
        # shoelace
        x, y = self.as_array().T
        return 0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


@dataclass(frozen=True, eq=False)
class Homography:
    m: np.ndarray

    def __post_init__(self):
        m = np.array(self.m, dtype=np.float64).reshape(3, 3)
        if not np.all(np.isfinite(m)) or not np.any(m):
            raise NearSingular("homography matrix must be finite and nonzero")
        m = m / np.linalg.norm(m)
        if abs(m[2, 2]) > 1e-9:
            m = m / m[2, 2]
        if abs(np.linalg.det(m)) < 1e-15 * np.linalg.norm(m) ** 3:
            raise NearSingular("homography matrix is singular")
        m.setflags(write=False)
        object.__setattr__(self, "m", m)

    @classmethod
    def identity(cls):
        return cls(np.eye(3))

    def __matmul__(self, other):
        return Homography(self.m @ other.m)

    def allclose(self, other, atol=1e-9):
        return np.allclose(self.m, other.m, rtol=0.0, atol=atol)


def _hartley_normalization(points):
    # translate the centroid to the origin and scale the mean distance to sqrt(2)
    centroid = points.mean(axis=0)
    mean_dist = np.linalg.norm(points - centroid, axis=1).mean()
    if not mean_dist > 0:
        raise DegenerateQuad("all correspondence points coincide")
    s = np.sqrt(2.0) / mean_dist
    t = np.array([[s, 0.0, -s * centroid[0]], [0.0, s, -s * centroid[1]], [0.0, 0.0, 1.0]])
    return (points - centroid) * s, t


def homography_from_points(src, dst):
    """Normalised DLT on four (or more) correspondences, solved through the SVD null space."""
    src = np.asarray(src, dtype=np.float64).reshape(-1, 2)
    dst = np.asarray(dst, dtype=np.float64).reshape(-1, 2)
    if src.shape != dst.shape or src.shape[0] < 4:
        raise DegenerateQuad("need at least four matching correspondences")

    src_n, t_src = _hartley_normalization(src)
    dst_n, t_dst = _hartley_normalization(dst)

    a = np.zeros((2 * src.shape[0], 9))
    for i, ((x, y), (u, v)) in enumerate(zip(src_n, dst_n)):
        a[2 * i] = [-x, -y, -1.0, 0.0, 0.0, 0.0, u * x, u * y, u]
        a[2 * i + 1] = [0.0, 0.0, 0.0, -x, -y, -1.0, v * x, v * y, v]

    _, s, vt = np.linalg.svd(a)
    if s[7] / s[0] < SVD_GAP_EPS:
        raise DegenerateQuad(f"DLT system has more than one null direction (s8/s1={s[7] / s[0]:.3e})")
    h_n = vt[-1].reshape(3, 3)
    return Homography(np.linalg.inv(t_dst) @ h_n @ t_src)


def homography_from_quads(src, dst):
    h = homography_from_points(src.as_array(), dst.as_array())
    if logger.isEnabledFor(logging.DEBUG):
        residual = np.abs(apply_homography(h, src.as_array()) - dst.as_array()).max()
        logger.debug(f"homography vertex residual {residual:.3e} px")
    return h


def _project_rows(m, points):
    mapped = to_homogeneous(points) @ m.T
    return mapped[..., :2], mapped[..., 2]


def apply_homography(h, p):
    """Apply h to a Point2 (returns Point2) or to an (..., 2) array (returns an array)."""
    points = np.asarray(p, dtype=np.float64)
    xy, w = _project_rows(h.m, points)
    if np.any(np.abs(w) < INFINITY_EPS):
        raise PointAtInfinity("point maps to the line at infinity")
    out = xy / w[..., None]
    if isinstance(p, Point2):
        return Point2(*out.tolist())
    return out


def invert_homography(h):
    cond = np.linalg.cond(h.m)
    if not cond <= MAX_CONDITION:
        raise NearSingular(f"homography condition number {cond:.3e} exceeds {MAX_CONDITION:.0e}")
    return Homography(np.linalg.inv(h.m))


def jacobian_determinant(h, p):
    # local area magnification of the projective map at p
    w = h.m[2] @ np.array([p[0], p[1], 1.0])
    return np.linalg.det(h.m) / w**3


@dataclass(frozen=True, eq=False)
class CameraModel:
    fx: float
    fy: float
    cx: float
    cy: float
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise GeometryError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")
        r = np.array(self.rotation, dtype=np.float64).reshape(3, 3)
        t = np.array(self.translation, dtype=np.float64).reshape(3)
        if np.abs(r.T @ r - np.eye(3)).max() > 1e-6:
            raise GeometryError("camera rotation is not orthonormal")
        r.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @property
    def intrinsics(self):
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    def world_to_camera(self, points):
        return np.asarray(points, dtype=np.float64) @ self.rotation.T + self.translation

    def camera_to_world(self, points):
        return (np.asarray(points, dtype=np.float64) - self.translation) @ self.rotation


def back_project(cam, pixel, depth):
    if not depth > 0:
        raise NonPositiveDepth(f"depth must be positive, got {depth}")
    u, v = pixel
    p_cam = np.array([(u - cam.cx) * depth / cam.fx, (v - cam.cy) * depth / cam.fy, depth])
    return cam.camera_to_world(p_cam)


def project(cam, point):
    p_cam = cam.world_to_camera(point)
    if not p_cam[2] > 0:
        raise NonPositiveDepth("point lies behind the camera")
    u = cam.fx * p_cam[0] / p_cam[2] + cam.cx
    v = cam.fy * p_cam[1] / p_cam[2] + cam.cy
    return Point2(u, v), float(p_cam[2])


def project_points(cam, points):
    """Project (N, 3) world points; returns (N, 2) pixels and (N,) camera depths.

    Pixels of points with depth <= 0 are NaN.
    """
    p_cam = cam.world_to_camera(points)
    z = p_cam[..., 2]
    front = z > 0
    safe_z = np.where(front, z, 1.0)
    uv = np.stack(
        [cam.fx * p_cam[..., 0] / safe_z + cam.cx, cam.fy * p_cam[..., 1] / safe_z + cam.cy],
        axis=-1,
    )
    uv[~front] = np.nan
    return uv, z


def back_project_depth(cam, depth, valid):
    """Back-project every valid pixel of an (H, W) depth array to world points (N, 3)."""
    v, u = np.nonzero(valid)
    d = depth[v, u]
    p_cam = np.stack([(u - cam.cx) * d / cam.fx, (v - cam.cy) * d / cam.fy, d], axis=-1)
    return cam.camera_to_world(p_cam)
