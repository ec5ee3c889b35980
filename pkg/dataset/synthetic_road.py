"""Synthetic road scene: a checkered ground plane and upright boxes, ray cast through a pinhole camera.

The camera frame is the world frame here (x right, y down, z forward) and the
ground is the plane y = camera_height, so the road direction (0, 0, 1)
vanishes at the principal point. Depth is the camera z of the first hit;
sky and hits beyond max_depth are invalid (0).
"""
import logging
from typing import NamedTuple

import numpy as np

from utils.errors import PointAtInfinity
from utils.geometry import CameraModel, Point2

logger = logging.getLogger(__name__)

KITTI_WIDTH, KITTI_HEIGHT = 1226, 370
CAMERA_HEIGHT = 1.65

SKY, ROAD = 0, 1


class Box(NamedTuple):
    # lateral center, near face depth, extent along x / y / z; standing on the ground
    x: float
    z_near: float
    width: float = 1.8
    height: float = 2.0
    length: float = 0.5
    color: tuple = (0.8, 0.2, 0.2)

    def bounds(self, camera_height=CAMERA_HEIGHT):
        lo = np.array([self.x - self.width / 2, camera_height - self.height, self.z_near])
        hi = np.array([self.x + self.width / 2, camera_height, self.z_near + self.length])
        return lo, hi


DEFAULT_BOXES = (
    Box(x=-3.0, z_near=10.0, color=(0.8, 0.2, 0.2)),
    Box(x=3.0, z_near=40.0, color=(0.2, 0.3, 0.8)),
)


def default_camera():
    # KITTI odometry camera 2 intrinsics, image centred principal point
    return CameraModel(fx=707.0912, fy=707.0912, cx=KITTI_WIDTH / 2, cy=KITTI_HEIGHT / 2)


def vanishing_point(cam, direction):
    """Image of the point at infinity along a world direction."""
    d = cam.rotation @ np.asarray(direction, dtype=np.float64)
    if not d[2] > 1e-12:
        raise PointAtInfinity(f"direction {tuple(direction)} does not point in front of the camera")
    return Point2(cam.fx * d[0] / d[2] + cam.cx, cam.fy * d[1] / d[2] + cam.cy)


def _pixel_rays(cam, width, height):
    # camera-frame directions with unit z, so the ray parameter is the depth
    u, v = np.meshgrid(np.arange(width, dtype=np.float64), np.arange(height, dtype=np.float64))
    return np.stack([(u - cam.cx) / cam.fx, (v - cam.cy) / cam.fy, np.ones_like(u)], axis=-1)


def ray_box_hits(rays, lo, hi):
    """Slab test for rays from the origin; returns entry depth per ray, inf on a miss."""
    t_near = np.full(rays.shape[:-1], -np.inf)
    t_far = np.full(rays.shape[:-1], np.inf)
    for axis in range(3):
        d = rays[..., axis]
        moving = d != 0
        safe = np.where(moving, d, 1.0)
        t1, t2 = lo[axis] / safe, hi[axis] / safe
        inside = (lo[axis] <= 0) & (hi[axis] >= 0)
        near = np.where(moving, np.minimum(t1, t2), -np.inf if inside else np.inf)
        far = np.where(moving, np.maximum(t1, t2), np.inf if inside else -np.inf)
        t_near = np.maximum(t_near, near)
        t_far = np.minimum(t_far, far)
    hit = (t_near <= t_far) & (t_near > 0)
    return np.where(hit, t_near, np.inf)


def render_road_scene(
    cam=None,
    width=KITTI_WIDTH,
    height=KITTI_HEIGHT,
    boxes=DEFAULT_BOXES,
    camera_height=CAMERA_HEIGHT,
    max_depth=51.2,
    checker_size=2.0,
):
    """Returns an (H, W, 3) image in [0, 1], an (H, W) depth map and (H, W) labels (0 sky, 1 road, 2+ boxes)."""
    cam = cam or default_camera()
    rays = _pixel_rays(cam, width, height)

    # ground plane y = camera_height, reached only by rays pointing down
    down = rays[..., 1] > 0
    t_ground = np.where(down, camera_height / np.where(down, rays[..., 1], 1.0), np.inf)
    depth = t_ground.copy()
    labels = np.where(down, ROAD, SKY).astype(np.uint8)

    hits = rays * np.where(down, t_ground, 0.0)[..., None]
    checker = (np.floor(hits[..., 0] / checker_size) + np.floor(hits[..., 2] / checker_size)) % 2
    shade = np.where(checker == 0, 0.35, 0.55)
    sky = np.linspace(0.9, 0.6, height)[:, None] * np.ones((1, width))
    image = np.where(down[..., None], shade[..., None] * np.ones(3), np.stack([0.5 * sky, 0.7 * sky, sky], -1))

    for i, box in enumerate(boxes):
        t = ray_box_hits(rays, *box.bounds(camera_height))
        closer = t < depth
        depth = np.where(closer, t, depth)
        labels[closer] = ROAD + 1 + i
        image[closer] = box.color

    valid = np.isfinite(depth) & (depth <= max_depth)
    depth = np.where(valid, depth, 0.0)
    logger.debug(f"rendered {width}x{height} road scene, {np.count_nonzero(valid)} valid depth pixels")
    return image, depth, labels


def image_feature_pyramid(img, channels=32, strides=(4, 8, 16), seed=42):
    """Stand-in features: block-averaged pixels through a seeded random projection and tanh."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 2:
        img = img[..., None]
    rng = np.random.default_rng(seed)
    weight = rng.normal(0.0, 1.0, size=(img.shape[2], channels))
    bias = rng.uniform(-0.5, 0.5, size=channels)
    levels = []
    for s in strides:
        h, w = -(-img.shape[0] // s), -(-img.shape[1] // s)
        padded = np.pad(img, ((0, h * s - img.shape[0]), (0, w * s - img.shape[1]), (0, 0)), mode="edge")
        pooled = padded.reshape(h, s, w, s, -1).mean(axis=(1, 3))
        levels.append(np.tanh(pooled @ weight + bias))
    return levels


class SyntheticRoadScene:
    """Matched image / depth / VP / camera for end-to-end runs."""

    def __init__(self, cam=None, width=KITTI_WIDTH, height=KITTI_HEIGHT, boxes=DEFAULT_BOXES, max_depth=51.2):
        self.cam = cam or default_camera()
        self.width = width
        self.height = height
        self.boxes = tuple(boxes)
        self.max_depth = max_depth
        self.image, self.depth, self.labels = render_road_scene(
            self.cam, width, height, self.boxes, max_depth=max_depth
        )

    @property
    def vp(self):
        return vanishing_point(self.cam, (0.0, 0.0, 1.0))

    def footprint(self, label):
        return int(np.count_nonzero(self.labels == label))
