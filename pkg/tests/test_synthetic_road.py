import numpy as np
import pytest

from dataset.synthetic_road import (
    KITTI_HEIGHT,
    KITTI_WIDTH,
    ROAD,
    SKY,
    Box,
    SyntheticRoadScene,
    default_camera,
    image_feature_pyramid,
    ray_box_hits,
    render_road_scene,
    vanishing_point,
)
from utils.errors import PointAtInfinity
from utils.utils import pyramid_dims


def test_road_vanishes_at_principal_point(road_scene):
    cam = road_scene.cam
    assert road_scene.vp == pytest.approx((cam.cx, cam.cy))
    assert road_scene.vp == pytest.approx((613.0, 185.0))


def test_vanishing_point_rejects_backward_direction():
    with pytest.raises(PointAtInfinity):
        vanishing_point(default_camera(), (0.0, 0.0, -1.0))


def test_scene_layout(road_scene):
    assert road_scene.image.shape == (KITTI_HEIGHT, KITTI_WIDTH, 3)
    assert road_scene.image.min() >= 0.0 and road_scene.image.max() <= 1.0
    assert road_scene.depth.shape == road_scene.labels.shape == (KITTI_HEIGHT, KITTI_WIDTH)
    # top rows are sky, the bottom row is road close to the camera
    assert (road_scene.labels[0] == SKY).all() and not road_scene.depth[0].any()
    assert (road_scene.labels[-1] == ROAD).all()
    assert (road_scene.depth[-1] > 0).all() and road_scene.depth[-1].max() < 7.0
    assert road_scene.depth.max() <= road_scene.max_depth


def test_ground_depth_follows_camera_height(road_scene):
    cam = road_scene.cam
    v = 300
    expected = 1.65 * cam.fy / (v - cam.cy)
    assert road_scene.depth[v, 50] == pytest.approx(expected)


def test_ray_box_hits():
    rays = np.array([[0.0, 0.0, 1.0], [1.0, 0.0, 0.0], [0.0, 0.0, -1.0]])
    t = ray_box_hits(rays, np.array([-1.0, -1.0, 5.0]), np.array([1.0, 1.0, 6.0]))
    assert t[0] == 5.0
    assert np.isinf(t[1]) and np.isinf(t[2])


def test_box_footprint_shrinks_with_distance():
    near = SyntheticRoadScene(boxes=[Box(x=0.0, z_near=10.0)])
    far = SyntheticRoadScene(boxes=[Box(x=0.0, z_near=40.0)])
    ratio = near.footprint(ROAD + 1) / far.footprint(ROAD + 1)
    assert ratio == pytest.approx(16.0, rel=0.2)


def test_boxes_get_their_own_labels(road_scene):
    assert road_scene.footprint(ROAD + 1) > road_scene.footprint(ROAD + 2) > 0


def test_feature_pyramid_shapes_and_seed():
    image, _, _ = render_road_scene(width=100, height=60)
    levels = image_feature_pyramid(image, channels=8, seed=3)
    assert [level.shape[:2] for level in levels] == pyramid_dims(100, 60, (4, 8, 16))
    assert all(level.shape[2] == 8 and np.abs(level).max() < 1.0 for level in levels)
    again = image_feature_pyramid(image, channels=8, seed=3)
    assert all(np.array_equal(a, b) for a, b in zip(levels, again))
    assert not np.array_equal(levels[0], image_feature_pyramid(image, channels=8, seed=4)[0])
