import numpy as np
import pytest

from utils.errors import CoincidentPoints, DegenerateQuad, NonPositiveDepth, ParallelLines, PointAtInfinity
from utils.geometry import (
    CameraModel,
    Homography,
    HomogeneousLine,
    Point2,
    Quad,
    apply_homography,
    back_project,
    back_project_depth,
    homography_from_points,
    homography_from_quads,
    intersect_lines,
    invert_homography,
    jacobian_determinant,
    line_through,
    project,
)

UNIT_SQUARE = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])


def _same_line(l1, l2):
    a, b = np.asarray(l1), np.asarray(l2)
    return np.allclose(np.cross(a, b), 0.0, atol=1e-9 * np.abs(a).max() * np.abs(b).max())


def test_line_through_axis_and_vertical():
    assert _same_line(line_through((0, 0), (1, 0)), (0, 1, 0))
    assert _same_line(line_through((613, 148), (613, 222)), (1, 0, -613))


def test_line_through_coincident_points():
    with pytest.raises(CoincidentPoints):
        line_through((5, 5), (5, 5))


@pytest.mark.parametrize(
    "l1, l2, expected",
    [
        (HomogeneousLine(1, 0, -1), HomogeneousLine(0, 1, -2), (1, 2)),
        (HomogeneousLine(1, -1, 0), HomogeneousLine(1, 1, -4), (2, 2)),
    ],
    ids=["axis", "diagonals"],
)
def test_intersect_lines(l1, l2, expected):
    p = intersect_lines(l1, l2)
    assert isinstance(p, Point2)
    np.testing.assert_allclose(p, expected, atol=1e-12)


def test_intersect_parallel_lines():
    with pytest.raises(ParallelLines):
        intersect_lines(HomogeneousLine(0, 1, 0), HomogeneousLine(0, 1, -1))


@pytest.mark.parametrize("s", [-3.0, 1e-4, 2.5, 1e6])
def test_intersection_is_scale_invariant(s):
    l1, l2 = HomogeneousLine(1, -1, 0), HomogeneousLine(1, 1, -4)
    np.testing.assert_allclose(intersect_lines(l1.scaled(s), l2), intersect_lines(l1, l2), atol=1e-9)


def test_quad_rejects_collinear_vertices():
    with pytest.raises(DegenerateQuad):
        Quad(((0, 0), (1, 0), (2, 0), (0, 1)))
    with pytest.raises(DegenerateQuad):
        Quad(((0, 0), (1, 0), (1, 1)))


def test_quad_area():
    assert Quad.from_points(UNIT_SQUARE * 3).area() == pytest.approx(9.0)


def test_homography_identity_and_scale():
    h = homography_from_points(UNIT_SQUARE, UNIT_SQUARE)
    np.testing.assert_allclose(h.m, np.eye(3), atol=1e-12)
    h2 = homography_from_points(UNIT_SQUARE, 2 * UNIT_SQUARE)
    np.testing.assert_allclose(h2.m, np.diag([2.0, 2.0, 1.0]), atol=1e-12)


def test_homography_random_quads_vertex_exact(rng):
    for _ in range(50):
        src = np.array([[0, 0], [1, 0], [1, 1], [0, 1]]) * 400 + rng.uniform(-60, 60, size=(4, 2))
        dst = np.array([[0, 0], [1, 0], [1, 1], [0, 1]]) * 600 + rng.uniform(-90, 90, size=(4, 2))
        h = homography_from_quads(Quad.from_points(src), Quad.from_points(dst))
        assert np.abs(apply_homography(h, src) - dst).max() < 1e-6


def test_homography_matches_fixed_h33_solve():
    src = np.array([[0.0, 0.0], [613.0, 148.0], [613.0, 222.0], [0.0, 370.0]])
    dst = np.array([[0.0, 74.0], [613.0, 74.0], [613.0, 296.0], [0.0, 296.0]])
    # independent 8x8 system with h33 = 1
    a, b = [], []
    for (x, y), (u, v) in zip(src, dst):
        a.append([x, y, 1, 0, 0, 0, -u * x, -u * y])
        b.append(u)
        a.append([0, 0, 0, x, y, 1, -v * x, -v * y])
        b.append(v)
    h8 = np.append(np.linalg.solve(np.array(a), np.array(b)), 1.0).reshape(3, 3)
    h = homography_from_points(src, dst)
    np.testing.assert_allclose(h.m, h8, rtol=1e-8, atol=1e-10)


def test_degenerate_correspondences():
    src = np.array([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0], [3.0, 3.0]])
    with pytest.raises(DegenerateQuad):
        homography_from_points(src, UNIT_SQUARE)


def test_apply_homography():
    assert apply_homography(Homography.identity(), Point2(7, 3)) == pytest.approx((7, 3))
    assert apply_homography(Homography(np.diag([2.0, 2.0, 1.0])), Point2(1, 1)) == pytest.approx((2, 2))


def test_apply_homography_point_at_infinity():
    h = Homography(np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [1.0, 0.0, 1.0]]))
    with pytest.raises(PointAtInfinity):
        apply_homography(h, Point2(-1.0, 0.0))


def test_invert_homography():
    np.testing.assert_allclose(invert_homography(Homography.identity()).m, np.eye(3))
    np.testing.assert_allclose(
        invert_homography(Homography(np.diag([2.0, 2.0, 1.0]))).m, np.diag([0.5, 0.5, 1.0]), atol=1e-15
    )


def test_invert_round_trip(rng):
    m = np.eye(3) + rng.uniform(-0.1, 0.1, size=(3, 3)) * np.array([[1, 1, 100], [1, 1, 100], [1e-4, 1e-4, 0]])
    h = Homography(m)
    h_inv = invert_homography(h)
    points = rng.uniform(0, [1226, 370], size=(1000, 2))
    back = apply_homography(h_inv, apply_homography(h, points))
    assert np.abs(back - points).max() < 1e-6
    assert (h_inv @ h).allclose(Homography.identity())


def test_jacobian_determinant_of_scale():
    assert jacobian_determinant(Homography(np.diag([2.0, 2.0, 1.0])), (5.0, 7.0)) == pytest.approx(4.0)


def test_back_project_examples():
    cam = CameraModel(fx=700.0, fy=700.0, cx=0.0, cy=0.0)
    np.testing.assert_allclose(back_project(cam, (700.0, 0.0), 2.0), (2.0, 0.0, 2.0))
    centered = CameraModel(fx=500.0, fy=500.0, cx=320.0, cy=240.0)
    np.testing.assert_allclose(back_project(centered, (320.0, 240.0), 5.0), (0.0, 0.0, 5.0))
    with pytest.raises(NonPositiveDepth):
        back_project(cam, (1.0, 1.0), 0.0)


def test_project_back_project_round_trip(rng):
    theta = 0.3
    rotation = np.array([[np.cos(theta), 0, np.sin(theta)], [0, 1, 0], [-np.sin(theta), 0, np.cos(theta)]])
    cam = CameraModel(fx=707.0912, fy=707.0912, cx=613.0, cy=185.0, rotation=rotation, translation=(0.1, -1.0, 0.5))
    for _ in range(200):
        pixel = rng.uniform(0, [1226, 370])
        depth = rng.uniform(0.1, 100.0)
        p, z = project(cam, back_project(cam, pixel, depth))
        assert z == pytest.approx(depth)
        np.testing.assert_allclose(p, pixel, atol=1e-6)


def test_project_behind_camera(small_camera):
    with pytest.raises(NonPositiveDepth):
        project(small_camera, (0.0, 0.0, -1.0))


def test_camera_rejects_bad_rotation():
    with pytest.raises(ValueError):
        CameraModel(fx=1.0, fy=1.0, cx=0.0, cy=0.0, rotation=np.diag([1.0, 2.0, 1.0]))


def test_back_project_depth_matches_pixelwise(small_camera):
    depth = np.array([[1.0, 0.0], [2.5, 4.0]])
    points = back_project_depth(small_camera, depth, depth > 0)
    expected = [back_project(small_camera, (u, v), depth[v, u]) for v, u in [(0, 0), (1, 0), (1, 1)]]
    np.testing.assert_allclose(points, expected)
