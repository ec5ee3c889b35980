import struct

import cv2
import numpy as np
import pytest

from utils.errors import FormatError
from utils.io_utils import (
    GRID_MAGIC,
    VELO_TO_CAM,
    parse_point,
    read_depth_png,
    read_image,
    read_kitti_calib,
    read_point_cloud_ply,
    read_pyramid,
    read_semantic_grid,
    read_volume,
    read_vp,
    to_uint8,
    write_depth_png,
    write_point_cloud_ply,
    write_pyramid,
    write_volume,
)

P2 = "P2: 700 0 600 45 0 700 180 0 0 0 1 0\n"


@pytest.mark.parametrize("text, expected", [("3,4", (3.0, 4.0)), ("613.5 185", (613.5, 185.0))])
def test_parse_point(text, expected):
    assert parse_point(text) == expected


@pytest.mark.parametrize("text", ["3", "a,b", "1,2,3"])
def test_parse_point_rejects(text):
    with pytest.raises(FormatError):
        parse_point(text)


def test_read_vp_uses_first_line(tmp_path):
    path = tmp_path / "vp.txt"
    path.write_text("\n612.25 180.5\n0 0\n")
    assert read_vp(path) == (612.25, 180.5)
    path.write_text("\n")
    with pytest.raises(FormatError):
        read_vp(path)


def test_calib_without_extrinsics(tmp_path):
    path = tmp_path / "calib.txt"
    path.write_text("P0: 700 0 600 0 0 700 180 0 0 0 1 0\n" + P2)
    cam = read_kitti_calib(path)
    assert (cam.fx, cam.fy, cam.cx, cam.cy) == (700.0, 700.0, 600.0, 180.0)
    np.testing.assert_array_equal(cam.rotation, VELO_TO_CAM)
    np.testing.assert_allclose(cam.translation, (45.0 / 700.0, 0.0, 0.0))


def test_calib_with_extrinsics(tmp_path):
    path = tmp_path / "calib.txt"
    path.write_text(P2 + "Tr: 1 0 0 1 0 1 0 2 0 0 1 3\n")
    cam = read_kitti_calib(path)
    np.testing.assert_allclose(cam.rotation, np.eye(3), atol=1e-12)
    np.testing.assert_allclose(cam.translation, (1.0 + 45.0 / 700.0, 2.0, 3.0))


@pytest.mark.parametrize(
    "content", ["P0: 1 0 0 0 0 1 0 0 0 0 1 0\n", "P2: 1 2 3\n", P2 + "Tr: 1 0 0\n", "P2: 1 x 3\n"]
)
def test_calib_rejects_malformed(tmp_path, content):
    path = tmp_path / "calib.txt"
    path.write_text(content)
    with pytest.raises(FormatError):
        read_kitti_calib(path)


def test_depth_png_scale_and_invalid(tmp_path):
    path = tmp_path / "depth.png"
    write_depth_png(path, np.array([[5.0, 0.0], [np.nan, 12.5]]))
    depth = read_depth_png(path)
    np.testing.assert_array_equal(depth.values, [[5.0, 0.0], [0.0, 12.5]])
    np.testing.assert_array_equal(depth.valid, [[True, False], [False, True]])


def test_depth_png_must_be_16_bit(tmp_path):
    path = tmp_path / "depth8.png"
    cv2.imwrite(str(path), np.full((4, 4), 7, dtype=np.uint8))
    with pytest.raises(FormatError):
        read_depth_png(path)
    with pytest.raises(FileNotFoundError):
        read_depth_png(tmp_path / "missing.png")


def test_read_image_rejects_non_images(tmp_path):
    path = tmp_path / "notes.png"
    path.write_text("not an image")
    with pytest.raises(FormatError):
        read_image(path)


def test_to_uint8_rounds_half_up():
    np.testing.assert_array_equal(to_uint8([0.0, 0.5, 1.0, 2.0, -1.0]), [0, 128, 255, 255, 0])


def test_truncated_pyramid(tmp_path):
    path = tmp_path / "features.bin"
    write_pyramid(path, [np.zeros((2, 3, 4)), np.ones((1, 2, 4))])
    levels = read_pyramid(path)
    assert [level.shape for level in levels] == [(2, 3, 4), (1, 2, 4)]
    path.write_bytes(path.read_bytes()[:-4])
    with pytest.raises(FormatError):
        read_pyramid(path)


def test_volume_header_and_trailing_bytes(tmp_path):
    path = tmp_path / "volume.vol"
    write_volume(path, np.zeros((2, 2, 2, 3)))
    data = path.read_bytes()
    assert struct.unpack("<4I", data[:16]) == (2, 2, 2, 3)
    assert len(data) == 16 + 4 * 24
    path.write_bytes(data + b"\0")
    with pytest.raises(FormatError):
        read_volume(path)


def test_semantic_grid_checks(tmp_path):
    path = tmp_path / "grid.vpoc"
    path.write_bytes(b"XXXX" + struct.pack("<3I", 1, 1, 1) + b"\1")
    with pytest.raises(FormatError):
        read_semantic_grid(path)
    path.write_bytes(GRID_MAGIC + struct.pack("<3I", 2, 1, 1) + b"\1")
    with pytest.raises(FormatError):
        read_semantic_grid(path)


def test_point_cloud_ply(tmp_path, rng):
    points = rng.normal(size=(10, 3)).astype(np.float32)
    write_point_cloud_ply(tmp_path / "points.ply", points)
    np.testing.assert_array_equal(read_point_cloud_ply(tmp_path / "points.ply"), points)
