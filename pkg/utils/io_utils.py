"""File formats: 8-bit images, KITTI-style depth PNGs and calibration, VP files,
little-endian feature pyramids / volumes, VPOC semantic grids and PLY point clouds.
"""
import logging
import struct

import cv2
import numpy as np
from PIL import Image, UnidentifiedImageError
from plyfile import PlyData, PlyElement

from models.lifting import DepthMap
from utils.errors import FormatError
from utils.geometry import CameraModel, Point2

logger = logging.getLogger(__name__)

GRID_MAGIC = b"VPOC"
DEPTH_SCALE = 256.0

# velodyne (x forward, y left, z up) to camera (x right, y down, z forward)
VELO_TO_CAM = np.array([[0.0, -1.0, 0.0], [0.0, 0.0, -1.0], [1.0, 0.0, 0.0]])


def read_image(path):
    """8-bit PNG/PPM/PGM -> (H, W, C) float64 in [0, 1]; grayscale keeps C = 1."""
    try:
        img = Image.open(path)
        img.load()
    except UnidentifiedImageError as e:
        raise FormatError(f"{path}: not a readable image") from e
    if img.mode not in ("L", "RGB"):
        img = img.convert("L" if img.mode in ("1", "I", "I;16", "F") else "RGB")
    arr = np.asarray(img, dtype=np.float64) / 255.0
    return arr[..., None] if arr.ndim == 2 else arr


def to_uint8(img):
    # round half up after clamping to [0, 1]
    img = np.clip(np.asarray(img, dtype=np.float64), 0.0, 1.0)
    return np.floor(img * 255.0 + 0.5).astype(np.uint8)


def write_image(path, img):
    arr = to_uint8(img)
    if arr.ndim == 3 and arr.shape[2] == 1:
        arr = arr[..., 0]
    Image.fromarray(arr).save(path)


def read_depth_png(path):
    """16-bit depth PNG: meters = raw / 256, raw 0 marks an invalid pixel."""
    raw = cv2.imread(str(path), cv2.IMREAD_ANYDEPTH)
    if raw is None:
        raise FileNotFoundError(f"{path}: cannot read depth image")
    if raw.dtype != np.uint16:
        raise FormatError(f"{path}: depth PNG must be 16-bit, got {raw.dtype}")
    return DepthMap(raw.astype(np.float64) / DEPTH_SCALE)


def write_depth_png(path, depth):
    d = np.asarray(getattr(depth, "values", depth), dtype=np.float64)
    valid = np.isfinite(d) & (d > 0)
    raw = np.where(valid, np.clip(np.round(d * DEPTH_SCALE), 1, 65535), 0).astype(np.uint16)
    if not cv2.imwrite(str(path), raw):
        raise OSError(f"{path}: failed to write depth image")


def _read_calib_entries(path):
    data = {}
    with open(path, "r") as f:
        for line in f.readlines():
            line = line.strip()
            if not line or ":" not in line:
                continue
            key, value = line.split(":", 1)
            try:
                data[key.strip()] = np.array([float(x) for x in value.split()])
            except ValueError as e:
                raise FormatError(f"{path}: bad numbers on line '{key}'") from e
    return data


def read_kitti_calib(path):
    """CameraModel from a KITTI calibration file (P2 intrinsics, optional Tr extrinsics)."""
    data = _read_calib_entries(path)
    if "P2" not in data or data["P2"].size != 12:
        raise FormatError(f"{path}: missing a 12-value P2 entry")
    p2 = data["P2"].reshape(3, 4)
    k = p2[:, :3]
    # stereo baseline of camera 2 relative to camera 0
    t2 = np.linalg.solve(k, p2[:, 3])

    if "Tr" in data:
        if data["Tr"].size != 12:
            raise FormatError(f"{path}: Tr entry needs 12 values")
        tr = data["Tr"].reshape(3, 4)
        u, _, vt = np.linalg.svd(tr[:, :3])
        rotation = u @ vt
        translation = tr[:, 3] + t2
    else:
        rotation = VELO_TO_CAM
        translation = t2

    return CameraModel(
        fx=k[0, 0], fy=k[1, 1], cx=k[0, 2], cy=k[1, 2], rotation=rotation, translation=translation
    )


def write_kitti_calib(path, cam):
    p2 = np.hstack([cam.intrinsics, np.zeros((3, 1))])
    tr = np.hstack([cam.rotation, cam.translation[:, None]])
    with open(path, "w") as f:
        f.write("P2: " + " ".join(f"{v:.12e}" for v in p2.ravel()) + "\n")
        f.write("Tr: " + " ".join(f"{v:.12e}" for v in tr.ravel()) + "\n")


def parse_point(text):
    # "x,y" or "x y"
    parts = text.replace(",", " ").split()
    if len(parts) != 2:
        raise FormatError(f"expected two coordinates, got '{text}'")
    try:
        return Point2(float(parts[0]), float(parts[1]))
    except ValueError as e:
        raise FormatError(f"cannot parse point '{text}'") from e


def read_vp(path):
    with open(path, "r") as f:
        lines = [line for line in f.read().splitlines() if line.strip()]
    if not lines:
        raise FormatError(f"{path}: empty VP file")
    return parse_point(lines[0])


def write_vp(path, vp):
    with open(path, "w") as f:
        f.write(f"{vp[0]:.6f} {vp[1]:.6f}\n")


def _read_array(buf, offset, shape, path):
    count = int(np.prod(shape))
    end = offset + 4 * count
    if end > len(buf):
        raise FormatError(f"{path}: truncated data, need {end} bytes, have {len(buf)}")
    arr = np.frombuffer(buf, dtype="<f4", count=count, offset=offset).reshape(shape)
    return arr.astype(np.float64), end


def read_pyramid(path):
    """Levels of (h w C) u32 headers, each followed by row-major f32 samples."""
    with open(path, "rb") as f:
        buf = f.read()
    levels, offset = [], 0
    while offset < len(buf):
        if offset + 12 > len(buf):
            raise FormatError(f"{path}: truncated level header at byte {offset}")
        h, w, c = struct.unpack_from("<3I", buf, offset)
        if min(h, w, c) == 0:
            raise FormatError(f"{path}: level {len(levels)} has a zero dimension")
        level, offset = _read_array(buf, offset + 12, (h, w, c), path)
        levels.append(level)
    if not levels:
        raise FormatError(f"{path}: no pyramid levels")
    return levels


def write_pyramid(path, levels):
    with open(path, "wb") as f:
        for level in levels:
            level = np.asarray(level)
            f.write(struct.pack("<3I", *level.shape))
            f.write(np.ascontiguousarray(level, dtype="<f4").tobytes())


def read_volume(path):
    with open(path, "rb") as f:
        buf = f.read()
    if len(buf) < 16:
        raise FormatError(f"{path}: missing volume header")
    dims = struct.unpack_from("<4I", buf, 0)
    vol, end = _read_array(buf, 16, dims, path)
    if end != len(buf):
        raise FormatError(f"{path}: {len(buf) - end} trailing bytes after volume data")
    return vol


def write_volume(path, vol):
    vol = np.asarray(vol)
    with open(path, "wb") as f:
        f.write(struct.pack("<4I", *vol.shape))
        f.write(np.ascontiguousarray(vol, dtype="<f4").tobytes())


def write_semantic_grid(path, labels):
    labels = np.asarray(labels)
    with open(path, "wb") as f:
        f.write(GRID_MAGIC + struct.pack("<3I", *labels.shape))
        f.write(np.ascontiguousarray(labels, dtype=np.uint8).tobytes())


def read_semantic_grid(path):
    with open(path, "rb") as f:
        buf = f.read()
    if len(buf) < 16 or buf[:4] != GRID_MAGIC:
        raise FormatError(f"{path}: not a VPOC semantic grid")
    dims = struct.unpack_from("<3I", buf, 4)
    if len(buf) - 16 != int(np.prod(dims)):
        raise FormatError(f"{path}: expected {int(np.prod(dims))} class ids, found {len(buf) - 16}")
    return np.frombuffer(buf, dtype=np.uint8, offset=16).reshape(dims)


def write_point_cloud_ply(path, points):
    points = np.asarray(points, dtype=np.float32).reshape(-1, 3)
    vertex = np.empty(len(points), dtype=[("x", "f4"), ("y", "f4"), ("z", "f4")])
    vertex["x"], vertex["y"], vertex["z"] = points.T
    PlyData([PlyElement.describe(vertex, "vertex")]).write(str(path))
    logger.info(f"wrote {len(points)} points to {path}")


def read_point_cloud_ply(path):
    data = PlyData.read(str(path))["vertex"].data
    return np.stack([np.asarray(data["x"]), np.asarray(data["y"]), np.asarray(data["z"])], axis=1)
