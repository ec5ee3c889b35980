import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))
from dataset.synthetic_road import SyntheticRoadScene
from utils.geometry import CameraModel, Point2

KITTI_W, KITTI_H = 1226, 370
CENTER_VP = Point2(613.0, 185.0)

# near and far band pixel-count ratios of the default road scene at alpha 0.2
ROAD_NEAR_RATIO = 84351 / 154676
ROAD_FAR_RATIO = 30306 / 14032


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_camera():
    return CameraModel(fx=700.0, fy=700.0, cx=350.0, cy=350.0)


@pytest.fixture(scope="session")
def road_scene():
    return SyntheticRoadScene()


@pytest.fixture
def grid_image():
    # smooth, non-symmetric test pattern on the KITTI canvas
    jj, ii = np.meshgrid(np.arange(KITTI_W, dtype=np.float64), np.arange(KITTI_H, dtype=np.float64))
    r = 0.5 + 0.5 * np.sin(jj / 37.0) * np.cos(ii / 23.0)
    g = (jj / (KITTI_W - 1)) ** 2
    b = ((np.floor(jj / 16) + np.floor(ii / 16)) % 2) * 0.8 + 0.1
    return np.stack([r, g, b], axis=-1)
