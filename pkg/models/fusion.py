"""Balanced fusion of the original-branch and zoom-branch voxel volumes.

Volumes are (X, Y, Z, C) float64 arrays on the numpy side and (1, C, X, Y, Z)
tensors inside the module. All weights are drawn from a seeded generator, so
a BalancedFusion is fully determined by (channels, num_classes, seed).
"""
import logging
import math

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from utils.errors import DimensionMismatch

logger = logging.getLogger(__name__)

FEATURE_DIMS = (128, 128, 8)
SCENE_DIMS = (256, 256, 32)
UPSAMPLE = (2, 2, 4)
FUSION_MODES = ("bfvf", "sum", "conv", "gated")


def _to_tensor(vol):
    vol = np.asarray(vol, dtype=np.float64)
    if vol.ndim != 4:
        raise DimensionMismatch(f"volume must be (X, Y, Z, C), got shape {vol.shape}")
    return torch.as_tensor(vol).permute(3, 0, 1, 2)[None].contiguous()


def _to_volume(t):
    return t[0].permute(1, 2, 3, 0).contiguous().numpy()


def conv3d(vol, kernel, bias=None):
    """Zero-padded 'same' cross-correlation of an (X, Y, Z, Cin) volume with a (Cout, Cin, kx, ky, kz) kernel."""
    kernel = torch.as_tensor(np.asarray(kernel, dtype=np.float64))
    x = _to_tensor(vol)
    if kernel.ndim != 5 or kernel.shape[1] != x.shape[1]:
        raise DimensionMismatch(f"kernel {tuple(kernel.shape)} does not fit {x.shape[1]} input channels")
    if any(k % 2 == 0 for k in kernel.shape[2:]):
        raise DimensionMismatch(f"'same' padding needs odd kernel sizes, got {tuple(kernel.shape[2:])}")
    if bias is not None:
        bias = torch.as_tensor(np.asarray(bias, dtype=np.float64))
    padding = tuple(k // 2 for k in kernel.shape[2:])
    with torch.no_grad():
        return _to_volume(F.conv3d(x, kernel, bias, padding=padding))


def anisotropic_conv(vol, weights):
    """Length-3 convolutions along x, then y, then z; weights is a (C, C, 3) kernel per axis."""
    if len(weights) != 3:
        raise DimensionMismatch("anisotropic convolution needs one kernel per axis")
    out = vol
    for axis, w in enumerate(weights):
        w = np.asarray(w, dtype=np.float64)
        if w.ndim != 3 or w.shape[2] != 3:
            raise DimensionMismatch(f"axis kernel must be (C, C, 3), got {w.shape}")
        shape = [w.shape[0], w.shape[1], 1, 1, 1]
        shape[2 + axis] = 3
        out = conv3d(out, w.reshape(shape))
    return out


def _conv(cin, cout, kernel_size, stride=1):
    if isinstance(kernel_size, int):
        kernel_size = (kernel_size,) * 3
    padding = tuple(k // 2 for k in kernel_size)
    return nn.Conv3d(cin, cout, kernel_size, stride=stride, padding=padding, dtype=torch.float64)


class AnisotropicConv3d(nn.Module):
    def __init__(self, channels):
        super().__init__()
        self.conv_x = _conv(channels, channels, (3, 1, 1))
        self.conv_y = _conv(channels, channels, (1, 3, 1))
        self.conv_z = _conv(channels, channels, (1, 1, 3))

    def forward(self, x):
        return self.conv_z(self.conv_y(self.conv_x(x)))


class LightUNet3d(nn.Module):
    # two levels, additive skips, residual output
    def __init__(self, channels):
        super().__init__()
        self.enc = _conv(channels, channels, 3)
        self.down = _conv(channels, channels, 3, stride=2)
        self.dec = _conv(channels, channels, 3)
        self.out = _conv(channels, channels, 3)

    def forward(self, x):
        e1 = F.relu(self.enc(x))
        e2 = F.relu(self.down(e1))
        u = F.interpolate(e2, size=e1.shape[2:], mode="nearest") + e1
        return self.out(F.relu(self.dec(u))) + x


class BalancedFusion(nn.Module):
    def __init__(self, channels=32, num_classes=20, seed=42, fusion_mode="bfvf"):
        super().__init__()
        if fusion_mode not in FUSION_MODES:
            raise ValueError(f"unknown fusion mode {fusion_mode}, expected one of {FUSION_MODES}")
        self.channels = channels
        self.num_classes = num_classes
        self.fusion_mode = fusion_mode

        self.concat_conv = _conv(2 * channels, channels, 3)
        self.anisotropic = AnisotropicConv3d(channels)
        self.mask_head = _conv(channels, 2, 1)
        self.aggregation = _conv(2 * channels, channels, 3)
        # alternatives to the mask-weighted merge
        self.fuse_conv = _conv(2 * channels, channels, 1)
        self.gate = _conv(2 * channels, 1, 3)

        self.refine = LightUNet3d(channels)
        self.head = _conv(channels, num_classes, 1)
        self.init_weights(seed)

    def init_weights(self, seed):
        generator = torch.Generator().manual_seed(seed)
        with torch.no_grad():
            for name, param in self.named_parameters():
                if name.endswith("bias"):
                    param.zero_()
                else:
                    bound = 1.0 / math.sqrt(param[0].numel())
                    param.uniform_(-bound, bound, generator=generator)

    def _check(self, f_o, f_z):
        if f_o.shape != f_z.shape:
            raise DimensionMismatch(f"volume shapes differ: {tuple(f_o.shape)} vs {tuple(f_z.shape)}")
        if f_o.shape[1] != self.channels:
            raise DimensionMismatch(f"volumes carry {f_o.shape[1]} channels, fusion expects {self.channels}")

    def masks(self, f_o, f_z):
        self._check(f_o, f_z)
        m = self.mask_head(self.anisotropic(self.concat_conv(torch.cat([f_o, f_z], dim=1))))
        m = F.relu(m)
        return m[:, :1], m[:, 1:]

    def merge(self, f_o, f_z):
        self._check(f_o, f_z)
        if self.fusion_mode == "sum":
            return f_o + f_z
        if self.fusion_mode == "conv":
            return self.fuse_conv(torch.cat([f_o, f_z], dim=1))
        if self.fusion_mode == "gated":
            g = torch.sigmoid(self.gate(torch.cat([f_o, f_z], dim=1)))
            return g * f_o + (1.0 - g) * f_z
        m_o, m_z = self.masks(f_o, f_z)
        return self.aggregation(torch.cat([m_o * f_o, m_z * f_z], dim=1))

    def forward(self, f_o, f_z):
        return self.refine(self.merge(f_o, f_z))

    def logits(self, x):
        return self.head(x)


def attention_masks(f_o, f_z, fusion):
    with torch.no_grad():
        m_o, m_z = fusion.masks(_to_tensor(f_o), _to_tensor(f_z))
    return _to_volume(m_o), _to_volume(m_z)


def bfvf(f_o, f_z, fusion):
    with torch.no_grad():
        return _to_volume(fusion(_to_tensor(f_o), _to_tensor(f_z)))


def upsample_head(vol, fusion):
    """Class ids on the 256x256x32 scene grid from a 128x128x8 feature volume.

    A 1x1x1 head commutes with nearest upsampling, so the argmax is taken per
    source voxel and each result is repeated over its 2x2x4 block.
    """
    vol = np.asarray(vol, dtype=np.float64)
    if vol.shape[:3] != FEATURE_DIMS:
        raise DimensionMismatch(f"segmentation head expects a {FEATURE_DIMS} volume, got {vol.shape[:3]}")
    with torch.no_grad():
        logits = _to_volume(fusion.logits(_to_tensor(vol)))
    # np.argmax returns the first maximum: ties go to the smaller class id
    labels = np.argmax(logits, axis=-1).astype(np.uint8)
    for axis, factor in enumerate(UPSAMPLE):
        labels = np.repeat(labels, factor, axis=axis)
    logger.info(f"semantic grid {labels.shape}, {np.count_nonzero(labels)} non-empty voxels")
    return labels
