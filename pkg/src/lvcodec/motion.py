"""Multiscale coarse-to-fine motion estimation.

Initial per-scale motion fields come from the feature pyramids; fusion blocks
refine fine-scale motion using a pooled descriptor of the coarse field, which
predicts depthwise 3x3 kernels (spatial adaptation) and per-channel
modulation coefficients (channel adaptation).
"""

import torch
import torch.nn as nn
import torch.nn.functional as F

from .layers import conv, lrelu


def _upsample2x(x):
    return F.interpolate(x, scale_factor=2, mode="bilinear", align_corners=False)


class InitialMotion(nn.Module):
    """conv3x3 . lrelu . conv3x3 over concat(cur, ref) at one pyramid scale."""

    def __init__(self, feat_channels, motion_channels):
        super().__init__()
        self.net = nn.Sequential(
            conv(2 * feat_channels, motion_channels), lrelu(),
            conv(motion_channels, motion_channels))

    def forward(self, f_cur, f_ref):
        if f_cur.shape != f_ref.shape:
            raise ValueError("pyramid level dims mismatch")
        return self.net(torch.cat([f_cur, f_ref], dim=1))


class MotionAwareEncoder(nn.Module):
    """Coarse motion field -> pooled descriptor of length `dim`."""

    def __init__(self, motion_channels, dim):
        super().__init__()
        self.conv1 = conv(motion_channels, dim, stride=2)
        self.bn1 = nn.BatchNorm2d(dim)
        self.conv2 = conv(dim, dim, stride=2)
        self.bn2 = nn.BatchNorm2d(dim)
        self.act = lrelu()
        self.fc = nn.Linear(dim, dim)

    def forward(self, v):
        h = self.act(self.bn1(self.conv1(v)))
        h = self.act(self.bn2(self.conv2(h)))
        pooled = F.adaptive_avg_pool2d(h, 1).flatten(1)
        return self.fc(pooled)


class KernelPredictor(nn.Module):
    """Descriptor -> per-channel (depthwise) 3x3 kernels."""

    def __init__(self, dim, motion_channels):
        super().__init__()
        self.motion_channels = motion_channels
        self.fc1 = nn.Linear(dim, dim)
        self.fc2 = nn.Linear(dim, motion_channels * 9)
        self.act = lrelu()

    def forward(self, dv):
        flat = self.fc2(self.act(self.fc1(dv)))
        return flat.reshape(-1, self.motion_channels, 3, 3)


class CoefficientPredictor(nn.Module):
    """Descriptor -> nonnegative per-channel modulation scalars."""

    def __init__(self, dim, motion_channels):
        super().__init__()
        self.conv1 = nn.Conv2d(dim, dim, 1)
        self.conv2 = nn.Conv2d(dim, motion_channels, 1)
        self.act = lrelu()

    def forward(self, dv):
        h = dv.reshape(dv.shape[0], -1, 1, 1)
        return F.relu(self.conv2(self.act(self.conv1(h))))


def _depthwise_conv(x, kernels):
    """Apply per-sample per-channel 3x3 kernels. x: (B,C,H,W), kernels: (B,C,3,3)."""
    b, c, h, w = x.shape
    weight = kernels.reshape(b * c, 1, 3, 3)
    out = F.conv2d(x.reshape(1, b * c, h, w), weight, padding=1, groups=b * c)
    return out.reshape(b, c, h, w)


class MotionFusionBlock(nn.Module):
    """Fuse a coarse motion field (half resolution) into a fine one."""

    def __init__(self, motion_channels, dim):
        super().__init__()
        self.encoder = MotionAwareEncoder(motion_channels, dim)
        self.kernels = KernelPredictor(dim, motion_channels)
        self.coefficients = CoefficientPredictor(dim, motion_channels)
        self.spatial_out = nn.Conv2d(motion_channels, motion_channels, 1)
        self.refine = conv(motion_channels, motion_channels)
        self.act = lrelu()

    def forward(self, v_fine, v_coarse):
        if (v_coarse.shape[-2] * 2 != v_fine.shape[-2]
                or v_coarse.shape[-1] * 2 != v_fine.shape[-1]):
            raise ValueError("coarse field must be exactly half the fine field")
        dv = self.encoder(_upsample2x(v_coarse))
        kernels = self.kernels(dv)
        coeff = self.coefficients(dv)
        spatial = self.spatial_out(self.act(_depthwise_conv(v_fine, kernels)))
        modulated = coeff * v_fine + spatial
        return self.act(self.refine(self.act(modulated)))


class MotionEstimator(nn.Module):
    """Feature pyramids -> full-resolution motion field.

    With multiscale disabled (ablation) the output is the scale-0 initial
    field alone.
    """

    def __init__(self, feat_channels=64, motion_channels=64, dim=64,
                 multiscale=True):
        super().__init__()
        self.multiscale = multiscale
        self.initial = nn.ModuleList(
            InitialMotion(feat_channels, motion_channels) for _ in range(3))
        self.fuse1 = MotionFusionBlock(motion_channels, dim)
        self.fuse0 = MotionFusionBlock(motion_channels, dim)
        self.out = conv(motion_channels, motion_channels)
        self.act = lrelu()

    def initial_motion(self, pyr_cur, pyr_ref):
        return [self.initial[i](pyr_cur[i], pyr_ref[i]) for i in range(3)]

    def forward(self, pyr_cur, pyr_ref):
        v = self.initial_motion(pyr_cur, pyr_ref)
        if not self.multiscale:
            return v[0]
        mid = self.fuse1(v[1], v[2])
        fine = self.fuse0(v[0], mid)
        return v[0] + self.out(self.act(fine))
