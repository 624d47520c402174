"""Motion compensation: deformable-convolution warping of reference features."""

import math

import torch
import torch.nn as nn
import torchvision.ops

from .layers import conv, lrelu


class OffsetMaskPredictor(nn.Module):
    """Decoded motion field -> deformable conv offsets and sigmoid masks."""

    def __init__(self, motion_channels=64, groups=8):
        super().__init__()
        self.groups = groups
        self.net = conv(motion_channels, 3 * groups * 9)

    def forward(self, v_hat):
        raw = self.net(v_hat)
        n = self.groups * 9
        offsets = raw[:, : 2 * n]
        masks = torch.sigmoid(raw[:, 2 * n:])
        return offsets, masks


class DeformableWarp(nn.Module):
    """Modulated deformable 3x3 conv; out-of-bounds samples read as zero."""

    def __init__(self, feat_channels=64, groups=8):
        super().__init__()
        if feat_channels % groups:
            raise ValueError("feature channels must divide into groups")
        self.groups = groups
        self.weight = nn.Parameter(
            torch.empty(feat_channels, feat_channels // groups, 3, 3))
        self.bias = nn.Parameter(torch.zeros(feat_channels))
        nn.init.kaiming_uniform_(self.weight, a=math.sqrt(5))

    def forward(self, offsets, masks, f_ref):
        if offsets.shape[-2:] != f_ref.shape[-2:]:
            raise ValueError("offsets and reference feature are not aligned")
        return torchvision.ops.deform_conv2d(
            f_ref, offsets, self.weight, self.bias, padding=1, mask=masks)


class PredictionFusion(nn.Module):
    """Residual fusion of the warped feature with the reference feature."""

    def __init__(self, feat_channels=64):
        super().__init__()
        self.net = nn.Sequential(
            conv(2 * feat_channels, feat_channels), lrelu(),
            conv(feat_channels, feat_channels))

    def forward(self, f_warp, f_ref):
        if f_warp.shape != f_ref.shape:
            raise ValueError("warped/reference feature dims mismatch")
        return f_warp + self.net(torch.cat([f_warp, f_ref], dim=1))


class MotionCompensation(nn.Module):
    def __init__(self, motion_channels=64, feat_channels=64, groups=8):
        super().__init__()
        self.predictor = OffsetMaskPredictor(motion_channels, groups)
        self.warp = DeformableWarp(feat_channels, groups)
        self.fusion = PredictionFusion(feat_channels)

    def forward(self, v_hat, f_ref):
        offsets, masks = self.predictor(v_hat)
        warped = self.warp(offsets, masks, f_ref)
        return self.fusion(warped, f_ref)
