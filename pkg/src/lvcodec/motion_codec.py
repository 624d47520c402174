"""Variational motion codec: stride-16 analysis/synthesis plus a hyperprior."""

import torch.nn as nn

from .entropy import clamp_sigma
from .layers import ResBlock, conv, deconv, lrelu


class MotionEncoder(nn.Module):
    """Full-resolution motion field -> latent at 1/16 resolution."""

    def __init__(self, motion_channels=64, latent_channels=64):
        super().__init__()
        c = latent_channels
        self.net = nn.Sequential(
            conv(motion_channels, c, stride=2), ResBlock(c),
            conv(c, c, stride=2), ResBlock(c),
            conv(c, c, stride=2), ResBlock(c),
            conv(c, c, stride=2))

    def forward(self, v):
        if v.shape[-1] % 16 or v.shape[-2] % 16:
            raise ValueError("motion field dims must be divisible by 16")
        return self.net(v)


class MotionDecoder(nn.Module):
    def __init__(self, motion_channels=64, latent_channels=64):
        super().__init__()
        c = latent_channels
        self.net = nn.Sequential(
            deconv(c, c), ResBlock(c),
            deconv(c, c), ResBlock(c),
            deconv(c, c), ResBlock(c),
            deconv(c, motion_channels))

    def forward(self, m_hat):
        return self.net(m_hat)


class HyperEncoder(nn.Module):
    """Latent -> hyper-latent at an additional stride 4."""

    def __init__(self, latent_channels, hyper_channels):
        super().__init__()
        self.net = nn.Sequential(
            conv(latent_channels, hyper_channels), lrelu(),
            conv(hyper_channels, hyper_channels, stride=2), lrelu(),
            conv(hyper_channels, hyper_channels, stride=2))

    def forward(self, m):
        return self.net(m)


class HyperDecoder(nn.Module):
    """Quantized hyper-latent -> (mu, sigma) matching the latent dims."""

    def __init__(self, latent_channels, hyper_channels):
        super().__init__()
        self.net = nn.Sequential(
            deconv(hyper_channels, hyper_channels), lrelu(),
            deconv(hyper_channels, hyper_channels), lrelu(),
            conv(hyper_channels, 2 * latent_channels))

    def forward(self, z_hat):
        params = self.net(z_hat)
        mu, sigma_raw = params.chunk(2, dim=1)
        return mu, clamp_sigma(sigma_raw)
