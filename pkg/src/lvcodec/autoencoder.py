"""Pixel <-> feature transforms: multiscale extraction and frame reconstruction."""

import torch.nn as nn

from .layers import ResBlock, conv, deconv, lrelu


class FeatureExtractor(nn.Module):
    """Per-frame 3-level feature pyramid at full, 1/2 and 1/4 resolution.

    Weights are shared between current and reference frames, so the decoder
    can rebuild the reference pyramid from the reconstructed frame alone.
    """

    def __init__(self, channels=64):
        super().__init__()
        self.channels = channels
        self.head = conv(3, channels)
        self.res0 = ResBlock(channels)
        self.down1 = conv(channels, channels, stride=2)
        self.res1 = ResBlock(channels)
        self.down2 = conv(channels, channels, stride=2)
        self.res2 = ResBlock(channels)
        self.act = lrelu()

    def forward(self, x):
        if x.shape[-1] % 4 or x.shape[-2] % 4:
            raise ValueError("frame dims must be divisible by 4, got %r"
                             % (tuple(x.shape[-2:]),))
        f0 = self.res0(self.head(x))
        f1 = self.res1(self.act(self.down1(f0)))
        f2 = self.res2(self.act(self.down2(f1)))
        return [f0, f1, f2]


def extract_features(extractor, x_cur, x_ref):
    if x_cur.shape != x_ref.shape:
        raise ValueError("current/reference frame dims differ")
    return extractor(x_cur), extractor(x_ref)


class FrameReconstructor(nn.Module):
    """Full-resolution feature grid -> 3-channel frame.

    Three residual blocks then a transposed conv back to pixel space;
    features are already at pixel resolution, so the deconv keeps stride 1.
    """

    def __init__(self, channels=64):
        super().__init__()
        self.blocks = nn.Sequential(ResBlock(channels), ResBlock(channels),
                                    ResBlock(channels))
        self.out = nn.ConvTranspose2d(channels, 3, 3, stride=1, padding=1)

    def forward(self, f):
        if not f.isfinite().all():
            raise ValueError("non-finite feature input")
        return self.out(self.blocks(f))
