"""Shared building blocks: convolutions and residual blocks."""

import torch.nn as nn

LRELU_SLOPE = 0.1


def conv(cin, cout, kernel=3, stride=1):
    return nn.Conv2d(cin, cout, kernel, stride=stride, padding=kernel // 2)


def deconv(cin, cout, kernel=3, stride=2):
    # stride-2 transposed conv that exactly doubles spatial dims
    return nn.ConvTranspose2d(cin, cout, kernel, stride=stride,
                              padding=kernel // 2,
                              output_padding=stride - 1)


def lrelu():
    return nn.LeakyReLU(LRELU_SLOPE)


class ResBlock(nn.Module):
    """out = in + conv(lrelu(conv(in))); channel count preserved."""

    def __init__(self, channels):
        super().__init__()
        self.conv1 = conv(channels, channels)
        self.conv2 = conv(channels, channels)
        self.act = lrelu()

    def forward(self, x):
        return x + self.conv2(self.act(self.conv1(x)))
