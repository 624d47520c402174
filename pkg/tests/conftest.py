import numpy as np
import pytest
import torch

from lvcodec import CodecConfig, VideoCodecModel


def tiny_config(**overrides):
    """Small widths so forward passes stay cheap on CPU."""
    base = dict(feat_channels=16, motion_channels=16, motion_aware_dim=16,
                motion_latent_channels=16, motion_hyper_channels=16,
                context_channels=32, context_groups=(4, 4, 8, 16),
                context_hyper_channels=16, deform_groups=4,
                intra_channels=16, intra_latent_channels=16)
    base.update(overrides)
    return CodecConfig(**base)


@pytest.fixture
def tiny_model():
    torch.manual_seed(0)
    return VideoCodecModel(tiny_config()).eval()


def make_clip(n_frames=7, h=64, w=64, step=5, seed=None):
    """Synthetic moving-rectangle clip, (n_frames, 3, h, w) float32 in [0,1]."""
    frames = []
    for t in range(n_frames):
        f = np.full((3, h, w), 0.35, np.float32)
        f[0] += 0.08 * np.sin(np.arange(w, dtype=np.float32) / 9.0)[None, :]
        f[1] += 0.08 * np.cos(np.arange(h, dtype=np.float32) / 7.0)[:, None]
        x0 = 6 + step * t
        f[:, h // 3: h // 3 + 20, x0: x0 + 14] = 0.9
        f[2, h // 3: h // 3 + 20, x0: x0 + 14] = 0.6
        frames.append(np.clip(f, 0.0, 1.0))
    clip = np.stack(frames)
    if seed is not None:
        rng = np.random.default_rng(seed)
        clip = np.clip(clip + rng.normal(0, 0.01, clip.shape), 0, 1)
    return clip.astype(np.float32)


def finite_diff_grad(fn, x, eps=1e-4):
    """Central finite differences of a scalar-valued fn at float64 tensor x."""
    g = torch.zeros_like(x)
    flat = x.reshape(-1)
    gflat = g.reshape(-1)
    for i in range(flat.numel()):
        orig = flat[i].item()
        flat[i] = orig + eps
        hi = float(fn(x))
        flat[i] = orig - eps
        lo = float(fn(x))
        flat[i] = orig
        gflat[i] = (hi - lo) / (2 * eps)
    return g


def rel_err(a, b):
    a = a.reshape(-1).double()
    b = b.reshape(-1).double()
    return float(torch.norm(a - b) / torch.norm(b).clamp(min=1e-12))


def zero_all_biases(module):
    for m in module.modules():
        if hasattr(m, "bias") and isinstance(getattr(m, "bias"), torch.Tensor):
            torch.nn.init.zeros_(m.bias)
        if isinstance(m, torch.nn.BatchNorm2d):
            torch.nn.init.zeros_(m.bias)
    return module
