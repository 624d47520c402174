"""Quality metrics and RD-curve comparison: PSNR, MS-SSIM, BD-rate.

PSNR and MS-SSIM are computed in RGB on [0,1]; the color-space convention is
documented in the README since it affects comparability with published
numbers.
"""

import warnings
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F
from scipy.interpolate import PchipInterpolator

PSNR_CAP = 100.0
MSSSIM_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)
_WIN_SIZE = 11
_WIN_SIGMA = 1.5


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    if a.shape != b.shape:
        raise ValueError("frame dims mismatch")
    mse = float(np.mean((np.asarray(a, np.float64) - np.asarray(b, np.float64)) ** 2))
    if mse == 0.0:
        return PSNR_CAP
    return min(10.0 * np.log10(1.0 / mse), PSNR_CAP)


def _gaussian_window(channels, dtype):
    coords = torch.arange(_WIN_SIZE, dtype=dtype) - (_WIN_SIZE - 1) / 2.0
    g = torch.exp(-(coords ** 2) / (2 * _WIN_SIGMA ** 2))
    g = g / g.sum()
    win = torch.outer(g, g)
    return win.expand(channels, 1, _WIN_SIZE, _WIN_SIZE).contiguous()


def _ssim_cs(x, y, win):
    c1, c2 = 0.01 ** 2, 0.03 ** 2
    ch = x.shape[1]
    mu_x = F.conv2d(x, win, groups=ch)
    mu_y = F.conv2d(y, win, groups=ch)
    mu_xx = mu_x * mu_x
    mu_yy = mu_y * mu_y
    mu_xy = mu_x * mu_y
    sig_xx = F.conv2d(x * x, win, groups=ch) - mu_xx
    sig_yy = F.conv2d(y * y, win, groups=ch) - mu_yy
    sig_xy = F.conv2d(x * y, win, groups=ch) - mu_xy
    cs = (2 * sig_xy + c2) / (sig_xx + sig_yy + c2)
    ssim = ((2 * mu_xy + c1) / (mu_xx + mu_yy + c1)) * cs
    return ssim.mean(), cs.mean()


def ms_ssim_torch(x: torch.Tensor, y: torch.Tensor,
                  reduce_scales: bool = True) -> torch.Tensor:
    """Differentiable multiscale structural similarity on (B,3,H,W) in [0,1]."""
    if x.shape != y.shape:
        raise ValueError("frame dims mismatch")
    min_dim = min(x.shape[-1], x.shape[-2])
    levels = len(MSSSIM_WEIGHTS)
    while levels > 1 and (_WIN_SIZE - 1) * 2 ** (levels - 1) > min_dim:
        levels -= 1
    if levels < len(MSSSIM_WEIGHTS):
        if not reduce_scales:
            raise ValueError("frames too small for %d-scale MS-SSIM"
                             % len(MSSSIM_WEIGHTS))
        warnings.warn("frames too small for 5-scale MS-SSIM; using %d scales"
                      % levels)
    weights = torch.tensor(MSSSIM_WEIGHTS[:levels], dtype=x.dtype)
    weights = weights / weights.sum()
    win = _gaussian_window(x.shape[1], x.dtype)
    vals = []
    for i in range(levels):
        ssim, cs = _ssim_cs(x, y, win)
        vals.append(ssim if i == levels - 1 else cs)
        if i < levels - 1:
            x = F.avg_pool2d(x, 2)
            y = F.avg_pool2d(y, 2)
    stacked = torch.stack(vals).clamp(min=1e-8)
    return torch.prod(stacked ** weights)


def ms_ssim(a: np.ndarray, b: np.ndarray, reduce_scales: bool = True) -> float:
    x = torch.from_numpy(np.asarray(a, np.float32)).unsqueeze(0)
    y = torch.from_numpy(np.asarray(b, np.float32)).unsqueeze(0)
    with torch.no_grad():
        return float(ms_ssim_torch(x, y, reduce_scales=reduce_scales))


# ---------------------------------------------------------------------------
# RD curves

@dataclass
class RDPoint:
    bpp: float
    quality: float
    lam: float = 0.0

    def __post_init__(self):
        if self.bpp <= 0:
            raise ValueError("bpp must be positive")


@dataclass
class RDCurve:
    points: list

    def __post_init__(self):
        self.points = sorted(self.points, key=lambda p: p.bpp)
        if len(self.points) < 4:
            raise ValueError("BD computation requires >= 4 RD points")
        bpps = [p.bpp for p in self.points]
        if any(b2 <= b1 for b1, b2 in zip(bpps, bpps[1:])):
            raise ValueError("bpp values must be strictly increasing")

    @property
    def qualities(self):
        return np.array([p.quality for p in self.points])

    @property
    def log_rates(self):
        return np.log10([p.bpp for p in self.points])


def _integrate(curve: RDCurve, lo, hi, method):
    order = np.argsort(curve.qualities)
    q = curve.qualities[order]
    r = curve.log_rates[order]
    if method == "pchip":
        return float(PchipInterpolator(q, r).integrate(lo, hi))
    if method == "cubic":
        poly = np.polynomial.Polynomial.fit(q, r, 3)
        return float(poly.integ()(hi) - poly.integ()(lo))
    raise ValueError("unknown BD integration method %r" % method)


def bd_rate(anchor: RDCurve, test: RDCurve, method: str = "pchip") -> float:
    """Average percent rate difference at equal quality; negative = savings."""
    lo = max(anchor.qualities.min(), test.qualities.min())
    hi = min(anchor.qualities.max(), test.qualities.max())
    if hi <= lo:
        raise ValueError("RD curves have no overlapping quality range")
    int_anchor = _integrate(anchor, lo, hi, method)
    int_test = _integrate(test, lo, hi, method)
    avg_diff = (int_test - int_anchor) / (hi - lo)
    return (10.0 ** avg_diff - 1.0) * 100.0
