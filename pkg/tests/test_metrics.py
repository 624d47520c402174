import numpy as np
import pytest
import torch

from lvcodec.metrics import (RDCurve, RDPoint, bd_rate, ms_ssim,
                             ms_ssim_torch, psnr)


def test_psnr_identical_frames_capped():
    x = np.random.default_rng(0).uniform(0, 1, (3, 16, 16))
    assert psnr(x, x.copy()) == 100.0


def test_psnr_closed_form_values():
    x = np.zeros((3, 10, 10))
    assert psnr(x, x + 0.1) == pytest.approx(20.0)   # MSE 0.01
    assert psnr(x, x + 1.0) == pytest.approx(0.0)    # MSE 1
    with pytest.raises(ValueError):
        psnr(np.zeros((3, 4, 4)), np.zeros((3, 5, 5)))


def test_ms_ssim_identical_is_one():
    x = np.random.default_rng(1).uniform(0, 1, (3, 192, 192)).astype(np.float32)
    assert ms_ssim(x, x.copy()) == pytest.approx(1.0, abs=1e-6)


def test_ms_ssim_inverted_high_contrast_low_score():
    # fixed 256x256 checkerboard-ish high-contrast pattern
    yy, xx = np.mgrid[0:256, 0:256]
    a = (((yy // 16 + xx // 16) % 2) * 0.9 + 0.05).astype(np.float32)
    a = np.stack([a, a, a])
    assert ms_ssim(a, 1.0 - a) < 0.5


def test_ms_ssim_symmetric():
    rng = np.random.default_rng(2)
    a = rng.uniform(0, 1, (3, 192, 192)).astype(np.float32)
    b = np.clip(a + rng.normal(0, 0.05, a.shape), 0, 1).astype(np.float32)
    assert ms_ssim(a, b) == pytest.approx(ms_ssim(b, a), abs=1e-9)


def test_ms_ssim_scale_reduction_behaviour():
    small = np.random.default_rng(3).uniform(0, 1, (3, 32, 32)).astype(np.float32)
    with pytest.warns(UserWarning, match="scales"):
        v = ms_ssim(small, small.copy())
    assert v == pytest.approx(1.0, abs=1e-6)
    x = torch.from_numpy(small).unsqueeze(0)
    with pytest.raises(ValueError, match="small"):
        ms_ssim_torch(x, x, reduce_scales=False)


def test_ms_ssim_differentiable():
    torch.manual_seed(4)
    x = torch.rand(1, 3, 192, 192)
    y = torch.rand(1, 3, 192, 192, requires_grad=True)
    (1.0 - ms_ssim_torch(x, y)).backward()
    assert y.grad is not None and torch.isfinite(y.grad).all()


def test_ms_ssim_rejects_dim_mismatch():
    with pytest.raises(ValueError):
        ms_ssim_torch(torch.rand(1, 3, 64, 64), torch.rand(1, 3, 32, 32))


# ---------------------------------------------------------------------------
# RD curves / BD-rate

def _curve(bpps, quals):
    return RDCurve([RDPoint(bpp=b, quality=q) for b, q in zip(bpps, quals)])


def test_rd_point_rejects_nonpositive_bpp():
    with pytest.raises(ValueError):
        RDPoint(bpp=0.0, quality=30.0)


def test_rd_curve_requires_four_increasing_points():
    with pytest.raises(ValueError, match=">= 4"):
        _curve([0.1, 0.2, 0.3], [30, 32, 34])
    with pytest.raises(ValueError, match="increasing"):
        _curve([0.1, 0.1, 0.2, 0.3], [30, 31, 32, 34])


def test_bd_rate_identical_curves_zero():
    a = _curve([0.1, 0.2, 0.4, 0.8], [30, 33, 36, 39])
    b = _curve([0.1, 0.2, 0.4, 0.8], [30, 33, 36, 39])
    for method in ("pchip", "cubic"):
        assert bd_rate(a, b, method=method) == pytest.approx(0.0, abs=1e-9)


def test_bd_rate_doubled_rate_is_plus_100():
    # analytic oracle: constant log-rate offset of log10(2) -> factor 2
    a = _curve([0.1, 0.2, 0.4, 0.8], [30, 33, 36, 39])
    b = _curve([0.2, 0.4, 0.8, 1.6], [30, 33, 36, 39])
    for method in ("pchip", "cubic"):
        assert bd_rate(a, b, method=method) == pytest.approx(100.0, abs=0.1)


def test_bd_rate_halved_rate_is_minus_50():
    a = _curve([0.1, 0.2, 0.4, 0.8], [30, 33, 36, 39])
    b = _curve([0.05, 0.1, 0.2, 0.4], [30, 33, 36, 39])
    for method in ("pchip", "cubic"):
        assert bd_rate(a, b, method=method) == pytest.approx(-50.0, abs=0.1)


def test_bd_rate_requires_quality_overlap():
    a = _curve([0.1, 0.2, 0.4, 0.8], [30, 31, 32, 33])
    b = _curve([0.1, 0.2, 0.4, 0.8], [40, 41, 42, 43])
    with pytest.raises(ValueError, match="overlap"):
        bd_rate(a, b)


def test_bd_rate_unknown_method():
    a = _curve([0.1, 0.2, 0.4, 0.8], [30, 33, 36, 39])
    with pytest.raises(ValueError, match="method"):
        bd_rate(a, a, method="spline9")
