import json

import numpy as np
import pytest
import torch

from conftest import finite_diff_grad, make_clip, rel_err, tiny_config
from lvcodec import TrainConfig, VideoCodecModel
from lvcodec.pipeline import SequenceCodec
from lvcodec.training import rd_loss, train_stage
from lvcodec.video_io import RawSequence


def test_rd_loss_zero_distortion_equals_mean_rate():
    x = [torch.zeros(1, 3, 4, 4), torch.zeros(1, 3, 4, 4)]
    rates = [{"a": torch.tensor(3.0)}, {"a": torch.tensor(5.0)}]
    loss = rd_loss(x, [f.clone() for f in x], rates, lam=2048.0)
    assert float(loss) == pytest.approx(4.0)


def test_rd_loss_lambda_2048_example():
    x = torch.zeros(1, 3, 10, 10)
    xr = x + np.sqrt(0.001)  # MSE exactly 0.001
    loss = rd_loss([x], [xr], [torch.tensor(100.0)], lam=2048.0)
    assert float(loss) == pytest.approx(102.048, abs=1e-3)


def test_rd_loss_doubling_lambda_doubles_distortion_term():
    torch.manual_seed(0)
    x = torch.rand(1, 3, 8, 8)
    xr = torch.rand(1, 3, 8, 8)
    r = torch.tensor(7.0)
    l1 = float(rd_loss([x], [xr], [r], lam=1000.0))
    l2 = float(rd_loss([x], [xr], [r], lam=2000.0))
    assert l2 - 7.0 == pytest.approx(2 * (l1 - 7.0), rel=1e-6)


def test_rd_loss_accepts_rate_dicts_and_scalars():
    x = [torch.zeros(1, 3, 4, 4)]
    as_dict = rd_loss(x, x, [{"m": torch.tensor(2.0), "c": torch.tensor(3.0)}],
                      lam=1.0)
    as_scalar = rd_loss(x, x, [torch.tensor(5.0)], lam=1.0)
    assert float(as_dict) == float(as_scalar) == 5.0


def test_rd_loss_rejects_misaligned_inputs():
    x = [torch.zeros(1, 3, 4, 4)]
    with pytest.raises(ValueError):
        rd_loss(x, x + x, [torch.tensor(1.0)], lam=1.0)
    with pytest.raises(ValueError):
        rd_loss(x, x, [], lam=1.0)


def test_rd_loss_msssim_metric():
    torch.manual_seed(1)
    x = torch.rand(1, 3, 192, 192)
    loss = rd_loss([x], [x.clone()], [torch.tensor(0.0)], lam=10.0,
                   metric="msssim")
    assert float(loss) == pytest.approx(0.0, abs=1e-5)
    with pytest.raises(ValueError):
        rd_loss([x], [x], [torch.tensor(0.0)], lam=1.0, metric="mae")


def test_rd_loss_gradient_matches_finite_differences():
    torch.manual_seed(2)
    x = torch.rand(1, 3, 8, 8, dtype=torch.float64)

    def loss_fn(xr):
        return rd_loss([x], [xr], [xr.square().sum() * 0.01], lam=100.0)

    xr = torch.rand(1, 3, 8, 8, dtype=torch.float64, requires_grad=True)
    loss_fn(xr).backward()
    with torch.no_grad():
        num = finite_diff_grad(loss_fn, xr.detach().clone())
    assert rel_err(xr.grad, num) < 1e-3


# ---------------------------------------------------------------------------
# training loop

def _tiny_model(seed=0):
    torch.manual_seed(seed)
    return VideoCodecModel(tiny_config())


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(stage="single_frame", T=3)
    with pytest.raises(ValueError):
        TrainConfig(stage="cascaded", T=1)
    with pytest.raises(ValueError):
        TrainConfig(learning_rate=0.0)


def test_single_frame_smoke_records_curve(tmp_path):
    model = _tiny_model(0)
    cfg = TrainConfig(stage="single_frame", T=1, steps=5, lam=2048.0,
                      learning_rate=1e-4, crop=64, seed=0, log_every=1)
    log = str(tmp_path / "loss.jsonl")
    curve = train_stage(model, [make_clip(3)], cfg, log_path=log)
    assert len(curve) == 5
    assert all(np.isfinite(rec["loss"]) for rec in curve)
    assert all(rec["p_forwards"] == 1 for rec in curve)
    with open(log) as f:
        lines = [json.loads(line) for line in f]
    assert [r["step"] for r in lines] == list(range(5))
    assert not model.training  # left in eval mode


def test_cascaded_unroll_touches_t_reconstructions():
    model = _tiny_model(1)
    cfg = TrainConfig(stage="cascaded", T=3, steps=2, lam=2048.0,
                      learning_rate=1e-5, crop=64, seed=1)
    curve = train_stage(model, [make_clip(5)], cfg)
    assert all(rec["p_forwards"] == 3 for rec in curve)


def test_cascaded_gradient_flows_through_frames():
    """Without detach, the motion path gets gradient even when the loss only
    sees later frames through the recursion."""
    model = _tiny_model(2)
    clip = torch.from_numpy(make_clip(4, h=64, w=64))
    x = clip.unsqueeze(1)
    xr0, _ = model.intra(x[0], mode="train")
    ref = xr0
    for t in range(1, 4):
        xr, rates = model.forward_p(x[t], ref, mode="train")
        ref = xr
    loss = torch.nn.functional.mse_loss(ref, x[3])
    loss.backward()
    grads = [p.grad.abs().sum() for p in model.motion_estimator.parameters()
             if p.grad is not None]
    assert sum(float(g) for g in grads) > 0


def test_detach_recon_blocks_cross_frame_gradient():
    model = _tiny_model(3)
    cfg = TrainConfig(stage="cascaded", T=2, steps=1, lam=2048.0,
                      learning_rate=1e-5, crop=64, seed=3, detach_recon=True)
    curve = train_stage(model, [make_clip(4)], cfg)
    assert len(curve) == 1 and np.isfinite(curve[0]["loss"])


def test_early_stop_callback():
    model = _tiny_model(4)
    cfg = TrainConfig(stage="single_frame", T=1, steps=50, lam=2048.0,
                      learning_rate=1e-4, crop=64, seed=4)
    curve = train_stage(model, [make_clip(3)], cfg,
                        callback=lambda step, rec: step >= 2)
    assert len(curve) == 3


def test_training_rejects_short_clip():
    model = _tiny_model(5)
    cfg = TrainConfig(stage="cascaded", T=4, steps=1, lam=2048.0, crop=64)
    with pytest.raises(ValueError, match="too short"):
        train_stage(model, [make_clip(3)], cfg)


def test_training_smoke_loss_decreases():
    """Smoothed loss after 200 steps beats the early smoothed loss."""
    model = _tiny_model(6)
    cfg = TrainConfig(stage="single_frame", T=1, steps=200, lam=2048.0,
                      learning_rate=1e-3, crop=64, seed=6)
    curve = train_stage(model, [make_clip(7)], cfg)
    losses = np.array([rec["loss"] for rec in curve])
    early = losses[10:30].mean()
    late = losses[-20:].mean()
    assert late < early


def test_trained_model_still_round_trips():
    model = _tiny_model(7)
    cfg = TrainConfig(stage="single_frame", T=1, steps=3, lam=2048.0,
                      learning_rate=1e-4, crop=64, seed=7)
    train_stage(model, [make_clip(3)], cfg)
    clip = make_clip(2)
    seq = RawSequence(frames=list(clip), width=64, height=64)
    codec = SequenceCodec(model)
    res = codec.encode_sequence(seq, capture_latents=True)
    dec, lat = codec.decode_sequence(res["container"], capture_latents=True)
    for a, b in zip(res["latents"], lat):
        for key in a:
            assert torch.equal(a[key], b[key])
