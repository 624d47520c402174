"""Rate-distortion training: single-frame stage, cascaded unroll, MS-SSIM finetune.

Rate terms are normalized to bits per pixel before entering the loss so the
Lagrange multipliers balance against MSE on [0,1] frames independent of crop
size.
"""

import json

import numpy as np
import torch
import torch.nn.functional as F

from .config import TrainConfig
from .metrics import ms_ssim_torch
from .model import VideoCodecModel


def rd_loss(frames, recons, rate_terms, lam, metric="mse"):
    """(1/T) sum_t [lam * d(x_t, xr_t) + sum(rates_t)].

    rate_terms: per-frame dict of rate components (or a scalar total).
    """
    if not (len(frames) == len(recons) == len(rate_terms)):
        raise ValueError("frames, reconstructions and rates must align")
    total = frames[0].new_zeros(()) if torch.is_tensor(frames[0]) else 0.0
    for x, xr, rates in zip(frames, recons, rate_terms):
        if metric == "mse":
            d = F.mse_loss(xr, x)
        elif metric == "msssim":
            d = 1.0 - ms_ssim_torch(xr, x)
        else:
            raise ValueError("unknown distortion metric %r" % metric)
        r = sum(rates.values()) if isinstance(rates, dict) else rates
        total = total + lam * d + r
    return total / len(frames)


def _sample_batch(clips, T, crop, rng):
    """Pick (T+1)-frame windows with a shared random crop per clip."""
    batch = []
    for _ in range(1):
        clip = clips[rng.integers(len(clips))]
        n = clip.shape[0]
        if n < T + 1:
            raise ValueError("clip of %d frames too short for T=%d" % (n, T))
        t0 = int(rng.integers(n - T))
        window = clip[t0: t0 + T + 1]
        _, _, h, w = window.shape
        ch, cw = min(crop, h), min(crop, w)
        y0 = int(rng.integers(h - ch + 1))
        x0 = int(rng.integers(w - cw + 1))
        batch.append(window[:, :, y0: y0 + ch, x0: x0 + cw])
    return torch.from_numpy(np.stack(batch, axis=1))  # (T+1, B, 3, h, w)


def train_stage(model: VideoCodecModel, clips, cfg: TrainConfig,
                log_path=None, callback=None):
    """Run one training stage; returns the loss curve (list of step records).

    clips: list of float32 arrays (n_frames, 3, H, W). callback(step, record)
    may return True to stop early. The checkpoint is the model itself.
    """
    torch.manual_seed(cfg.seed)
    rng = np.random.default_rng(cfg.seed)
    model.train()
    opt = torch.optim.Adam(model.parameters(), lr=cfg.learning_rate)
    metric = "msssim" if cfg.stage == "msssim_finetune" else "mse"
    clips = [np.ascontiguousarray(c, dtype=np.float32) for c in clips]
    curve = []
    log_f = open(log_path, "w") if log_path else None
    try:
        for step in range(cfg.steps):
            x = _sample_batch(clips, cfg.T, cfg.crop, rng)
            b = x.shape[1]
            npix = x.shape[-1] * x.shape[-2]
            scale = 1.0 / (b * npix)

            xr0, bits_i = model.intra(x[0], mode="train")
            loss_i = cfg.lam * F.mse_loss(xr0, x[0]) + bits_i * scale

            p_frames, p_recons, p_rates = [], [], []
            ref = xr0
            n_p = 0
            for t in range(1, cfg.T + 1):
                ref_in = ref.detach() if cfg.detach_recon else ref
                xr, rates = model.forward_p(x[t], ref_in, mode="train")
                n_p += 1
                p_frames.append(x[t])
                p_recons.append(xr)
                p_rates.append({k: v * scale for k, v in rates.items()})
                ref = xr
            loss_p = rd_loss(p_frames, p_recons, p_rates, cfg.lam, metric)
            loss = loss_i + loss_p

            opt.zero_grad()
            loss.backward()
            torch.nn.utils.clip_grad_norm_(model.parameters(), 5.0)
            opt.step()

            record = {
                "step": step,
                "loss": float(loss.detach()),
                "rate": float(sum(sum(r.values()) for r in p_rates).detach()),
                "distortion": float(F.mse_loss(p_recons[-1], p_frames[-1]).detach()),
                "p_forwards": n_p,
            }
            curve.append(record)
            if log_f and step % cfg.log_every == 0:
                log_f.write(json.dumps(record) + "\n")
                log_f.flush()
            if callback is not None and callback(step, record):
                break
    finally:
        if log_f:
            log_f.close()
    model.eval()
    return curve
