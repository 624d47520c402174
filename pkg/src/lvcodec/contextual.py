"""Conditional coding of the current feature given the temporal prediction.

The latent has a fixed channel count (128 by default) split into ordered
chunks; chunks are coded sequentially, each in two checkerboard passes
(anchors first). Entropy parameters per chunk aggregate three contexts:
temporal (predicted feature + hyper-latent), spatial (decoded anchors of the
chunk) and channel (previously decoded chunks).
"""

import numpy as np
import torch
import torch.nn as nn

from .entropy import GaussianCoder, clamp_sigma, gaussian_likelihood, quantize
from .layers import ResBlock, conv, deconv, lrelu
from .rangecoder import RangeDecoder, RangeEncoder

CTX_WIDTH = 64  # width of each context branch entering the aggregator


def anchor_mask(h: int, w: int) -> np.ndarray:
    """Checkerboard anchor predicate: anchor iff (row + col) even."""
    rows = np.arange(h)[:, None]
    cols = np.arange(w)[None, :]
    return (rows + cols) % 2 == 0


class ContextualEncoder(nn.Module):
    """concat(current feature, predicted feature) -> latent at 1/16."""

    def __init__(self, feat_channels=64, latent_channels=128):
        super().__init__()
        c = latent_channels
        self.net = nn.Sequential(
            conv(2 * feat_channels, c, stride=2), ResBlock(c),
            conv(c, c, stride=2), ResBlock(c),
            conv(c, c, stride=2), ResBlock(c),
            conv(c, c, stride=2))

    def forward(self, f_cur, f_pred):
        if f_cur.shape != f_pred.shape:
            raise ValueError("current/predicted feature dims mismatch")
        return self.net(torch.cat([f_cur, f_pred], dim=1))


class ContextualDecoder(nn.Module):
    def __init__(self, feat_channels=64, latent_channels=128):
        super().__init__()
        c = latent_channels
        self.net = nn.Sequential(
            deconv(c, c), ResBlock(c),
            deconv(c, c), ResBlock(c),
            deconv(c, c), ResBlock(c),
            deconv(c, feat_channels))

    def forward(self, c_hat):
        return self.net(c_hat)


class FeatureRefinement(nn.Module):
    """F_hat = F_tilde + convs(concat(F_tilde, F_bar))."""

    def __init__(self, feat_channels=64):
        super().__init__()
        self.net = nn.Sequential(
            conv(2 * feat_channels, feat_channels), lrelu(),
            conv(feat_channels, feat_channels))

    def forward(self, f_tilde, f_pred):
        return f_tilde + self.net(torch.cat([f_tilde, f_pred], dim=1))


class ContextHyperEncoder(nn.Module):
    def __init__(self, latent_channels=128, hyper_channels=64):
        super().__init__()
        self.net = nn.Sequential(
            conv(latent_channels, hyper_channels), lrelu(),
            conv(hyper_channels, hyper_channels, stride=2), lrelu(),
            conv(hyper_channels, hyper_channels, stride=2))

    def forward(self, c):
        return self.net(c)


class ContextHyperDecoder(nn.Module):
    """Quantized hyper-latent -> prior feature grid at the latent resolution."""

    def __init__(self, latent_channels=128, hyper_channels=64):
        super().__init__()
        self.net = nn.Sequential(
            deconv(hyper_channels, hyper_channels), lrelu(),
            deconv(hyper_channels, hyper_channels), lrelu(),
            conv(hyper_channels, latent_channels))

    def forward(self, s_hat):
        return self.net(s_hat)


class TemporalContextEncoder(nn.Module):
    """Predicted feature -> stride-16 temporal prior grid."""

    def __init__(self, feat_channels=64, width=CTX_WIDTH):
        super().__init__()
        self.net = nn.Sequential(
            conv(feat_channels, width, stride=2), lrelu(),
            conv(width, width, stride=2), lrelu(),
            conv(width, width, stride=2), lrelu(),
            conv(width, width, stride=2))

    def forward(self, f_pred):
        return self.net(f_pred)


class PriorFusion(nn.Module):
    def __init__(self, latent_channels=128, width=CTX_WIDTH):
        super().__init__()
        self.net = nn.Sequential(
            conv(latent_channels + width, width), lrelu(),
            conv(width, width))

    def forward(self, hyper_feat, temporal_feat):
        return self.net(torch.cat([hyper_feat, temporal_feat], dim=1))


class ChunkParamHead(nn.Module):
    """Per-chunk entropy parameters from the three aggregated contexts."""

    def __init__(self, chunk_size, prev_channels, width=CTX_WIDTH):
        super().__init__()
        self.chunk_size = chunk_size
        self.prev_channels = prev_channels
        if prev_channels:
            self.channel_ctx = nn.Sequential(
                conv(prev_channels, width), lrelu(), conv(width, width))
        else:
            self.channel_ctx = None
        # reads only anchors: input is the anchor-masked chunk grid
        self.spatial_ctx = nn.Conv2d(chunk_size, width, 5, padding=2)
        self.aggregate = nn.Sequential(
            nn.Conv2d(3 * width, 2 * width, 1), lrelu(),
            nn.Conv2d(2 * width, 2 * width, 1), lrelu(),
            nn.Conv2d(2 * width, 2 * chunk_size, 1))

    def forward(self, temporal, decoded_prev, anchors):
        zeros = torch.zeros(temporal.shape[0], CTX_WIDTH, *temporal.shape[-2:],
                            dtype=temporal.dtype, device=temporal.device)
        if self.channel_ctx is not None:
            if decoded_prev is None:
                raise ValueError("previous chunks required before this chunk")
            ch = self.channel_ctx(decoded_prev)
        else:
            ch = zeros
        sp = zeros if anchors is None else self.spatial_ctx(anchors)
        params = self.aggregate(torch.cat([temporal, sp, ch], dim=1))
        mu, sigma_raw = params.chunk(2, dim=1)
        return mu, clamp_sigma(sigma_raw)


class ContextualCodec(nn.Module):
    """Transforms + entropy model + two-pass chunked coding schedule."""

    def __init__(self, feat_channels=64, latent_channels=128,
                 groups=(16, 16, 32, 64), hyper_channels=64):
        super().__init__()
        if sum(groups) != latent_channels:
            raise ValueError("chunk sizes must partition the latent channels")
        self.groups = tuple(groups)
        self.latent_channels = latent_channels
        self.encoder = ContextualEncoder(feat_channels, latent_channels)
        self.decoder = ContextualDecoder(feat_channels, latent_channels)
        self.refinement = FeatureRefinement(feat_channels)
        self.hyper_encoder = ContextHyperEncoder(latent_channels, hyper_channels)
        self.hyper_decoder = ContextHyperDecoder(latent_channels, hyper_channels)
        self.temporal_encoder = TemporalContextEncoder(feat_channels)
        self.prior_fusion = PriorFusion(latent_channels)
        offsets = np.concatenate(([0], np.cumsum(groups)))
        self.chunk_slices = [slice(int(a), int(b))
                             for a, b in zip(offsets[:-1], offsets[1:])]
        self.heads = nn.ModuleList(
            ChunkParamHead(g, int(offsets[k])) for k, g in enumerate(groups))

    def temporal_context(self, f_pred, hyper_feat):
        return self.prior_fusion(hyper_feat, self.temporal_encoder(f_pred))

    def entropy_params(self, k, decoded_prev, anchors, temporal):
        """(mu, sigma) for chunk k at every position.

        decoded_prev: chunks 0..k-1 (or None for k=0); anchors: chunk k with
        non-anchors zeroed (or None for the anchor pass).
        """
        return self.heads[k](temporal, decoded_prev, anchors)

    # -- training-mode rate (differentiable, surrogate-quantized latent) -----

    def chunk_rate_params(self, c_hat, temporal):
        """Per-chunk (mu, sigma) grids combining anchor/non-anchor passes."""
        h, w = c_hat.shape[-2:]
        mask = torch.from_numpy(anchor_mask(h, w)).to(c_hat.device)
        params = []
        for k, sl in enumerate(self.chunk_slices):
            prev = c_hat[:, : sl.start] if k else None
            chunk = c_hat[:, sl]
            mu_a, sig_a = self.entropy_params(k, prev, None, temporal)
            anchors_only = chunk * mask
            mu_n, sig_n = self.entropy_params(k, prev, anchors_only, temporal)
            mu = torch.where(mask, mu_a, mu_n)
            sigma = torch.where(mask, sig_a, sig_n)
            params.append((mu, sigma))
        return params

    def rate_bits(self, c_hat, temporal):
        bits = c_hat.new_zeros(())
        for (mu, sigma), sl in zip(self.chunk_rate_params(c_hat, temporal),
                                   self.chunk_slices):
            p = gaussian_likelihood(c_hat[:, sl], mu, sigma)
            bits = bits - torch.log2(p).sum()
        return bits

    # -- real coding ---------------------------------------------------------

    @torch.no_grad()
    def code(self, c, temporal, coder: GaussianCoder):
        """Quantize and range-code the latent: 4 chunks x 2 passes.

        Returns (c_hat, segments: list of 8 byte strings, est_bits per segment).
        """
        c_hat = quantize(c, "eval")
        h, w = c_hat.shape[-2:]
        mask = anchor_mask(h, w)
        tmask = torch.from_numpy(mask).to(c.device)
        segments, est_bits = [], []
        for k, sl in enumerate(self.chunk_slices):
            prev = c_hat[:, : sl.start] if k else None
            chunk = c_hat[:, sl]
            for pass_anchors in (True, False):
                if pass_anchors:
                    mu, sigma = self.entropy_params(k, prev, None, temporal)
                    pmask = mask
                else:
                    mu, sigma = self.entropy_params(
                        k, prev, chunk * tmask, temporal)
                    pmask = ~mask
                syms = chunk[0].numpy()[:, pmask].astype(np.int64).ravel()
                mu_f = mu[0].numpy()[:, pmask].ravel()
                sig_f = sigma[0].numpy()[:, pmask].ravel()
                enc = RangeEncoder()
                bits = coder.encode(enc, syms, mu_f, sig_f)
                segments.append(enc.finish())
                est_bits.append(bits)
        return c_hat, segments, est_bits

    @torch.no_grad()
    def decode_segments(self, segments, temporal, coder: GaussianCoder,
                        h: int, w: int):
        """Inverse of code(); reproduces the quantized latent bit-exactly."""
        if len(segments) != 2 * len(self.groups):
            raise ValueError("expected %d coded segments, got %d"
                             % (2 * len(self.groups), len(segments)))
        mask = anchor_mask(h, w)
        tmask = torch.from_numpy(mask)
        c_hat = torch.zeros(1, self.latent_channels, h, w)
        seg_iter = iter(segments)
        for k, sl in enumerate(self.chunk_slices):
            prev = c_hat[:, : sl.start] if k else None
            chunk = torch.zeros(1, self.groups[k], h, w)
            for pass_anchors in (True, False):
                if pass_anchors:
                    mu, sigma = self.entropy_params(k, prev, None, temporal)
                    pmask = mask
                else:
                    mu, sigma = self.entropy_params(
                        k, prev, chunk * tmask, temporal)
                    pmask = ~mask
                mu_f = mu[0].numpy()[:, pmask].ravel()
                sig_f = sigma[0].numpy()[:, pmask].ravel()
                dec = RangeDecoder(next(seg_iter))
                syms = coder.decode(dec, mu_f, sig_f)
                vals = syms.reshape(self.groups[k], -1)
                grid = chunk[0].numpy()
                grid[:, pmask] = vals.astype(np.float32)
                chunk = torch.from_numpy(grid).unsqueeze(0)
            c_hat[:, sl] = chunk
        return c_hat

    # -- reporting -----------------------------------------------------------

    @torch.no_grad()
    def channel_entropy_report(self, c_hat, temporal):
        """Per-channel and per-chunk estimated bits of the coded latent."""
        per_channel = []
        for (mu, sigma), sl in zip(self.chunk_rate_params(c_hat, temporal),
                                   self.chunk_slices):
            p = gaussian_likelihood(c_hat[:, sl], mu, sigma)
            bits = (-torch.log2(p)).sum(dim=(0, 2, 3))
            per_channel.extend(bits.tolist())
        groups = []
        start = 0
        for g in self.groups:
            groups.append(float(sum(per_channel[start:start + g])))
            start += g
        return {"per_channel": per_channel, "per_group": groups,
                "total": float(sum(per_channel))}
