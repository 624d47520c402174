"""Full codec network: intra model plus the inter-frame (P) pipeline."""

import torch
import torch.nn as nn

from .autoencoder import FeatureExtractor, FrameReconstructor
from .config import CodecConfig
from .contextual import ContextualCodec
from .entropy import FactorizedPrior, quantize, rate_bits
from .layers import conv, deconv, lrelu
from .motion import MotionEstimator
from .motion_codec import HyperDecoder, HyperEncoder, MotionDecoder, MotionEncoder
from .motion_comp import MotionCompensation


class IntraCodec(nn.Module):
    """Minimal hyperprior image codec used for I-frames.

    Isolated behind encode/decode transforms so a stronger intra model can be
    swapped in without touching the container format.
    """

    def __init__(self, channels=64, latent_channels=64):
        super().__init__()
        n, m = channels, latent_channels
        self.analysis = nn.Sequential(
            conv(3, n, stride=2), lrelu(),
            conv(n, n, stride=2), lrelu(),
            conv(n, n, stride=2), lrelu(),
            conv(n, m, stride=2))
        self.synthesis = nn.Sequential(
            deconv(m, n), lrelu(),
            deconv(n, n), lrelu(),
            deconv(n, n), lrelu(),
            deconv(n, 3))
        self.hyper_encoder = HyperEncoder(m, n)
        self.hyper_decoder = HyperDecoder(m, n)
        self.z_prior = FactorizedPrior(n)

    def forward(self, x, mode="train"):
        y = self.analysis(x)
        z = self.hyper_encoder(y)
        z_hat = quantize(z, mode)
        mu, sigma = self.hyper_decoder(z_hat)
        y_hat = quantize(y, mode)
        bits = rate_bits(y_hat, mu, sigma) + self.z_prior.rate_bits(z_hat)
        return self.synthesis(y_hat), bits


class VideoCodecModel(nn.Module):
    def __init__(self, cfg: CodecConfig | None = None):
        super().__init__()
        self.cfg = cfg = cfg or CodecConfig()
        self.intra = IntraCodec(cfg.intra_channels, cfg.intra_latent_channels)
        self.extractor = FeatureExtractor(cfg.feat_channels)
        self.reconstructor = FrameReconstructor(cfg.feat_channels)
        self.motion_estimator = MotionEstimator(
            cfg.feat_channels, cfg.motion_channels, cfg.motion_aware_dim,
            multiscale=cfg.multiscale_motion)
        self.motion_encoder = MotionEncoder(cfg.motion_channels,
                                            cfg.motion_latent_channels)
        self.motion_decoder = MotionDecoder(cfg.motion_channels,
                                            cfg.motion_latent_channels)
        self.motion_hyper_encoder = HyperEncoder(cfg.motion_latent_channels,
                                                 cfg.motion_hyper_channels)
        self.motion_hyper_decoder = HyperDecoder(cfg.motion_latent_channels,
                                                 cfg.motion_hyper_channels)
        self.motion_z_prior = FactorizedPrior(cfg.motion_hyper_channels)
        self.compensation = MotionCompensation(
            cfg.motion_channels, cfg.feat_channels, cfg.deform_groups)
        self.contextual = ContextualCodec(
            cfg.feat_channels, cfg.context_channels, cfg.context_groups,
            cfg.context_hyper_channels)
        self.context_s_prior = FactorizedPrior(cfg.context_hyper_channels)

    def forward_p(self, x_t, x_ref, mode="train"):
        """One P-frame pass with surrogate quantization; returns
        (reconstruction, rate terms in bits)."""
        pyr_cur = self.extractor(x_t)
        pyr_ref = self.extractor(x_ref)
        v = self.motion_estimator(pyr_cur, pyr_ref)

        m = self.motion_encoder(v)
        z = self.motion_hyper_encoder(m)
        z_hat = quantize(z, mode)
        mu_m, sigma_m = self.motion_hyper_decoder(z_hat)
        m_hat = quantize(m, mode)
        v_hat = self.motion_decoder(m_hat)

        f_pred = self.compensation(v_hat, pyr_ref[0])

        c = self.contextual.encoder(pyr_cur[0], f_pred)
        s = self.contextual.hyper_encoder(c)
        s_hat = quantize(s, mode)
        hyper_feat = self.contextual.hyper_decoder(s_hat)
        temporal = self.contextual.temporal_context(f_pred, hyper_feat)
        c_hat = quantize(c, mode)

        f_tilde = self.contextual.decoder(c_hat)
        f_rec = self.contextual.refinement(f_tilde, f_pred)
        x_rec = self.reconstructor(f_rec)

        rates = {
            "motion": rate_bits(m_hat, mu_m, sigma_m),
            "motion_hyper": self.motion_z_prior.rate_bits(z_hat),
            "context": self.contextual.rate_bits(c_hat, temporal),
            "context_hyper": self.context_s_prior.rate_bits(s_hat),
        }
        return x_rec, rates

    def total_rate(self, rates: dict) -> torch.Tensor:
        return sum(rates.values())
