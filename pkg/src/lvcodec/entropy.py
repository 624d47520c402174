"""Quantization, probability models and rate estimation.

Two probability models feed the range coder:
  - a conditional Gaussian with per-element (mu, sigma), used for the main
    latents; coding tables are cached over quantized (sigma, mu-fraction) bins;
  - a learned per-channel factorized prior for the hyper-latents.

Both models expose one shared table-construction path so encoder and decoder
always agree bit-exactly.
"""

import math

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F
from scipy.special import ndtr

from .rangecoder import TOTAL_BITS, quantize_pmf

SIGMA_MIN = 0.11
SIGMA_MAX = 256.0
P_MIN = 2.0 ** -16
SUPPORT_SIGMAS = 20.0       # per-symbol support half-width in sigmas
MAX_SUPPORT = 8192
N_SIGMA_LEVELS = 64
DELTA_BINS = 64             # mu fractional-offset quantization
SYMBOL_BOUND = 1 << 15      # quantized latents live in [-2^15, 2^15)


# ---------------------------------------------------------------------------
# quantization

def quantize(x: torch.Tensor, mode: str = "eval",
             generator: torch.Generator | None = None) -> torch.Tensor:
    """eval: round half away from zero; train: additive uniform noise."""
    if mode == "eval":
        q = torch.where(x >= 0, torch.floor(x + 0.5), torch.ceil(x - 0.5))
        return torch.clamp(q, -SYMBOL_BOUND, SYMBOL_BOUND - 1)
    if mode == "train":
        noise = torch.empty_like(x).uniform_(-0.5, 0.5, generator=generator)
        return x + noise
    if mode == "ste":
        q = torch.where(x >= 0, torch.floor(x + 0.5), torch.ceil(x - 0.5))
        return x + (q - x).detach()
    raise ValueError("unknown quantization mode %r" % mode)


# ---------------------------------------------------------------------------
# conditional Gaussian

def _std_cdf(x: torch.Tensor) -> torch.Tensor:
    return 0.5 * (1.0 + torch.erf(x * (2.0 ** -0.5)))


def gaussian_likelihood(x: torch.Tensor, mu: torch.Tensor,
                        sigma: torch.Tensor) -> torch.Tensor:
    """P(quantized value == x) under N(mu, sigma), integrated over the bin."""
    sigma = torch.clamp(sigma, min=SIGMA_MIN)
    upper = _std_cdf((x - mu + 0.5) / sigma)
    lower = _std_cdf((x - mu - 0.5) / sigma)
    return torch.clamp(upper - lower, min=P_MIN)


def gaussian_pmf(x: float, mu: float, sigma: float) -> float:
    sigma = max(sigma, SIGMA_MIN)
    p = ndtr((x - mu + 0.5) / sigma) - ndtr((x - mu - 0.5) / sigma)
    return float(max(p, P_MIN))


def rate_bits(x: torch.Tensor, mu: torch.Tensor,
              sigma: torch.Tensor) -> torch.Tensor:
    """Estimated bits -sum log2 p; differentiable in mu/sigma and x."""
    if x.shape != mu.shape or x.shape != sigma.shape:
        raise ValueError("latent/parameter dims mismatch")
    return -torch.log2(gaussian_likelihood(x, mu, sigma)).sum()


def clamp_sigma(raw: torch.Tensor) -> torch.Tensor:
    """Network head output -> valid sigma in [SIGMA_MIN, SIGMA_MAX]."""
    return torch.clamp(F.softplus(raw), SIGMA_MIN, SIGMA_MAX)


# ---------------------------------------------------------------------------
# factorized prior (learned per-channel monotone CDF)

class FactorizedPrior(nn.Module):
    """Univariate piecewise-monotone density per channel for hyper-latents."""

    def __init__(self, channels: int, filters=(3, 3, 3), init_scale=10.0):
        super().__init__()
        self.channels = channels
        dims = (1,) + tuple(filters) + (1,)
        self._n_layers = len(dims) - 1
        scale = init_scale ** (1.0 / self._n_layers)
        for i in range(self._n_layers):
            init = math.log(math.expm1(1.0 / scale / dims[i + 1]))
            matrix = torch.full((channels, dims[i + 1], dims[i]), init)
            self.register_parameter("matrix%d" % i, nn.Parameter(matrix))
            bias = torch.empty(channels, dims[i + 1], 1).uniform_(-0.5, 0.5)
            self.register_parameter("bias%d" % i, nn.Parameter(bias))
            if i < self._n_layers - 1:
                factor = torch.zeros(channels, dims[i + 1], 1)
                self.register_parameter("factor%d" % i, nn.Parameter(factor))

    def _logits(self, x: torch.Tensor) -> torch.Tensor:
        # x: (channels, 1, n)
        for i in range(self._n_layers):
            m = F.softplus(getattr(self, "matrix%d" % i))
            x = torch.bmm(m, x) + getattr(self, "bias%d" % i)
            if i < self._n_layers - 1:
                a = torch.tanh(getattr(self, "factor%d" % i))
                x = x + a * torch.tanh(x)
        return x

    def likelihood(self, x: torch.Tensor) -> torch.Tensor:
        """x: (B, C, H, W) -> per-element bin probability."""
        b, c, h, w = x.shape
        flat = x.permute(1, 0, 2, 3).reshape(c, 1, -1)
        lower = self._logits(flat - 0.5)
        upper = self._logits(flat + 0.5)
        sign = -torch.sign(lower + upper).detach()
        p = torch.abs(torch.sigmoid(sign * upper) - torch.sigmoid(sign * lower))
        p = torch.clamp(p, min=P_MIN)
        return p.reshape(c, b, h, w).permute(1, 0, 2, 3)

    def rate_bits(self, x: torch.Tensor) -> torch.Tensor:
        return -torch.log2(self.likelihood(x)).sum()

    @torch.no_grad()
    def integer_cdf(self, lo: int, hi: int) -> np.ndarray:
        """CDF at half-integer bin edges lo-0.5 .. hi+0.5; shape (C, hi-lo+2)."""
        edges = torch.arange(lo, hi + 2, dtype=torch.float32) - 0.5
        x = edges.reshape(1, 1, -1).repeat(self.channels, 1, 1)
        return torch.sigmoid(self._logits(x)).squeeze(1).double().numpy()

    @torch.no_grad()
    def support(self) -> tuple:
        """Smallest [lo, hi] whose tails are below 2**-24, capped at +-4096."""
        bound = 64
        while bound < 4096:
            cdf = self.integer_cdf(-bound, bound)
            if cdf[:, 0].max() < 2.0 ** -24 and (1 - cdf[:, -1]).max() < 2.0 ** -24:
                break
            bound *= 2
        bound = min(bound, 4096)
        return -bound, bound


# ---------------------------------------------------------------------------
# coding tables

class _Table:
    __slots__ = ("freqs", "cumfreqs", "logf", "half_width")

    def __init__(self, pmf: np.ndarray, half_width: int):
        self.freqs = quantize_pmf(pmf)
        self.cumfreqs = np.concatenate(([0], np.cumsum(self.freqs))).tolist()
        self.logf = (TOTAL_BITS - np.log2(self.freqs)).tolist()
        self.half_width = half_width


_UNIFORM16 = _Table(np.ones(1 << 16), 0)
RAW_BITS = 16.0  # escape payload cost: one uniform 16-bit symbol


class GaussianCoder:
    """Shared encoder/decoder coding path for the conditional Gaussian.

    (mu, sigma) are snapped to a finite table grid: sigma to N_SIGMA_LEVELS
    log-spaced levels, the fractional part of mu to 1/DELTA_BINS. Symbols far
    outside the table support escape to a raw 16-bit payload.
    """

    def __init__(self):
        self._levels = np.geomspace(SIGMA_MIN, SIGMA_MAX, N_SIGMA_LEVELS)
        logs = np.log(self._levels)
        self._log_mid = (logs[1:] + logs[:-1]) / 2.0
        self._cache = {}

    def _table(self, sigma_idx: int, delta_idx: int) -> _Table:
        key = (sigma_idx, delta_idx)
        tab = self._cache.get(key)
        if tab is None:
            sigma = self._levels[sigma_idx]
            delta = delta_idx / DELTA_BINS
            half = int(min(max(math.ceil(SUPPORT_SIGMAS * sigma), 2), MAX_SUPPORT))
            r = np.arange(-half, half + 1)
            hi = ndtr((r - delta + 0.5) / sigma)
            lo = ndtr((r - delta - 0.5) / sigma)
            esc_lo = max(ndtr((-half - delta - 0.5) / sigma), 0.0)
            esc_hi = max(1.0 - ndtr((half - delta + 0.5) / sigma), 0.0)
            pmf = np.concatenate(([esc_lo], hi - lo, [esc_hi]))
            tab = _Table(pmf, half)
            self._cache[key] = tab
        return tab

    def _bin(self, mu: np.ndarray, sigma: np.ndarray):
        sigma = np.clip(np.asarray(sigma, dtype=np.float64), SIGMA_MIN, SIGMA_MAX)
        sidx = np.searchsorted(self._log_mid, np.log(sigma))
        mu = np.asarray(mu, dtype=np.float64)
        mu_round = np.rint(mu)
        didx = np.rint((mu - mu_round) * DELTA_BINS).astype(np.int64)
        return mu_round.astype(np.int64), sidx.astype(np.int64), didx

    def encode(self, enc, symbols, mu, sigma) -> float:
        """Range-encode flat int symbols; returns the quantized-model estimate
        in bits (escapes included)."""
        mu_round, sidx, didx = self._bin(mu, sigma)
        syms = np.asarray(symbols, dtype=np.int64)
        bits = 0.0
        for s, mr, si, di in zip(syms.tolist(), mu_round.tolist(),
                                 sidx.tolist(), didx.tolist()):
            tab = self._table(si, di)
            r = s - mr
            half = tab.half_width
            if -half <= r <= half:
                idx = r + half + 1
            else:
                idx = 0 if r < -half else 2 * half + 2
            cum = tab.cumfreqs
            enc.encode(cum[idx], cum[idx + 1] - cum[idx])
            bits += tab.logf[idx]
            if idx == 0 or idx == 2 * half + 2:
                raw = s + SYMBOL_BOUND
                ucum = _UNIFORM16.cumfreqs
                enc.encode(ucum[raw], 1)
                bits += RAW_BITS
        return bits

    def decode(self, dec, mu, sigma) -> np.ndarray:
        from bisect import bisect_right

        mu_round, sidx, didx = self._bin(mu, sigma)
        out = np.empty(len(mu_round), dtype=np.int64)
        for i, (mr, si, di) in enumerate(zip(mu_round.tolist(), sidx.tolist(),
                                             didx.tolist())):
            tab = self._table(si, di)
            cumfreqs = tab.cumfreqs
            cum = dec.decode_cum()
            idx = bisect_right(cumfreqs, cum) - 1
            dec.update(cumfreqs[idx], cumfreqs[idx + 1] - cumfreqs[idx])
            half = tab.half_width
            if idx == 0 or idx == 2 * half + 2:
                raw = dec.decode_cum()
                dec.update(raw, 1)
                out[i] = raw - SYMBOL_BOUND
            else:
                out[i] = idx - half - 1 + mr
        return out


class FactorizedCoder:
    """Coding path for a FactorizedPrior: per-channel tables + raw escape."""

    def __init__(self, prior: FactorizedPrior):
        self.prior = prior
        self._build()

    def _build(self):
        lo, hi = self.prior.support()
        cdf = self.prior.integer_cdf(lo, hi)
        self.lo = lo
        self.hi = hi
        self.tables = []
        for ch in range(self.prior.channels):
            pmf_core = cdf[ch, 1:] - cdf[ch, :-1]
            esc_lo = max(cdf[ch, 0], 0.0)
            esc_hi = max(1.0 - cdf[ch, -1], 0.0)
            pmf = np.concatenate(([esc_lo], pmf_core, [esc_hi]))
            self.tables.append(_Table(pmf, (hi - lo) // 2))

    def encode(self, enc, symbols_by_channel) -> float:
        """symbols_by_channel: (C, n) int array. Returns estimate in bits."""
        bits = 0.0
        lo, hi = self.lo, self.hi
        for ch, row in enumerate(np.asarray(symbols_by_channel, dtype=np.int64)):
            tab = self.tables[ch]
            cumfreqs = tab.cumfreqs
            logf = tab.logf
            for s in row.tolist():
                if lo <= s <= hi:
                    idx = s - lo + 1
                else:
                    idx = 0 if s < lo else hi - lo + 2
                enc.encode(cumfreqs[idx], cumfreqs[idx + 1] - cumfreqs[idx])
                bits += logf[idx]
                if idx == 0 or idx == hi - lo + 2:
                    raw = s + SYMBOL_BOUND
                    enc.encode(_UNIFORM16.cumfreqs[raw], 1)
                    bits += RAW_BITS
        return bits

    def decode(self, dec, n_per_channel: int) -> np.ndarray:
        from bisect import bisect_right

        lo, hi = self.lo, self.hi
        out = np.empty((self.prior.channels, n_per_channel), dtype=np.int64)
        for ch in range(self.prior.channels):
            cumfreqs = self.tables[ch].cumfreqs
            for i in range(n_per_channel):
                cum = dec.decode_cum()
                idx = bisect_right(cumfreqs, cum) - 1
                dec.update(cumfreqs[idx], cumfreqs[idx + 1] - cumfreqs[idx])
                if idx == 0 or idx == hi - lo + 2:
                    raw = dec.decode_cum()
                    dec.update(raw, 1)
                    out[ch, i] = raw - SYMBOL_BOUND
                else:
                    out[ch, i] = idx - 1 + lo
        return out
