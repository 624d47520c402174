import numpy as np
import pytest
import torch

from lvcodec.entropy import (SIGMA_MIN, FactorizedCoder, FactorizedPrior,
                             GaussianCoder, quantize, rate_bits)
from lvcodec.motion_codec import (HyperDecoder, HyperEncoder, MotionDecoder,
                                  MotionEncoder)
from lvcodec.rangecoder import RangeDecoder, RangeEncoder


def test_motion_encoder_shape():
    enc = MotionEncoder(8, 6)
    m = enc(torch.rand(1, 8, 64, 64))
    assert m.shape == (1, 6, 4, 4)


def test_motion_encoder_rejects_unaligned_dims():
    with pytest.raises(ValueError, match="divisible"):
        MotionEncoder(8, 6)(torch.rand(1, 8, 40, 64))


def test_motion_encoder_determinism():
    torch.manual_seed(0)
    enc = MotionEncoder(4, 4).eval()
    v = torch.rand(1, 4, 32, 32)
    assert torch.equal(enc(v), enc(v))


def test_hyper_codec_shapes_and_sigma_floor():
    torch.manual_seed(1)
    henc = HyperEncoder(6, 5)
    hdec = HyperDecoder(6, 5)
    m = torch.rand(1, 6, 4, 4) * 4 - 2
    z = henc(m)
    assert z.shape == (1, 5, 1, 1)
    mu, sigma = hdec(quantize(z, "eval"))
    assert mu.shape == (1, 6, 4, 4) and sigma.shape == (1, 6, 4, 4)
    assert torch.all(sigma >= SIGMA_MIN)


def test_rate_finite_and_nonnegative():
    torch.manual_seed(2)
    henc = HyperEncoder(6, 5)
    hdec = HyperDecoder(6, 5)
    prior = FactorizedPrior(5)
    with torch.no_grad():
        m = torch.randn(1, 6, 8, 8) * 3
        z_hat = quantize(henc(m), "eval")
        mu, sigma = hdec(z_hat)
        r = rate_bits(quantize(m, "eval"), mu, sigma) + prior.rate_bits(z_hat)
    assert torch.isfinite(r) and float(r) >= 0


def test_all_encoder_parameters_get_rate_gradient():
    torch.manual_seed(3)
    enc = MotionEncoder(4, 4)
    henc = HyperEncoder(4, 4)
    hdec = HyperDecoder(4, 4)
    prior = FactorizedPrior(4)
    v = torch.rand(1, 4, 64, 64)
    m = enc(v)
    z = henc(m)
    z_hat = quantize(z, "train")
    mu, sigma = hdec(z_hat)
    loss = rate_bits(quantize(m, "train"), mu, sigma) + prior.rate_bits(z_hat)
    loss.backward()
    for name, p in enc.named_parameters():
        assert p.grad is not None and p.grad.abs().sum() > 0, name


def test_motion_decoder_shape():
    dec = MotionDecoder(8, 6)
    v = dec(torch.rand(1, 6, 4, 4))
    assert v.shape == (1, 8, 64, 64)


def test_encode_quantize_decode_deterministic():
    torch.manual_seed(4)
    enc = MotionEncoder(4, 4).eval()
    dec = MotionDecoder(4, 4).eval()
    v = torch.rand(1, 4, 32, 32) * 6 - 3
    out1 = dec(quantize(enc(v), "eval"))
    out2 = dec(quantize(enc(v), "eval"))
    assert torch.equal(out1, out2)


def test_coded_motion_round_trip_bit_exact():
    """Encoder-side and decoder-side latents agree after real range coding."""
    torch.manual_seed(5)
    enc = MotionEncoder(4, 6).eval()
    henc = HyperEncoder(6, 4).eval()
    hdec = HyperDecoder(6, 4).eval()
    prior = FactorizedPrior(4)
    gauss = GaussianCoder()
    fact = FactorizedCoder(prior)

    with torch.no_grad():
        m = enc(torch.rand(1, 4, 64, 64) * 4)
        z_hat = quantize(henc(m), "eval")
        m_hat = quantize(m, "eval")
        mu, sigma = hdec(z_hat)

    re = RangeEncoder()
    fact.encode(re, z_hat[0].numpy().astype(np.int64).reshape(4, -1))
    z_bytes = re.finish()
    re = RangeEncoder()
    gauss.encode(re, m_hat[0].numpy().astype(np.int64).ravel(),
                 mu[0].numpy().ravel(), sigma[0].numpy().ravel())
    m_bytes = re.finish()

    z_dec = fact.decode(RangeDecoder(z_bytes), z_hat[0, 0].numel())
    assert np.array_equal(z_dec.ravel(),
                          z_hat[0].numpy().astype(np.int64).ravel())
    with torch.no_grad():
        mu2, sigma2 = hdec(torch.from_numpy(
            z_dec.reshape(1, *z_hat.shape[1:]).astype(np.float32)))
    assert torch.equal(mu, mu2) and torch.equal(sigma, sigma2)
    m_dec = gauss.decode(RangeDecoder(m_bytes), mu2[0].numpy().ravel(),
                         sigma2[0].numpy().ravel())
    assert np.array_equal(m_dec, m_hat[0].numpy().astype(np.int64).ravel())
