import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lvcodec.rangecoder import (TOTAL, RangeEncoder, quantize_pmf,
                                range_decode, range_encode, table_bits)


def test_empty_stream_is_flush_only():
    data = RangeEncoder().finish()
    assert len(data) <= 8
    assert range_decode(data, []) == []


def test_uniform_256_length_bound():
    rng = np.random.default_rng(0)
    freqs = quantize_pmf(np.ones(256))
    symbols = rng.integers(0, 256, 1024).tolist()
    data = range_encode(symbols, [freqs] * 1024)
    # entropy is exactly 8 bits/symbol = 1024 bytes
    assert 1024 <= len(data) <= int(1024 * 1.01) + 8
    assert range_decode(data, [freqs] * 1024) == symbols


def test_round_trip_random_models():
    rng = np.random.default_rng(1)
    for _ in range(300):
        n = int(rng.integers(2, 64))
        k = int(rng.integers(0, 40))
        freqs = quantize_pmf(rng.uniform(0, 1, n) ** 3)
        symbols = rng.integers(0, n, k).tolist()
        data = range_encode(symbols, [freqs] * k)
        assert range_decode(data, [freqs] * k) == symbols


def test_length_tracks_estimate():
    """Actual length within [floor(estimate), estimate + 32 bits]."""
    rng = np.random.default_rng(2)
    for _ in range(50):
        n = int(rng.integers(2, 128))
        k = int(rng.integers(1, 200))
        pmf = rng.uniform(0, 1, n) ** 4
        freqs = quantize_pmf(pmf)
        p = freqs / freqs.sum()
        symbols = rng.choice(n, size=k, p=p)
        est = table_bits(freqs, symbols)
        data = range_encode(symbols.tolist(), [freqs] * k)
        assert math.floor(est) <= len(data) * 8 <= est + 32


def test_skewed_model_compresses():
    freqs = quantize_pmf([0.97, 0.01, 0.01, 0.01])
    symbols = [0] * 2000
    data = range_encode(symbols, [freqs] * 2000)
    assert len(data) * 8 < 0.1 * 2000  # ~0.044 bits/symbol
    assert range_decode(data, [freqs] * 2000) == symbols


def test_mixed_models_in_one_stream():
    rng = np.random.default_rng(3)
    models = [quantize_pmf(rng.uniform(0, 1, int(rng.integers(2, 32))))
              for _ in range(100)]
    symbols = [int(rng.integers(0, len(m))) for m in models]
    data = range_encode(symbols, models)
    assert range_decode(data, models) == symbols


def test_quantize_pmf_sums_to_total_with_positive_freqs():
    rng = np.random.default_rng(4)
    for n in (1, 2, 3, 17, 256, 5000):
        freqs = quantize_pmf(rng.uniform(0, 1, n))
        assert freqs.sum() == TOTAL
        assert freqs.min() >= 1


def test_quantize_pmf_handles_degenerate_inputs():
    assert quantize_pmf([0.0, 0.0]).sum() == TOTAL
    assert quantize_pmf([np.nan, 1.0]).sum() == TOTAL
    f = quantize_pmf([1.0])
    assert f.tolist() == [TOTAL]
    with pytest.raises(ValueError):
        quantize_pmf([])


def test_quantize_pmf_deterministic():
    rng = np.random.default_rng(5)
    pmf = rng.uniform(0, 1, 64)
    assert np.array_equal(quantize_pmf(pmf), quantize_pmf(pmf.copy()))


def test_encode_rejects_zero_frequency_symbol():
    with pytest.raises(ValueError):
        range_encode([5], [quantize_pmf(np.ones(4))])


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(0, 7), max_size=64), st.integers(0, 2 ** 31))
def test_round_trip_property(symbols, seed):
    rng = np.random.default_rng(seed)
    freqs = quantize_pmf(rng.uniform(0, 1, 8))
    data = range_encode(symbols, [freqs] * len(symbols))
    assert range_decode(data, [freqs] * len(symbols)) == symbols
