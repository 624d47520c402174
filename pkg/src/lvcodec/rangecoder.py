"""Integer range coder: 64-bit state, 16-bit frequencies, carry-less renormalization.

Frequencies are integers summing to exactly TOTAL = 2**16 with every symbol
frequency >= 1. The encoder and decoder renormalize byte-wise; the flush emits
3 bytes, so per-stream overhead stays under 32 bits (rounding loss per symbol
is bounded by TOTAL / 2**48).
"""

from bisect import bisect_right

import numpy as np

MASK = (1 << 64) - 1
TOP = 1 << 56
BOT = 1 << 48
TOTAL_BITS = 16
TOTAL = 1 << TOTAL_BITS


class RangeEncoder:
    def __init__(self):
        self.low = 0
        self.range = MASK
        self.out = bytearray()

    def encode(self, cum: int, freq: int):
        if freq <= 0:
            raise ValueError("symbol has zero frequency")
        r = self.range >> TOTAL_BITS
        low = (self.low + r * cum) & MASK
        rng = r * freq
        out = self.out
        while True:
            if (low ^ ((low + rng) & MASK)) < TOP:
                pass
            elif rng < BOT:
                rng = (-low) & (BOT - 1)
            else:
                break
            out.append((low >> 56) & 0xFF)
            low = (low << 8) & MASK
            rng = (rng << 8) & MASK
        self.low = low
        self.range = rng

    def finish(self) -> bytes:
        # range >= BOT after renormalization, so a 2**40-aligned value with
        # 2**40 headroom always exists inside [low, low + range): 3 bytes.
        step = 1 << 40
        v = ((self.low + step - 1) // step * step) & MASK
        self.out.append((v >> 56) & 0xFF)
        self.out.append((v >> 48) & 0xFF)
        self.out.append((v >> 40) & 0xFF)
        return bytes(self.out)


class RangeDecoder:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0
        self.low = 0
        self.range = MASK
        code = 0
        for _ in range(8):
            code = (code << 8) | self._byte()
        self.code = code
        self._r = 0

    def _byte(self) -> int:
        b = self.data[self.pos] if self.pos < len(self.data) else 0
        self.pos += 1
        return b

    def decode_cum(self) -> int:
        self._r = self.range >> TOTAL_BITS
        cum = ((self.code - self.low) & MASK) // self._r
        # clamp keeps corrupted streams decodable (garbage symbols, no crash)
        return cum if cum < TOTAL else TOTAL - 1

    def update(self, cum: int, freq: int):
        r = self._r
        low = (self.low + r * cum) & MASK
        rng = r * freq
        code = self.code
        while True:
            if (low ^ ((low + rng) & MASK)) < TOP:
                pass
            elif rng < BOT:
                rng = (-low) & (BOT - 1)
            else:
                break
            code = ((code << 8) | self._byte()) & MASK
            low = (low << 8) & MASK
            rng = (rng << 8) & MASK
        self.low = low
        self.range = rng
        self.code = code


def quantize_pmf(pmf) -> np.ndarray:
    """Float pmf -> integer frequencies summing to TOTAL, each >= 1.

    Deterministic: encoder and decoder must derive tables through this one
    path for streams to be decodable.
    """
    pmf = np.asarray(pmf, dtype=np.float64)
    n = pmf.size
    if n < 1:
        raise ValueError("empty pmf")
    if n > TOTAL:
        raise ValueError("pmf support %d exceeds %d" % (n, TOTAL))
    pmf = np.where(np.isfinite(pmf) & (pmf > 0), pmf, 0.0)
    s = pmf.sum()
    if s <= 0:
        pmf = np.ones(n)
        s = float(n)
    freqs = np.floor(pmf / s * (TOTAL - n)).astype(np.int64) + 1
    freqs[int(np.argmax(freqs))] += TOTAL - int(freqs.sum())
    return freqs


def table_bits(freqs: np.ndarray, symbols) -> float:
    """Exact code-length estimate of the quantized model, in bits."""
    f = np.asarray(freqs, dtype=np.float64)
    idx = np.asarray(symbols, dtype=np.int64)
    return float(np.sum(TOTAL_BITS - np.log2(f[idx])))


def range_encode(symbols, model_sequence) -> bytes:
    """Encode integer symbols, one frequency table (from quantize_pmf) each."""
    enc = RangeEncoder()
    for s, freqs in zip(symbols, model_sequence):
        cumfreqs = np.concatenate(([0], np.cumsum(freqs)))
        if s < 0 or s >= len(freqs):
            raise ValueError("symbol %d outside model support" % s)
        enc.encode(int(cumfreqs[s]), int(freqs[s]))
    return enc.finish()


def range_decode(data: bytes, model_sequence) -> list:
    dec = RangeDecoder(data)
    out = []
    for freqs in model_sequence:
        cumfreqs = np.concatenate(([0], np.cumsum(freqs))).tolist()
        cum = dec.decode_cum()
        s = bisect_right(cumfreqs, cum) - 1
        dec.update(cumfreqs[s], cumfreqs[s + 1] - cumfreqs[s])
        out.append(s)
    return out
