"""Sequence orchestration: I/P coding loop, bitstream container, checkpoints.

Container layout (little-endian):
  header:  magic "MSTC", version u8, width u16, height u16, n_frames u16,
           gop u8, lambda_id u8
  frame:   frame_type u8 (0=I, 1=P), substream lengths u32 each
           (I: 2 substreams; P: 4), payloads, crc32 u32 over the payloads.
The P context payload carries 8 internally framed segments (u32 length each).
"""

import struct
import zlib

import numpy as np
import torch

from . import video_io
from .config import PAD_MULTIPLE, CodecConfig
from .entropy import FactorizedCoder, GaussianCoder, quantize
from .model import VideoCodecModel
from .rangecoder import RangeDecoder, RangeEncoder

MAGIC = b"MSTC"
VERSION = 1
FRAME_I, FRAME_P = 0, 1


class ContainerError(ValueError):
    pass


def _crc(payloads):
    crc = 0
    for p in payloads:
        crc = zlib.crc32(p, crc)
    return crc & 0xFFFFFFFF


def _frame_segments(payload):
    """Split an internally framed payload into its segments."""
    segs, pos = [], 0
    while pos < len(payload):
        (n,) = struct.unpack_from("<I", payload, pos)
        pos += 4
        segs.append(payload[pos: pos + n])
        pos += n
    return segs


def _join_segments(segments):
    out = bytearray()
    for s in segments:
        out += struct.pack("<I", len(s)) + s
    return bytes(out)


class SequenceCodec:
    """Deterministic eval-mode coding around a VideoCodecModel."""

    def __init__(self, model: VideoCodecModel):
        self.model = model.eval()
        self.cfg = model.cfg
        self.gaussian = GaussianCoder()
        self._rebuild_priors()

    def _rebuild_priors(self):
        self.intra_z_coder = FactorizedCoder(self.model.intra.z_prior)
        self.motion_z_coder = FactorizedCoder(self.model.motion_z_prior)
        self.context_s_coder = FactorizedCoder(self.model.context_s_prior)

    # -- single-stream helpers ------------------------------------------------

    def _code_factorized(self, coder, latent_hat):
        syms = latent_hat[0].numpy().astype(np.int64).reshape(
            latent_hat.shape[1], -1)
        enc = RangeEncoder()
        est = coder.encode(enc, syms)
        return enc.finish(), est

    def _decode_factorized(self, coder, payload, shape):
        c, h, w = shape
        dec = RangeDecoder(payload)
        syms = coder.decode(dec, h * w)
        return torch.from_numpy(
            syms.reshape(1, c, h, w).astype(np.float32))

    def _code_gaussian(self, latent_hat, mu, sigma):
        syms = latent_hat[0].numpy().astype(np.int64).ravel()
        enc = RangeEncoder()
        est = self.gaussian.encode(enc, syms, mu[0].numpy().ravel(),
                                   sigma[0].numpy().ravel())
        return enc.finish(), est

    def _decode_gaussian(self, payload, mu, sigma):
        dec = RangeDecoder(payload)
        syms = self.gaussian.decode(dec, mu[0].numpy().ravel(),
                                    sigma[0].numpy().ravel())
        return torch.from_numpy(
            syms.reshape(mu.shape).astype(np.float32))

    # -- I frames --------------------------------------------------------------

    @torch.no_grad()
    def encode_i_frame(self, x):
        m = self.model.intra
        y = m.analysis(x)
        z = m.hyper_encoder(y)
        z_hat = quantize(z, "eval")
        z_bytes, z_est = self._code_factorized(self.intra_z_coder, z_hat)
        mu, sigma = m.hyper_decoder(z_hat)
        y_hat = quantize(y, "eval")
        y_bytes, y_est = self._code_gaussian(y_hat, mu, sigma)
        x_rec = torch.clamp(m.synthesis(y_hat), 0.0, 1.0)
        record = {"type": FRAME_I, "payloads": [z_bytes, y_bytes]}
        stats = {
            "frame_type": "I",
            "substream_bits": {"hyper": len(z_bytes) * 8, "latent": len(y_bytes) * 8},
            "est_bits": {"hyper": z_est, "latent": y_est},
            "bits": (len(z_bytes) + len(y_bytes)) * 8,
        }
        latents = {"z": z_hat, "y": y_hat}
        return record, x_rec, stats, latents

    @torch.no_grad()
    def decode_i_frame(self, record, h, w):
        m = self.model.intra
        cz = self.model.cfg.intra_channels
        cy = self.model.cfg.intra_latent_channels
        z_hat = self._decode_factorized(
            self.intra_z_coder, record["payloads"][0], (cz, h // 64, w // 64))
        mu, sigma = m.hyper_decoder(z_hat)
        y_hat = self._decode_gaussian(record["payloads"][1], mu, sigma)
        x_rec = torch.clamp(m.synthesis(y_hat), 0.0, 1.0)
        return x_rec, {"z": z_hat, "y": y_hat}

    # -- P frames ----------------------------------------------------------------

    @torch.no_grad()
    def encode_p_frame(self, x_t, x_ref):
        model = self.model
        pyr_cur = model.extractor(x_t)
        pyr_ref = model.extractor(x_ref)
        v = model.motion_estimator(pyr_cur, pyr_ref)

        m = model.motion_encoder(v)
        z = model.motion_hyper_encoder(m)
        z_hat = quantize(z, "eval")
        z_bytes, z_est = self._code_factorized(self.motion_z_coder, z_hat)
        mu_m, sigma_m = model.motion_hyper_decoder(z_hat)
        m_hat = quantize(m, "eval")
        m_bytes, m_est = self._code_gaussian(m_hat, mu_m, sigma_m)
        v_hat = model.motion_decoder(m_hat)

        f_pred = model.compensation(v_hat, pyr_ref[0])

        c = model.contextual.encoder(pyr_cur[0], f_pred)
        s = model.contextual.hyper_encoder(c)
        s_hat = quantize(s, "eval")
        s_bytes, s_est = self._code_factorized(self.context_s_coder, s_hat)
        hyper_feat = model.contextual.hyper_decoder(s_hat)
        temporal = model.contextual.temporal_context(f_pred, hyper_feat)
        c_hat, segments, seg_est = model.contextual.code(
            c, temporal, self.gaussian)

        f_tilde = model.contextual.decoder(c_hat)
        f_rec = model.contextual.refinement(f_tilde, f_pred)
        x_rec = torch.clamp(model.reconstructor(f_rec), 0.0, 1.0)

        ctx_bytes = _join_segments(segments)
        record = {"type": FRAME_P,
                  "payloads": [z_bytes, m_bytes, s_bytes, ctx_bytes]}
        stats = {
            "frame_type": "P",
            "substream_bits": {
                "motion_hyper": len(z_bytes) * 8,
                "motion": len(m_bytes) * 8,
                "context_hyper": len(s_bytes) * 8,
                "context": len(ctx_bytes) * 8,  # includes segment framing
            },
            "context_segment_bits": [len(s) * 8 for s in segments],
            "est_bits": {"motion_hyper": z_est, "motion": m_est,
                         "context_hyper": s_est, "context": seg_est},
            "bits": (len(z_bytes) + len(m_bytes) + len(s_bytes)
                     + len(ctx_bytes)) * 8,
        }
        latents = {"z": z_hat, "m": m_hat, "s": s_hat, "c": c_hat}
        return record, x_rec, stats, latents

    @torch.no_grad()
    def decode_p_frame(self, record, x_ref, h, w):
        if x_ref is None:
            raise ContainerError("P frame decoded without a populated buffer")
        model = self.model
        cfg = model.cfg
        pyr_ref = model.extractor(x_ref)

        z_hat = self._decode_factorized(
            self.motion_z_coder, record["payloads"][0],
            (cfg.motion_hyper_channels, h // 64, w // 64))
        mu_m, sigma_m = model.motion_hyper_decoder(z_hat)
        m_hat = self._decode_gaussian(record["payloads"][1], mu_m, sigma_m)
        v_hat = model.motion_decoder(m_hat)

        f_pred = model.compensation(v_hat, pyr_ref[0])

        s_hat = self._decode_factorized(
            self.context_s_coder, record["payloads"][2],
            (cfg.context_hyper_channels, h // 64, w // 64))
        hyper_feat = model.contextual.hyper_decoder(s_hat)
        temporal = model.contextual.temporal_context(f_pred, hyper_feat)
        segments = _frame_segments(record["payloads"][3])
        # corrupted payloads can scramble the internal framing; keep decoding
        # so the damage stays bounded to this GOP
        n_seg = 2 * len(model.contextual.groups)
        segments = (segments + [b""] * n_seg)[:n_seg]
        c_hat = model.contextual.decode_segments(
            segments, temporal, self.gaussian, h // 16, w // 16)

        f_tilde = model.contextual.decoder(c_hat)
        f_rec = model.contextual.refinement(f_tilde, f_pred)
        x_rec = torch.clamp(model.reconstructor(f_rec), 0.0, 1.0)
        report = model.contextual.channel_entropy_report(c_hat, temporal)
        return x_rec, {"z": z_hat, "m": m_hat, "s": s_hat, "c": c_hat,
                       "channel_report": report}

    # -- sequences ---------------------------------------------------------------

    @torch.no_grad()
    def encode_sequence(self, seq: video_io.RawSequence, capture_latents=False):
        cfg = self.cfg
        self._rebuild_priors()
        schedule = video_io.gop_schedule(len(seq), cfg.gop_size)
        records, all_stats, all_latents, all_recons = [], [], [], []
        x_ref = None
        for i, frame in enumerate(seq.frames):
            padded, dims = video_io.pad_to_multiple(frame, PAD_MULTIPLE)
            x = torch.from_numpy(padded).unsqueeze(0)
            if schedule.frame_types[i] == "I":
                record, x_rec, stats, latents = self.encode_i_frame(x)
            else:
                record, x_rec, stats, latents = self.encode_p_frame(x, x_ref)
            x_ref = x_rec
            stats["frame"] = i
            stats["bpp"] = stats["bits"] / (dims[0] * dims[1])
            records.append(record)
            all_stats.append(stats)
            if capture_latents:
                all_latents.append(latents)
                all_recons.append(video_io.crop_to(x_rec[0].numpy(), dims))
        container = pack_container(records, seq.width, seq.height,
                                   len(seq), cfg)
        result = {"container": container, "stats": all_stats}
        if capture_latents:
            result["latents"] = all_latents
            result["recon"] = all_recons
        return result

    @torch.no_grad()
    def decode_sequence(self, container: bytes, strict_crc=True,
                        capture_latents=False):
        self._rebuild_priors()
        header, records = unpack_container(container, strict_crc=strict_crc)
        if header["lambda_id"] != self.cfg.lambda_id:
            raise ContainerError(
                "stream lambda_id %d does not match checkpoint %d"
                % (header["lambda_id"], self.cfg.lambda_id))
        w, h = header["width"], header["height"]
        ph = -(-h // PAD_MULTIPLE) * PAD_MULTIPLE
        pw = -(-w // PAD_MULTIPLE) * PAD_MULTIPLE
        frames, all_latents = [], []
        x_ref = None
        for record in records:
            if record["type"] == FRAME_I:
                x_rec, latents = self.decode_i_frame(record, ph, pw)
            else:
                x_rec, latents = self.decode_p_frame(record, x_ref, ph, pw)
            x_ref = x_rec
            frames.append(video_io.crop_to(x_rec[0].numpy(), (h, w)))
            if capture_latents:
                all_latents.append(latents)
        seq = video_io.RawSequence(frames=frames, width=w, height=h)
        return (seq, all_latents) if capture_latents else (seq, None)


# ---------------------------------------------------------------------------
# container packing

def pack_container(records, width, height, n_frames, cfg: CodecConfig) -> bytes:
    out = bytearray()
    out += struct.pack("<4sBHHHBB", MAGIC, VERSION, width, height,
                       n_frames, cfg.gop_size, cfg.lambda_id)
    for record in records:
        payloads = record["payloads"]
        expected = 2 if record["type"] == FRAME_I else 4
        if len(payloads) != expected:
            raise ContainerError("frame type %d needs %d substreams"
                                 % (record["type"], expected))
        out += struct.pack("<B", record["type"])
        for p in payloads:
            out += struct.pack("<I", len(p))
        for p in payloads:
            out += p
        out += struct.pack("<I", _crc(payloads))
    return bytes(out)


def unpack_container(data: bytes, strict_crc=True):
    if len(data) < 13 or data[:4] != MAGIC:
        raise ContainerError("not a valid container (bad magic)")
    magic, version, width, height, n_frames, gop, lambda_id = struct.unpack_from(
        "<4sBHHHBB", data, 0)
    if version != VERSION:
        raise ContainerError("unsupported container version %d" % version)
    header = {"width": width, "height": height, "n_frames": n_frames,
              "gop": gop, "lambda_id": lambda_id}
    pos = 13
    records = []
    for _ in range(n_frames):
        (ftype,) = struct.unpack_from("<B", data, pos)
        pos += 1
        n_sub = 2 if ftype == FRAME_I else 4
        lengths = struct.unpack_from("<%dI" % n_sub, data, pos)
        pos += 4 * n_sub
        payloads = []
        for n in lengths:
            payloads.append(data[pos: pos + n])
            pos += n
        (crc,) = struct.unpack_from("<I", data, pos)
        pos += 4
        if crc != _crc(payloads):
            if strict_crc:
                raise ContainerError("payload checksum mismatch")
        records.append({"type": ftype, "payloads": payloads})
    return header, records


# ---------------------------------------------------------------------------
# checkpoints

NUMERIC_MODE = "float32"


def save_checkpoint(model: VideoCodecModel, path, extra=None):
    blob = {
        "state_dict": model.state_dict(),
        "config": model.cfg.to_dict(),
        "numeric_mode": NUMERIC_MODE,
        "version": VERSION,
    }
    if extra:
        blob["extra"] = extra
    torch.save(blob, path)


def load_checkpoint(path) -> VideoCodecModel:
    blob = torch.load(path, map_location="cpu", weights_only=False)
    if blob.get("numeric_mode") != NUMERIC_MODE:
        raise ContainerError("checkpoint numeric mode %r unsupported"
                             % blob.get("numeric_mode"))
    cfg = CodecConfig.from_dict(blob["config"])
    model = VideoCodecModel(cfg)
    model.load_state_dict(blob["state_dict"])
    model.eval()
    return model
