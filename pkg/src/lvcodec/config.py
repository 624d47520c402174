"""Codec and training configuration."""

import dataclasses
import json
from dataclasses import dataclass


# Lagrange multipliers with a stable wire id; payloads coded with different
# lambda models are not cross-decodable.
LAMBDA_TABLE = (256.0, 512.0, 1024.0, 2048.0)
LAMBDA_ID_CUSTOM = 255

PAD_MULTIPLE = 64  # total stride of extractor (4) x contextual encoder (16)


@dataclass
class CodecConfig:
    gop_size: int = 10
    lam: float = 2048.0
    distortion_metric: str = "mse"  # "mse" | "msssim"
    feat_channels: int = 64         # feature pyramid width
    motion_channels: int = 64       # motion field width
    motion_aware_dim: int = 64      # pooled motion descriptor length
    motion_latent_channels: int = 64
    motion_hyper_channels: int = 64
    context_channels: int = 128
    context_groups: tuple = (16, 16, 32, 64)
    context_hyper_channels: int = 64
    deform_groups: int = 8
    multiscale_motion: bool = True  # False: single-scale initial motion only
    intra_channels: int = 64
    intra_latent_channels: int = 64
    seed: int = 0

    def __post_init__(self):
        self.context_groups = tuple(self.context_groups)
        if sum(self.context_groups) != self.context_channels:
            raise ValueError(
                "context_groups %r must sum to context_channels %d"
                % (self.context_groups, self.context_channels)
            )
        if self.lam <= 0:
            raise ValueError("lambda must be positive")
        if self.gop_size < 1:
            raise ValueError("gop_size must be >= 1")
        if self.distortion_metric not in ("mse", "msssim"):
            raise ValueError("unknown distortion metric %r" % self.distortion_metric)

    @property
    def lambda_id(self) -> int:
        for i, lam in enumerate(LAMBDA_TABLE):
            if lam == self.lam:
                return i
        return LAMBDA_ID_CUSTOM

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["context_groups"] = list(self.context_groups)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "CodecConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in known})

    @classmethod
    def from_json(cls, path) -> "CodecConfig":
        with open(path) as f:
            return cls.from_dict(json.load(f))

    def save_json(self, path):
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=2)


@dataclass
class TrainConfig:
    stage: str = "single_frame"  # "single_frame" | "cascaded" | "msssim_finetune"
    T: int = 1                   # frames entering the loss
    learning_rate: float = 5e-5
    steps: int = 20000
    lam: float = 2048.0
    batch: int = 4
    crop: int = 256
    detach_recon: bool = False   # cascaded stage: stop gradients at the buffer
    seed: int = 0
    log_every: int = 10

    def __post_init__(self):
        if self.stage == "single_frame" and self.T != 1:
            raise ValueError("single_frame stage requires T=1")
        if self.stage in ("cascaded", "msssim_finetune") and self.T < 2:
            raise ValueError("cascaded stages require T>=2")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
