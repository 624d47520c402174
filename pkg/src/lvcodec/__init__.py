"""Desk-scale learned video codec with multiscale motion estimation,
deformable-convolution compensation and spatial-temporal-channel contextual
entropy coding."""

from .config import CodecConfig, TrainConfig
from .model import VideoCodecModel
from .pipeline import SequenceCodec, load_checkpoint, save_checkpoint

__all__ = [
    "CodecConfig",
    "TrainConfig",
    "VideoCodecModel",
    "SequenceCodec",
    "load_checkpoint",
    "save_checkpoint",
]
