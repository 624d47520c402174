"""Raw video ingestion: PNG frame directories and planar YUV420 files.

Frames are float32 arrays of shape (3, H, W) with values in [0, 1],
channel order RGB. YUV uses the BT.601 full-range matrix.
"""

import os
from dataclasses import dataclass, field

import numpy as np
from PIL import Image

PNG_PATTERN = "frame_%05d.png"

# BT.601 full-range RGB <-> YCbCr (chroma centered at 0.5).
_YUV2RGB = np.array(
    [
        [1.0, 0.0, 1.402],
        [1.0, -0.344136, -0.714136],
        [1.0, 1.772, 0.0],
    ],
    dtype=np.float64,
)
_RGB2YUV = np.linalg.inv(_YUV2RGB)


@dataclass
class RawSequence:
    frames: list = field(default_factory=list)
    width: int = 0
    height: int = 0
    frame_rate: float = 30.0

    def __post_init__(self):
        if self.frames:
            for f in self.frames:
                if f.shape != (3, self.height, self.width):
                    raise ValueError("frame shape %r does not match %dx%d"
                                     % (f.shape, self.width, self.height))

    def __len__(self):
        return len(self.frames)


@dataclass
class GopSchedule:
    frame_types: list
    gop_size: int


def yuv_to_rgb(yuv: np.ndarray) -> np.ndarray:
    """(3,H,W) YCbCr in [0,1] -> (3,H,W) RGB, BT.601 full range."""
    y, u, v = yuv[0], yuv[1] - 0.5, yuv[2] - 0.5
    stacked = np.stack([y, u, v], axis=-1)
    rgb = stacked @ _YUV2RGB.T
    return np.moveaxis(rgb, -1, 0).astype(np.float32)


def rgb_to_yuv(rgb: np.ndarray) -> np.ndarray:
    stacked = np.moveaxis(rgb.astype(np.float64), 0, -1)
    yuv = stacked @ _RGB2YUV.T
    yuv[..., 1] += 0.5
    yuv[..., 2] += 0.5
    return np.moveaxis(yuv, -1, 0).astype(np.float32)


def _load_png_dir(path, n_frames):
    frames = []
    for i in range(n_frames):
        fp = os.path.join(path, PNG_PATTERN % i)
        if not os.path.exists(fp):
            raise FileNotFoundError(fp)
        img = Image.open(fp).convert("RGB")
        arr = np.asarray(img, dtype=np.float32) / 255.0
        frames.append(np.moveaxis(arr, -1, 0).copy())
    return frames


def _load_yuv420(path, width, height, n_frames):
    if width % 2 or height % 2:
        raise ValueError("yuv420 requires even dimensions, got %dx%d" % (width, height))
    frame_bytes = width * height * 3 // 2
    size = os.path.getsize(path)
    if size < n_frames * frame_bytes:
        raise ValueError("truncated yuv stream: %d bytes < %d frames x %d"
                         % (size, n_frames, frame_bytes))
    frames = []
    with open(path, "rb") as f:
        for _ in range(n_frames):
            raw = np.frombuffer(f.read(frame_bytes), dtype=np.uint8)
            y = raw[: width * height].reshape(height, width)
            u = raw[width * height: width * height * 5 // 4].reshape(height // 2, width // 2)
            v = raw[width * height * 5 // 4:].reshape(height // 2, width // 2)
            # nearest-neighbour chroma upsampling
            u = u.repeat(2, axis=0).repeat(2, axis=1)
            v = v.repeat(2, axis=0).repeat(2, axis=1)
            yuv = np.stack([y, u, v]).astype(np.float32) / 255.0
            frames.append(np.clip(yuv_to_rgb(yuv), 0.0, 1.0))
    return frames


def load_sequence(path, format, width=None, height=None, n_frames=None,
                  frame_rate=30.0) -> RawSequence:
    if n_frames is None or n_frames < 1:
        raise ValueError("n_frames must be >= 1")
    if format == "png_dir":
        frames = _load_png_dir(path, n_frames)
        height, width = frames[0].shape[1:]
        for f in frames:
            if f.shape[1:] != (height, width):
                raise ValueError("frames in %s have mixed dimensions" % path)
    elif format == "yuv420":
        if width is None or height is None:
            raise ValueError("yuv420 needs explicit width/height")
        frames = _load_yuv420(path, width, height, n_frames)
    else:
        raise ValueError("unknown format %r" % format)
    return RawSequence(frames=frames, width=width, height=height,
                       frame_rate=frame_rate)


def save_png_dir(seq: RawSequence, path):
    os.makedirs(path, exist_ok=True)
    for i, f in enumerate(seq.frames):
        arr = np.clip(np.moveaxis(f, 0, -1) * 255.0 + 0.5, 0, 255).astype(np.uint8)
        Image.fromarray(arr).save(os.path.join(path, PNG_PATTERN % i))


def pad_to_multiple(frame: np.ndarray, multiple: int):
    """Edge-replicate pad (3,H,W) up to the next multiple. Returns (padded, (H, W))."""
    if multiple < 1:
        raise ValueError("multiple must be >= 1")
    _, h, w = frame.shape
    ph = (multiple - h % multiple) % multiple
    pw = (multiple - w % multiple) % multiple
    if ph == 0 and pw == 0:
        return frame, (h, w)
    padded = np.pad(frame, ((0, 0), (0, ph), (0, pw)), mode="edge")
    return padded, (h, w)


def crop_to(frame: np.ndarray, dims) -> np.ndarray:
    h, w = dims
    return frame[:, :h, :w]


def gop_schedule(n_frames: int, gop_size: int) -> GopSchedule:
    if n_frames < 1 or gop_size < 1:
        raise ValueError("n_frames and gop_size must be positive")
    types = ["I" if i % gop_size == 0 else "P" for i in range(n_frames)]
    return GopSchedule(frame_types=types, gop_size=gop_size)
