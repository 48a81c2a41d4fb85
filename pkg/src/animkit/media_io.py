"""Clip and still-image containers plus their on-disk format.

A clip directory holds ``manifest.json`` and one lossless PNG per frame named
``frame_%04d.png``. Pixel values live in [0, 1] in memory and are quantized to
8 bits on disk.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F
from PIL import Image

MANIFEST_NAME = "manifest.json"
FRAME_PATTERN = "frame_{:04d}.png"


class MediaError(ValueError):
    """Raised for malformed clips or clip directories."""


@dataclass
class VideoClip:
    """``frames`` is an F x 3 x H x W float array with values in [0, 1]."""

    frames: np.ndarray
    fps: int = 8

    def __post_init__(self):
        frames = np.asarray(self.frames, dtype=np.float64)
        if frames.ndim != 4 or frames.shape[1] != 3:
            raise MediaError(f"frames must be F x 3 x H x W, got {frames.shape}")
        if frames.shape[0] < 1:
            raise MediaError("a clip needs at least one frame")
        if not np.all(np.isfinite(frames)) or frames.min() < 0.0 or frames.max() > 1.0:
            raise MediaError("frame values must lie in [0, 1]")
        if int(self.fps) <= 0:
            raise MediaError("fps must be positive")
        self.frames = frames
        self.fps = int(self.fps)

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def height(self) -> int:
        return self.frames.shape[2]

    @property
    def width(self) -> int:
        return self.frames.shape[3]

    def frame(self, index: int) -> "StillImage":
        return StillImage(self.frames[index])


@dataclass
class StillImage:
    """``pixels`` is a 3 x H x W float array with values in [0, 1]."""

    pixels: np.ndarray

    def __post_init__(self):
        pixels = np.asarray(self.pixels, dtype=np.float64)
        if pixels.ndim != 3 or pixels.shape[0] != 3:
            raise MediaError(f"pixels must be 3 x H x W, got {pixels.shape}")
        if not np.all(np.isfinite(pixels)) or pixels.min() < 0.0 or pixels.max() > 1.0:
            raise MediaError("pixel values must lie in [0, 1]")
        self.pixels = pixels


def _to_uint8(chw: np.ndarray) -> np.ndarray:
    return np.round(chw * 255.0).clip(0, 255).astype(np.uint8).transpose(1, 2, 0)


def _from_uint8(hwc: np.ndarray) -> np.ndarray:
    return hwc.transpose(2, 0, 1).astype(np.float64) / 255.0


def _write_png(array: np.ndarray, path: Path) -> None:
    # No metadata chunks, so identical pixels give identical bytes.
    Image.fromarray(array, mode="RGB").save(path, format="PNG", optimize=False, compress_level=6)


def save_clip(clip: VideoClip, path) -> None:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    manifest = {"frames": clip.n_frames, "height": clip.height, "width": clip.width, "fps": clip.fps}
    for index in range(clip.n_frames):
        _write_png(_to_uint8(clip.frames[index]), path / FRAME_PATTERN.format(index))
    (path / MANIFEST_NAME).write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n")


def load_clip(path) -> VideoClip:
    path = Path(path)
    manifest_path = path / MANIFEST_NAME
    if not manifest_path.is_file():
        raise MediaError(f"missing manifest {manifest_path}")
    try:
        manifest = json.loads(manifest_path.read_text())
        n, height, width, fps = (int(manifest[k]) for k in ("frames", "height", "width", "fps"))
    except (KeyError, ValueError, TypeError) as exc:
        raise MediaError(f"malformed manifest {manifest_path}: {exc}") from exc

    frames = []
    for index in range(n):
        frame_path = path / FRAME_PATTERN.format(index)
        if not frame_path.is_file():
            raise MediaError(f"missing frame {index} ({frame_path})")
        with Image.open(frame_path) as im:
            array = np.asarray(im.convert("RGB"))
        if array.shape[:2] != (height, width):
            raise MediaError(
                f"inconsistent frame size in {frame_path}: {array.shape[1]}x{array.shape[0]}, "
                f"manifest says {width}x{height}"
            )
        frames.append(_from_uint8(array))
    return VideoClip(np.stack(frames), fps=fps)


def save_image(image: StillImage, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    _write_png(_to_uint8(image.pixels), path)


def load_image(path) -> StillImage:
    path = Path(path)
    if not path.is_file():
        raise MediaError(f"missing image {path}")
    with Image.open(path) as im:
        return StillImage(_from_uint8(np.asarray(im.convert("RGB"))))


def center_crop_resize(frames: np.ndarray, size: int) -> np.ndarray:
    """Crop N x 3 x H x W frames to their largest centered square, then resize bilinearly."""
    _, _, height, width = frames.shape
    side = min(height, width)
    top = (height - side) // 2
    left = (width - side) // 2
    cropped = frames[:, :, top : top + side, left : left + side]
    if side == size:
        return cropped.copy()
    resized = F.interpolate(
        torch.from_numpy(np.ascontiguousarray(cropped)), size=(size, size), mode="bilinear", align_corners=False
    )
    return resized.numpy().clip(0.0, 1.0)


def frame_indices(total: int, n_frames: int) -> list[int]:
    stride = total // n_frames
    return [i * stride for i in range(n_frames)]


def preprocess_clip(clip: VideoClip, size: int, n_frames: int) -> VideoClip:
    """Center-crop and resize to ``size`` and keep ``n_frames`` frames at uniform stride from frame 0."""
    if size < 8:
        raise MediaError("size must be at least 8")
    if n_frames < 1:
        raise MediaError("n_frames must be at least 1")
    if clip.n_frames < n_frames:
        raise MediaError(f"clip has {clip.n_frames} frames, fewer than the requested {n_frames}")
    picked = clip.frames[frame_indices(clip.n_frames, n_frames)]
    return VideoClip(center_crop_resize(picked, size), fps=clip.fps)


def frame_grid(clip: VideoClip) -> StillImage:
    """Frames laid side by side in one row."""
    return StillImage(np.concatenate(list(clip.frames), axis=2))
