"""Motion intensity as mean adjacent-frame SSIM, decile levels and the level map."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from animkit.media_io import VideoClip

N_LEVELS = 10
DEFAULT_LEVEL = 5
MIN_BUCKET_SAMPLES = 100
LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])


class IntensityError(ValueError):
    pass


@dataclass(frozen=True)
class SSIMParams:
    alpha: float = 1.0
    beta: float = 1.0
    gamma: float = 1.0
    k1: float = 0.01
    k2: float = 0.03
    data_range: float = 1.0
    window: int = 11
    window_sigma: float = 1.5
    small_window: int = 7
    small_threshold: int = 32

    @property
    def c1(self) -> float:
        return (self.k1 * self.data_range) ** 2

    @property
    def c2(self) -> float:
        return (self.k2 * self.data_range) ** 2

    @property
    def c3(self) -> float:
        return self.c2 / 2.0

    def window_for(self, height: int, width: int) -> int:
        return self.small_window if min(height, width) < self.small_threshold else self.window


def gaussian_window(size: int, sigma: float) -> np.ndarray:
    """Normalized 1-D Gaussian taps."""
    coords = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    taps = np.exp(-(coords**2) / (2.0 * sigma**2))
    return taps / taps.sum()


def _filter_valid(image: np.ndarray, taps: np.ndarray) -> np.ndarray:
    k = len(taps)
    rows = sliding_window_view(image, k, axis=-1) @ taps
    return sliding_window_view(rows, k, axis=-2) @ taps


def ssim_map(x: np.ndarray, y: np.ndarray, params: SSIMParams = SSIMParams()) -> np.ndarray:
    """Per-window SSIM over the valid (unpadded) window positions.

    Works on the last two axes, so stacks of images are compared pairwise.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise IntensityError(f"shape mismatch: {x.shape} vs {y.shape}")
    if x.ndim < 2:
        raise IntensityError("images must be at least 2-D")
    height, width = x.shape[-2:]
    size = params.window_for(height, width)
    if height < size or width < size:
        raise IntensityError(f"image {height}x{width} smaller than the {size}x{size} window")
    taps = gaussian_window(size, params.window_sigma)

    mu_x = _filter_valid(x, taps)
    mu_y = _filter_valid(y, taps)
    var_x = _filter_valid(x * x, taps) - mu_x * mu_x
    var_y = _filter_valid(y * y, taps) - mu_y * mu_y
    cov = _filter_valid(x * y, taps) - mu_x * mu_y
    c1, c2, c3 = params.c1, params.c2, params.c3

    luminance = (2.0 * mu_x * mu_y + c1) / (mu_x * mu_x + mu_y * mu_y + c1)
    if params.alpha == params.beta == params.gamma == 1.0 and c3 == c2 / 2.0:
        # Contrast times structure collapses to one fraction when c3 = c2 / 2.
        return luminance * (2.0 * cov + c2) / (var_x + var_y + c2)

    sd_x = np.sqrt(np.maximum(var_x, 0.0))
    sd_y = np.sqrt(np.maximum(var_y, 0.0))
    contrast = (2.0 * sd_x * sd_y + c2) / (var_x + var_y + c2)
    structure = (cov + c3) / (sd_x * sd_y + c3)
    return luminance**params.alpha * contrast**params.beta * structure**params.gamma


def ssim(x, y, params: SSIMParams = SSIMParams()) -> float:
    """Mean SSIM between two grayscale images."""
    return float(ssim_map(x, y, params).mean())


def to_luma(frames: np.ndarray) -> np.ndarray:
    """BT.601 luma of ... x 3 x H x W RGB arrays."""
    return np.tensordot(LUMA_WEIGHTS, np.asarray(frames, dtype=np.float64), axes=([0], [-3]))


def adjacent_ssims(clip: VideoClip, params: SSIMParams = SSIMParams()) -> list[float]:
    if clip.n_frames < 2:
        raise IntensityError("need at least two frames")
    luma = to_luma(clip.frames)
    return [ssim(luma[i], luma[i + 1], params) for i in range(clip.n_frames - 1)]


def motion_intensity(clip: VideoClip, params: SSIMParams = SSIMParams()) -> float:
    """Mean SSIM over the F-1 adjacent frame pairs; 1.0 for a static clip."""
    values = adjacent_ssims(clip, params)
    return math.fsum(values) / len(values)


@dataclass(frozen=True)
class BucketTable:
    """Nine descending decile boundaries; level 1 is the stillest tenth."""

    boundaries: tuple
    corpus_size: int

    def __post_init__(self):
        b = tuple(float(v) for v in self.boundaries)
        if len(b) != N_LEVELS - 1:
            raise IntensityError(f"expected {N_LEVELS - 1} boundaries, got {len(b)}")
        if any(not hi > lo for hi, lo in zip(b, b[1:])):
            raise IntensityError("degenerate distribution: boundaries must be strictly decreasing")
        object.__setattr__(self, "boundaries", b)

    def to_json(self) -> dict:
        return {"boundaries": list(self.boundaries), "corpus_size": int(self.corpus_size)}

    @classmethod
    def from_json(cls, data: dict) -> "BucketTable":
        return cls(tuple(data["boundaries"]), int(data["corpus_size"]))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2) + "\n")

    @classmethod
    def load(cls, path) -> "BucketTable":
        return cls.from_json(json.loads(Path(path).read_text()))


def fit_buckets(intensities) -> BucketTable:
    values = np.sort(np.asarray(intensities, dtype=np.float64).ravel())
    if values.size < MIN_BUCKET_SAMPLES:
        raise IntensityError(f"need at least {MIN_BUCKET_SAMPLES} samples, got {values.size}")
    if not np.all(np.isfinite(values)):
        raise IntensityError("intensities must be finite")
    quantiles = np.quantile(values, np.arange(1, N_LEVELS) / N_LEVELS)
    return BucketTable(tuple(quantiles[::-1]), int(values.size))


def intensity_to_level(intensity: float, table: BucketTable) -> int:
    # A value sitting exactly on a boundary takes the stiller level.
    return 1 + sum(1 for b in table.boundaries if b > intensity)


def check_level(level: int) -> int:
    if isinstance(level, bool) or int(level) != level or not 1 <= level <= N_LEVELS:
        raise IntensityError(f"level must be an integer in [1, {N_LEVELS}], got {level!r}")
    return int(level)


def level_to_map(level: int, height: int, width: int) -> np.ndarray:
    """Constant H x W map holding ``level / 10``."""
    return np.full((height, width), check_level(level) / N_LEVELS)
