"""Desk-scale text-controlled image animation with latent video diffusion."""

from animkit.media_io import StillImage, VideoClip, load_clip, load_image, preprocess_clip, save_clip, save_image
from animkit.intensity import BucketTable, SSIMParams, fit_buckets, intensity_to_level, level_to_map, motion_intensity, ssim
from animkit.estimators import ImageAnimator, IntensityBucketer, MotionIntensityEstimator

__version__ = "0.1.0"

__all__ = [
    "BucketTable",
    "ImageAnimator",
    "IntensityBucketer",
    "MotionIntensityEstimator",
    "SSIMParams",
    "StillImage",
    "VideoClip",
    "fit_buckets",
    "intensity_to_level",
    "level_to_map",
    "load_clip",
    "load_image",
    "motion_intensity",
    "preprocess_clip",
    "save_clip",
    "save_image",
    "ssim",
]
