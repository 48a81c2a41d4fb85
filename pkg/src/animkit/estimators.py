"""scikit-learn style wrappers so intensity levels and the animator compose with pipelines."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from animkit.intensity import BucketTable, SSIMParams, fit_buckets, intensity_to_level, motion_intensity
from animkit.media_io import StillImage, VideoClip


class MotionIntensityEstimator(TransformerMixin, BaseEstimator):
    """Stateless transformer from clips to an (n, 1) array of mean adjacent-frame SSIM."""

    def __init__(self, window: int = 11, window_sigma: float = 1.5, alpha: float = 1.0, beta: float = 1.0,
                 gamma: float = 1.0):
        self.window = window
        self.window_sigma = window_sigma
        self.alpha = alpha
        self.beta = beta
        self.gamma = gamma

    def _params(self) -> SSIMParams:
        return SSIMParams(alpha=self.alpha, beta=self.beta, gamma=self.gamma, window=self.window,
                          window_sigma=self.window_sigma)

    def fit(self, X, y=None):
        self.n_features_in_ = 1
        return self

    def transform(self, X) -> np.ndarray:
        params = self._params()
        clips = [c if isinstance(c, VideoClip) else VideoClip(c) for c in X]
        return np.array([[motion_intensity(c, params)] for c in clips])


class IntensityBucketer(TransformerMixin, BaseEstimator):
    """Learns decile boundaries over intensities; ``transform`` maps intensities to levels 1-10."""

    def fit(self, X, y=None):
        X = check_array(X, ensure_2d=False, dtype=np.float64)
        self.table_ = fit_buckets(X.ravel())
        self.boundaries_ = np.asarray(self.table_.boundaries)
        self.n_features_in_ = 1
        return self

    def transform(self, X) -> np.ndarray:
        check_is_fitted(self, "table_")
        X = check_array(X, ensure_2d=False, dtype=np.float64)
        return np.array([intensity_to_level(v, self.table_) for v in X.ravel()], dtype=np.int64)

    @classmethod
    def from_table(cls, table: BucketTable) -> "IntensityBucketer":
        est = cls()
        est.table_ = table
        est.boundaries_ = np.asarray(table.boundaries)
        est.n_features_in_ = 1
        return est


class ImageAnimator(BaseEstimator):
    """Trains the two-phase model on a dataset directory and animates still images.

    Constructor arguments mirror the training config; ``fit`` takes the path
    of a generated dataset (or a ``DatasetManifest``).
    """

    def __init__(self, frames: int = 8, size: int = 32, batch_size: int = 4, lr: float = 1e-4,
                 text_drop_prob: float = 0.5, seed: int = 0, T: int = 1000, beta_start: float = 1e-4,
                 beta_end: float = 0.02, ae_steps: int = 1500, image_steps: int = 2000, train_steps: int = 2000,
                 steps: int = 50, scale: float = 2.0, level: int = 5):
        self.frames = frames
        self.size = size
        self.batch_size = batch_size
        self.lr = lr
        self.text_drop_prob = text_drop_prob
        self.seed = seed
        self.T = T
        self.beta_start = beta_start
        self.beta_end = beta_end
        self.ae_steps = ae_steps
        self.image_steps = image_steps
        self.train_steps = train_steps
        self.steps = steps
        self.scale = scale
        self.level = level

    def _config(self):
        from animkit.config import TrainConfig

        keys = ("frames", "size", "batch_size", "lr", "text_drop_prob", "seed", "T", "beta_start", "beta_end",
                "ae_steps", "image_steps", "train_steps")
        return TrainConfig(**{k: getattr(self, k) for k in keys})

    def fit(self, X, y=None):
        from animkit.trainer import load_corpus, pretrain_frozen_stack, train

        config = self._config()
        corpus = load_corpus(X, config)
        pretrained = pretrain_frozen_stack(config, corpus)
        self.checkpoint_ = train(config, corpus, pretrained)
        return self

    @classmethod
    def from_checkpoint(cls, path, **kwargs) -> "ImageAnimator":
        from animkit.checkpoint import load_checkpoint

        ckpt = load_checkpoint(Path(path))
        cfg = ckpt.config
        est = cls(frames=cfg.frames, size=cfg.size, batch_size=cfg.batch_size, lr=cfg.lr,
                  text_drop_prob=cfg.text_drop_prob, seed=cfg.seed, T=cfg.T, beta_start=cfg.beta_start,
                  beta_end=cfg.beta_end, ae_steps=cfg.ae_steps, image_steps=cfg.image_steps,
                  train_steps=cfg.train_steps, **kwargs)
        est.checkpoint_ = ckpt
        return est

    def predict(self, X) -> list[VideoClip]:
        """``X`` holds (image, text) or (image, text, level) tuples; one clip per row."""
        from animkit.pipeline import animate

        check_is_fitted(self, "checkpoint_")
        clips = []
        for row in X:
            image, text, *rest = row
            image = image if isinstance(image, StillImage) else StillImage(image)
            level = rest[0] if rest else self.level
            clips.append(animate(image, text, self.checkpoint_, level=level, steps=self.steps, scale=self.scale,
                                 seed=self.seed))
        return clips
