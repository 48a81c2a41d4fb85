from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path


@dataclass
class TrainConfig:
    frames: int = 8
    size: int = 32
    batch_size: int = 4
    lr: float = 1e-4
    text_drop_prob: float = 0.5
    seed: int = 0
    # Noise schedule; desk runs use T=100 with a proportionally steeper beta ramp.
    T: int = 1000
    beta_start: float = 1e-4
    beta_end: float = 0.02
    # Phase 1: autoencoder then per-frame image denoiser.
    ae_steps: int = 1500
    ae_batch_size: int = 32
    ae_lr: float = 2e-3
    image_steps: int = 2000
    image_batch_size: int = 8
    image_lr: float = 1e-3
    # "content" captions single frames without motion words, which a still
    # frame cannot show; "full" keeps the whole prompt.
    image_captions: str = "full"
    psnr_gate: float = 25.0
    # Phase 2.
    train_steps: int = 2000
    log_every: int = 100
    checkpoint_every: int = 0
    # Architecture.
    widths: tuple = (32, 64)
    text_dim: int = 64
    patch: int = 8
    separate_visual_xattn: bool = True

    def __post_init__(self):
        self.widths = tuple(self.widths)
        if not 0.0 <= self.text_drop_prob <= 1.0:
            raise ValueError("text_drop_prob must lie in [0, 1]")
        for name in ("frames", "size", "batch_size", "T", "ae_steps", "ae_batch_size", "image_steps",
                     "image_batch_size", "train_steps", "log_every"):
            if int(getattr(self, name)) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.image_captions not in ("full", "content"):
            raise ValueError("image_captions must be 'full' or 'content'")
        if self.size % 8:
            raise ValueError("size must be a multiple of 8")

    def to_json(self) -> dict:
        data = asdict(self)
        data["widths"] = list(self.widths)
        return data

    @classmethod
    def from_json(cls, data: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def load(cls, path) -> "TrainConfig":
        return cls.from_json(json.loads(Path(path).read_text()))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2, sort_keys=True) + "\n")
