"""Latent codec, patch-token content encoder and the 10-channel denoiser input."""

from __future__ import annotations

import math

import numpy as np
import torch
from torch import nn

from animkit.intensity import level_to_map
from animkit.media_io import StillImage

LATENT_CHANNELS = 4
INPUT_CHANNELS = 10
# Channel slices of the assembled input.
NOISE = slice(0, 4)
REFERENCE = slice(4, 8)
INTENSITY = slice(8, 9)
FRAME = slice(9, 10)


class ConditioningError(ValueError):
    pass


UNSET_BOUND = 1e4


class Autoencoder(nn.Module):
    """Continuous-latent conv autoencoder with downsample factor 4.

    ``latent_scale`` is set after pretraining so encoded latents have roughly
    unit variance; ``latent_bound`` holds the largest absolute scaled latent
    seen on the training frames and bounds sampled clean latents.
    """

    downsample = 4

    def __init__(self, width: int = 64, latent_channels: int = LATENT_CHANNELS):
        super().__init__()
        act = nn.SiLU
        self.encoder = nn.Sequential(
            nn.Conv2d(3, width // 2, 3, padding=1), act(),
            nn.Conv2d(width // 2, width, 4, stride=2, padding=1), act(),
            nn.Conv2d(width, width, 3, padding=1), act(),
            nn.Conv2d(width, width, 4, stride=2, padding=1), act(),
            nn.Conv2d(width, width, 3, padding=1), act(),
            nn.Conv2d(width, latent_channels, 3, padding=1),
        )
        self.decoder = nn.Sequential(
            nn.Conv2d(latent_channels, width, 3, padding=1), act(),
            nn.Conv2d(width, width, 3, padding=1), act(),
            nn.ConvTranspose2d(width, width, 4, stride=2, padding=1), act(),
            nn.Conv2d(width, width, 3, padding=1), act(),
            nn.ConvTranspose2d(width, width // 2, 4, stride=2, padding=1), act(),
            nn.Conv2d(width // 2, 3, 3, padding=1),
        )
        self.register_buffer("latent_scale", torch.ones(()))
        self.register_buffer("latent_bound", torch.full((), UNSET_BOUND))

    def encode(self, images: torch.Tensor) -> torch.Tensor:
        return self.encoder(images * 2.0 - 1.0) * self.latent_scale

    def decode(self, latents: torch.Tensor) -> torch.Tensor:
        """Raw reconstruction in [0, 1] units, not clamped."""
        return (self.decoder(latents / self.latent_scale) + 1.0) / 2.0


def _check_divisible(height: int, width: int, d: int) -> None:
    if height % d or width % d:
        raise ConditioningError(f"image size {height}x{width} not divisible by {d}")


@torch.no_grad()
def encode_frames(frames: torch.Tensor, codec: Autoencoder) -> torch.Tensor:
    """N x 3 x H x W pixels to N x 4 x H/d x W/d latents."""
    _check_divisible(frames.shape[-2], frames.shape[-1], codec.downsample)
    return codec.encode(frames)


def encode_reference(image: StillImage, codec: Autoencoder) -> torch.Tensor:
    pixels = torch.as_tensor(image.pixels, dtype=torch.float32)
    return encode_frames(pixels[None], codec)[0]


@torch.no_grad()
def decode_latents(latents: torch.Tensor, codec: Autoencoder) -> torch.Tensor:
    if not torch.isfinite(latents).all():
        raise ConditioningError("latent contains non-finite values")
    return codec.decode(latents).clamp(0.0, 1.0)


def decode_latent(latent: torch.Tensor, codec: Autoencoder) -> StillImage:
    return StillImage(decode_latents(latent[None], codec)[0].double().numpy())


class TokenMixer(nn.Module):
    """MLP across the token axis, so each output token sees the whole layout."""

    def __init__(self, n_tokens: int, dim: int):
        super().__init__()
        self.norm = nn.LayerNorm(dim)
        self.fc1 = nn.Linear(n_tokens, n_tokens)
        self.fc2 = nn.Linear(n_tokens, n_tokens)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        y = self.norm(x).transpose(1, 2)
        return self.fc2(nn.functional.gelu(self.fc1(y))).transpose(1, 2)


class PatchEncoder(nn.Module):
    """Frozen patch feature extractor: random patch embedding plus two mixer layers.

    Each layer mixes across tokens and then across channels, so pooled
    features depend on where things are, not only on what the patches hold.
    Weights come from a fixed seed and are never trained.
    """

    def __init__(self, patch: int = 8, dim: int = 64, image_size: int = 32, seed: int = 1234):
        super().__init__()
        self.patch = patch
        self.image_size = image_size
        n_tokens = (image_size // patch) ** 2
        self.embed = nn.Linear(3 * patch * patch, dim)
        self.position = nn.Parameter(torch.zeros(n_tokens, dim))
        self.token_mixers = nn.ModuleList(TokenMixer(n_tokens, dim) for _ in range(2))
        self.mixers = nn.ModuleList(
            nn.Sequential(nn.LayerNorm(dim), nn.Linear(dim, dim), nn.GELU(), nn.Linear(dim, dim)) for _ in range(2)
        )
        gen = torch.Generator().manual_seed(seed)
        with torch.no_grad():
            for p in self.parameters():
                if p.ndim >= 2:
                    p.copy_(torch.randn(p.shape, generator=gen) / math.sqrt(p.shape[-1]))
                else:
                    p.zero_()
            for module in self.modules():
                if isinstance(module, nn.LayerNorm):
                    module.weight.fill_(1.0)
            self.position.copy_(0.1 * torch.randn(self.position.shape, generator=gen))
        self.requires_grad_(False)

    def forward(self, images: torch.Tensor) -> torch.Tensor:
        """N x 3 x S x S images to N x (S/p)^2 x dim tokens."""
        if images.shape[-2:] != (self.image_size, self.image_size):
            raise ConditioningError(
                f"patch encoder expects {self.image_size}x{self.image_size} input, got {tuple(images.shape[-2:])}"
            )
        p = self.patch
        n, c, h, w = images.shape
        patches = images.reshape(n, c, h // p, p, w // p, p).permute(0, 2, 4, 1, 3, 5).reshape(n, -1, c * p * p)
        x = self.embed(patches * 2.0 - 1.0) + self.position
        for token_mixer, mixer in zip(self.token_mixers, self.mixers):
            x = x + token_mixer(x)
            x = x + mixer(x)
        return x


def extract_visual_tokens(images: torch.Tensor, backbone: PatchEncoder, projection: nn.Module) -> torch.Tensor:
    """Frozen backbone tokens passed through the trainable projection."""
    with torch.no_grad():
        tokens = backbone(images)
    return projection(tokens)


def frame_embedding(n_frames: int, height: int, width: int) -> torch.Tensor:
    """F x 1 x h x w maps; frame n holds n / (F - 1), and a single frame holds 0."""
    if n_frames < 1:
        raise ConditioningError("n_frames must be at least 1")
    if n_frames == 1:
        values = torch.zeros(1)
    else:
        values = torch.arange(n_frames, dtype=torch.float64) / (n_frames - 1)
    return values.reshape(n_frames, 1, 1, 1).expand(n_frames, 1, height, width).clone()


def assemble_input(noise: torch.Tensor, ref: torch.Tensor, level, n_frames: int) -> torch.Tensor:
    """Stack [noise | reference | intensity | frame] into B x F x 10 x h x w.

    ``ref`` is 4 x h x w (shared) or B x 4 x h x w; ``level`` is an int or one
    level per batch row.
    """
    if noise.ndim != 5 or noise.shape[2] != LATENT_CHANNELS:
        raise ConditioningError(f"noise must be B x F x 4 x h x w, got {tuple(noise.shape)}")
    b, f, _, h, w = noise.shape
    if f != n_frames:
        raise ConditioningError(f"noise has {f} frames, expected {n_frames}")
    if ref.ndim == 3:
        ref = ref.unsqueeze(0).expand(b, -1, -1, -1)
    if tuple(ref.shape) != (b, LATENT_CHANNELS, h, w):
        raise ConditioningError(f"reference shape {tuple(ref.shape)} does not match noise {tuple(noise.shape)}")
    levels = [level] * b if np.ndim(level) == 0 else list(level)
    if len(levels) != b:
        raise ConditioningError(f"got {len(levels)} levels for batch of {b}")

    intensity = torch.stack(
        [torch.as_tensor(level_to_map(int(lv), h, w), dtype=noise.dtype) for lv in levels]
    ).reshape(b, 1, 1, h, w)
    frames = frame_embedding(f, h, w).to(noise.dtype).unsqueeze(0)
    return torch.cat(
        [
            noise,
            ref.to(noise.dtype).unsqueeze(1).expand(b, f, -1, -1, -1),
            intensity.expand(b, f, 1, h, w),
            frames.expand(b, f, 1, h, w),
        ],
        dim=2,
    )
