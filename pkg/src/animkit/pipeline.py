"""Image animation: prior inversion, guided DDIM sampling and decoding."""

from __future__ import annotations

import logging

import numpy as np
import torch

from animkit.checkpoint import Checkpoint
from animkit.conditioning import assemble_input, decode_latents, encode_reference
from animkit.diffusion import PriorBlendSchedule, ddim_invert, ddim_sample, prior_blend
from animkit.intensity import DEFAULT_LEVEL, check_level
from animkit.media_io import StillImage, VideoClip, center_crop_resize
from animkit.text import tokenize

log = logging.getLogger(__name__)

DEFAULT_STEPS = 50
DEFAULT_SCALE = 2.0


def cfg_combine(eps_cond: torch.Tensor, eps_uncond: torch.Tensor, scale: float) -> torch.Tensor:
    if eps_cond.shape != eps_uncond.shape:
        raise ValueError(f"shape mismatch: {tuple(eps_cond.shape)} vs {tuple(eps_uncond.shape)}")
    return eps_uncond + scale * (eps_cond - eps_uncond)


def prepare_image(image: StillImage, size: int) -> StillImage:
    pixels = image.pixels
    if pixels.shape[1:] == (size, size):
        return image
    return StillImage(center_crop_resize(pixels[None], size)[0])


@torch.no_grad()
def animate(
    image: StillImage,
    text: str,
    ckpt: Checkpoint,
    level: int = DEFAULT_LEVEL,
    steps: int = 50,
    scale: float = DEFAULT_SCALE,
    seed: int = 0,
    invert_steps: int | None = None,
    prior: PriorBlendSchedule = PriorBlendSchedule(),
    use_prior: bool = True,
) -> VideoClip:
    level = check_level(level)
    model, sched = ckpt.model, ckpt.schedule
    model.eval()
    n_frames = model.n_frames
    image = prepare_image(image, model.image_size)

    tokens = tokenize(text, model.vocab)
    if text.strip() and tokens.n_unknown == int(tokens.mask.sum()):
        log.warning("no prompt word is in the vocabulary: %r", text)

    r0 = encode_reference(image, model.autoencoder)
    pixels = torch.as_tensor(image.pixels, dtype=torch.float32)[None]
    visual = model.visual_tokens(pixels)
    emb, mask = model.embed_prompts([text, ""])
    weighted = model.reweight(emb, mask).weighted
    cond_text, null_text = weighted[:1], weighted[1:]

    def denoiser(text_cond, lv):
        def fn(z, t):
            x = assemble_input(z, r0, lv, n_frames)
            return model.predict_noise(x, t, text_cond, visual)

        return fn

    uncond_model = denoiser(null_text, level)
    cond_model = denoiser(cond_text, level)

    def guided(z, t):
        eps_uncond = uncond_model(z, t)
        if scale == 0:
            return eps_uncond
        return cfg_combine(cond_model(z, t), eps_uncond, scale)

    gen = torch.Generator().manual_seed(int(seed))
    shape = (1, n_frames, *r0.shape)
    z_T = torch.randn(shape, generator=gen)
    if use_prior:
        tiled = r0[None, None].expand(shape).contiguous()
        inv = ddim_invert(tiled, denoiser(null_text, DEFAULT_LEVEL), invert_steps or steps, sched)
        z_T = torch.stack([prior_blend(z_T[:, n], inv[:, n], n, n_frames, prior) for n in range(n_frames)], dim=1)

    z0 = ddim_sample(z_T, guided, steps, sched, clip_x0=float(model.autoencoder.latent_bound))
    frames = decode_latents(z0[0], model.autoencoder)
    return VideoClip(frames.double().numpy().clip(0.0, 1.0))


def shuffled(clip: VideoClip, seed: int = 0) -> VideoClip:
    """Temporally shuffled copy; the permutation always moves at least one frame."""
    n = clip.n_frames
    rng = np.random.default_rng(seed)
    order = np.arange(n)
    while n > 1 and np.array_equal(order, np.arange(n)):
        order = rng.permutation(n)
    return VideoClip(clip.frames[order], fps=clip.fps)
