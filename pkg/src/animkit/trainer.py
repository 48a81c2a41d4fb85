"""Two-phase training.

Phase 1 fits the latent codec and a per-frame image denoiser, then freezes
both. Phase 2 trains only the motion modules, the visual projection and the
re-weighting head.
"""

from __future__ import annotations

import copy
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from animkit.checkpoint import Checkpoint, save_checkpoint
from animkit.conditioning import assemble_input, encode_frames
from animkit.config import TrainConfig
from animkit.diffusion import NoiseSchedule, make_schedule, q_sample, training_loss
from animkit.intensity import BucketTable, fit_buckets, intensity_to_level, motion_intensity
from animkit.media_io import load_clip, preprocess_clip
from animkit.model import AnimationModel, freeze_for_phase2, parameter_partition
from animkit.synthetic import MOTION_WORDS, DatasetManifest
from animkit.text import build_vocab

log = logging.getLogger(__name__)

# Fields that shape the network or the latent process; phase 2 must keep them.
ARCHITECTURE_FIELDS = ("frames", "size", "widths", "text_dim", "patch", "separate_visual_xattn", "T", "beta_start",
                       "beta_end")


class TrainingError(RuntimeError):
    pass


def psnr(a: torch.Tensor, b: torch.Tensor) -> float:
    mse = float(torch.mean((a.double() - b.double()) ** 2))
    return float("inf") if mse == 0 else 10.0 * math.log10(1.0 / mse)


@dataclass
class Corpus:
    """A dataset loaded into memory at model resolution."""

    frames: torch.Tensor  # N x F x 3 x S x S, float32
    prompts: list
    intensities: np.ndarray

    def __len__(self):
        return len(self.prompts)

    @classmethod
    def from_manifest(cls, data: DatasetManifest, size: int, n_frames: int) -> "Corpus":
        clips, prompts, values = [], [], []
        for entry in data.entries:
            clip = preprocess_clip(load_clip(data.clip_path(entry)), size, n_frames)
            clips.append(torch.from_numpy(clip.frames).float())
            prompts.append(entry.prompt)
            values.append(motion_intensity(clip))
        return cls(torch.stack(clips), prompts, np.asarray(values))

    def levels(self, table: BucketTable) -> list[int]:
        return [intensity_to_level(float(v), table) for v in self.intensities]


def load_corpus(data, config: TrainConfig) -> Corpus:
    if isinstance(data, Corpus):
        return data
    if not isinstance(data, DatasetManifest):
        data = DatasetManifest.load(data)
    if len(data) == 0:
        raise TrainingError("dataset is empty")
    return Corpus.from_manifest(data, config.size, config.frames)


def heldout_mask(n: int) -> np.ndarray:
    """Every tenth clip is held out from codec training."""
    mask = np.zeros(n, dtype=bool)
    mask[9::10] = True
    return mask


def _train_autoencoder(model: AnimationModel, corpus: Corpus, config: TrainConfig, gen: torch.Generator) -> float:
    codec = model.autoencoder
    held = heldout_mask(len(corpus))
    train_frames = corpus.frames[torch.from_numpy(~held)].flatten(0, 1)
    test_frames = corpus.frames[torch.from_numpy(held)].flatten(0, 1)
    if len(test_frames) == 0:
        test_frames = train_frames

    codec.train()
    opt = torch.optim.Adam(codec.parameters(), lr=config.ae_lr)
    sched = torch.optim.lr_scheduler.CosineAnnealingLR(opt, T_max=config.ae_steps)
    for step in range(config.ae_steps):
        idx = torch.randint(0, len(train_frames), (config.ae_batch_size,), generator=gen)
        batch = train_frames[idx]
        loss = torch.mean((codec.decoder(codec.encoder(batch * 2.0 - 1.0)) - (batch * 2.0 - 1.0)) ** 2)
        opt.zero_grad()
        loss.backward()
        opt.step()
        sched.step()
        if step % config.log_every == 0:
            log.info("autoencoder step %d loss %.5f", step, loss.item())
    codec.eval()

    with torch.no_grad():
        raw = torch.cat([codec.encoder(chunk * 2.0 - 1.0) for chunk in train_frames.split(256)])
        codec.latent_scale.fill_(1.0 / float(raw.std()))
        codec.latent_bound.fill_(float((raw * codec.latent_scale).abs().max()))
        recon = torch.cat([codec.decode(codec.encode(chunk)).clamp(0, 1) for chunk in test_frames.split(256)])
    value = psnr(recon, test_frames)
    log.info("autoencoder held-out PSNR %.2f dB", value)
    return value


def encode_corpus(model: AnimationModel, corpus: Corpus) -> torch.Tensor:
    n, f = corpus.frames.shape[:2]
    flat = corpus.frames.flatten(0, 1)
    latents = torch.cat([encode_frames(chunk, model.autoencoder) for chunk in flat.split(256)])
    return latents.reshape(n, f, *latents.shape[1:])


def _image_denoiser_params(model: AnimationModel) -> list[torch.nn.Parameter]:
    return [
        p for n, p in model.named_parameters()
        if (n.startswith("unet.") and not n.startswith("unet.motion_modules.")) or n.startswith("visual_projection.")
    ]


def content_caption(prompt: str) -> str:
    return " ".join(w for w in prompt.split() if w.lower() not in MOTION_WORDS)


def _train_image_denoiser(model, corpus, latents, levels, schedule, config, gen):
    params = _image_denoiser_params(model)
    model.requires_grad_(False)
    for p in params:
        p.requires_grad_(True)
    opt = torch.optim.Adam(params, lr=config.image_lr)
    lr_sched = torch.optim.lr_scheduler.CosineAnnealingLR(opt, T_max=config.image_steps)
    prompts = corpus.prompts
    if config.image_captions == "content":
        prompts = [content_caption(p) for p in prompts]
    emb_all, mask_all = model.embed_prompts(prompts)
    null_emb, _ = model.embed_prompts([""])
    model.unet.train()
    for step in range(config.image_steps):
        idx = torch.randint(0, len(corpus), (config.image_batch_size,), generator=gen)
        z0 = latents[idx]
        b, f = z0.shape[:2]
        t = torch.randint(0, schedule.T, (b,), generator=gen)
        eps = torch.randn(z0.shape, generator=gen)
        drop = torch.rand(b, generator=gen) < config.text_drop_prob
        emb = torch.where(drop[:, None, None], null_emb.expand(b, -1, -1), emb_all[idx])
        zt = q_sample(z0, t.numpy(), eps, schedule)
        x = assemble_input(zt, z0[:, 0], [levels[i] for i in idx.tolist()], f)
        visual = model.visual_tokens(corpus.frames[idx, 0])
        pred = model.predict_noise(x, t, model.neutral_text(emb, f), visual, motion=False)
        loss = training_loss(pred, eps)
        opt.zero_grad()
        loss.backward()
        opt.step()
        lr_sched.step()
        if not math.isfinite(loss.item()):
            raise TrainingError(f"non-finite image-denoiser loss at step {step}")
        if step % config.log_every == 0:
            log.info("image denoiser step %d loss %.5f", step, loss.item())
    model.unet.eval()
    model.requires_grad_(False)


def new_model(config: TrainConfig) -> AnimationModel:
    torch.manual_seed(config.seed)
    return AnimationModel(config, build_vocab())


def pretrain_frozen_stack(config: TrainConfig, data) -> Checkpoint:
    """Fit the codec, gate on held-out PSNR, then fit the per-frame image denoiser."""
    corpus = load_corpus(data, config)
    buckets = fit_buckets(corpus.intensities)
    levels = corpus.levels(buckets)
    gen = torch.Generator().manual_seed(config.seed)
    model = new_model(config)
    schedule = make_schedule(config.T, config.beta_start, config.beta_end)

    ae_psnr = _train_autoencoder(model, corpus, config, gen)
    if ae_psnr < config.psnr_gate:
        raise TrainingError(
            f"autoencoder held-out PSNR {ae_psnr:.2f} dB is below the {config.psnr_gate} dB gate; "
            f"increase ae_steps (now {config.ae_steps}) or check the dataset"
        )
    latents = encode_corpus(model, corpus)
    _train_image_denoiser(model, corpus, latents, levels, schedule, config, gen)
    model.eval()
    return Checkpoint(model, config, schedule, buckets, dict(model.vocab), {"autoencoder_psnr": round(ae_psnr, 4)})


@dataclass
class TrainState:
    model: AnimationModel
    optimizer: torch.optim.Optimizer
    schedule: NoiseSchedule
    buckets: BucketTable | None
    config: TrainConfig
    steps: int = 0
    drops: int = 0
    samples: int = 0

    @classmethod
    def create(cls, ckpt: Checkpoint, config: TrainConfig | None = None) -> "TrainState":
        config = config or ckpt.config
        model = copy.deepcopy(ckpt.model)
        params = freeze_for_phase2(model)
        optimizer = torch.optim.Adam(params, lr=config.lr, weight_decay=0.0)
        return cls(model, optimizer, ckpt.schedule, ckpt.buckets, config)


@dataclass
class Batch:
    """Clips (B x F x 3 x S x S) with prompts; ``latents`` and ``levels`` may be precomputed."""

    frames: torch.Tensor
    prompts: list
    latents: torch.Tensor | None = None
    levels: list | None = None
    intensities: list | None = field(default=None)


def sample_text_drop(rng: torch.Generator, batch_size: int, prob: float) -> torch.Tensor:
    return torch.rand(batch_size, generator=rng) < prob


def training_step(batch: Batch, state: TrainState, rng: torch.Generator) -> float:
    """One phase-2 update; returns the batch loss."""
    if state.buckets is None:
        raise TrainingError("fit buckets first")
    model, cfg = state.model, state.config
    b, f = batch.frames.shape[:2]
    if batch.levels is not None:
        levels = list(batch.levels)
    else:
        from animkit.media_io import VideoClip

        levels = [
            intensity_to_level(motion_intensity(VideoClip(clip.double().numpy())), state.buckets) for clip in batch.frames
        ]
    z0 = batch.latents if batch.latents is not None else encode_frames(
        batch.frames.flatten(0, 1), model.autoencoder
    ).reshape(b, f, 4, *[s // model.autoencoder.downsample for s in batch.frames.shape[-2:]])

    t = torch.randint(0, state.schedule.T, (b,), generator=rng)
    eps = torch.randn(z0.shape, generator=rng)
    drop = sample_text_drop(rng, b, cfg.text_drop_prob)
    prompts = ["" if d else p for d, p in zip(drop.tolist(), batch.prompts)]

    zt = q_sample(z0, t.numpy(), eps, state.schedule)
    x = assemble_input(zt, z0[:, 0], levels, f)
    emb, mask = model.embed_prompts(prompts)
    text = model.reweight(emb, mask)
    visual = model.visual_tokens(batch.frames[:, 0])
    pred = model.predict_noise(x, t, text, visual)
    loss = training_loss(pred, eps)

    state.optimizer.zero_grad()
    loss.backward()
    state.optimizer.step()
    state.steps += 1
    state.drops += int(drop.sum())
    state.samples += b
    return loss.item()


def smoothed(values, window: int) -> np.ndarray:
    values = np.asarray(values, dtype=np.float64)
    window = max(1, min(window, len(values)))
    kernel = np.ones(window) / window
    return np.convolve(values, kernel, mode="valid")


def train(config: TrainConfig, data, pretrained: Checkpoint, out_dir=None) -> Checkpoint:
    """Phase 2: train the motion modules, visual projection and re-weighting head."""
    if pretrained.buckets is None:
        raise TrainingError("fit buckets first")
    for name in ARCHITECTURE_FIELDS:
        if getattr(config, name) != getattr(pretrained.config, name):
            raise TrainingError(
                f"config {name}={getattr(config, name)!r} does not match the checkpoint's "
                f"{getattr(pretrained.config, name)!r}"
            )
    corpus = load_corpus(data, config)
    state = TrainState.create(pretrained, config)
    model = state.model
    latents = encode_corpus(model, corpus)
    levels = corpus.levels(state.buckets)
    rng = torch.Generator().manual_seed(config.seed + 1)
    losses = []
    model.train()
    for step in range(config.train_steps):
        idx = torch.randint(0, len(corpus), (config.batch_size,), generator=rng)
        batch = Batch(
            corpus.frames[idx], [corpus.prompts[i] for i in idx.tolist()], latents[idx], [levels[i] for i in idx.tolist()]
        )
        loss = training_step(batch, state, rng)
        if not math.isfinite(loss):
            raise TrainingError(f"non-finite loss {loss} at step {step}; last finite losses {losses[-5:]}")
        losses.append(loss)
        if step % config.log_every == 0:
            log.info("train step %d loss %.5f (mean of last %d: %.5f)", step, loss, config.log_every,
                     float(np.mean(losses[-config.log_every:])))
        if out_dir is not None and config.checkpoint_every and (step + 1) % config.checkpoint_every == 0:
            model.eval()
            save_checkpoint(_finish(state, pretrained, losses), Path(out_dir) / f"step_{step + 1:06d}")
            model.train()
    model.eval()
    model.requires_grad_(False)
    ckpt = _finish(state, pretrained, losses)
    if out_dir is not None:
        save_checkpoint(ckpt, out_dir)
    return ckpt


def _finish(state: TrainState, pretrained: Checkpoint, losses: list) -> Checkpoint:
    metrics = dict(pretrained.metrics or {})
    window = min(200, len(losses))
    curve = smoothed(losses, window) if losses else np.array([])
    metrics.update(
        {
            "train_steps": state.steps,
            "text_drop_rate": state.drops / max(state.samples, 1),
            "loss_smoothed_start": float(curve[0]) if len(curve) else None,
            "loss_smoothed_end": float(curve[-1]) if len(curve) else None,
            "loss_window": window,
        }
    )
    model = copy.deepcopy(state.model)
    model.requires_grad_(False)
    return Checkpoint(model, state.config, state.schedule, state.buckets, dict(pretrained.vocab), metrics)


def frozen_unchanged(before: AnimationModel, after: AnimationModel) -> bool:
    frozen, _ = parameter_partition(before)
    b, a = dict(before.named_parameters()), dict(after.named_parameters())
    return all(torch.equal(b[n], a[n]) for n in frozen)
