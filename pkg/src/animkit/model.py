"""The full parameter set: frozen codec, backbone, embedder and spatial UNet plus trainable extras."""

from __future__ import annotations

import torch
from torch import nn

from animkit.conditioning import Autoencoder, PatchEncoder, extract_visual_tokens
from animkit.config import TrainConfig
from animkit.denoiser import VideoUNet
from animkit.text import ReweightHead, ReweightOutput, TextEmbedder, reweight, tokenize

TRAINABLE_PREFIXES = ("unet.motion_modules.", "visual_projection.", "reweight_head.")
FROZEN_PREFIXES = ("autoencoder.", "patch_encoder.", "text_embedder.", "unet.")
# Gate value the re-weighting head emits at initialization; the image model is
# pretrained on embeddings scaled by it so phase 2 starts where phase 1 ended.
NEUTRAL_GATE = 0.5


class PartitionError(RuntimeError):
    pass


class AnimationModel(nn.Module):
    def __init__(self, config: TrainConfig, vocab: dict):
        super().__init__()
        self.n_frames = config.frames
        self.image_size = config.size
        self.vocab = dict(vocab)
        self.autoencoder = Autoencoder()
        self.patch_encoder = PatchEncoder(patch=config.patch, dim=config.text_dim, image_size=config.size)
        self.text_embedder = TextEmbedder(len(vocab), dim=config.text_dim)
        self.unet = VideoUNet(config.widths, config.text_dim, config.separate_visual_xattn)
        self.visual_projection = nn.Linear(config.text_dim, config.text_dim)
        self.reweight_head = ReweightHead(config.text_dim, config.frames)

    def embed_prompts(self, prompts) -> tuple[torch.Tensor, torch.Tensor]:
        seqs = [tokenize(p, self.vocab) for p in prompts]
        ids = torch.stack([s.ids for s in seqs])
        mask = torch.stack([s.mask for s in seqs])
        with torch.no_grad():
            return self.text_embedder(ids, mask), mask

    def reweight(self, emb: torch.Tensor, mask: torch.Tensor) -> ReweightOutput:
        return reweight(emb, mask, self.n_frames, self.reweight_head)

    def neutral_text(self, emb: torch.Tensor, n_frames: int) -> torch.Tensor:
        return (NEUTRAL_GATE * emb)[:, None].expand(-1, n_frames, -1, -1)

    def visual_tokens(self, images: torch.Tensor) -> torch.Tensor:
        return extract_visual_tokens(images, self.patch_encoder, self.visual_projection)

    def predict_noise(self, spatial_input, t, text, visual, motion: bool = True) -> torch.Tensor:
        weighted = text.weighted if isinstance(text, ReweightOutput) else text
        return self.unet(spatial_input, t, weighted, visual, motion=motion)


def parameter_partition(model: nn.Module) -> tuple[list[str], list[str]]:
    """Split parameter names into (frozen, trainable); every name lands in exactly one list."""
    frozen, trainable = [], []
    for name, _ in model.named_parameters():
        if name.startswith(TRAINABLE_PREFIXES):
            trainable.append(name)
        elif name.startswith(FROZEN_PREFIXES):
            frozen.append(name)
        else:
            raise PartitionError(f"partition incomplete: {name} has no group")
    return frozen, trainable


def trainable_groups(model: nn.Module) -> dict[str, list[str]]:
    _, trainable = parameter_partition(model)
    return {prefix.rstrip("."): [n for n in trainable if n.startswith(prefix)] for prefix in TRAINABLE_PREFIXES}


def freeze_for_phase2(model: nn.Module) -> list[nn.Parameter]:
    """Disable gradients on the frozen group and return the trainable parameters."""
    frozen, trainable = parameter_partition(model)
    params = dict(model.named_parameters())
    for name in frozen:
        params[name].requires_grad_(False)
    for name in trainable:
        params[name].requires_grad_(True)
    return [params[n] for n in trainable]
