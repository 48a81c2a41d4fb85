"""Toy tokenizer and frozen text embedder, plus the trainable re-weighting head."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import torch
from torch import nn

from animkit.synthetic import ADVERBS, COLORS, MOTION_PHRASES, SHAPES

log = logging.getLogger(__name__)

MAX_TOKENS = 16
PAD, UNK = "<pad>", "<unk>"


def build_vocab() -> dict[str, int]:
    words = {"the"} | set(COLORS) | set(SHAPES) | {a for a in ADVERBS if a}
    for phrase in MOTION_PHRASES.values():
        words.update(phrase.split())
    vocab = {PAD: 0, UNK: 1}
    for word in sorted(words):
        vocab[word] = len(vocab)
    return vocab


def save_vocab(vocab: dict, path) -> None:
    Path(path).write_text(json.dumps(vocab, indent=2, sort_keys=True) + "\n")


def load_vocab(path) -> dict[str, int]:
    return {str(k): int(v) for k, v in json.loads(Path(path).read_text()).items()}


@dataclass
class TokenSequence:
    ids: torch.Tensor  # (L,) int64
    mask: torch.Tensor  # (L,) bool, True on real tokens
    n_unknown: int = 0


def tokenize(text: str, vocab: dict, max_tokens: int = MAX_TOKENS) -> TokenSequence:
    words = text.lower().split()
    if len(words) > max_tokens:
        log.warning("prompt truncated from %d to %d tokens: %r", len(words), max_tokens, text)
        words = words[:max_tokens]
    ids = [vocab.get(w, vocab[UNK]) for w in words]
    n_unknown = sum(1 for i in ids if i == vocab[UNK])
    mask = [True] * len(ids) + [False] * (max_tokens - len(ids))
    ids = ids + [vocab[PAD]] * (max_tokens - len(ids))
    return TokenSequence(torch.tensor(ids, dtype=torch.long), torch.tensor(mask), n_unknown)


def sinusoidal(positions: torch.Tensor, dim: int) -> torch.Tensor:
    half = dim // 2
    freqs = torch.exp(-math.log(10000.0) * torch.arange(half, dtype=torch.float64) / half)
    args = positions.to(torch.float64)[..., None] * freqs
    return torch.cat([torch.sin(args), torch.cos(args)], dim=-1)


class TextEmbedder(nn.Module):
    """Frozen token embedding plus fixed positional code; pad positions map to zero vectors."""

    def __init__(self, vocab_size: int, dim: int = 64, max_tokens: int = MAX_TOKENS, seed: int = 4321):
        super().__init__()
        gen = torch.Generator().manual_seed(seed)
        self.token = nn.Embedding(vocab_size, dim)
        with torch.no_grad():
            self.token.weight.copy_(torch.randn(vocab_size, dim, generator=gen))
        self.register_buffer("position", (0.5 * sinusoidal(torch.arange(max_tokens), dim)).float())
        self.requires_grad_(False)

    def forward(self, ids: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        emb = self.token(ids) + self.position[: ids.shape[-1]]
        return emb * mask[..., None].to(emb.dtype)


def tokenize_and_embed(text: str, vocab: dict, embedder: TextEmbedder) -> tuple[TokenSequence, torch.Tensor]:
    tokens = tokenize(text, vocab)
    with torch.no_grad():
        return tokens, embedder(tokens.ids, tokens.mask)


class Attention(nn.Module):
    """Multi-head attention with an optional boolean key mask (True = attend)."""

    def __init__(self, dim: int, heads: int = 4, context_dim: int | None = None):
        super().__init__()
        context_dim = context_dim or dim
        self.heads = heads
        self.to_q = nn.Linear(dim, dim, bias=False)
        self.to_k = nn.Linear(context_dim, dim, bias=False)
        self.to_v = nn.Linear(context_dim, dim, bias=False)
        self.to_out = nn.Linear(dim, dim)

    def forward(self, x: torch.Tensor, context: torch.Tensor | None = None, key_mask: torch.Tensor | None = None):
        context = x if context is None else context
        b, n, d = x.shape
        h = self.heads
        q = self.to_q(x).reshape(b, n, h, d // h).transpose(1, 2)
        k = self.to_k(context).reshape(b, context.shape[1], h, d // h).transpose(1, 2)
        v = self.to_v(context).reshape(b, context.shape[1], h, d // h).transpose(1, 2)
        scores = q @ k.transpose(-1, -2) / math.sqrt(d // h)
        if key_mask is not None:
            scores = scores.masked_fill(~key_mask[:, None, None, :], float("-inf"))
        out = torch.softmax(scores, dim=-1) @ v
        return self.to_out(out.transpose(1, 2).reshape(b, n, d))


class EncoderLayer(nn.Module):
    """Pre-norm transformer encoder layer without dropout."""

    def __init__(self, dim: int, heads: int = 4, ff_mult: int = 4):
        super().__init__()
        self.norm1 = nn.LayerNorm(dim)
        self.attn = Attention(dim, heads)
        self.norm2 = nn.LayerNorm(dim)
        self.ff = nn.Sequential(nn.Linear(dim, ff_mult * dim), nn.GELU(), nn.Linear(ff_mult * dim, dim))

    def forward(self, x, key_mask=None):
        x = x + self.attn(self.norm1(x), key_mask=key_mask)
        return x + self.ff(self.norm2(x))


@dataclass
class ReweightOutput:
    weights: torch.Tensor  # B x F x L
    weighted: torch.Tensor  # B x F x L x D


class ReweightHead(nn.Module):
    """Three encoder layers and a frame-specific projection giving one sigmoid gate per (frame, token).

    No positional encoding: the frozen embeddings already carry position.
    The projection starts at zero, so every gate starts at 0.5.
    """

    def __init__(self, dim: int = 64, n_frames: int = 8, heads: int = 4, layers: int = 3):
        super().__init__()
        self.n_frames = n_frames
        self.layers = nn.ModuleList(EncoderLayer(dim, heads) for _ in range(layers))
        self.norm = nn.LayerNorm(dim)
        self.projection = nn.Linear(dim, n_frames)
        nn.init.zeros_(self.projection.weight)
        nn.init.zeros_(self.projection.bias)

    def forward(self, emb: torch.Tensor, mask: torch.Tensor) -> ReweightOutput:
        """``emb`` is B x L x D (or L x D), ``mask`` B x L (or L)."""
        squeeze = emb.ndim == 2
        if squeeze:
            emb, mask = emb[None], mask[None]
        # An all-pad row (the dropped prompt) attends over its zero vectors instead of nothing.
        key_mask = mask | ~mask.any(dim=-1, keepdim=True)
        x = emb
        for layer in self.layers:
            x = layer(x, key_mask=key_mask)
        weights = torch.sigmoid(self.projection(self.norm(x))).transpose(1, 2)
        weighted = weights[..., None] * emb[:, None]
        if squeeze:
            return ReweightOutput(weights[0], weighted[0])
        return ReweightOutput(weights, weighted)


def reweight(emb: torch.Tensor, mask: torch.Tensor, n_frames: int, head: ReweightHead) -> ReweightOutput:
    if n_frames < 1:
        raise ValueError("n_frames must be at least 1")
    if n_frames != head.n_frames:
        raise ValueError(f"head was built for {head.n_frames} frames, asked for {n_frames}")
    return head(emb, mask)
