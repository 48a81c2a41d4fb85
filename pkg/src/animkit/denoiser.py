"""Tiny video UNet: per-frame spatial blocks plus temporal motion modules."""

from __future__ import annotations

import torch
import torch.nn.functional as F
from torch import nn

from animkit.conditioning import INPUT_CHANNELS, LATENT_CHANNELS
from animkit.text import Attention, sinusoidal


class DenoiserError(ValueError):
    pass


def _groups(channels: int) -> int:
    return 8 if channels % 8 == 0 else 1


class TimestepEmbedding(nn.Module):
    def __init__(self, dim: int):
        super().__init__()
        self.base = dim // 2
        self.mlp = nn.Sequential(nn.Linear(self.base, dim), nn.SiLU(), nn.Linear(dim, dim))

    def forward(self, t: torch.Tensor) -> torch.Tensor:
        return self.mlp(sinusoidal(t, self.base).to(self.mlp[0].weight.dtype))


class ResBlock(nn.Module):
    def __init__(self, c_in: int, c_out: int, temb_dim: int):
        super().__init__()
        self.norm1 = nn.GroupNorm(_groups(c_in), c_in)
        self.conv1 = nn.Conv2d(c_in, c_out, 3, padding=1)
        self.temb = nn.Linear(temb_dim, c_out)
        self.norm2 = nn.GroupNorm(_groups(c_out), c_out)
        self.conv2 = nn.Conv2d(c_out, c_out, 3, padding=1)
        self.skip = nn.Conv2d(c_in, c_out, 1) if c_in != c_out else nn.Identity()

    def forward(self, x, temb):
        h = self.conv1(F.silu(self.norm1(x)))
        h = h + self.temb(F.silu(temb))[:, :, None, None]
        h = self.conv2(F.silu(self.norm2(h)))
        return self.skip(x) + h


class SpatialTransformer(nn.Module):
    """Spatial self-attention, text cross-attention, optional separate visual cross-attention, feed-forward."""

    def __init__(self, channels: int, context_dim: int, separate_visual: bool = True, heads: int = 4):
        super().__init__()
        self.separate_visual = separate_visual
        self.norm_in = nn.GroupNorm(_groups(channels), channels)
        self.norm1 = nn.LayerNorm(channels)
        self.self_attn = Attention(channels, heads)
        self.norm2 = nn.LayerNorm(channels)
        self.text_attn = Attention(channels, heads, context_dim)
        if separate_visual:
            self.norm3 = nn.LayerNorm(channels)
            self.visual_attn = Attention(channels, heads, context_dim)
        self.norm4 = nn.LayerNorm(channels)
        self.ff = nn.Sequential(nn.Linear(channels, 4 * channels), nn.GELU(), nn.Linear(4 * channels, channels))

    def forward(self, x, text, visual):
        n, c, h, w = x.shape
        tokens = self.norm_in(x).reshape(n, c, h * w).transpose(1, 2)
        tokens = tokens + self.self_attn(self.norm1(tokens))
        if self.separate_visual:
            tokens = tokens + self.text_attn(self.norm2(tokens), text)
            tokens = tokens + self.visual_attn(self.norm3(tokens), visual)
        else:
            tokens = tokens + self.text_attn(self.norm2(tokens), torch.cat([text, visual], dim=1))
        tokens = tokens + self.ff(self.norm4(tokens))
        return x + tokens.transpose(1, 2).reshape(n, c, h, w)


class MotionModule(nn.Module):
    """Temporal self-attention across frames at every spatial location.

    The output projection starts at zero, so a fresh module is the identity.
    """

    def __init__(self, channels: int, heads: int = 4, max_frames: int = 64):
        super().__init__()
        self.norm = nn.LayerNorm(channels)
        self.attn = Attention(channels, heads)
        self.register_buffer("frame_code", sinusoidal(torch.arange(max_frames), channels).float())
        nn.init.zeros_(self.attn.to_out.weight)
        nn.init.zeros_(self.attn.to_out.bias)

    def forward(self, x: torch.Tensor, n_frames: int) -> torch.Tensor:
        nf, c, h, w = x.shape
        b = nf // n_frames
        seq = x.reshape(b, n_frames, c, h * w).permute(0, 3, 1, 2).reshape(b * h * w, n_frames, c)
        q = self.norm(seq) + self.frame_code[:n_frames].to(seq.dtype)
        seq = seq + self.attn(q)
        return seq.reshape(b, h * w, n_frames, c).permute(0, 2, 3, 1).reshape(nf, c, h, w)


class VideoUNet(nn.Module):
    """Two-resolution UNet over B x F x 10 x h x w inputs, predicting B x F x 4 x h x w noise.

    Every parameter outside ``motion_modules`` belongs to the frozen image
    model; with ``motion=False`` frames are processed fully independently.
    """

    def __init__(self, widths=(32, 64), context_dim: int = 64, separate_visual_xattn: bool = True):
        super().__init__()
        c0, c1 = widths
        temb_dim = 4 * c0
        self.time_embed = TimestepEmbedding(temb_dim)
        self.conv_in = nn.Conv2d(INPUT_CHANNELS, c0, 3, padding=1)
        self.down0 = ResBlock(c0, c0, temb_dim)
        self.downsample = nn.Conv2d(c0, c0, 3, stride=2, padding=1)
        self.down1 = ResBlock(c0, c1, temb_dim)
        self.down1_attn = SpatialTransformer(c1, context_dim, separate_visual_xattn)
        self.up1 = ResBlock(c1, c1, temb_dim)
        self.up1_attn = SpatialTransformer(c1, context_dim, separate_visual_xattn)
        self.upsample = nn.Conv2d(c1, c1, 3, padding=1)
        self.up0 = ResBlock(c1 + c0, c0, temb_dim)
        self.norm_out = nn.GroupNorm(_groups(c0), c0)
        self.conv_out = nn.Conv2d(c0, LATENT_CHANNELS, 3, padding=1)
        self.motion_modules = nn.ModuleDict(
            {"down0": MotionModule(c0), "down1": MotionModule(c1), "up1": MotionModule(c1), "up0": MotionModule(c0)}
        )

    def forward(self, x, t, text, visual, motion: bool = True):
        """
        x: B x F x 10 x h x w; t: scalar or (B,) timesteps; text: B x F x L x D
        per-frame weighted text; visual: B x N x D visual tokens.
        """
        if x.ndim != 5 or x.shape[2] != INPUT_CHANNELS:
            raise DenoiserError(f"input must be B x F x {INPUT_CHANNELS} x h x w, got {tuple(x.shape)}")
        b, f, _, h, w = x.shape
        if h % 2 or w % 2:
            raise DenoiserError("latent size must be even")
        if text.ndim != 4 or text.shape[:2] != (b, f):
            raise DenoiserError(f"text must be B x F x L x D with B={b}, F={f}, got {tuple(text.shape)}")
        if visual.ndim != 3 or visual.shape[0] != b:
            raise DenoiserError(f"visual tokens must be B x N x D with B={b}, got {tuple(visual.shape)}")

        t = torch.as_tensor(t).reshape(-1)
        if t.numel() == 1:
            t = t.expand(b)
        temb = self.time_embed(t).repeat_interleave(f, dim=0)
        text = text.reshape(b * f, *text.shape[2:])
        visual = visual.repeat_interleave(f, dim=0)

        def mm(name, hidden):
            return self.motion_modules[name](hidden, f) if motion else hidden

        hidden = self.conv_in(x.reshape(b * f, *x.shape[2:]))
        h0 = mm("down0", self.down0(hidden, temb))
        h1 = self.down1(self.downsample(h0), temb)
        h1 = mm("down1", self.down1_attn(h1, text, visual))
        u1 = self.up1(h1, temb)
        u1 = mm("up1", self.up1_attn(u1, text, visual))
        u0 = self.upsample(F.interpolate(u1, scale_factor=2.0, mode="nearest"))
        u0 = mm("up0", self.up0(torch.cat([u0, h0], dim=1), temb))
        out = self.conv_out(F.silu(self.norm_out(u0)))
        return out.reshape(b, f, LATENT_CHANNELS, h, w)
