"""Noise-prediction U-Net with a 7-channel conditioned input.

The network consumes [x_t RGB | sketch | stroke RGB] stacked along the
channel axis and predicts the noise residual for x_t.  Structure: residual
blocks + strided downsampling on the way in, residual blocks + upsampling
with per-level skip concatenation on the way out, and a sinusoidal timestep
embedding added inside every residual block.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .diffusion import ConditionPair
from .images import ensure_image

IN_CHANNELS = 7
OUT_CHANNELS = 3


@dataclass(frozen=True)
class NetworkConfig:
    base_channels: int = 32
    channel_multipliers: tuple[int, ...] = (1, 2, 2)
    residual_blocks_per_level: int = 2
    time_embed_dim: int = 128

    def __post_init__(self) -> None:
        if self.base_channels < 1:
            raise ValueError("base_channels must be >= 1")
        if not self.channel_multipliers or any(m < 1 for m in self.channel_multipliers):
            raise ValueError("channel_multipliers must be a non-empty tuple of positive ints")
        if self.residual_blocks_per_level < 1:
            raise ValueError("residual_blocks_per_level must be >= 1")
        if self.time_embed_dim < 2 or self.time_embed_dim % 2:
            raise ValueError("time_embed_dim must be a positive even number")
        # frozen dataclass: bypass __setattr__ for the normalized tuple
        object.__setattr__(self, "channel_multipliers", tuple(int(m) for m in self.channel_multipliers))

    @property
    def levels(self) -> int:
        return len(self.channel_multipliers)

    @property
    def spatial_divisor(self) -> int:
        return 2 ** (self.levels - 1)

    def to_dict(self) -> dict:
        return {
            "base_channels": self.base_channels,
            "channel_multipliers": list(self.channel_multipliers),
            "residual_blocks_per_level": self.residual_blocks_per_level,
            "time_embed_dim": self.time_embed_dim,
            "input_channels": IN_CHANNELS,
            "output_channels": OUT_CHANNELS,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkConfig":
        return cls(
            base_channels=int(d["base_channels"]),
            channel_multipliers=tuple(d["channel_multipliers"]),
            residual_blocks_per_level=int(d["residual_blocks_per_level"]),
            time_embed_dim=int(d["time_embed_dim"]),
        )


def assemble_input(x_t: np.ndarray, cond: ConditionPair) -> np.ndarray:
    """Stack [x_t RGB, sketch, stroke RGB] into an (h, w, 7) buffer.

    Absent conditions fill their channels with 0.0 (neutral gray).
    """
    ensure_image(x_t, channels=3, name="x_t")
    h, w = x_t.shape[:2]
    if cond.sketch is not None:
        if cond.sketch.shape[:2] != (h, w):
            raise ValueError(f"sketch spatial size {cond.sketch.shape[:2]} != x_t {h, w}")
        sketch = cond.sketch
    else:
        sketch = np.zeros((h, w, 1), dtype=x_t.dtype)
    if cond.stroke is not None:
        if cond.stroke.shape[:2] != (h, w):
            raise ValueError(f"stroke spatial size {cond.stroke.shape[:2]} != x_t {h, w}")
        stroke = cond.stroke
    else:
        stroke = np.zeros((h, w, 3), dtype=x_t.dtype)
    return np.concatenate([x_t, sketch, stroke], axis=2)


def timestep_embedding(t, dim: int) -> torch.Tensor:
    """Sinusoidal embedding: [sin(t * w_k), cos(t * w_k)] with w_k = 10000^(-2k/dim).

    Accepts a scalar step index or a 1-D tensor of indices; dim must be even.
    """
    if dim % 2:
        raise ValueError(f"embedding dim must be even, got {dim}")
    scalar = not torch.is_tensor(t) or t.ndim == 0
    ts = torch.as_tensor(t, dtype=torch.float64).reshape(-1)
    half = dim // 2
    freqs = torch.pow(10000.0, -2.0 * torch.arange(half, dtype=torch.float64) / dim)
    args = ts[:, None] * freqs[None, :]
    emb = torch.cat([torch.sin(args), torch.cos(args)], dim=-1).to(torch.float32)
    return emb[0] if scalar else emb


def _num_groups(channels: int) -> int:
    g = min(8, channels)
    if channels % g:
        g = math.gcd(channels, 8)
    return g


class ResBlock(nn.Module):
    """norm -> SiLU -> conv -> (+ time proj) -> norm -> SiLU -> conv, with shortcut."""

    def __init__(self, in_ch: int, out_ch: int, emb_dim: int):
        super().__init__()
        self.norm1 = nn.GroupNorm(_num_groups(in_ch), in_ch)
        self.conv1 = nn.Conv2d(in_ch, out_ch, 3, padding=1)
        self.emb_proj = nn.Linear(emb_dim, out_ch)
        self.norm2 = nn.GroupNorm(_num_groups(out_ch), out_ch)
        self.conv2 = nn.Conv2d(out_ch, out_ch, 3, padding=1)
        self.shortcut = nn.Conv2d(in_ch, out_ch, 1) if in_ch != out_ch else nn.Identity()

    def forward(self, x: torch.Tensor, emb: torch.Tensor) -> torch.Tensor:
        h = self.conv1(F.silu(self.norm1(x)))
        h = h + self.emb_proj(emb)[:, :, None, None]
        h = self.conv2(F.silu(self.norm2(h)))
        return h + self.shortcut(x)


class UNet(nn.Module):
    def __init__(self, cfg: NetworkConfig):
        super().__init__()
        self.cfg = cfg
        d = cfg.time_embed_dim
        chans = [cfg.base_channels * m for m in cfg.channel_multipliers]

        self.time_mlp = nn.Sequential(nn.Linear(d, d), nn.SiLU(), nn.Linear(d, d))
        self.stem = nn.Conv2d(IN_CHANNELS, chans[0], 3, padding=1)

        self.enc_blocks = nn.ModuleList()
        self.downs = nn.ModuleList()
        cur = chans[0]
        for i, ch in enumerate(chans):
            level = nn.ModuleList()
            for _ in range(cfg.residual_blocks_per_level):
                level.append(ResBlock(cur, ch, d))
                cur = ch
            self.enc_blocks.append(level)
            if i < len(chans) - 1:
                self.downs.append(nn.Conv2d(cur, cur, 3, stride=2, padding=1))

        self.mid_blocks = nn.ModuleList(
            ResBlock(cur, cur, d) for _ in range(cfg.residual_blocks_per_level)
        )

        self.dec_blocks = nn.ModuleList()
        self.ups = nn.ModuleList()
        for i in reversed(range(len(chans))):
            ch = chans[i]
            level = nn.ModuleList()
            for j in range(cfg.residual_blocks_per_level):
                in_ch = cur + ch if j == 0 else ch
                level.append(ResBlock(in_ch, ch, d))
            cur = ch
            self.dec_blocks.append(level)
            if i > 0:
                self.ups.append(nn.Conv2d(cur, cur, 3, padding=1))

        self.out_norm = nn.GroupNorm(_num_groups(cur), cur)
        self.out_conv = nn.Conv2d(cur, OUT_CHANNELS, 3, padding=1)

    def forward(self, x: torch.Tensor, t: torch.Tensor) -> torch.Tensor:
        if x.ndim != 4 or x.shape[1] != IN_CHANNELS:
            raise ValueError(f"expected (B, {IN_CHANNELS}, H, W) input, got {tuple(x.shape)}")
        div = self.cfg.spatial_divisor
        if x.shape[2] % div or x.shape[3] % div:
            raise ValueError(f"spatial size {x.shape[2]}x{x.shape[3]} must be divisible by {div}")
        emb = self.time_mlp(timestep_embedding(t, self.cfg.time_embed_dim).to(x.dtype))
        if emb.ndim == 1:
            emb = emb[None, :].expand(x.shape[0], -1)

        h = self.stem(x)
        skips = []
        for i, level in enumerate(self.enc_blocks):
            for block in level:
                h = block(h, emb)
            skips.append(h)
            if i < len(self.downs):
                h = self.downs[i](h)
        for block in self.mid_blocks:
            h = block(h, emb)
        for k, level in enumerate(self.dec_blocks):
            h = torch.cat([h, skips[len(skips) - 1 - k]], dim=1)
            for block in level:
                h = block(h, emb)
            if k < len(self.ups):
                h = self.ups[k](F.interpolate(h, scale_factor=2, mode="nearest"))
        return self.out_conv(F.silu(self.out_norm(h)))


def predict_noise(model: UNet, x7: np.ndarray, t: int) -> np.ndarray:
    """Single-image denoiser call: (h, w, 7) numpy in, (h, w, 3) numpy out."""
    ensure_image(x7, channels=IN_CHANNELS, name="x7")
    p = next(model.parameters())
    with torch.inference_mode():
        xt = torch.from_numpy(np.ascontiguousarray(x7.transpose(2, 0, 1))[None]).to(p.dtype)
        out = model(xt, torch.tensor([t]))
    return out[0].permute(1, 2, 0).numpy().astype(np.float32)


def make_denoiser(model: UNet):
    """Wrap a network as the (x7, t) -> eps_hat handle used by the sampler."""
    model.eval()
    return lambda x7, t: predict_noise(model, x7, t)
