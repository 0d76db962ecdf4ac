"""Reduced StyleGAN2-style networks with condition injection at the noise
channels, plus the vector-conditioning baseline variants.

Weight modulation/demodulation follows the StyleGAN2 formulation; blocks are
narrow (<= 128 channels) and resolutions small, which is the whole point of
this desk-scale trainer.
"""

from __future__ import annotations

import torch
import torch.nn.functional as F
from torch import nn

from .config import COND_VECTOR_DIM, TrainerConfig


class PixelNorm(nn.Module):
    def forward(self, x):
        return x * torch.rsqrt(x.pow(2).mean(dim=1, keepdim=True) + 1e-8)


def _kaiming_leaky(module: nn.Module) -> None:
    # default torch init collapses deep lrelu stacks; use the matching gain
    for m in module.modules():
        if isinstance(m, (nn.Conv2d, nn.Linear)):
            nn.init.kaiming_normal_(m.weight, a=0.2, nonlinearity="leaky_relu")
            if m.bias is not None:
                nn.init.zeros_(m.bias)


class MappingNetwork(nn.Module):
    """8 fully connected layers from the (possibly condition-carrying) style
    input to the modulation space w."""

    def __init__(self, dim: int = 512, depth: int = 8):
        super().__init__()
        self.norm = PixelNorm()
        self.layers = nn.ModuleList([nn.Linear(dim, dim) for _ in range(depth)])
        _kaiming_leaky(self)

    def forward(self, z):
        x = self.norm(z)
        for layer in self.layers:
            x = F.leaky_relu(layer(x), 0.2)
        return x


class ModulatedConv2d(nn.Module):
    def __init__(self, in_ch, out_ch, kernel, style_dim, demodulate=True):
        super().__init__()
        self.weight = nn.Parameter(
            torch.randn(out_ch, in_ch, kernel, kernel) / (in_ch * kernel * kernel) ** 0.5)
        self.bias = nn.Parameter(torch.zeros(out_ch))
        self.affine = nn.Linear(style_dim, in_ch)
        nn.init.ones_(self.affine.bias)
        nn.init.normal_(self.affine.weight, std=0.02)
        self.demodulate = demodulate
        self.padding = kernel // 2

    def forward(self, x, w):
        b, in_ch, h, width = x.shape
        style = self.affine(w)                                   # (B, in)
        weight = self.weight[None] * style[:, None, :, None, None]
        if self.demodulate:
            d = torch.rsqrt(weight.pow(2).sum(dim=(2, 3, 4)) + 1e-8)
            weight = weight * d[:, :, None, None, None]
        out_ch = weight.shape[1]
        x = x.reshape(1, b * in_ch, h, width)
        weight = weight.reshape(b * out_ch, in_ch, *self.weight.shape[2:])
        out = F.conv2d(x, weight, padding=self.padding, groups=b)
        return out.reshape(b, out_ch, h, width) + self.bias[None, :, None, None]


class ConditionInjection(nn.Module):
    """Learned 1x1 projection of the 6-channel condition level, added where
    StyleGAN2 would add per-pixel noise."""

    def __init__(self, channels):
        super().__init__()
        self.proj = nn.Conv2d(6, channels, kernel_size=1, bias=False)
        nn.init.normal_(self.proj.weight, std=0.1)

    def forward(self, x, level):
        return x + self.proj(level)


class NoiseInjection(nn.Module):
    """Original StyleGAN2 behavior for the vector baseline: a fixed noise
    image per slot, scaled by a learned per-channel factor."""

    def __init__(self, channels, resolution):
        super().__init__()
        self.register_buffer("noise", torch.randn(1, 1, resolution, resolution))
        self.scale = nn.Parameter(torch.zeros(channels))

    def forward(self, x, level=None):
        return x + self.scale[None, :, None, None] * self.noise


class Generator(nn.Module):
    """Synthesis network: learned constant input, two modulated 3x3 convs per
    resolution with injection after each, skip-accumulated RGB output in
    [-1, 1] via tanh."""

    def __init__(self, cfg: TrainerConfig):
        super().__init__()
        self.cfg = cfg
        self.use_condition = cfg.conditioning == "render"
        map_dim = cfg.style_dim
        self.mapping = MappingNetwork(map_dim, cfg.mapping_depth)

        ch = cfg.channels
        self.const = nn.Parameter(torch.randn(ch[4], 4, 4))
        self.convs1 = nn.ModuleDict()
        self.convs2 = nn.ModuleDict()
        self.inject1 = nn.ModuleDict()
        self.inject2 = nn.ModuleDict()
        self.to_rgb = nn.ModuleDict()
        prev = ch[4]
        for res in cfg.resolutions:
            key = str(res)
            c = ch[res]
            self.convs1[key] = ModulatedConv2d(prev, c, 3, map_dim)
            self.convs2[key] = ModulatedConv2d(c, c, 3, map_dim)
            if self.use_condition:
                self.inject1[key] = ConditionInjection(c)
                self.inject2[key] = ConditionInjection(c)
            else:
                self.inject1[key] = NoiseInjection(c, res)
                self.inject2[key] = NoiseInjection(c, res)
            self.to_rgb[key] = ModulatedConv2d(c, 3, 1, map_dim, demodulate=False)
            prev = c

    def forward(self, style, condition=None):
        """style: (B, 512); condition: dict resolution -> (B, 6, res, res)
        covering every generator resolution (render mode only)."""
        if self.use_condition:
            if condition is None:
                raise ValueError("render-conditioned generator needs a condition pyramid")
            missing = [r for r in self.cfg.resolutions if r not in condition]
            if missing:
                raise ValueError(f"condition pyramid missing levels {missing}")
        w = self.mapping(style)
        b = style.shape[0]
        x = self.const[None].expand(b, -1, -1, -1)
        rgb = None
        for res in self.cfg.resolutions:
            key = str(res)
            if res > 4:
                x = F.interpolate(x, scale_factor=2, mode="bilinear", align_corners=False)
            level = condition[res] if self.use_condition else None
            x = F.leaky_relu(self.inject1[key](self.convs1[key](x, w), level), 0.2)
            x = F.leaky_relu(self.inject2[key](self.convs2[key](x, w), level), 0.2)
            y = self.to_rgb[key](x, w)
            rgb = y if rgb is None else (
                F.interpolate(rgb, scale_factor=2, mode="bilinear", align_corners=False) + y)
        return rgb  # linear output head; targets live in [-1, 1]


class Discriminator(nn.Module):
    """Downsampling conv stack to 4x4, then two FC layers to a scalar score.

    The render-conditioned variant takes the image channel-concatenated with
    the full-resolution stack (in_channels = 9). The vector baseline takes the
    bare image and subtracts the 236-dim condition from the last FC layer's
    activation.
    """

    def __init__(self, cfg: TrainerConfig, in_channels: int):
        super().__init__()
        self.cfg = cfg
        ch = cfg.d_channels
        res = cfg.resolution
        self.from_input = nn.Conv2d(in_channels, ch[res], 3, padding=1)
        blocks = []
        while res > 4:
            blocks.append(nn.Sequential(
                nn.Conv2d(ch[res], ch[res], 3, padding=1),
                nn.LeakyReLU(0.2),
                nn.Conv2d(ch[res], ch[res // 2], 3, padding=1),
                nn.LeakyReLU(0.2),
                nn.AvgPool2d(2),
            ))
            res //= 2
        self.blocks = nn.Sequential(*blocks)
        self.final_conv = nn.Conv2d(ch[4], ch[4], 3, padding=1)
        self.fc = nn.Linear(ch[4] * 16, COND_VECTOR_DIM)
        self.out = nn.Linear(COND_VECTOR_DIM, 1)
        _kaiming_leaky(self)

    def forward(self, image, stack=None, cond_vec=None):
        x = image if stack is None else torch.cat([image, stack], dim=1)
        x = F.leaky_relu(self.from_input(x), 0.2)
        x = self.blocks(x)
        x = F.leaky_relu(self.final_conv(x), 0.2)
        f = self.fc(x.flatten(1))
        if cond_vec is not None:
            f = f - cond_vec  # condition enters by subtraction at the last layer
        return self.out(F.leaky_relu(f, 0.2)).squeeze(1)


class StyleTable(nn.Module):
    """One trainable style vector per dataset record, standard-normal init."""

    def __init__(self, n_records: int, dim: int):
        super().__init__()
        self.embedding = nn.Embedding(n_records, dim)
        nn.init.normal_(self.embedding.weight, mean=0.0, std=1.0)

    @property
    def num_records(self) -> int:
        return self.embedding.num_embeddings

    def forward(self, record_ids):
        return self.embedding(record_ids)
