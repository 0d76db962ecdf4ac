"""Differentiable texture sampling: a torch re-implementation of the primary
component's bilinear stealing, numerically cross-validated against it."""

from __future__ import annotations

import torch


def sample_image_at(image: torch.Tensor, xy: torch.Tensor,
                    pixel_mask: torch.Tensor | None = None) -> torch.Tensor:
    """Bilinear samples of a (C, H, W) image at (N, 2) pixel coordinates.

    Matches the primary steal_texture conventions: pixel (r, c) holds its
    value at coordinates (c + 0.5, r + 0.5), borders clamp, and an optional
    (H, W) bool mask renormalizes the tap weights over on-surface pixels
    (falling back to plain bilinear where no tap is valid). Gradients flow to
    the image.
    """
    _, h, w = image.shape
    gx = xy[:, 0] - 0.5
    gy = xy[:, 1] - 0.5
    x0 = torch.floor(gx)
    y0 = torch.floor(gy)
    fx = (gx - x0).unsqueeze(0)
    fy = (gy - y0).unsqueeze(0)
    xi0 = x0.long().clamp(0, w - 1)
    xi1 = (x0.long() + 1).clamp(0, w - 1)
    yi0 = y0.long().clamp(0, h - 1)
    yi1 = (y0.long() + 1).clamp(0, h - 1)

    taps = torch.stack([
        image[:, yi0, xi0], image[:, yi0, xi1],
        image[:, yi1, xi0], image[:, yi1, xi1],
    ])  # (4, C, N)
    wts = torch.stack([
        (1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy, fx * fy,
    ])  # (4, 1, N)
    if pixel_mask is not None:
        valid = torch.stack([
            pixel_mask[yi0, xi0], pixel_mask[yi0, xi1],
            pixel_mask[yi1, xi0], pixel_mask[yi1, xi1],
        ]).unsqueeze(1).to(wts.dtype)
        masked = wts * valid
        total = masked.sum(dim=0, keepdim=True)
        usable = total > 1e-12
        wts = torch.where(usable, masked / torch.where(usable, total, torch.ones_like(total)), wts)
    return (taps * wts).sum(dim=0).transpose(0, 1)  # (N, C)


def masked_l2(tex_a: torch.Tensor, tex_b: torch.Tensor) -> torch.Tensor:
    """Mean squared difference over matching sample rows (callers pre-restrict
    to the joint-visibility set); empty input contributes exactly 0."""
    if tex_a.numel() == 0:
        return tex_a.new_zeros(())
    return (tex_a - tex_b).pow(2).mean()
