"""Appearance-space albedo synthesis and order-2 spherical-harmonics shading.

SH convention: real spherical harmonics, bands 0-2, in the order
[1, y, z, x, xy, yz, 3z^2-1, xz, x^2-y^2] with the usual irradiance constants

    band 0: 1/(2 sqrt(pi))
    band 1: sqrt(3 / (4 pi))
    band 2: sqrt(15 / (4 pi)), sqrt(15 / (4 pi)), sqrt(5 / (16 pi)),
            sqrt(15 / (4 pi)), sqrt(15 / (16 pi))

Lighting coefficients are raw multipliers of these basis values; no extra
convolution factors are folded in. Colors clamp to [0, 1] at the final shade,
never at the irradiance sum, so linearity in the light stays testable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .assets import HeadModelAssets, N_APPEARANCE
from .errors import ValidationError

SH_C0 = 0.28209479177387814          # 1 / (2 sqrt(pi))
SH_C1 = 0.4886025119029199           # sqrt(3 / (4 pi))
SH_C2 = (
    1.0925484305920792,              # xy
    1.0925484305920792,              # yz
    0.31539156525252005,             # 3z^2 - 1
    1.0925484305920792,              # xz
    0.5462742152960396,              # x^2 - y^2
)
N_SH = 9


@dataclass(frozen=True)
class AppearanceParams:
    coeffs: np.ndarray  # (50,)

    def __post_init__(self):
        object.__setattr__(self, "coeffs", np.asarray(self.coeffs, dtype=np.float64))
        if self.coeffs.shape != (N_APPEARANCE,):
            raise ValidationError(
                f"appearance coeffs: expected ({N_APPEARANCE},), got {self.coeffs.shape}")
        if not np.all(np.isfinite(self.coeffs)):
            raise ValidationError("appearance coeffs: contains non-finite values")

    @staticmethod
    def zeros() -> "AppearanceParams":
        return AppearanceParams(np.zeros(N_APPEARANCE))


@dataclass(frozen=True)
class LightingParams:
    sh_coeffs: np.ndarray  # (9, 3): 9 SH coefficients per RGB channel

    def __post_init__(self):
        object.__setattr__(self, "sh_coeffs", np.asarray(self.sh_coeffs, dtype=np.float64))
        if self.sh_coeffs.shape != (N_SH, 3):
            raise ValidationError(
                f"lighting: expected ({N_SH}, 3), got {self.sh_coeffs.shape}")
        if not np.all(np.isfinite(self.sh_coeffs)):
            raise ValidationError("lighting: contains non-finite values")

    @staticmethod
    def from_flat(flat) -> "LightingParams":
        flat = np.asarray(flat, dtype=np.float64)
        if flat.shape != (N_SH * 3,):
            raise ValidationError(f"lighting: expected flat length {N_SH * 3}, got {flat.shape}")
        return LightingParams(flat.reshape(N_SH, 3))

    @staticmethod
    def constant_irradiance(value: float = 1.0) -> "LightingParams":
        """Light whose irradiance is ``value`` for every normal direction."""
        sh = np.zeros((N_SH, 3))
        sh[0, :] = value / SH_C0
        return LightingParams(sh)

    def flat(self) -> np.ndarray:
        return self.sh_coeffs.reshape(-1).copy()


@dataclass(frozen=True)
class TextureMap:
    texels: np.ndarray  # (T, T, 3) in [0, 1], power-of-two side

    def __post_init__(self):
        t = self.texels
        if t.ndim != 3 or t.shape[0] != t.shape[1] or t.shape[2] != 3:
            raise ValidationError(f"texture: expected (T, T, 3), got {t.shape}")
        side = t.shape[0]
        if side < 1 or (side & (side - 1)) != 0:
            raise ValidationError(f"texture: side must be a power of two, got {side}")
        if not np.all(np.isfinite(t)):
            raise ValidationError("texture: contains non-finite values")
        if t.min() < 0.0 or t.max() > 1.0:
            raise ValidationError("texture: values must lie in [0, 1]")

    @property
    def resolution(self) -> int:
        return self.texels.shape[0]


def albedo_from_appearance(assets: HeadModelAssets, appearance: AppearanceParams,
                           clamp: bool = True) -> TextureMap | np.ndarray:
    """mean + basis @ coeffs, clamped to [0, 1].

    With ``clamp=False`` the raw linear combination is returned as an array
    (used by linearity checks); the clamped version wraps it as a TextureMap.
    """
    raw = assets.albedo_mean.astype(np.float64) \
        + assets.albedo_basis.astype(np.float64) @ appearance.coeffs
    if not clamp:
        return raw
    return TextureMap(np.clip(raw, 0.0, 1.0))


def sh_basis(normals: np.ndarray) -> np.ndarray:
    """Evaluate the 9 SH basis functions at unit direction(s): (..., 3) -> (..., 9)."""
    n = np.asarray(normals, dtype=np.float64)
    lengths = np.linalg.norm(n, axis=-1)
    if not np.all(np.abs(lengths - 1.0) <= 1e-6):
        raise ValidationError("sh_basis requires unit vectors (|n| = 1 within 1e-6)")
    x, y, z = n[..., 0], n[..., 1], n[..., 2]
    out = np.empty(n.shape[:-1] + (N_SH,))
    out[..., 0] = SH_C0
    out[..., 1] = SH_C1 * y
    out[..., 2] = SH_C1 * z
    out[..., 3] = SH_C1 * x
    out[..., 4] = SH_C2[0] * x * y
    out[..., 5] = SH_C2[1] * y * z
    out[..., 6] = SH_C2[2] * (3.0 * z * z - 1.0)
    out[..., 7] = SH_C2[3] * x * z
    out[..., 8] = SH_C2[4] * (x * x - y * y)
    return out


def irradiance(normals: np.ndarray, light: LightingParams) -> np.ndarray:
    """Per-channel irradiance sum, (..., 3). Linear in the light; not clamped."""
    return sh_basis(normals) @ light.sh_coeffs


def shade_unclamped(albedo_rgb: np.ndarray, normals: np.ndarray,
                    light: LightingParams) -> np.ndarray:
    """albedo * irradiance without the final clamp (testing hook)."""
    return np.asarray(albedo_rgb, dtype=np.float64) * irradiance(normals, light)


def shade(albedo_rgb: np.ndarray, normals: np.ndarray, light: LightingParams) -> np.ndarray:
    """Shaded color in [0, 1]: clamp(albedo * sum_k l[k] Y_k(n), 0, 1) per channel."""
    return np.clip(shade_unclamped(albedo_rgb, normals, light), 0.0, 1.0)
