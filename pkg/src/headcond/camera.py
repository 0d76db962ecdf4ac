"""Weak-perspective camera: isotropic scale plus 2D translation, and the
eye-centering solver that keeps renderings framed like the training photos."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .assets import HeadModelAssets
from .errors import ProfileViewError, ValidationError
from .headmodel import Mesh

# Framing defaults (fraction of image side). The eye-centering targets are a
# convention, not derived quantities; both are overridable from the CLI.
DEFAULT_INTEROCULAR_FRAC = 0.22
DEFAULT_CENTER_FRAC = (0.5, 0.42)

EYE_SEPARATION_EPS = 1e-6  # meters in the projection plane


@dataclass(frozen=True)
class CameraParams:
    scale: float  # pixels per meter, > 0
    tx: float     # pixels
    ty: float     # pixels

    def __post_init__(self):
        if not (np.isfinite(self.scale) and np.isfinite(self.tx) and np.isfinite(self.ty)):
            raise ValidationError("camera parameters must be finite")
        if self.scale <= 0:
            raise ValidationError(f"camera scale must be > 0, got {self.scale}")


@dataclass(frozen=True)
class ImageSpec:
    resolution: int  # square image, power of two in [32, 1024]

    def __post_init__(self):
        p = self.resolution
        if not (32 <= p <= 1024) or (p & (p - 1)) != 0:
            raise ValidationError(f"resolution must be a power of two in [32, 1024], got {p}")


def project(points: np.ndarray, cam: CameraParams) -> np.ndarray:
    """Project (..., 3) points to (x_px, y_px, depth).

    x_px = scale * x + tx, y_px = -scale * y + ty (image y grows downward),
    depth = -z (the camera looks along -z; smaller depth is closer).
    """
    p = np.asarray(points, dtype=np.float64)
    out = np.empty_like(p)
    out[..., 0] = cam.scale * p[..., 0] + cam.tx
    out[..., 1] = -cam.scale * p[..., 1] + cam.ty
    out[..., 2] = -p[..., 2]
    return out


def camera_from_eyes(
    mesh: Mesh,
    assets: HeadModelAssets,
    image: ImageSpec,
    interocular_px: float | None = None,
    center_px: tuple[float, float] | None = None,
) -> CameraParams:
    """Solve the camera that puts the eye midpoint at ``center_px`` with the
    requested projected inter-eye distance.

    Raises ProfileViewError when the posed eyes coincide in the projection
    plane (near-profile view): the scale would blow up and zoom the face in.
    """
    p = image.resolution
    if interocular_px is None:
        interocular_px = DEFAULT_INTEROCULAR_FRAC * p
    if center_px is None:
        center_px = (DEFAULT_CENTER_FRAC[0] * p, DEFAULT_CENTER_FRAC[1] * p)

    left, right = mesh.vertices[assets.eye_vertex_ids]
    sep = np.hypot(right[0] - left[0], right[1] - left[1])
    if sep < EYE_SEPARATION_EPS:
        raise ProfileViewError(
            f"eye projections coincide (xy separation {sep:.3g} m); "
            "near-profile pose cannot be eye-centered without extreme zoom")

    scale = interocular_px / sep
    mid = 0.5 * (left + right)
    tx = center_px[0] - scale * mid[0]
    ty = center_px[1] + scale * mid[1]
    return CameraParams(scale=scale, tx=tx, ty=ty)
