"""Head-model evaluation: blendshapes, one-joint jaw skinning, global rotation,
and angle-weighted vertex normals.

All operations are pure and deterministic; math runs in float64 regardless of
asset storage precision.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .assets import HeadModelAssets, N_EXPRESSION, N_SHAPE
from .errors import ValidationError

N_POSE = 6  # axis-angle: [0:3] global rotation, [3:6] jaw rotation


@dataclass(frozen=True)
class HeadParams:
    """Shape (100), pose (6), expression (50) coefficients for one head."""

    shape: np.ndarray
    pose: np.ndarray
    expression: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "shape", np.asarray(self.shape, dtype=np.float64))
        object.__setattr__(self, "pose", np.asarray(self.pose, dtype=np.float64))
        object.__setattr__(self, "expression", np.asarray(self.expression, dtype=np.float64))
        if self.shape.shape != (N_SHAPE,):
            raise ValidationError(f"shape: expected ({N_SHAPE},), got {self.shape.shape}")
        if self.pose.shape != (N_POSE,):
            raise ValidationError(f"pose: expected ({N_POSE},), got {self.pose.shape}")
        if self.expression.shape != (N_EXPRESSION,):
            raise ValidationError(
                f"expression: expected ({N_EXPRESSION},), got {self.expression.shape}")
        for name in ("shape", "pose", "expression"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValidationError(f"{name}: contains non-finite values")

    @staticmethod
    def zeros() -> "HeadParams":
        return HeadParams(np.zeros(N_SHAPE), np.zeros(N_POSE), np.zeros(N_EXPRESSION))


@dataclass(frozen=True)
class Mesh:
    vertices: np.ndarray  # (V, 3) float64
    faces: np.ndarray     # (F, 3) int32, shared with the generating assets


def rodrigues(axis_angle: np.ndarray) -> np.ndarray:
    """Rotation matrix from an axis-angle vector (angle = vector norm)."""
    aa = np.asarray(axis_angle, dtype=np.float64)
    angle = np.linalg.norm(aa)
    if angle < 1e-12:
        return np.eye(3)
    x, y, z = aa / angle
    k = np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])
    return np.eye(3) + np.sin(angle) * k + (1.0 - np.cos(angle)) * (k @ k)


def evaluate(assets: HeadModelAssets, params: HeadParams) -> Mesh:
    """Evaluate the head model: template + blendshapes, then jaw rotation about
    the jaw joint blended by jaw_weights, then global rotation about the origin.
    """
    verts = assets.template_vertices.astype(np.float64)
    verts = verts + assets.shape_basis.astype(np.float64) @ params.shape
    verts = verts + assets.expression_basis.astype(np.float64) @ params.expression

    jaw = params.pose[3:6]
    if np.linalg.norm(jaw) > 0.0:
        joint = assets.jaw_joint.astype(np.float64)
        rotated = (verts - joint) @ rodrigues(jaw).T + joint
        w = assets.jaw_weights.astype(np.float64)[:, None]
        verts = verts + w * (rotated - verts)  # w = 0 leaves a vertex bitwise unchanged

    glob = params.pose[0:3]
    if np.linalg.norm(glob) > 0.0:
        verts = verts @ rodrigues(glob).T

    return Mesh(vertices=verts, faces=assets.faces)


def vertex_normals(mesh: Mesh) -> np.ndarray:
    """Angle-weighted vertex normals, unit length.

    Angle weighting makes the result independent of how flat polygons are
    triangulated. Faces with area < 1e-12 are skipped; vertices touched by no
    valid face get (0, 0, 1).
    """
    verts = mesh.vertices
    faces = mesh.faces
    a, b, c = verts[faces[:, 0]], verts[faces[:, 1]], verts[faces[:, 2]]
    cross = np.cross(b - a, c - a)
    twice_area = np.linalg.norm(cross, axis=1)
    valid = twice_area > 2e-12
    if not np.any(valid):
        raise ValidationError("mesh has no non-degenerate face")

    fnormal = np.zeros_like(cross)
    fnormal[valid] = cross[valid] / twice_area[valid, None]

    def corner_angle(p, q, r):
        u = q - p
        v = r - p
        nu = np.linalg.norm(u, axis=1)
        nv = np.linalg.norm(v, axis=1)
        denom = np.where(valid, nu * nv, 1.0)
        cosang = np.clip(np.einsum("ij,ij->i", u, v) / denom, -1.0, 1.0)
        return np.arccos(cosang)

    angles = np.stack([corner_angle(a, b, c), corner_angle(b, c, a), corner_angle(c, a, b)],
                      axis=1)
    accum = np.zeros_like(verts)
    for corner in range(3):
        weighted = fnormal * angles[:, corner, None]
        np.add.at(accum, faces[valid, corner], weighted[valid])

    norms = np.linalg.norm(accum, axis=1)
    out = np.zeros_like(accum)
    ok = norms > 1e-20
    out[ok] = accum[ok] / norms[ok, None]
    out[~ok] = (0.0, 0.0, 1.0)
    return out
