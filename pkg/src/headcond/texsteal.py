"""Texture stealing: map image colors back onto the UV atlas with visibility,
plus the masked L2 texture-consistency loss.

The projection is factored through a CorrespondenceMap (per-texel image
coordinates + visibility) so a trainer can repeat the sampling differentiably.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .assets import HeadModelAssets
from .camera import CameraParams, ImageSpec, project
from .errors import ValidationError
from .headmodel import Mesh
from .raster import EMPTY, _edge_accepts_zero, bilinear_sample, front_facing, rasterize

DEPTH_EPS_FRACTION = 1e-4  # of the projected depth extent
CORR_FORMAT_VERSION = 1
PTEX_FORMAT_VERSION = 1


@dataclass(frozen=True)
class CorrespondenceMap:
    img_xy: np.ndarray           # (T, T, 2) float64 image-plane sample coords
    visible: np.ndarray          # (T, T) bool
    image_resolution: int        # resolution of images this map samples from

    @property
    def texture_resolution(self) -> int:
        return self.visible.shape[0]


@dataclass(frozen=True)
class PartialTexture:
    texels: np.ndarray   # (T, T, 3); zero where invisible
    visible: np.ndarray  # (T, T) bool

    @property
    def resolution(self) -> int:
        return self.visible.shape[0]


def _rasterize_uv_atlas(uv_coords: np.ndarray, t_s: int):
    """Rasterize every face's UV triangle into the texel grid.

    Both windings are accepted (UV orientation is arbitrary); overlaps go to
    the lowest face index. Returns (face_id, bary) per texel grids.
    """
    face_id = np.full((t_s, t_s), EMPTY, dtype=np.int32)
    bary = np.zeros((t_s, t_s, 3))
    py = (np.arange(t_s) + 0.5)[:, None]
    px = (np.arange(t_s) + 0.5)[None, :]

    pos_all = uv_coords.astype(np.float64) * t_s
    d1 = pos_all[:, 1] - pos_all[:, 0]
    d2 = pos_all[:, 2] - pos_all[:, 0]
    area2 = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]

    for f in range(pos_all.shape[0]):
        if area2[f] == 0.0:
            continue
        # normalize winding so the shared inside test (all edges negative) applies
        order = (0, 1, 2) if area2[f] < 0.0 else (0, 2, 1)
        xy = pos_all[f, order, :]
        xmin, ymin = xy.min(axis=0)
        xmax, ymax = xy.max(axis=0)
        c0 = max(int(np.ceil(xmin - 0.5)), 0)
        c1 = min(int(np.floor(xmax - 0.5)), t_s - 1)
        r0 = max(int(np.ceil(ymin - 0.5)), 0)
        r1 = min(int(np.floor(ymax - 0.5)), t_s - 1)
        if c0 > c1 or r0 > r1:
            continue
        sy = py[r0:r1 + 1]
        sx = px[:, c0:c1 + 1]

        inside = None
        edges = []
        for k in range(3):
            ax, ay = xy[k]
            dx, dy = xy[(k + 1) % 3] - xy[k]
            e = dx * (sy - ay) - dy * (sx - ax)
            ok = (e < 0.0) | ((e == 0.0) & _edge_accepts_zero(dx, dy))
            inside = ok if inside is None else (inside & ok)
            edges.append(e)
        denom = edges[0] + edges[1] + edges[2]
        inside &= denom < 0.0
        view_id = face_id[r0:r1 + 1, c0:c1 + 1]
        upd = inside & (view_id == EMPTY)
        if not upd.any():
            continue
        view_id[upd] = f
        b = np.stack([edges[1][upd], edges[2][upd], edges[0][upd]], axis=-1) / denom[upd][:, None]
        bary[r0:r1 + 1, c0:c1 + 1][upd] = b[:, list(order)] if order != (0, 1, 2) else b

    return face_id, bary


def texel_correspondences(mesh: Mesh, cam: CameraParams, assets: HeadModelAssets,
                          image: ImageSpec, t_s: int = 128) -> CorrespondenceMap:
    """Per-texel image coordinates and visibility for the posed mesh.

    A texel is visible when its surface point projects inside the frame, its
    triangle faces the camera, and a depth test against the mesh's own depth
    buffer passes (tolerance: 1e-4 of the projected depth extent). Texels
    covered by no UV triangle are invisible.
    """
    face_id, bary = _rasterize_uv_atlas(assets.uv_coords, t_s)
    covered = face_id != EMPTY

    img_xy = np.zeros((t_s, t_s, 2))
    visible = np.zeros((t_s, t_s), dtype=bool)
    if not covered.any():
        return CorrespondenceMap(img_xy=img_xy, visible=visible,
                                 image_resolution=image.resolution)

    fids = face_id[covered]
    corners = mesh.vertices[mesh.faces[fids]]                  # (N, 3, 3)
    points = np.einsum("nc,nck->nk", bary[covered], corners)   # (N, 3)
    proj = project(points, cam)
    img_xy[covered] = proj[:, :2]

    res = image.resolution
    buffers = rasterize(mesh, cam, image)
    proj_verts = project(mesh.vertices, cam)
    front = front_facing(proj_verts[mesh.faces][:, :, :2])

    cols = np.floor(proj[:, 0]).astype(np.int64)
    rows = np.floor(proj[:, 1]).astype(np.int64)
    in_frame = (cols >= 0) & (cols < res) & (rows >= 0) & (rows < res)

    depth_extent = float(np.ptp(proj_verts[:, 2]))
    eps_z = max(DEPTH_EPS_FRACTION * depth_extent, 1e-12)

    ok = in_frame & front[fids]
    cc = np.clip(cols, 0, res - 1)
    rr = np.clip(rows, 0, res - 1)
    buf_depth = buffers.depth[rr, cc]
    buf_masked = buffers.mask[rr, cc]
    winner = buffers.tri_id[rr, cc]

    # The depth buffer holds depth at the pixel center, up to half a pixel away
    # from the sample point, so a raw comparison self-occludes steep regions of
    # the surface. A winner that shares a vertex with the texel's own face is
    # the same local surface, never an occluder; only non-adjacent winners are
    # depth-tested (tolerance eps_z).
    same_surface = np.zeros(fids.shape[0], dtype=bool)
    has_winner = winner != EMPTY
    if has_winner.any():
        own_corners = mesh.faces[fids[has_winner]]
        win_corners = mesh.faces[winner[has_winner]]
        same_surface[has_winner] = (
            own_corners[:, :, None] == win_corners[:, None, :]).any(axis=(1, 2))
    # an unmasked pixel holds no surface at all, so nothing can occlude there
    ok &= (~buf_masked) | same_surface | (proj[:, 2] <= buf_depth + eps_z)

    visible[covered] = ok
    return CorrespondenceMap(img_xy=img_xy, visible=visible,
                             image_resolution=image.resolution)


def _masked_bilinear(img: np.ndarray, pixel_mask: np.ndarray,
                     gx: np.ndarray, gy: np.ndarray) -> np.ndarray:
    """Bilinear sampling with weights renormalized over valid pixels, so
    off-surface neighbors do not bleed into boundary samples. Falls back to
    plain bilinear where no tap is valid."""
    h, w = img.shape[:2]
    x0 = np.floor(gx)
    y0 = np.floor(gy)
    fx, fy = gx - x0, gy - y0
    xi0 = np.clip(x0.astype(np.int64), 0, w - 1)
    xi1 = np.clip(x0.astype(np.int64) + 1, 0, w - 1)
    yi0 = np.clip(y0.astype(np.int64), 0, h - 1)
    yi1 = np.clip(y0.astype(np.int64) + 1, 0, h - 1)
    wts = np.stack([(1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy, fx * fy], axis=-1)
    vals = np.stack([img[yi0, xi0], img[yi0, xi1], img[yi1, xi0], img[yi1, xi1]], axis=-2)
    valid = np.stack([pixel_mask[yi0, xi0], pixel_mask[yi0, xi1],
                      pixel_mask[yi1, xi0], pixel_mask[yi1, xi1]], axis=-1)
    wm = wts * valid
    total = wm.sum(axis=-1, keepdims=True)
    usable = total[..., 0] > 1e-12
    wm = np.where(usable[..., None], wm / np.where(total > 0, total, 1.0), wts)
    return np.einsum("...k,...kc->...c", wm, vals)


def steal_texture(img: np.ndarray, corr: CorrespondenceMap,
                  pixel_mask: np.ndarray | None = None) -> PartialTexture:
    """Bilinear-sample the image at each visible texel's coordinates.

    ``pixel_mask`` (P, P bool), when given, marks which pixels belong to the
    rendered surface; sampling weights renormalize over marked pixels so
    background does not bleed into silhouette texels. Invisible texels are
    zero-filled; they carry no information and are excluded from every loss.
    """
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 3 or img.shape[2] != 3 or img.shape[0] != img.shape[1]:
        raise ValidationError(f"image: expected (P, P, 3), got {img.shape}")
    if img.shape[0] != corr.image_resolution:
        raise ValidationError(
            f"image resolution {img.shape[0]} does not match the correspondence "
            f"map's generating resolution {corr.image_resolution}")
    if pixel_mask is not None and pixel_mask.shape != img.shape[:2]:
        raise ValidationError(
            f"pixel_mask shape {pixel_mask.shape} does not match image {img.shape[:2]}")

    t_s = corr.texture_resolution
    texels = np.zeros((t_s, t_s, 3))
    m = corr.visible
    if m.any():
        # pixel (r, c) stores its value at image coordinates (c + 0.5, r + 0.5)
        gx = corr.img_xy[m, 0] - 0.5
        gy = corr.img_xy[m, 1] - 0.5
        if pixel_mask is None:
            texels[m] = bilinear_sample(img, gx, gy)
        else:
            texels[m] = _masked_bilinear(img, pixel_mask, gx, gy)
    return PartialTexture(texels=texels, visible=m.copy())


def consistency_loss(a: PartialTexture, b: PartialTexture) -> tuple[float, int]:
    """Mean squared difference over jointly visible texels.

    Returns (loss, overlap_count); an empty overlap yields (0.0, 0) so callers
    can detect unconstrained pairs instead of catching errors.
    """
    if a.resolution != b.resolution:
        raise ValidationError(
            f"texture resolutions differ: {a.resolution} vs {b.resolution}")
    overlap = a.visible & b.visible
    count = int(overlap.sum())
    if count == 0:
        return 0.0, 0
    diff = a.texels[overlap] - b.texels[overlap]
    return float(np.mean(diff * diff)), count


# ---------------------------------------------------------------------------
# On-disk forms: one ASCII JSON header line, then raw little-endian payloads.
# ---------------------------------------------------------------------------

def save_correspondences(corr: CorrespondenceMap, path) -> None:
    header = {
        "format_version": CORR_FORMAT_VERSION,
        "texture_resolution": corr.texture_resolution,
        "image_resolution": corr.image_resolution,
    }
    with open(path, "wb") as fh:
        fh.write((json.dumps(header, sort_keys=True) + "\n").encode("ascii"))
        fh.write(np.ascontiguousarray(corr.img_xy, dtype="<f4").tobytes())
        fh.write(corr.visible.astype(np.uint8).tobytes())


def load_correspondences(path) -> CorrespondenceMap:
    with open(path, "rb") as fh:
        try:
            header = json.loads(fh.readline())
        except json.JSONDecodeError as exc:
            raise ValidationError(f"bad correspondence header: {exc}") from exc
        t_s = int(header["texture_resolution"])
        res = int(header["image_resolution"])
        xy_raw = fh.read(t_s * t_s * 2 * 4)
        vis_raw = fh.read(t_s * t_s)
        if len(xy_raw) != t_s * t_s * 2 * 4 or len(vis_raw) != t_s * t_s:
            raise ValidationError("truncated correspondence payload")
        img_xy = np.frombuffer(xy_raw, dtype="<f4").reshape(t_s, t_s, 2).astype(np.float64)
        visible = np.frombuffer(vis_raw, dtype=np.uint8).reshape(t_s, t_s).astype(bool)
    return CorrespondenceMap(img_xy=img_xy, visible=visible, image_resolution=res)


def save_partial_texture(tex: PartialTexture, path) -> None:
    header = {"format_version": PTEX_FORMAT_VERSION, "texture_resolution": tex.resolution}
    with open(path, "wb") as fh:
        fh.write((json.dumps(header, sort_keys=True) + "\n").encode("ascii"))
        fh.write(np.ascontiguousarray(tex.texels, dtype="<f4").tobytes())
        fh.write(tex.visible.astype(np.uint8).tobytes())


def load_partial_texture(path) -> PartialTexture:
    with open(path, "rb") as fh:
        try:
            header = json.loads(fh.readline())
        except json.JSONDecodeError as exc:
            raise ValidationError(f"bad partial-texture header: {exc}") from exc
        t_s = int(header["texture_resolution"])
        tex_raw = fh.read(t_s * t_s * 3 * 4)
        vis_raw = fh.read(t_s * t_s)
        if len(tex_raw) != t_s * t_s * 3 * 4 or len(vis_raw) != t_s * t_s:
            raise ValidationError("truncated partial-texture payload")
        texels = np.frombuffer(tex_raw, dtype="<f4").reshape(t_s, t_s, 3).astype(np.float64)
        visible = np.frombuffer(vis_raw, dtype=np.uint8).reshape(t_s, t_s).astype(bool)
    return PartialTexture(texels=texels, visible=visible)
