"""Deterministic software rasterizer and the pixel-aligned conditioning stack.

Conventions (see docs/formats.md):
  - pixel (row, col) has its center at (x, y) = (col + 0.5, row + 0.5)
  - front faces wind counterclockwise viewed from the camera in a y-up frame;
    after the y-flipping projection they are clockwise in pixel coordinates,
    so the pixel-space doubled signed area is negative for front faces
  - fill rule: a pixel center exactly on an edge belongs to the triangle whose
    edge is a top or left edge (d.y > 0, or d.y == 0 and d.x < 0, for our
    winding); shared edges therefore cover each pixel exactly once
  - z ties are broken by the lower triangle index
  - texture sampling is bilinear with value nodes at texel centers and
    clamp-to-edge borders
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .camera import CameraParams, ImageSpec, project
from .errors import ValidationError
from .headmodel import Mesh, vertex_normals
from .shading import LightingParams, TextureMap, irradiance

EMPTY = -1
NORMAL_BACKGROUND = 0.5  # encodes the zero vector
CHANNEL_NAMES = ("normal_x", "normal_y", "normal_z", "texture_r", "texture_g", "texture_b")
STACK_FORMAT_VERSION = 1


@dataclass
class RenderBuffers:
    """Per-pixel fragments; normal_img / color_img are filled by the render ops."""

    depth: np.ndarray    # (P, P) float64, +inf where empty
    tri_id: np.ndarray   # (P, P) int32, EMPTY where no coverage
    bary: np.ndarray     # (P, P, 3) float64
    uv: np.ndarray       # (P, P, 2) float64
    mask: np.ndarray     # (P, P) bool
    normal_img: np.ndarray | None = None  # (P, P, 3) in [0, 1]
    color_img: np.ndarray | None = None   # (P, P, 3) in [0, 1]


@dataclass(frozen=True)
class ConditioningStack:
    """6-channel condition (normals ++ textured render) plus its mean pyramid."""

    channels: np.ndarray        # (P, P, 6) float32
    pyramid: tuple              # levels P, P/2, ...; pyramid[0] is `channels`

    @property
    def resolution(self) -> int:
        return self.channels.shape[0]

    @property
    def levels(self) -> int:
        return len(self.pyramid)


def front_facing(proj_xy: np.ndarray) -> np.ndarray:
    """Front mask for (F, 3, 2) projected corner positions.

    Doubled signed area in pixel coordinates; negative means front (clockwise
    with y growing downward). Degenerate faces (area 0) count as back.
    """
    d1 = proj_xy[:, 1] - proj_xy[:, 0]
    d2 = proj_xy[:, 2] - proj_xy[:, 0]
    area2 = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    return area2 < 0.0


def _edge_accepts_zero(dx: float, dy: float) -> bool:
    # top-left rule for clockwise-in-pixel-space triangles
    return dy > 0.0 or (dy == 0.0 and dx < 0.0)


def _raster_rows(proj: np.ndarray, faces_xy: np.ndarray, face_ids: np.ndarray,
                 res: int, row_lo: int, row_hi: int):
    """Z-buffered scan of one horizontal band. Returns per-band buffers."""
    h = row_hi - row_lo
    depth = np.full((h, res), np.inf)
    tri_id = np.full((h, res), EMPTY, dtype=np.int32)
    bary = np.zeros((h, res, 3))
    py = (np.arange(row_lo, row_hi) + 0.5)[:, None]
    px = (np.arange(res) + 0.5)[None, :]

    for f, fid in enumerate(face_ids):
        xy = faces_xy[f]
        zs = proj[f, :, 2]
        xmin, ymin = xy.min(axis=0)
        xmax, ymax = xy.max(axis=0)
        c0 = max(int(np.ceil(xmin - 0.5)), 0)
        c1 = min(int(np.floor(xmax - 0.5)), res - 1)
        r0 = max(int(np.ceil(ymin - 0.5)), row_lo)
        r1 = min(int(np.floor(ymax - 0.5)), row_hi - 1)
        if c0 > c1 or r0 > r1:
            continue
        sy = py[r0 - row_lo:r1 - row_lo + 1]
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
        if not inside.any():
            continue
        # barycentric of corner i is the edge function opposite it
        b0 = edges[1] / denom
        b1 = edges[2] / denom
        b2 = edges[0] / denom
        z = b0 * zs[0] + b1 * zs[1] + b2 * zs[2]

        view_d = depth[r0 - row_lo:r1 - row_lo + 1, c0:c1 + 1]
        upd = inside & (z < view_d)
        if not upd.any():
            continue
        view_d[upd] = z[upd]
        tri_id[r0 - row_lo:r1 - row_lo + 1, c0:c1 + 1][upd] = fid
        bview = bary[r0 - row_lo:r1 - row_lo + 1, c0:c1 + 1]
        bview[upd] = np.stack([b0[upd], b1[upd], b2[upd]], axis=-1)

    return depth, tri_id, bary


def rasterize(mesh: Mesh, cam: CameraParams, image: ImageSpec,
              uv_coords: np.ndarray | None = None, workers: int = 1) -> RenderBuffers:
    """Z-buffered rasterization of front faces into per-pixel fragments.

    ``uv_coords`` is the per-face-corner (F, 3, 2) table from the assets; when
    given, the uv buffer is interpolated for covered pixels. ``workers``
    splits the image into row bands; the result is independent of it.
    """
    if mesh.faces.shape[0] == 0:
        raise ValidationError("cannot rasterize an empty mesh")
    res = image.resolution
    proj = project(mesh.vertices, cam)[mesh.faces]  # (F, 3, 3)
    keep = front_facing(proj[:, :, :2])
    face_ids = np.nonzero(keep)[0].astype(np.int32)
    faces_xy = proj[keep, :, :2]
    proj_kept = proj[keep]

    if workers <= 1 or res < 2 * workers:
        bands = [(0, res)]
    else:
        edges_r = np.linspace(0, res, workers + 1, dtype=int)
        bands = [(int(edges_r[i]), int(edges_r[i + 1])) for i in range(workers)]

    def run(band):
        return _raster_rows(proj_kept, faces_xy, face_ids, res, band[0], band[1])

    if len(bands) == 1:
        results = [run(bands[0])]
    else:
        with ThreadPoolExecutor(max_workers=len(bands)) as pool:
            results = list(pool.map(run, bands))

    depth = np.concatenate([r[0] for r in results], axis=0)
    tri_id = np.concatenate([r[1] for r in results], axis=0)
    bary = np.concatenate([r[2] for r in results], axis=0)
    mask = tri_id != EMPTY

    uv = np.zeros((res, res, 2))
    if uv_coords is not None and mask.any():
        fids = tri_id[mask]
        uv[mask] = np.einsum("pc,pcu->pu", bary[mask], uv_coords[fids].astype(np.float64))

    return RenderBuffers(depth=depth, tri_id=tri_id, bary=bary, uv=uv, mask=mask)


def interpolate_vertex_attribute(buffers: RenderBuffers, faces: np.ndarray,
                                 attr: np.ndarray) -> np.ndarray:
    """Barycentric interpolation of a per-vertex attribute over masked pixels."""
    out = np.zeros(buffers.mask.shape + (attr.shape[1],))
    m = buffers.mask
    if m.any():
        corner_vals = attr[faces[buffers.tri_id[m]]]            # (N, 3, C)
        out[m] = np.einsum("pc,pck->pk", buffers.bary[m], corner_vals)
    return out


def encode_normals(n: np.ndarray) -> np.ndarray:
    return (n + 1.0) / 2.0


def decode_normals(img: np.ndarray) -> np.ndarray:
    return 2.0 * img - 1.0


def render_normals(buffers: RenderBuffers, mesh: Mesh,
                   normals: np.ndarray | None = None) -> np.ndarray:
    """Color-coded camera-space normals: rgb = (n + 1) / 2, grey background.

    The orthographic camera is axis-aligned, so camera space equals world
    space here.
    """
    if normals is None:
        normals = vertex_normals(mesh)
    interp = interpolate_vertex_attribute(buffers, mesh.faces, normals)
    m = buffers.mask
    lengths = np.linalg.norm(interp[m], axis=-1)
    safe = np.where(lengths > 1e-12, lengths, 1.0)[:, None]
    unit = interp[m] / safe
    unit[lengths <= 1e-12] = (0.0, 0.0, 1.0)

    img = np.full(m.shape + (3,), NORMAL_BACKGROUND)
    img[m] = encode_normals(unit)
    buffers.normal_img = img
    return img


def bilinear_sample(values: np.ndarray, gx: np.ndarray, gy: np.ndarray) -> np.ndarray:
    """Bilinear lookup with value nodes at integer (gx, gy) and clamped borders.

    ``values`` is (H, W, C); gy indexes rows, gx columns. A sample exactly at
    integer coordinates returns that node's value exactly.
    """
    h, w = values.shape[:2]
    x0 = np.floor(gx)
    y0 = np.floor(gy)
    fx = (gx - x0)[..., None]
    fy = (gy - y0)[..., None]
    xi0 = np.clip(x0.astype(np.int64), 0, w - 1)
    xi1 = np.clip(x0.astype(np.int64) + 1, 0, w - 1)
    yi0 = np.clip(y0.astype(np.int64), 0, h - 1)
    yi1 = np.clip(y0.astype(np.int64) + 1, 0, h - 1)
    top = values[yi0, xi0] * (1.0 - fx) + values[yi0, xi1] * fx
    bot = values[yi1, xi0] * (1.0 - fx) + values[yi1, xi1] * fx
    return top * (1.0 - fy) + bot * fy


def sample_texture(tex: np.ndarray, uv: np.ndarray) -> np.ndarray:
    """Sample a (T, T, C) texture at (..., 2) UV positions; texel (r, c) covers
    u in [c/T, (c+1)/T) and v in [r/T, (r+1)/T)."""
    t = tex.shape[0]
    gx = uv[..., 0] * t - 0.5
    gy = uv[..., 1] * t - 0.5
    return bilinear_sample(tex, gx, gy)


def render_textured(buffers: RenderBuffers, mesh: Mesh, albedo: TextureMap,
                    light: LightingParams, normals: np.ndarray | None = None) -> np.ndarray:
    """SH-lit albedo render: bilinear albedo at interpolated UV, shaded with the
    interpolated unit normal; black background."""
    if normals is None:
        normals = vertex_normals(mesh)
    m = buffers.mask
    img = np.zeros(m.shape + (3,))
    if m.any():
        interp = interpolate_vertex_attribute(buffers, mesh.faces, normals)[m]
        lengths = np.linalg.norm(interp, axis=-1)
        safe = np.where(lengths > 1e-12, lengths, 1.0)[:, None]
        unit = interp / safe
        unit[lengths <= 1e-12] = (0.0, 0.0, 1.0)
        albedo_px = sample_texture(albedo.texels.astype(np.float64), buffers.uv[m])
        img[m] = np.clip(albedo_px * irradiance(unit, light), 0.0, 1.0)
    buffers.color_img = img
    return img


def default_levels(resolution: int) -> int:
    """Pyramid levels from full resolution down to 4x4."""
    return int(np.log2(resolution)) - 1


def conditioning_stack(normal_img: np.ndarray, color_img: np.ndarray,
                       levels: int | None = None) -> ConditioningStack:
    """Concatenate the two renderings channelwise and build the mean pyramid."""
    if normal_img.shape != color_img.shape:
        raise ValidationError(
            f"resolution mismatch: {normal_img.shape} vs {color_img.shape}")
    res = normal_img.shape[0]
    if levels is None:
        levels = default_levels(res)
    if levels < 1 or res % (1 << (levels - 1)) != 0:
        raise ValidationError(f"cannot build {levels} pyramid levels from {res}x{res}")

    full = np.concatenate([normal_img, color_img], axis=-1)
    pyramid = [full]
    for _ in range(levels - 1):
        prev = pyramid[-1]
        side = prev.shape[0] // 2
        pyramid.append(prev.reshape(side, 2, side, 2, 6).mean(axis=(1, 3)))
    pyramid = tuple(level.astype(np.float32) for level in pyramid)
    return ConditioningStack(channels=pyramid[0], pyramid=pyramid)


def mask_from_stack(stack_channels: np.ndarray) -> np.ndarray:
    """Recover the coverage mask from full-resolution stack channels: the
    normal encoding equals the 0.5 background exactly only off the surface."""
    return ~np.all(stack_channels[..., 0:3] == np.float32(NORMAL_BACKGROUND), axis=-1)


def save_stack(stack: ConditioningStack, path) -> None:
    header = {
        "format_version": STACK_FORMAT_VERSION,
        "resolution": stack.resolution,
        "levels": stack.levels,
        "channel_names": list(CHANNEL_NAMES),
    }
    with open(path, "wb") as fh:
        fh.write((json.dumps(header, sort_keys=True) + "\n").encode("ascii"))
        for level in stack.pyramid:
            fh.write(np.ascontiguousarray(level, dtype="<f4").tobytes())


def load_stack(path) -> ConditioningStack:
    with open(path, "rb") as fh:
        header_line = fh.readline()
        try:
            header = json.loads(header_line)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"bad stack header: {exc}") from exc
        res = int(header["resolution"])
        levels = int(header["levels"])
        pyramid = []
        side = res
        for _ in range(levels):
            raw = fh.read(side * side * 6 * 4)
            if len(raw) != side * side * 6 * 4:
                raise ValidationError("truncated conditioning stack payload")
            pyramid.append(np.frombuffer(raw, dtype="<f4").reshape(side, side, 6))
            side //= 2
        if fh.read(1):
            raise ValidationError("trailing bytes after conditioning stack payload")
    return ConditioningStack(channels=pyramid[0], pyramid=tuple(pyramid))


def render_condition(assets, mesh: Mesh, cam: CameraParams, image: ImageSpec,
                     albedo: TextureMap, light: LightingParams,
                     levels: int | None = None, workers: int = 1):
    """Full condition pass: fragments, both renderings, and the stack."""
    buffers = rasterize(mesh, cam, image, uv_coords=assets.uv_coords, workers=workers)
    normals = vertex_normals(mesh)
    normal_img = render_normals(buffers, mesh, normals=normals)
    color_img = render_textured(buffers, mesh, albedo, light, normals=normals)
    return buffers, conditioning_stack(normal_img, color_img, levels=levels)
