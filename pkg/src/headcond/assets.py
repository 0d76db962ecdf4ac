"""Statistical head-model assets: container, binary file format, and a
deterministic synthetic generator that stands in for licensed scan data.

All arrays are kept in float32/int32 so that a save/load round trip is
bitwise exact; numerical code upcasts to float64 where it matters.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import AssetFormatError, ValidationError

MAGIC = b"FCND"
FORMAT_VERSION = 1

N_SHAPE = 100
N_EXPRESSION = 50
N_APPEARANCE = 50

# (field name, dims validated at load; -1 entries are free)
_FIELD_ORDER = (
    "template_vertices",
    "faces",
    "shape_basis",
    "expression_basis",
    "jaw_weights",
    "jaw_joint",
    "eye_vertex_ids",
    "uv_coords",
    "albedo_mean",
    "albedo_basis",
)
_INT_FIELDS = frozenset({"faces", "eye_vertex_ids"})


@dataclass(frozen=True)
class HeadModelAssets:
    """Everything needed to evaluate and texture the parametric head model.

    template_vertices : (V, 3) float32, meters
    faces             : (F, 3) int32 vertex indices
    shape_basis       : (V, 3, 100) float32 blendshape displacements
    expression_basis  : (V, 3, 50) float32
    jaw_weights       : (V,) float32 in [0, 1], blend factor for the jaw joint
    jaw_joint         : (3,) float32, meters
    eye_vertex_ids    : (2,) int32, (left, right) eye-center vertices
                        (left means x < 0 on the template)
    uv_coords         : (F, 3, 2) float32 per-face-corner (u, v) in [0, 1]^2
    albedo_mean       : (T, T, 3) float32 in [0, 1]
    albedo_basis      : (T, T, 3, 50) float32
    """

    template_vertices: np.ndarray
    faces: np.ndarray
    shape_basis: np.ndarray
    expression_basis: np.ndarray
    jaw_weights: np.ndarray
    jaw_joint: np.ndarray
    eye_vertex_ids: np.ndarray
    uv_coords: np.ndarray
    albedo_mean: np.ndarray
    albedo_basis: np.ndarray

    @property
    def num_vertices(self) -> int:
        return self.template_vertices.shape[0]

    @property
    def num_faces(self) -> int:
        return self.faces.shape[0]

    @property
    def texture_resolution(self) -> int:
        return self.albedo_mean.shape[0]


def validate_assets(assets: HeadModelAssets) -> None:
    """Raise ValidationError naming the offending field on any broken invariant."""
    v = assets.template_vertices
    if v.ndim != 2 or v.shape[1] != 3:
        raise ValidationError(f"template_vertices: expected (V, 3), got {v.shape}")
    nv = v.shape[0]
    f = assets.faces
    if f.ndim != 2 or f.shape[1] != 3:
        raise ValidationError(f"faces: expected (F, 3), got {f.shape}")
    nf = f.shape[0]

    def check_shape(name, arr, shape):
        if arr.shape != shape:
            raise ValidationError(f"{name}: expected shape {shape}, got {arr.shape}")

    check_shape("shape_basis", assets.shape_basis, (nv, 3, N_SHAPE))
    check_shape("expression_basis", assets.expression_basis, (nv, 3, N_EXPRESSION))
    check_shape("jaw_weights", assets.jaw_weights, (nv,))
    check_shape("jaw_joint", assets.jaw_joint, (3,))
    check_shape("eye_vertex_ids", assets.eye_vertex_ids, (2,))
    check_shape("uv_coords", assets.uv_coords, (nf, 3, 2))

    t = assets.albedo_mean
    if t.ndim != 3 or t.shape[0] != t.shape[1] or t.shape[2] != 3:
        raise ValidationError(f"albedo_mean: expected (T, T, 3), got {t.shape}")
    tex = t.shape[0]
    if tex < 1 or (tex & (tex - 1)) != 0:
        raise ValidationError(f"albedo_mean: texture side must be a power of two, got {tex}")
    check_shape("albedo_basis", assets.albedo_basis, (tex, tex, 3, N_APPEARANCE))

    for name in _FIELD_ORDER:
        arr = getattr(assets, name)
        if name in _INT_FIELDS:
            continue
        if not np.all(np.isfinite(arr)):
            raise ValidationError(f"{name}: contains non-finite values")

    if f.size and (f.min() < 0 or f.max() >= nv):
        raise ValidationError(f"faces: vertex index out of range [0, {nv})")
    e = assets.eye_vertex_ids
    if e.min() < 0 or e.max() >= nv:
        raise ValidationError(f"eye_vertex_ids: vertex index out of range [0, {nv})")
    if e[0] == e[1]:
        raise ValidationError("eye_vertex_ids: left and right eye must be distinct")
    w = assets.jaw_weights
    if w.min() < 0.0 or w.max() > 1.0:
        raise ValidationError(f"jaw_weights: values must lie in [0, 1], got range "
                              f"[{w.min()}, {w.max()}]")
    uv = assets.uv_coords
    if uv.min() < 0.0 or uv.max() > 1.0:
        raise ValidationError("uv_coords: values must lie in [0, 1]^2")
    if t.min() < 0.0 or t.max() > 1.0:
        raise ValidationError("albedo_mean: values must lie in [0, 1]")


# ---------------------------------------------------------------------------
# Binary format: magic, u32 version, then per field (in _FIELD_ORDER):
# u32 ndim, ndim x u32 sizes, C-order little-endian float32 payload.
# Index fields are stored as float32 too (exact below 2^24); see docs/formats.md.
# ---------------------------------------------------------------------------

def asset_bytes(assets: HeadModelAssets) -> bytes:
    """Serialize to the on-disk format (also the canonical hashing form)."""
    validate_assets(assets)
    parts = [MAGIC, struct.pack("<I", FORMAT_VERSION)]
    for name in _FIELD_ORDER:
        arr = np.ascontiguousarray(getattr(assets, name), dtype=np.float32)
        parts.append(struct.pack("<I", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.astype("<f4").tobytes())
    return b"".join(parts)


def save_assets(assets: HeadModelAssets, path) -> None:
    with open(path, "wb") as fh:
        fh.write(asset_bytes(assets))


def load_assets(path) -> HeadModelAssets:
    """Load and validate an asset file. Loading is byte-deterministic."""
    with open(path, "rb") as fh:
        data = fh.read()
    pos = 0

    def take(n, what):
        nonlocal pos
        if pos + n > len(data):
            raise AssetFormatError(f"truncated file while reading {what}")
        out = data[pos:pos + n]
        pos += n
        return out

    if take(4, "magic") != MAGIC:
        raise AssetFormatError("bad magic, not an asset file")
    (version,) = struct.unpack("<I", take(4, "version"))
    if version != FORMAT_VERSION:
        raise AssetFormatError(f"unsupported format version {version}")

    arrays = {}
    for name in _FIELD_ORDER:
        (ndim,) = struct.unpack("<I", take(4, f"{name} header"))
        if ndim > 8:
            raise AssetFormatError(f"{name}: implausible ndim {ndim}")
        shape = struct.unpack(f"<{ndim}I", take(4 * ndim, f"{name} dimensions"))
        count = int(np.prod(shape, dtype=np.int64)) if ndim else 1
        raw = take(4 * count, f"{name} payload")
        arr = np.frombuffer(raw, dtype="<f4").reshape(shape).astype(np.float32)
        if name in _INT_FIELDS:
            as_int = arr.astype(np.int32)
            if not np.array_equal(as_int.astype(np.float32), arr):
                raise AssetFormatError(f"{name}: non-integral index values")
            arr = as_int
        arrays[name] = arr
    if pos != len(data):
        raise AssetFormatError(f"{len(data) - pos} trailing bytes after last field")

    assets = HeadModelAssets(**arrays)
    validate_assets(assets)
    return assets


# ---------------------------------------------------------------------------
# Synthetic assets. A closed lat-long ellipsoid plays the head; blendshape
# bases are smooth low-frequency fields with geometrically decaying column
# norms to mimic PCA ordering.
# ---------------------------------------------------------------------------

def _smooth_surface_field(rng, unit_pts: np.ndarray, n_waves: int = 4) -> np.ndarray:
    """Low-pass (V, 3) displacement field: a few low-frequency sinusoids of
    the surface position."""
    freq = rng.normal(0.0, 2.2, size=(n_waves, 3))
    phase = rng.uniform(0.0, 2.0 * np.pi, size=n_waves)
    amp = rng.normal(0.0, 1.0, size=(n_waves, 3))
    field = np.zeros((unit_pts.shape[0], 3))
    for m in range(n_waves):
        field += np.sin(unit_pts @ freq[m] + phase[m])[:, None] * amp[m]
    return field


def _smooth_texture_field(rng, uu: np.ndarray, vv: np.ndarray, n_waves: int = 4) -> np.ndarray:
    """Low-frequency (T, T, 3) field over the texture square.

    Integer u-frequencies keep the field continuous across the u seam, and the
    u-variation is tapered to zero toward v = 0 and v = 1 where the lat-long
    unwrap collapses a whole texel row onto one surface point, matching how a
    real unwrapped head texture behaves there.
    """
    field = np.zeros(uu.shape + (3,))
    for _ in range(n_waves):
        a = int(rng.integers(-2, 3))
        b = rng.uniform(-2.0, 2.0)
        phase = rng.uniform(0.0, 2.0 * np.pi)
        amp = rng.normal(0.0, 1.0, size=3)
        field += np.sin(2.0 * np.pi * (a * uu + b * vv) + phase)[..., None] * amp
    row_mean = field.mean(axis=1, keepdims=True)
    taper = np.sin(np.pi * vv)[..., None]
    return row_mean + (field - row_mean) * taper


def _decaying_basis(fields, leading_rms: float, ratio: float) -> np.ndarray:
    """Stack per-column fields normalized so column norms decay geometrically."""
    n_elem = fields[0].size
    cols = []
    for k, field in enumerate(fields):
        target = leading_rms * (ratio ** k) * np.sqrt(n_elem)
        norm = np.linalg.norm(field)
        cols.append(field * (target / norm))
    return np.stack(cols, axis=-1)


def gen_synthetic_assets(seed: int, v_target: int = 1000, tex_res: int = 64) -> HeadModelAssets:
    """Deterministic stand-in head model.

    The template is a closed lat-long ellipsoid with roughly ``v_target``
    vertices, head-sized in meters, facing +z with +y up. ``seed`` fully
    determines every array; two calls with equal arguments are bitwise equal.
    """
    if v_target < 100:
        raise ValidationError(f"v_target too small to triangulate a closed head: {v_target} < 100")
    if tex_res < 32 or (tex_res & (tex_res - 1)) != 0:
        raise ValidationError(f"tex_res must be a power of two >= 32, got {tex_res}")

    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))

    rows = max(6, round(np.sqrt((v_target - 2) / 2.0)))
    cols = 2 * rows  # even, so the longitude grid is mirror-symmetric in x
    nv = rows * cols + 2

    radii = np.array([0.075, 0.105, 0.090]) * (1.0 + 0.06 * rng.uniform(-1.0, 1.0, size=3))

    theta = np.pi * np.arange(1, rows + 1) / (rows + 1)   # latitude from +y pole
    phi = 2.0 * np.pi * np.arange(cols) / cols            # longitude from +z (face front)
    tt, pp = np.meshgrid(theta, phi, indexing="ij")
    unit_grid = np.stack(
        [np.sin(tt) * np.sin(pp), np.cos(tt), np.sin(tt) * np.cos(pp)], axis=-1
    ).reshape(-1, 3)
    unit = np.concatenate([[[0.0, 1.0, 0.0]], unit_grid, [[0.0, -1.0, 0.0]]], axis=0)
    verts = unit * radii

    # per-vertex (theta, phi) for UV assignment; poles carry theta only
    vert_theta = np.concatenate([[0.0], tt.ravel(), [np.pi]])
    vert_phi = np.concatenate([[0.0], pp.ravel(), [0.0]])
    north, south = 0, nv - 1

    def g(i, j):  # grid vertex index, i in [1, rows], j wraps
        return 1 + (i - 1) * cols + (j % cols)

    faces = []
    for j in range(cols):
        faces.append((north, g(1, j), g(1, j + 1)))
    for i in range(1, rows):
        for j in range(cols):
            faces.append((g(i, j), g(i + 1, j), g(i + 1, j + 1)))
            faces.append((g(i, j), g(i + 1, j + 1), g(i, j + 1)))
    for j in range(cols):
        faces.append((south, g(rows, j + 1), g(rows, j)))
    faces = np.array(faces, dtype=np.int32)

    # enforce outward CCW winding (ellipsoid is star-shaped around the origin)
    a, b, c = verts[faces[:, 0]], verts[faces[:, 1]], verts[faces[:, 2]]
    outward = np.einsum("ij,ij->i", np.cross(b - a, c - a), (a + b + c) / 3.0)
    flip = outward < 0
    faces[flip] = faces[flip][:, [0, 2, 1]]

    # per-corner UVs: u = phi / 2pi with seam duplicated at u = 1, v = theta / pi
    u = vert_phi[faces] / (2.0 * np.pi)
    vcoord = vert_theta[faces] / np.pi
    is_pole = (faces == north) | (faces == south)
    for k in range(faces.shape[0]):
        cu = u[k]
        live = ~is_pole[k]
        if live.sum() >= 2 and cu[live].max() - cu[live].min() > 0.5:
            cu[live & (cu < 0.5)] += 1.0  # seam face: the j = 0 corner sits at u = 1
        if is_pole[k].any():
            cu[is_pole[k]] = cu[live].mean()
    uv_coords = np.stack([u, vcoord], axis=-1)

    shape_fields = [_smooth_surface_field(rng, unit) for _ in range(N_SHAPE)]
    shape_basis = _decaying_basis(shape_fields, leading_rms=0.004, ratio=0.96)
    expr_fields = [_smooth_surface_field(rng, unit) for _ in range(N_EXPRESSION)]
    expression_basis = _decaying_basis(expr_fields, leading_rms=0.003, ratio=0.94)

    jaw_joint = np.array([0.0, -0.35 * radii[1], 0.15 * radii[2]])
    t = np.clip((jaw_joint[1] - verts[:, 1]) / (0.45 * radii[1]), 0.0, 1.0)
    jaw_weights = t * t * (3.0 - 2.0 * t)  # smoothstep below the jaw plane, 0 above

    eye_dir = np.array([0.38, 0.30, 0.87])
    eye_dir /= np.linalg.norm(eye_dir)
    grid_scores = unit_grid @ eye_dir
    grid_scores[unit_grid[:, 0] <= 0] = -np.inf
    right_flat = int(np.argmax(grid_scores))
    ri, rj = divmod(right_flat, cols)
    right_id = 1 + right_flat
    left_id = g(ri + 1, (cols - rj) % cols)  # exact x-mirror on the grid
    eye_vertex_ids = np.array([left_id, right_id], dtype=np.int32)

    grid = (np.arange(tex_res) + 0.5) / tex_res
    vv_t, uu_t = np.meshgrid(grid, grid, indexing="ij")
    base = np.array([0.78, 0.60, 0.50]) + rng.uniform(-0.05, 0.05, size=3)
    albedo_mean = np.clip(base + 0.05 * _smooth_texture_field(rng, uu_t, vv_t, n_waves=3),
                          0.05, 0.95)
    albedo_fields = [_smooth_texture_field(rng, uu_t, vv_t) for _ in range(N_APPEARANCE)]
    albedo_basis = _decaying_basis(albedo_fields, leading_rms=0.05, ratio=0.93)

    assets = HeadModelAssets(
        template_vertices=verts.astype(np.float32),
        faces=faces,
        shape_basis=shape_basis.astype(np.float32),
        expression_basis=expression_basis.astype(np.float32),
        jaw_weights=jaw_weights.astype(np.float32),
        jaw_joint=jaw_joint.astype(np.float32),
        eye_vertex_ids=eye_vertex_ids,
        uv_coords=uv_coords.astype(np.float32),
        albedo_mean=albedo_mean.astype(np.float32),
        albedo_basis=albedo_basis.astype(np.float32),
    )
    validate_assets(assets)
    return assets
