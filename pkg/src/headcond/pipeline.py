"""Dataset factory: parameter sampling, mini-batch parameter interpolation,
synthetic target photos, and training-ready dataset emission.

All randomness flows through numpy's counter-based Philox generator seeded via
SeedSequence, so datasets are bitwise reproducible and records can be drawn
independently in any order.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, replace

import numpy as np
from PIL import Image as PILImage

from .assets import HeadModelAssets, asset_bytes, save_assets
from .camera import CameraParams, ImageSpec, camera_from_eyes
from .errors import ValidationError
from .headmodel import HeadParams, evaluate, N_POSE
from .raster import mask_from_stack, render_condition, save_stack
from .shading import AppearanceParams, LightingParams, albedo_from_appearance
from .texsteal import texel_correspondences

MANIFEST_FORMAT_VERSION = 1
MANIFEST_NAME = "manifest.jsonl"
ASSET_FILE_NAME = "assets.fcnd"

N_LEADING = 3              # sampled principal components; the rest stay zero
YAW_RANGE = np.pi / 8      # head rotation about y, uniform in [-range, +range]
JAW_RANGE = np.pi / 12     # jaw rotation about x, uniform in [0, +range]

# The full controllable parameter vector: shape 100 + expression 50 + pose 6
# + appearance 50 + lighting 27 + camera 3.
VECTOR_DIM = 236


@dataclass(frozen=True)
class FaceParams:
    """Everything that drives one image (the style id keys nuisance content)."""

    head: HeadParams
    appearance: AppearanceParams
    lighting: LightingParams
    cam: CameraParams
    style_id: int

    def to_vector(self) -> np.ndarray:
        """Flatten to the 236-dim conditioning vector in the documented order:
        shape, expression, pose, appearance, lighting, camera."""
        return np.concatenate([
            self.head.shape,
            self.head.expression,
            self.head.pose,
            self.appearance.coeffs,
            self.lighting.flat(),
            [self.cam.scale, self.cam.tx, self.cam.ty],
        ])


@dataclass(frozen=True)
class ManifestRecord:
    record_id: int
    style_id: int
    params_file: str
    conditioning_file: str
    target_file: str
    sha256: dict


@dataclass(frozen=True)
class DatasetManifest:
    root: str
    seed: int
    asset_hash: str
    format_version: int
    resolution: int
    records: tuple


def _rng_from(seed) -> np.random.Generator:
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(seed)
    return np.random.Generator(np.random.Philox(seed))


_BANK_CACHE = None


def lighting_bank() -> np.ndarray:
    """16 fixed plausible lighting vectors, (16, 9, 3).

    Each entry is an ambient term plus a directional lobe expressed through
    bands 0-1 (with a touch of band 2), built from hard-coded constants; the
    bank ships with the package and never changes.
    """
    global _BANK_CACHE
    if _BANK_CACHE is not None:
        return _BANK_CACHE.copy()
    directions = np.array([
        [0.0, 0.2, 1.0], [0.4, 0.3, 0.9], [-0.4, 0.3, 0.9], [0.0, 0.6, 0.8],
        [0.7, 0.1, 0.7], [-0.7, 0.1, 0.7], [0.3, -0.2, 0.95], [-0.3, -0.2, 0.95],
        [0.5, 0.5, 0.7], [-0.5, 0.5, 0.7], [0.15, 0.1, 1.0], [-0.15, 0.1, 1.0],
        [0.85, 0.4, 0.5], [-0.85, 0.4, 0.5], [0.0, -0.4, 0.9], [0.0, 0.0, 1.0],
    ])
    ambients = np.array([0.80, 0.72, 0.72, 0.68, 0.62, 0.62, 0.75, 0.75,
                         0.58, 0.58, 0.84, 0.84, 0.55, 0.55, 0.70, 0.88])
    strengths = np.array([0.18, 0.30, 0.30, 0.26, 0.38, 0.38, 0.24, 0.24,
                          0.40, 0.40, 0.14, 0.14, 0.42, 0.42, 0.28, 0.10])
    tints = np.array([
        [1.00, 0.98, 0.95], [1.00, 0.95, 0.90], [0.95, 0.97, 1.00], [1.00, 1.00, 1.00],
        [1.00, 0.92, 0.85], [0.88, 0.94, 1.00], [1.00, 0.99, 0.97], [0.97, 0.99, 1.00],
        [1.00, 0.96, 0.90], [0.92, 0.96, 1.00], [1.00, 1.00, 0.98], [0.98, 1.00, 1.00],
        [1.00, 0.90, 0.82], [0.85, 0.92, 1.00], [1.00, 0.97, 0.94], [1.00, 1.00, 1.00],
    ])
    from .shading import SH_C0, SH_C1, SH_C2

    bank = np.zeros((16, 9, 3))
    for i in range(16):
        d = directions[i] / np.linalg.norm(directions[i])
        rgb = tints[i]
        bank[i, 0] = ambients[i] / SH_C0 * rgb
        # directional lobe ~ strength * max(n . d, 0), projected onto bands 1-2
        bank[i, 1] = strengths[i] * d[1] / SH_C1 * rgb
        bank[i, 2] = strengths[i] * d[2] / SH_C1 * rgb
        bank[i, 3] = strengths[i] * d[0] / SH_C1 * rgb
        bank[i, 6] = 0.10 * strengths[i] * (3.0 * d[2] ** 2 - 1.0) / (3.0 * SH_C2[2]) * rgb
    _BANK_CACHE = bank
    return bank.copy()


def sample_params(seed, assets: HeadModelAssets, image: ImageSpec,
                  style_id: int | None = None,
                  interocular_px: float | None = None,
                  center_px: tuple[float, float] | None = None) -> FaceParams:
    """Draw one parameter tuple.

    Shape, expression, and appearance: first three components standard normal,
    the rest exactly zero. Pose: yaw uniform in [-pi/8, pi/8], jaw uniform in
    [0, pi/12], all other components zero. Lighting comes from the bundled
    bank; the camera re-centers the posed eyes.
    """
    rng = _rng_from(seed)
    shape = np.zeros(assets.shape_basis.shape[2])
    shape[:N_LEADING] = rng.standard_normal(N_LEADING)
    expression = np.zeros(assets.expression_basis.shape[2])
    expression[:N_LEADING] = rng.standard_normal(N_LEADING)
    appearance = np.zeros(assets.albedo_basis.shape[3])
    appearance[:N_LEADING] = rng.standard_normal(N_LEADING)

    pose = np.zeros(N_POSE)
    pose[1] = rng.uniform(-YAW_RANGE, YAW_RANGE)  # global rotation about y
    pose[3] = rng.uniform(0.0, JAW_RANGE)         # jaw rotation about x
    head = HeadParams(shape=shape, pose=pose, expression=expression)

    light = LightingParams(lighting_bank()[int(rng.integers(16))])

    mesh = evaluate(assets, head)
    cam = camera_from_eyes(mesh, assets, image,
                           interocular_px=interocular_px, center_px=center_px)
    if style_id is None:
        style_id = int(np.asarray(seed).ravel()[0]) if not isinstance(
            seed, np.random.SeedSequence) else 0
    return FaceParams(head=head, appearance=AppearanceParams(appearance),
                      lighting=light, cam=cam, style_id=style_id)


def interpolate_params(batch: list, seed, lambdas=None, partners=None) -> list:
    """Convex-combine head parameters of random pairs within a mini batch.

    Output i blends head params of batch[i] (weight lambda) with a random
    partner (weight 1 - lambda); appearance, lighting, camera, and style_id
    are copied from batch[i]. ``lambdas`` / ``partners`` override the draws
    for testing.
    """
    n = len(batch)
    if n < 2:
        raise ValidationError(f"interpolation needs a batch of >= 2, got {n}")
    rng = _rng_from(seed)
    if lambdas is None:
        lambdas = rng.uniform(0.0, 1.0, size=n)
    if partners is None:
        partners = np.array([rng.integers(n - 1) for _ in range(n)])
        partners = np.where(partners >= np.arange(n), partners + 1, partners)

    out = []
    for i in range(n):
        lam = float(lambdas[i])
        p_i, p_j = batch[i], batch[int(partners[i])]
        head = HeadParams(
            shape=lam * p_i.head.shape + (1.0 - lam) * p_j.head.shape,
            pose=lam * p_i.head.pose + (1.0 - lam) * p_j.head.pose,
            expression=lam * p_i.head.expression + (1.0 - lam) * p_j.head.expression,
        )
        out.append(replace(p_i, head=head))
    return out


# ---------------------------------------------------------------------------
# Parameter (de)serialization
# ---------------------------------------------------------------------------

def params_to_dict(fp: FaceParams, resolution: int) -> dict:
    return {
        "style_id": fp.style_id,
        "resolution": resolution,
        "head": {
            "shape": fp.head.shape.tolist(),
            "pose": fp.head.pose.tolist(),
            "expression": fp.head.expression.tolist(),
        },
        "appearance": fp.appearance.coeffs.tolist(),
        "lighting": fp.lighting.sh_coeffs.tolist(),
        "camera": {"scale": fp.cam.scale, "tx": fp.cam.tx, "ty": fp.cam.ty},
    }


def params_from_dict(d: dict) -> tuple[FaceParams, int]:
    head = HeadParams(shape=np.array(d["head"]["shape"]),
                      pose=np.array(d["head"]["pose"]),
                      expression=np.array(d["head"]["expression"]))
    fp = FaceParams(
        head=head,
        appearance=AppearanceParams(np.array(d["appearance"])),
        lighting=LightingParams(np.array(d["lighting"])),
        cam=CameraParams(scale=float(d["camera"]["scale"]),
                         tx=float(d["camera"]["tx"]), ty=float(d["camera"]["ty"])),
        style_id=int(d["style_id"]),
    )
    return fp, int(d["resolution"])


def save_params(fp: FaceParams, resolution: int, path) -> None:
    with open(path, "w") as fh:
        json.dump(params_to_dict(fp, resolution), fh, sort_keys=True)
        fh.write("\n")


def load_params(path) -> tuple[FaceParams, int]:
    with open(path) as fh:
        return params_from_dict(json.load(fh))


# ---------------------------------------------------------------------------
# Synthetic target photos: the condition render composited over style-keyed
# nuisance content (background, hair band, shoulders) that the condition does
# not explain, so a trainer's per-image embedding has signal to absorb.
# ---------------------------------------------------------------------------

def _paint_nuisance(style_id: int, res: int) -> np.ndarray:
    rng = _rng_from(np.random.SeedSequence([0x6E75, int(style_id)]))
    yy, xx = np.meshgrid(np.arange(res) + 0.5, np.arange(res) + 0.5, indexing="ij")

    c0 = rng.uniform(0.1, 0.9, size=3)
    c1 = rng.uniform(0.1, 0.9, size=3)
    t = (yy / res)[..., None]
    img = c0 * (1.0 - t) + c1 * t
    for _ in range(2):  # soft blobs
        cx, cy = rng.uniform(0.0, res, size=2)
        rad = rng.uniform(0.15, 0.4) * res
        col = rng.uniform(0.0, 1.0, size=3)
        w = np.exp(-(((xx - cx) ** 2 + (yy - cy) ** 2) / (2.0 * rad * rad)))[..., None]
        img = img * (1.0 - 0.6 * w) + col * 0.6 * w

    # hair band: elliptical ring around the upper head region
    hb_col = rng.uniform(0.0, 0.7, size=3)
    cx, cy = 0.5 * res, rng.uniform(0.22, 0.3) * res
    ax, ay = rng.uniform(0.3, 0.38) * res, rng.uniform(0.22, 0.3) * res
    r2 = ((xx - cx) / ax) ** 2 + ((yy - cy) / ay) ** 2
    band = (r2 > 0.55) & (r2 < 1.0) & (yy < cy + 0.2 * res)
    img[band] = hb_col

    # shoulders: a rounded band across the bottom
    sh_col = rng.uniform(0.0, 0.9, size=3)
    top = rng.uniform(0.78, 0.88) * res
    curve = top + 0.08 * res * np.cos((xx / res - 0.5) * np.pi)
    img[yy > curve] = sh_col

    return np.clip(img, 0.0, 1.0)


def synth_target(color_img: np.ndarray, mask: np.ndarray, style_id: int) -> np.ndarray:
    """Composite the textured render over the nuisance painting; inside the
    face mask the target equals the conditioning's textured channels exactly."""
    img = _paint_nuisance(style_id, color_img.shape[0])
    img[mask] = color_img[mask]
    return img


def to_uint8(img: np.ndarray) -> np.ndarray:
    return np.round(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def asset_hash(assets: HeadModelAssets) -> str:
    return hashlib.sha256(asset_bytes(assets)).hexdigest()


def make_dataset(assets: HeadModelAssets, n: int, out_dir, seed: int,
                 image: ImageSpec, levels: int | None = None,
                 force: bool = False) -> DatasetManifest:
    """Emit n records: params JSON, conditioning stack, target PNG, manifest.

    Bitwise deterministic in ``seed``; per-record randomness comes from
    spawned child seeds so records are independent of generation order.
    """
    out_dir = os.fspath(out_dir)
    rec_dir = os.path.join(out_dir, "records")
    if os.path.exists(out_dir) and os.listdir(out_dir) and not force:
        raise FileExistsError(f"output directory {out_dir!r} is not empty (use force)")
    os.makedirs(rec_dir, exist_ok=True)

    asset_path = os.path.join(out_dir, ASSET_FILE_NAME)
    save_assets(assets, asset_path)
    ahash = _sha256(asset_path)

    children = np.random.SeedSequence(seed).spawn(n)
    records = []
    for i in range(n):
        fp = sample_params(children[i], assets, image, style_id=i)
        mesh = evaluate(assets, fp.head)
        albedo = albedo_from_appearance(assets, fp.appearance)
        buffers, stack = render_condition(assets, mesh, fp.cam, image, albedo,
                                          fp.lighting, levels=levels)
        target = synth_target(buffers.color_img, buffers.mask, fp.style_id)

        stem = f"{i:06d}"
        params_rel = f"records/{stem}.params.json"
        stack_rel = f"records/{stem}.cstk"
        target_rel = f"records/{stem}.png"
        save_params(fp, image.resolution, os.path.join(out_dir, params_rel))
        save_stack(stack, os.path.join(out_dir, stack_rel))
        PILImage.fromarray(to_uint8(target)).save(os.path.join(out_dir, target_rel))

        records.append(ManifestRecord(
            record_id=i, style_id=fp.style_id,
            params_file=params_rel, conditioning_file=stack_rel, target_file=target_rel,
            sha256={
                "params": _sha256(os.path.join(out_dir, params_rel)),
                "conditioning": _sha256(os.path.join(out_dir, stack_rel)),
                "target": _sha256(os.path.join(out_dir, target_rel)),
            },
        ))

    manifest = DatasetManifest(root=out_dir, seed=seed, asset_hash=ahash,
                               format_version=MANIFEST_FORMAT_VERSION,
                               resolution=image.resolution, records=tuple(records))
    with open(os.path.join(out_dir, MANIFEST_NAME), "w") as fh:
        fh.write(json.dumps({
            "format_version": MANIFEST_FORMAT_VERSION, "seed": seed,
            "asset_hash": ahash, "resolution": image.resolution,
            "record_count": n, "asset_file": ASSET_FILE_NAME,
        }, sort_keys=True) + "\n")
        for rec in records:
            fh.write(json.dumps({
                "record_id": rec.record_id, "style_id": rec.style_id,
                "params": rec.params_file, "conditioning": rec.conditioning_file,
                "target": rec.target_file, "sha256": rec.sha256,
            }, sort_keys=True) + "\n")
    return manifest


def load_manifest(root) -> DatasetManifest:
    root = os.fspath(root)
    path = os.path.join(root, MANIFEST_NAME)
    with open(path) as fh:
        header = json.loads(fh.readline())
        records = []
        for line in fh:
            d = json.loads(line)
            records.append(ManifestRecord(
                record_id=d["record_id"], style_id=d["style_id"],
                params_file=d["params"], conditioning_file=d["conditioning"],
                target_file=d["target"], sha256=d["sha256"],
            ))
    if len(records) != header["record_count"]:
        raise ValidationError(
            f"manifest lists {len(records)} records, header says {header['record_count']}")
    return DatasetManifest(root=root, seed=header["seed"], asset_hash=header["asset_hash"],
                           format_version=header["format_version"],
                           resolution=header["resolution"], records=tuple(records))


def validate_manifest(manifest: DatasetManifest, check_hashes: bool = True) -> None:
    style_ids = [r.style_id for r in manifest.records]
    if len(set(style_ids)) != len(style_ids):
        raise ValidationError("style_id values are not unique across records")
    for rec in manifest.records:
        for key, rel in (("params", rec.params_file),
                         ("conditioning", rec.conditioning_file),
                         ("target", rec.target_file)):
            path = os.path.join(manifest.root, rel)
            if not os.path.exists(path):
                raise ValidationError(f"record {rec.record_id}: missing file {rel}")
            if check_hashes and _sha256(path) != rec.sha256[key]:
                raise ValidationError(f"record {rec.record_id}: hash mismatch for {rel}")


def record_correspondences(assets: HeadModelAssets, fp: FaceParams, resolution: int,
                           t_s: int = 128):
    """Correspondence map for one record's parameters (trainer-facing helper)."""
    mesh = evaluate(assets, fp.head)
    return texel_correspondences(mesh, fp.cam, assets, ImageSpec(resolution), t_s=t_s)
