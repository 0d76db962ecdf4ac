import dataclasses

import numpy as np
import pytest

from headcond import (
    AppearanceParams,
    HeadParams,
    albedo_from_appearance,
    camera_from_eyes,
    consistency_loss,
    evaluate,
    rasterize,
    render_textured,
    steal_texture,
    texel_correspondences,
)
from headcond.camera import CameraParams, ImageSpec, project
from headcond.errors import ValidationError
from headcond.headmodel import Mesh, rodrigues
from headcond.raster import front_facing
from headcond.shading import LightingParams
from headcond.texsteal import (
    CorrespondenceMap,
    PartialTexture,
    _rasterize_uv_atlas,
    load_correspondences,
    load_partial_texture,
    save_correspondences,
    save_partial_texture,
)

from oracles import icosphere, ray_occluded, sphere_uv

IMAGE64 = ImageSpec(64)


class QuadAssets:
    """Duck-typed stand-in (texel_correspondences needs uv_coords only)."""

    def __init__(self, uv_coords):
        self.uv_coords = uv_coords


def full_frame_quad(z=0.0, z_other=None):
    verts = np.array([
        [0.0, 0.0, z], [1.0, 0.0, z if z_other is None else z_other],
        [1.0, 1.0, z], [0.0, 1.0, z if z_other is None else z_other],
    ])
    faces = np.array([[0, 1, 2], [0, 2, 3]], np.int32)
    uv = np.array([
        [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0]],
        [[0.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
    ], np.float32)
    return Mesh(vertices=verts, faces=faces), QuadAssets(uv)


def quad_camera():
    # unit quad -> the whole 64 px frame
    return CameraParams(scale=64.0, tx=0.0, ty=64.0)


def test_quad_correspondences_match_affine_map():
    mesh, qa = full_frame_quad()
    cam = quad_camera()
    corr = texel_correspondences(mesh, cam, qa, IMAGE64, t_s=32)
    face_id, _ = _rasterize_uv_atlas(qa.uv_coords, 32)
    covered = face_id != -1
    assert covered.all()  # the quad atlas tiles the whole unit square
    assert corr.visible.all()
    rows, cols = np.meshgrid(np.arange(32), np.arange(32), indexing="ij")
    u = (cols + 0.5) / 32.0
    v = (rows + 0.5) / 32.0
    # world (x, y) = (u, v); pixel map: x_px = 64 u, y_px = 64 - 64 v
    assert np.abs(corr.img_xy[..., 0] - 64.0 * u).max() < 1e-4
    assert np.abs(corr.img_xy[..., 1] - (64.0 - 64.0 * v)).max() < 1e-4


def test_back_facing_quad_invisible():
    mesh, qa = full_frame_quad()
    flipped = Mesh(vertices=mesh.vertices, faces=mesh.faces[:, [0, 2, 1]])
    corr = texel_correspondences(flipped, quad_camera(), qa, IMAGE64, t_s=32)
    assert corr.visible.sum() == 0


def test_out_of_frame_texels_invisible():
    mesh, qa = full_frame_quad()
    cam = CameraParams(scale=64.0, tx=-32.0, ty=64.0)  # left half off-frame
    corr = texel_correspondences(mesh, cam, qa, IMAGE64, t_s=32)
    vis = corr.visible
    assert vis[:, 17:].all()
    assert not vis[:, :15].any()


def test_occluded_quad_invisible():
    # two stacked quads with distinct UV halves; the farther one is hidden
    near, _ = full_frame_quad(z=0.5)
    far, _ = full_frame_quad(z=0.0)
    verts = np.concatenate([near.vertices, far.vertices])
    faces = np.concatenate([near.faces, far.faces + 4]).astype(np.int32)
    uv_near = np.array([
        [[0.0, 0.0], [0.5, 0.0], [0.5, 1.0]],
        [[0.0, 0.0], [0.5, 1.0], [0.0, 1.0]],
    ], np.float32)
    uv_far = np.array([
        [[0.5, 0.0], [1.0, 0.0], [1.0, 1.0]],
        [[0.5, 0.0], [1.0, 1.0], [0.5, 1.0]],
    ], np.float32)
    qa = QuadAssets(np.concatenate([uv_near, uv_far]))
    mesh = Mesh(vertices=verts, faces=faces)
    corr = texel_correspondences(mesh, quad_camera(), qa, IMAGE64, t_s=32)
    assert corr.visible[:, :16].all()        # near quad fully visible
    assert not corr.visible[:, 16:].any()    # far quad fully hidden


def test_icosphere_visibility_matches_ray_cast_oracle():
    rng = np.random.default_rng(77)
    verts0, faces = icosphere(2)
    uv = sphere_uv(verts0, faces)
    qa = QuadAssets(uv)
    verts0 = verts0 * 0.1
    cam = CameraParams(scale=250.0, tx=32.0, ty=32.0)
    t_s = 64
    disagree = 0
    covered_total = 0
    for _ in range(8):
        r = rodrigues(rng.normal(size=3))
        mesh = Mesh(vertices=verts0 @ r.T, faces=faces)
        corr = texel_correspondences(mesh, cam, qa, IMAGE64, t_s=t_s)
        face_id, bary = _rasterize_uv_atlas(uv, t_s)
        covered = face_id != -1
        fids = face_id[covered]
        pts = np.einsum("nc,nck->nk", bary[covered], mesh.vertices[faces[fids]])
        proj = project(pts, cam)
        in_frame = ((proj[:, 0] >= 0) & (proj[:, 0] < 64)
                    & (proj[:, 1] >= 0) & (proj[:, 1] < 64))
        front = front_facing(project(mesh.vertices, cam)[faces][:, :, :2])
        occluded = ray_occluded(pts, fids, mesh.vertices, faces)
        vis_oracle = in_frame & front[fids] & ~occluded
        disagree += int((vis_oracle != corr.visible[covered]).sum())
        covered_total += int(covered.sum())
    assert disagree / covered_total < 0.005, f"{disagree}/{covered_total}"


def test_steal_constant_white():
    mesh, qa = full_frame_quad()
    corr = texel_correspondences(mesh, quad_camera(), qa, IMAGE64, t_s=32)
    tex = steal_texture(np.ones((64, 64, 3)), corr)
    assert np.array_equal(tex.texels[tex.visible], np.ones_like(tex.texels[tex.visible]))
    assert np.array_equal(tex.texels[~tex.visible], np.zeros_like(tex.texels[~tex.visible]))


def test_steal_single_pixel_exact_at_node():
    mesh, qa = full_frame_quad()
    corr = texel_correspondences(mesh, quad_camera(), qa, IMAGE64, t_s=32)
    # force one texel's sample onto the center of pixel (20, 11): bilinear at a
    # node returns the node exactly
    xy = corr.img_xy.copy()
    xy[5, 7] = (11.5, 20.5)
    corr = dataclasses.replace(corr, img_xy=xy)
    img = np.zeros((64, 64, 3))
    img[20, 11] = (1.0, 0.0, 0.0)
    tex = steal_texture(img, corr)
    assert np.array_equal(tex.texels[5, 7], [1.0, 0.0, 0.0])


def test_steal_resolution_mismatch():
    mesh, qa = full_frame_quad()
    corr = texel_correspondences(mesh, quad_camera(), qa, IMAGE64, t_s=16)
    with pytest.raises(ValidationError):
        steal_texture(np.zeros((32, 32, 3)), corr)


def head_render(assets, pose, image, appearance, light, t_s):
    params = HeadParams(np.zeros(100), pose, np.zeros(50))
    mesh = evaluate(assets, params)
    cam = camera_from_eyes(mesh, assets, image)
    buf = rasterize(mesh, cam, image, uv_coords=assets.uv_coords)
    albedo = albedo_from_appearance(assets, appearance)
    img = render_textured(buf, mesh, albedo, light)
    corr = texel_correspondences(mesh, cam, assets, image, t_s=t_s)
    return steal_texture(img, corr, pixel_mask=buf.mask), albedo


def test_render_steal_round_trip(assets):
    image = ImageSpec(128)
    app = AppearanceParams(np.r_[0.8, -0.5, 0.3, np.zeros(47)])
    flat = LightingParams.constant_irradiance(1.0)
    pose = np.zeros(6)
    pose[1] = 0.2
    stolen, albedo = head_render(assets, pose, image, app, flat, t_s=64)
    vis = stolen.visible
    assert vis.sum() > 1000
    err = np.abs(stolen.texels[vis] - albedo.texels.astype(np.float64)[vis])
    assert err.mean() < 2.0 / 255.0


def test_pose_pair_round_trip_agreement(assets):
    image = ImageSpec(128)
    app = AppearanceParams(np.r_[0.5, 0.2, -0.7, np.zeros(47)])
    flat = LightingParams.constant_irradiance(1.0)
    pose_a = np.zeros(6)
    pose_a[1] = -0.3
    pose_b = np.zeros(6)
    pose_b[1] = 0.35
    pose_b[3] = 0.2
    tex_a, _ = head_render(assets, pose_a, image, app, flat, t_s=64)
    tex_b, _ = head_render(assets, pose_b, image, app, flat, t_s=64)
    both = tex_a.visible & tex_b.visible
    assert both.sum() > 500
    mae = np.abs(tex_a.texels[both] - tex_b.texels[both]).mean()
    assert mae < 4.0 / 255.0


def test_consistency_loss_identity():
    rng = np.random.default_rng(0)
    vis = rng.uniform(size=(16, 16)) < 0.6
    texels = rng.uniform(size=(16, 16, 3)) * vis[..., None]
    a = PartialTexture(texels=texels, visible=vis)
    loss, count = consistency_loss(a, a)
    assert loss == 0.0
    assert count == int(vis.sum())


def test_consistency_loss_disjoint():
    vis_a = np.zeros((8, 8), bool)
    vis_a[:4] = True
    vis_b = ~vis_a
    a = PartialTexture(texels=np.random.rand(8, 8, 3), visible=vis_a)
    b = PartialTexture(texels=np.random.rand(8, 8, 3), visible=vis_b)
    assert consistency_loss(a, b) == (0.0, 0)


def test_consistency_loss_unit_difference():
    vis = np.ones((8, 8), bool)
    a = PartialTexture(texels=np.zeros((8, 8, 3)), visible=vis)
    b = PartialTexture(texels=np.ones((8, 8, 3)), visible=vis)
    loss, count = consistency_loss(a, b)
    assert loss == 1.0
    assert count == 64


def test_consistency_loss_symmetric():
    rng = np.random.default_rng(1)
    a = PartialTexture(texels=rng.uniform(size=(16, 16, 3)),
                       visible=rng.uniform(size=(16, 16)) < 0.5)
    b = PartialTexture(texels=rng.uniform(size=(16, 16, 3)),
                       visible=rng.uniform(size=(16, 16)) < 0.5)
    assert consistency_loss(a, b) == consistency_loss(b, a)


def test_consistency_loss_quasi_triangle_bound():
    rng = np.random.default_rng(2)
    vis = np.ones((12, 12), bool)
    a, b, c = (PartialTexture(texels=rng.uniform(size=(12, 12, 3)), visible=vis)
               for _ in range(3))
    lab, _ = consistency_loss(a, b)
    lbc, _ = consistency_loss(b, c)
    lac, _ = consistency_loss(a, c)
    assert lac <= 2.0 * (lab + lbc) + 1e-12


def test_consistency_resolution_mismatch():
    a = PartialTexture(texels=np.zeros((8, 8, 3)), visible=np.ones((8, 8), bool))
    b = PartialTexture(texels=np.zeros((16, 16, 3)), visible=np.ones((16, 16), bool))
    with pytest.raises(ValidationError):
        consistency_loss(a, b)


def test_correspondence_save_load(tmp_path):
    mesh, qa = full_frame_quad()
    corr = texel_correspondences(mesh, quad_camera(), qa, IMAGE64, t_s=32)
    path = tmp_path / "map.corr"
    save_correspondences(corr, path)
    loaded = load_correspondences(path)
    assert loaded.image_resolution == corr.image_resolution
    assert np.array_equal(loaded.visible, corr.visible)
    assert np.abs(loaded.img_xy - corr.img_xy).max() < 1e-4  # f32 on disk


def test_partial_texture_save_load(tmp_path):
    rng = np.random.default_rng(3)
    vis = rng.uniform(size=(32, 32)) < 0.5
    tex = PartialTexture(texels=(rng.uniform(size=(32, 32, 3)) * vis[..., None]).astype(np.float32).astype(np.float64),
                         visible=vis)
    path = tmp_path / "tex.ptex"
    save_partial_texture(tex, path)
    loaded = load_partial_texture(path)
    assert np.array_equal(loaded.visible, tex.visible)
    assert np.array_equal(loaded.texels, tex.texels)
