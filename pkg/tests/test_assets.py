import dataclasses

import numpy as np
import pytest

from headcond import gen_synthetic_assets, load_assets, save_assets
from headcond.assets import _FIELD_ORDER, asset_bytes
from headcond.errors import AssetFormatError, ValidationError


def test_generation_deterministic():
    a = gen_synthetic_assets(seed=7, v_target=1000, tex_res=64)
    b = gen_synthetic_assets(seed=7, v_target=1000, tex_res=64)
    for name in _FIELD_ORDER:
        assert np.array_equal(getattr(a, name), getattr(b, name)), name


def test_generation_seed_sensitivity():
    a = gen_synthetic_assets(seed=7, v_target=1000, tex_res=64)
    b = gen_synthetic_assets(seed=8, v_target=1000, tex_res=64)
    assert not np.array_equal(a.template_vertices, b.template_vertices)


def test_vertex_count_near_target():
    for target in (100, 500, 1000, 3000):
        a = gen_synthetic_assets(seed=1, v_target=target)
        assert abs(a.num_vertices - target) / target < 0.2


def test_v_target_too_small():
    with pytest.raises(ValidationError):
        gen_synthetic_assets(seed=1, v_target=50)


def test_tex_res_must_be_power_of_two():
    with pytest.raises(ValidationError):
        gen_synthetic_assets(seed=1, tex_res=48)


def test_basis_norms_decay(assets):
    for name in ("shape_basis", "expression_basis", "albedo_basis"):
        basis = getattr(assets, name)
        norms = np.linalg.norm(basis.reshape(-1, basis.shape[-1]), axis=0)
        assert np.all(np.diff(norms) <= 0), f"{name} norms not decreasing"


def test_eye_vertices_mirror(assets):
    left, right = assets.template_vertices[assets.eye_vertex_ids]
    mirrored = left * np.array([-1.0, 1.0, 1.0])
    assert np.abs(mirrored - right).max() < 1e-6
    assert left[2] > 0 and right[2] > 0  # on the front
    assert assets.eye_vertex_ids[0] != assets.eye_vertex_ids[1]


def test_jaw_weights_smooth_falloff(assets):
    w = assets.jaw_weights
    assert w.min() >= 0.0 and w.max() <= 1.0
    y = assets.template_vertices[:, 1]
    assert np.all(w[y >= assets.jaw_joint[1]] == 0.0)
    assert w.max() > 0.9  # chin region fully articulated


def test_uv_in_unit_square(assets):
    assert assets.uv_coords.min() >= 0.0
    assert assets.uv_coords.max() <= 1.0


def test_mesh_is_closed(assets):
    # each undirected edge appears exactly twice
    f = assets.faces
    edges = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
    edges = np.sort(edges, axis=1)
    _, counts = np.unique(edges, axis=0, return_counts=True)
    assert np.all(counts == 2)


def test_save_load_round_trip(tmp_path, assets):
    path = tmp_path / "head.fcnd"
    save_assets(assets, path)
    loaded = load_assets(path)
    for name in _FIELD_ORDER:
        assert np.array_equal(getattr(assets, name), getattr(loaded, name)), name
        assert getattr(assets, name).dtype == getattr(loaded, name).dtype, name


def test_load_rejects_bad_jaw_weights(tmp_path, assets):
    w = assets.jaw_weights.copy()
    w[0] = 1.5
    bad = dataclasses.replace(assets, jaw_weights=w)
    with pytest.raises(ValidationError, match="jaw_weights"):
        asset_bytes(bad)


def test_load_rejects_nonfinite(tmp_path, assets):
    t = assets.template_vertices.copy()
    t[3, 1] = np.nan
    bad = dataclasses.replace(assets, template_vertices=t)
    with pytest.raises(ValidationError, match="template_vertices"):
        asset_bytes(bad)


def test_truncated_file(tmp_path, assets):
    path = tmp_path / "head.fcnd"
    save_assets(assets, path)
    data = path.read_bytes()
    (tmp_path / "cut.fcnd").write_bytes(data[: len(data) // 2])
    with pytest.raises(AssetFormatError, match="truncated"):
        load_assets(tmp_path / "cut.fcnd")


def test_bad_magic(tmp_path):
    (tmp_path / "junk.fcnd").write_bytes(b"NOPE" + b"\x00" * 64)
    with pytest.raises(AssetFormatError, match="magic"):
        load_assets(tmp_path / "junk.fcnd")


def test_trailing_bytes_rejected(tmp_path, assets):
    path = tmp_path / "head.fcnd"
    save_assets(assets, path)
    (tmp_path / "pad.fcnd").write_bytes(path.read_bytes() + b"\x00\x00")
    with pytest.raises(AssetFormatError, match="trailing"):
        load_assets(tmp_path / "pad.fcnd")


def test_dimension_mismatch_names_field(tmp_path, assets):
    bad = dataclasses.replace(assets, jaw_joint=np.zeros(4, dtype=np.float32))
    with pytest.raises(ValidationError, match="jaw_joint"):
        asset_bytes(bad)
