import math

import numpy as np
import pytest

from headcond import (
    AppearanceParams,
    LightingParams,
    albedo_from_appearance,
    sh_basis,
    shade,
    shade_unclamped,
)
from headcond.errors import ValidationError
from headcond.shading import SH_C0, SH_C1, irradiance


def random_units(rng, n):
    v = rng.normal(size=(n, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def test_band0_constant():
    rng = np.random.default_rng(0)
    ns = random_units(rng, 100)
    y = sh_basis(ns)
    # 1 / (2 sqrt(pi)), evaluated independently
    assert np.abs(y[:, 0] - 1.0 / (2.0 * math.sqrt(math.pi))).max() < 1e-9
    assert np.abs(y[:, 0] - 0.2820947918).max() < 1e-9


def test_band1_at_north_pole():
    y = sh_basis(np.array([0.0, 0.0, 1.0]))
    assert abs(y[1]) < 1e-9          # y term
    assert abs(y[3]) < 1e-9          # x term
    assert abs(y[2] - math.sqrt(3.0 / (4.0 * math.pi))) < 1e-9


def test_parity_under_negation():
    rng = np.random.default_rng(1)
    ns = random_units(rng, 64)
    y_pos = sh_basis(ns)
    y_neg = sh_basis(-ns)
    assert np.abs(y_neg[:, 0] - y_pos[:, 0]).max() < 1e-12        # even
    assert np.abs(y_neg[:, 1:4] + y_pos[:, 1:4]).max() < 1e-12    # odd band
    assert np.abs(y_neg[:, 4:] - y_pos[:, 4:]).max() < 1e-12      # even band


def test_non_unit_rejected():
    with pytest.raises(ValidationError):
        sh_basis(np.array([0.0, 0.0, 1.01]))


def test_zero_light_is_black():
    light = LightingParams(np.zeros((9, 3)))
    out = shade(np.array([0.8, 0.5, 0.2]), np.array([0.0, 0.0, 1.0]), light)
    assert np.array_equal(out, np.zeros(3))


def test_constant_irradiance_reproduces_albedo():
    rng = np.random.default_rng(2)
    light = LightingParams.constant_irradiance(1.0)
    ns = random_units(rng, 50)
    albedo = rng.uniform(0.0, 1.0, size=(50, 3))
    out = shade(albedo, ns, light)
    assert np.abs(out - albedo).max() < 1e-12


def test_single_band1_term():
    coeff = 0.7
    sh = np.zeros((9, 3))
    sh[2, :] = coeff  # z term of band 1
    out = shade(np.ones(3), np.array([0.0, 0.0, 1.0]), LightingParams(sh))
    expected = min(coeff * math.sqrt(3.0 / (4.0 * math.pi)), 1.0)
    assert np.abs(out - expected).max() < 1e-12


def test_linearity_in_light_before_clamp():
    rng = np.random.default_rng(3)
    ns = random_units(rng, 30)
    albedo = rng.uniform(0.0, 1.0, size=(30, 3))
    l1 = LightingParams(rng.normal(size=(9, 3)))
    l2 = LightingParams(rng.normal(size=(9, 3)))
    combined = LightingParams(l1.sh_coeffs + l2.sh_coeffs)
    lhs = shade_unclamped(albedo, ns, combined)
    rhs = shade_unclamped(albedo, ns, l1) + shade_unclamped(albedo, ns, l2)
    assert np.abs(lhs - rhs).max() < 1e-9


def test_output_clamped():
    rng = np.random.default_rng(4)
    light = LightingParams(rng.normal(size=(9, 3)) * 10.0)
    out = shade(rng.uniform(0, 1, size=(20, 3)), random_units(rng, 20), light)
    assert out.min() >= 0.0 and out.max() <= 1.0


def z_half_turn_light(light: LightingParams) -> LightingParams:
    """Analytic SH rotation for a half-turn about z: (x, y) -> (-x, -y), so the
    y, x, yz, xz basis terms flip sign."""
    sh = light.sh_coeffs.copy()
    sh[[1, 3, 5, 7]] *= -1.0
    return LightingParams(sh)


def test_rotation_consistency_z_half_turn():
    rng = np.random.default_rng(5)
    ns = random_units(rng, 40)
    rotated = ns * np.array([-1.0, -1.0, 1.0])
    light = LightingParams(rng.normal(size=(9, 3)))
    lhs = irradiance(ns, light)
    rhs = irradiance(rotated, z_half_turn_light(light))
    assert np.abs(lhs - rhs).max() < 1e-12


def test_rotation_consistency_identity():
    rng = np.random.default_rng(6)
    ns = random_units(rng, 10)
    light = LightingParams(rng.normal(size=(9, 3)))
    assert np.array_equal(irradiance(ns, light), irradiance(ns, light))


def test_color_lighting_ambiguity():
    rng = np.random.default_rng(7)
    ns = random_units(rng, 25)
    albedo = rng.uniform(0.1, 1.0, size=(25, 3))
    light = LightingParams(rng.normal(size=(9, 3)))
    k = 3.7
    scaled_light = LightingParams(light.sh_coeffs / k)
    lhs = shade_unclamped(albedo, ns, light)
    rhs = shade_unclamped(albedo * k, ns, scaled_light)
    assert np.abs(lhs - rhs).max() < 1e-9


def test_albedo_zero_is_mean(assets):
    tex = albedo_from_appearance(assets, AppearanceParams.zeros())
    assert np.array_equal(tex.texels, assets.albedo_mean.astype(np.float64))


def test_albedo_linear_symmetry(assets):
    e1 = np.zeros(50)
    e1[0] = 1.0
    plus = albedo_from_appearance(assets, AppearanceParams(e1), clamp=False)
    minus = albedo_from_appearance(assets, AppearanceParams(-e1), clamp=False)
    mean = assets.albedo_mean.astype(np.float64)
    assert np.abs((plus - mean) + (minus - mean)).max() < 1e-12


def test_albedo_clamp_engages(assets):
    huge = np.zeros(50)
    huge[0] = 1e6
    tex = albedo_from_appearance(assets, AppearanceParams(huge))
    assert tex.texels.min() >= 0.0 and tex.texels.max() <= 1.0
    assert (tex.texels == 0.0).any() or (tex.texels == 1.0).any()


def test_lighting_flat_round_trip():
    rng = np.random.default_rng(8)
    light = LightingParams(rng.normal(size=(9, 3)))
    again = LightingParams.from_flat(light.flat())
    assert np.array_equal(light.sh_coeffs, again.sh_coeffs)
    with pytest.raises(ValidationError):
        LightingParams.from_flat(np.zeros(26))
