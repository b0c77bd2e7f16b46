import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from relightkit.envmap import (
    HdrEnvMap,
    LdrConditionTriple,
    LedArray,
    decompose,
    direction_to_pixel,
    leds_to_equirect,
    pixel_directions,
    rotate,
    scale_intensity,
)
from relightkit.errors import ValidationError


def _const_env(value, h=8, w=16):
    return HdrEnvMap(radiance=np.full((h, w, 3), value, dtype=np.float32))


def _random_env(seed=0, h=16, w=32, scale=5.0):
    rng = np.random.default_rng(seed)
    return HdrEnvMap(radiance=rng.uniform(0, scale, (h, w, 3)).astype(np.float32))


# ---------------------------------------------------------------------------
# type validation

def test_envmap_requires_two_to_one_aspect():
    with pytest.raises(ValidationError):
        HdrEnvMap(radiance=np.zeros((8, 15, 3), dtype=np.float32))


def test_envmap_rejects_negative_and_nonfinite():
    bad = np.zeros((4, 8, 3), dtype=np.float32)
    bad[0, 0, 0] = -1
    with pytest.raises(ValidationError):
        HdrEnvMap(radiance=bad)
    bad[0, 0, 0] = np.inf
    with pytest.raises(ValidationError):
        HdrEnvMap(radiance=bad)


# ---------------------------------------------------------------------------
# decompose

def test_decompose_constant_one():
    triple = decompose(_const_env(1.0))
    np.testing.assert_allclose(triple.tonemapped, 0.5, atol=1e-7)
    np.testing.assert_allclose(triple.log_intensity, 1.0, atol=1e-7)


def test_decompose_all_zero_map():
    triple = decompose(_const_env(0.0))
    assert (triple.tonemapped == 0).all()
    assert (triple.log_intensity == 0).all()
    d = triple.direction.astype(np.float64) * 2 - 1
    np.testing.assert_allclose(np.linalg.norm(d, axis=2), 1.0, atol=1e-5)


def test_direction_map_analytic_oracle():
    h, w = 16, 32
    triple = decompose(_const_env(1.0, h, w))
    decoded = triple.direction.astype(np.float64) * 2 - 1
    # independent spherical-coordinate evaluation at every pixel center
    for i, j in [(h // 2, w // 2), (0, 0), (h - 1, w - 1), (5, 20)]:
        theta = math.pi * (i + 0.5) / h
        phi = 2 * math.pi * (j + 0.5) / w - math.pi
        expected = (math.sin(theta) * math.sin(phi), math.cos(theta),
                    -math.sin(theta) * math.cos(phi))
        np.testing.assert_allclose(decoded[i, j], expected, atol=1e-6)
    # the map center looks down the forward (-z) axis up to half a pixel
    center = decoded[h // 2, w // 2]
    assert center @ np.array([0.0, 0.0, -1.0]) > math.cos(math.pi / h)


def test_direction_pixel_roundtrip():
    h, w = 16, 32
    dirs = pixel_directions(w, h)
    for i, j in [(3, 7), (12, 30), (8, 0)]:
        col, row = direction_to_pixel(dirs[i, j], w, h)
        assert abs(col - j) < 1e-9
        assert abs(row - i) < 1e-9


def test_luminance_weighting():
    rad = np.zeros((4, 8, 3), dtype=np.float32)
    rad[:, :, 1] = 2.0  # green only
    triple = decompose(HdrEnvMap(radiance=rad))
    lum = 0.7152 * 2.0
    np.testing.assert_allclose(triple.log_intensity, 1.0, atol=1e-7)
    np.testing.assert_allclose(triple.tonemapped[:, :, 1], 2.0 / 3.0, atol=1e-7)
    assert (triple.tonemapped[:, :, 0] == 0).all()
    assert lum > 0


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10 ** 6), st.floats(0.01, 1000.0))
def test_triple_always_in_unit_range(seed, scale):
    triple = decompose(_random_env(seed=seed, h=4, w=8, scale=scale))
    for arr in (triple.tonemapped, triple.log_intensity, triple.direction):
        assert arr.min() >= 0.0 and arr.max() <= 1.0


def test_triple_validation():
    good = decompose(_const_env(1.0))
    with pytest.raises(ValidationError):
        LdrConditionTriple(tonemapped=good.tonemapped + 0.6,
                           log_intensity=good.log_intensity,
                           direction=good.direction)


# ---------------------------------------------------------------------------
# rotate / scale

def test_rotate_zero_identity():
    env = _random_env(1)
    np.testing.assert_array_equal(rotate(env, 0.0).radiance, env.radiance)


def test_rotate_full_turn_identity():
    env = _random_env(2)
    np.testing.assert_allclose(rotate(env, 2 * math.pi).radiance, env.radiance, atol=1e-6)


def test_rotate_half_turn_moves_texel():
    rad = np.zeros((8, 16, 3), dtype=np.float32)
    rad[3, 2, :] = 7.0
    out = rotate(HdrEnvMap(radiance=rad), math.pi)
    np.testing.assert_array_equal(np.nonzero(out.radiance[3, :, 0])[0], [(2 + 8) % 16])
    # wrap-around: start near the right edge
    rad2 = np.zeros((8, 16, 3), dtype=np.float32)
    rad2[1, 14, :] = 1.0
    out2 = rotate(HdrEnvMap(radiance=rad2), math.pi)
    np.testing.assert_array_equal(np.nonzero(out2.radiance[1, :, 0])[0], [(14 + 8) % 16])


def test_rotate_preserves_energy():
    env = _random_env(3)
    total = env.radiance.sum()
    assert abs(rotate(env, 1.0).radiance.sum() - total) / total < 1e-3
    assert abs(rotate(env, 2 * math.pi / env.width * 3).radiance.sum() - total) / total < 1e-4


def test_rotate_composition():
    # smooth content so the double-resampling error stays in the bilinear
    # tolerance regime
    h, w = 64, 128
    u = (np.arange(w) + 0.5) / w
    v = (np.arange(h) + 0.5) / h
    rad = 1.0 + 0.5 * np.sin(2 * math.pi * u)[None, :] * np.cos(2 * math.pi * v)[:, None]
    env = HdrEnvMap(radiance=np.repeat(rad[:, :, None], 3, axis=2).astype(np.float32))
    a, b = 0.7, 1.9
    once = rotate(env, a + b).radiance
    twice = rotate(rotate(env, a), b).radiance
    assert np.abs(once - twice).max() <= 1e-3


def test_rotation_commutes_with_decompose_for_integer_shifts():
    env = _random_env(5)
    yaw = 2 * math.pi * 4 / env.width  # exactly 4 pixels
    a = decompose(rotate(env, yaw))
    b = decompose(env)
    np.testing.assert_array_equal(a.tonemapped, np.roll(b.tonemapped, 4, axis=1))
    np.testing.assert_array_equal(a.log_intensity, np.roll(b.log_intensity, 4, axis=1))
    # the direction map is view-frame-fixed: rotation must NOT commute
    assert not np.array_equal(a.direction, np.roll(b.direction, 4, axis=1))
    np.testing.assert_array_equal(a.direction, b.direction)


def test_scale_identity_zero_and_tonemap():
    env = _random_env(6)
    np.testing.assert_array_equal(scale_intensity(env, 1.0).radiance, env.radiance)
    assert (scale_intensity(env, 0.0).radiance == 0).all()
    doubled = scale_intensity(_const_env(1.0), 2.0)
    np.testing.assert_allclose(decompose(doubled).tonemapped, 2.0 / 3.0, atol=1e-7)
    with pytest.raises(ValidationError):
        scale_intensity(env, -0.1)


# ---------------------------------------------------------------------------
# LED arrays

def test_led_validation():
    with pytest.raises(ValidationError, match="LED 1"):
        LedArray(positions=[[1, 0, 0], [0, 0, 0]], intensities=[1.0, 1.0])
    with pytest.raises(ValidationError):
        LedArray(positions=[[1, 0, 0]], intensities=[-1.0])
    with pytest.raises(ValidationError):
        LedArray(positions=np.ones((1025, 3)), intensities=np.ones(1025))


def test_single_led_positive_x_axis():
    leds = LedArray(positions=[[2.5, 0.0, 0.0]], intensities=[1.0])
    env = leds_to_equirect(leds, 64, 32, splat_radius=0)
    nz = np.argwhere(env.radiance[:, :, 0] > 0)
    np.testing.assert_array_equal(nz, [[32 // 2, 3 * 64 // 4]])
    r = env.radiance[nz[0][0], nz[0][1]]
    assert r[0] == r[1] == r[2]  # white LED


def test_zero_leds_gives_zero_map():
    env = leds_to_equirect(LedArray(positions=np.zeros((0, 3)), intensities=np.zeros(0)),
                           32, 16)
    assert (env.radiance == 0).all()


def test_leds_linear_in_intensity_dyadic_exact():
    rng = np.random.default_rng(7)
    pos = rng.normal(size=(12, 3))
    inten = rng.uniform(0.1, 3.0, 12)
    base = leds_to_equirect(LedArray(positions=pos, intensities=inten), 64, 32, 2.5)
    doubled = leds_to_equirect(LedArray(positions=pos, intensities=2 * inten), 64, 32, 2.5)
    np.testing.assert_array_equal(doubled.radiance, base.radiance * 2)


def test_led_energy_equal_across_elevations():
    # numerical solid-angle integration oracle
    def integrated(elev_deg):
        theta = math.radians(90 - elev_deg)
        pos = [[math.sin(theta), math.cos(theta), 0.0]]
        env = leds_to_equirect(LedArray(positions=pos, intensities=[1.0]), 128, 64,
                               splat_radius=3)
        h, w = 64, 128
        theta_rows = math.pi * (np.arange(h) + 0.5) / h
        d_omega = np.sin(theta_rows)[:, None] * (math.pi / h) * (2 * math.pi / w)
        return float((env.radiance[:, :, 0] * d_omega).sum())

    e0 = integrated(0.0)
    e60 = integrated(60.0)
    assert abs(e0 - e60) / e0 < 0.02


def test_overlapping_splats_sum():
    pos = [[1.0, 0.0, 0.0], [1.0, 0.0, 0.0]]
    env = leds_to_equirect(LedArray(positions=pos, intensities=[1.0, 2.0]), 64, 32, 1.5)
    single = leds_to_equirect(LedArray(positions=pos[:1], intensities=[3.0]), 64, 32, 1.5)
    np.testing.assert_allclose(env.radiance, single.radiance, atol=1e-6)
