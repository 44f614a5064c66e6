import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fcrn.data import AugmentConfig, Box, DepthSample, Scene, augment, render, synth_dataset


def test_same_seed_same_dataset():
    a, b = synth_dataset(5, (32, 40), seed=3), synth_dataset(5, (32, 40), seed=3)
    for x, y in zip(a, b):
        assert np.array_equal(x.rgb, y.rgb) and np.array_equal(x.depth, y.depth)
    c = synth_dataset(5, (32, 40), seed=4)
    assert not np.array_equal(a[0].depth, c[0].depth)


def test_prefix_stability():
    # sample i depends only on (seed, i)
    assert np.array_equal(synth_dataset(3, seed=9)[2].depth, synth_dataset(6, seed=9)[2].depth)


def test_depth_positive_and_finite():
    for s in synth_dataset(20, (48, 64), seed=0):
        assert s.depth.shape == (1, 48, 64) and s.rgb.shape == (3, 48, 64)
        assert np.all(np.isfinite(s.depth)) and np.all(s.depth > 0)
        assert s.rgb.min() >= 0 and s.rgb.max() <= 1


def test_floor_only_depth_is_analytic():
    h, w, cam, pitch = 40, 50, 1.3, 40.0
    s = render(Scene(camera_height=cam, pitch_deg=pitch, wall_distance=None), (h, w))
    d = s.depth[0]
    f = 0.9 * w
    th = np.deg2rad(pitch)
    y = (np.arange(h) + 0.5 - h / 2) / f
    want = cam / (y * np.cos(th) + np.sin(th))
    assert np.allclose(d, want[:, None], rtol=1e-12)
    # farther toward the horizon, i.e. toward the top of the image
    assert np.all(np.diff(d[:, 0]) < 0)


def test_floor_only_without_enough_pitch_fails():
    with pytest.raises(ValueError):
        render(Scene(pitch_deg=5.0, wall_distance=None), (32, 32))


def test_box_occludes_floor():
    base = render(Scene(), (32, 32))
    boxed = render(Scene(boxes=[Box(0.0, 3.0, 1.0, 1.0, 1.5)]), (32, 32))
    assert np.all(boxed.depth <= base.depth + 1e-12)
    assert np.any(boxed.depth < base.depth - 0.5)


def _sample(h=32, w=32, seed=0):
    rng = np.random.default_rng(seed)
    return DepthSample(rng.random((3, h, w)), rng.uniform(1, 5, (1, h, w)), np.ones((1, h, w), bool))


def test_identity_augment_is_noop():
    s = _sample()
    out = augment(s, AugmentConfig.identity(), seed=123)
    for a, b in [(out.rgb, s.rgb), (out.depth, s.depth), (out.mask, s.mask)]:
        assert np.array_equal(a, b)


def test_double_flip_restores_sample():
    cfg = AugmentConfig(rotation=(0, 0), scale=(1, 1), color=(1, 1), flip_prob=1.0)
    s = _sample()
    once = augment(s, cfg, 0)
    assert np.array_equal(once.depth, s.depth[:, :, ::-1])
    twice = augment(once, cfg, 1)
    assert np.array_equal(twice.rgb, s.rgb) and np.array_equal(twice.depth, s.depth)


def test_scale_two_halves_constant_depth():
    s = DepthSample(np.full((3, 32, 32), 0.5), np.full((1, 32, 32), 4.0), np.ones((1, 32, 32), bool))
    cfg = AugmentConfig(rotation=(0, 0), scale=(2, 2), color=(1, 1), flip_prob=0.0, crop=(32, 32))
    assert np.allclose(augment(s, cfg, 0).depth, 2.0)


def test_scaled_depth_agrees_with_pinhole_projection():
    # a fronto-parallel plane at 4 m carrying stripes of period p pixels; after zooming the
    # stripe period, read through the pinhole model f * L / Z, gives the new distance
    n, period, z = 128, 8, 4.0
    stripes = 0.5 + 0.4 * np.sin(2 * np.pi * np.arange(n) / period)
    rgb = np.broadcast_to(stripes, (3, n, n)).copy()
    s = DepthSample(rgb, np.full((1, n, n), z), np.ones((1, n, n), bool))
    cfg = AugmentConfig(rotation=(0, 0), scale=(2, 2), color=(1, 1), flip_prob=0.0, crop=(n, n))
    out = augment(s, cfg, 5)
    row = out.rgb[0, n // 2] - out.rgb[0, n // 2].mean()
    spectrum = np.abs(np.fft.rfft(row))
    new_period = n / (1 + np.argmax(spectrum[1:]))
    z_pinhole = z * period / new_period
    assert new_period == pytest.approx(2 * period)
    assert np.allclose(out.depth, z_pinhole)


def test_crop_window_and_errors():
    s = _sample(20, 30)
    cfg = AugmentConfig.identity(crop=(10, 12))
    out = augment(s, cfg, 7)
    assert out.depth.shape == (1, 10, 12)
    with pytest.raises(ValueError):
        augment(s, AugmentConfig.identity(crop=(21, 12)), 0)
    with pytest.raises(ValueError):
        AugmentConfig(flip_prob=1.5)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_augment_keeps_depth_positive_on_valid_pixels(seed):
    s = synth_dataset(1, (32, 32), seed=seed % 1000)[0]
    out = augment(s, AugmentConfig(crop=(28, 28)), seed)
    assert out.mask.any()
    assert np.all(out.depth[out.mask] > 0)


def test_augment_is_deterministic_per_seed():
    s = _sample()
    cfg = AugmentConfig(crop=(24, 24))
    a, b = augment(s, cfg, 42), augment(s, cfg, 42)
    assert np.array_equal(a.rgb, b.rgb) and np.array_equal(a.mask, b.mask)
