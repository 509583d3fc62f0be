"""Gaussian kernel and scale stack checks against brute-force oracles."""

import math

import numpy as np
import pytest

from celltex.errors import ConfigError, DataError
from celltex.image import GrayImage
from celltex.scalespace import (
    Kernel2D,
    ScaleStackConfig,
    build_scale_stack,
    convolve,
    gaussian_kernel,
    gaussian_value,
)
from conftest import make_texture


def brute_force_convolve(px: np.ndarray, weights: np.ndarray, radius: int) -> np.ndarray:
    """Direct 2-D convolution with replicated borders, plain loops."""
    h, w = px.shape
    out = np.zeros_like(px)
    for y in range(h):
        for x in range(w):
            acc = 0.0
            for dy in range(-radius, radius + 1):
                for dx in range(-radius, radius + 1):
                    sy = min(max(y - dy, 0), h - 1)
                    sx = min(max(x - dx, 0), w - 1)
                    acc += weights[dy + radius, dx + radius] * px[sy, sx]
            out[y, x] = acc
    return out


def test_kernel_radius_and_center_value():
    k = gaussian_kernel(1.0)
    assert k.radius == 3
    assert gaussian_value(0, 0, 1.0) == pytest.approx(1.0 / (2.0 * math.pi), abs=1e-12)
    # Unnormalized neighbor-to-center ratio survives normalization.
    assert k.weights[3, 4] / k.weights[3, 3] == pytest.approx(math.exp(-0.5), abs=1e-12)


def test_kernel_matches_sampled_gaussian():
    for sigma in (0.7, 1.0, 2.25, 5.0625):
        k = gaussian_kernel(sigma)
        assert k.radius == math.ceil(3 * sigma)
        raw = np.array([
            [gaussian_value(dx, dy, sigma) for dx in range(-k.radius, k.radius + 1)]
            for dy in range(-k.radius, k.radius + 1)
        ])
        np.testing.assert_allclose(k.weights, raw / raw.sum(), rtol=0, atol=1e-14)


def test_kernel_sum_symmetry_positivity():
    for sigma in (0.5, 1.0, 1.5, 3.375, 11.390625):
        k = gaussian_kernel(sigma)
        assert abs(k.weights.sum() - 1.0) < 1e-12
        assert np.all(k.weights > 0)
        np.testing.assert_array_equal(k.weights, k.weights.T)
        np.testing.assert_array_equal(k.weights, k.weights[::-1, ::-1])


def test_kernel_bad_sigma():
    for sigma in (0.0, -1.0, math.inf, math.nan):
        with pytest.raises(ConfigError):
            gaussian_kernel(sigma)


def test_convolve_matches_brute_force_oracle():
    rng = np.random.default_rng(11)
    px = rng.uniform(0, 255, (24, 19))
    for sigma in (0.8, 1.5):
        k = gaussian_kernel(sigma)
        expected = brute_force_convolve(px, k.weights, k.radius)
        got = convolve(GrayImage(px), k).pixels
        assert np.abs(got - expected).max() < 1e-9


def test_convolve_non_separable_kernel_matches_oracle():
    rng = np.random.default_rng(12)
    px = rng.uniform(0, 10, (15, 15))
    weights = rng.uniform(0, 1, (5, 5))
    weights += weights[::-1, ::-1]  # keep it symmetric, not separable
    weights /= weights.sum()
    k = Kernel2D(radius=2, weights=weights)
    expected = brute_force_convolve(px, weights, 2)
    got = convolve(GrayImage(px), k).pixels
    assert np.abs(got - expected).max() < 1e-9


def test_convolve_impulse_reproduces_kernel():
    px = np.zeros((13, 13))
    px[6, 6] = 1.0
    k = gaussian_kernel(1.0)
    out = convolve(GrayImage(px), k).pixels
    np.testing.assert_allclose(out[3:10, 3:10], k.weights, rtol=0, atol=1e-15)


def test_convolve_constant_fixed_point():
    img = GrayImage(np.full((20, 20), 42.0))
    out = convolve(img, gaussian_kernel(2.25)).pixels
    assert np.abs(out - 42.0).max() < 1e-12


def test_convolve_output_range_contained():
    img = make_texture(13, size=40)
    out = convolve(img, gaussian_kernel(3.375)).pixels
    assert out.min() >= img.pixels.min() - 1e-9
    assert out.max() <= img.pixels.max() + 1e-9


def test_convolve_kernel_too_large():
    img = GrayImage(np.zeros((8, 30)))
    with pytest.raises(DataError):
        convolve(img, gaussian_kernel(3.0))  # radius 9, side 19 > 2*8+1


def smooth_unit_image(size: int = 64) -> GrayImage:
    """Wide Gaussian bump in [0, 1]: smooth enough that kernel truncation
    error stays in the semigroup tolerance."""
    ys, xs = np.mgrid[0:size, 0:size].astype(np.float64)
    c = (size - 1) / 2.0
    return GrayImage(np.exp(-((xs - c) ** 2 + (ys - c) ** 2) / (2.0 * 10.0 ** 2)))


def test_gaussian_semigroup():
    img = smooth_unit_image(64)
    twice = convolve(convolve(img, gaussian_kernel(1.0)), gaussian_kernel(1.0))
    direct = convolve(img, gaussian_kernel(math.sqrt(2.0)))
    assert np.abs(twice.pixels - direct.pixels).max() < 1e-3


def test_stack_default_schedule():
    cfg = ScaleStackConfig()
    assert cfg.sigmas == [1.0, 1.5, 2.25, 3.375, 5.0625, 7.59375, 11.390625]
    img = make_texture(15, size=80)
    stack = build_scale_stack(img, cfg)
    assert len(stack) == 8
    assert stack.levels[0] is img
    for level in stack.levels:
        assert (level.height, level.width) == (img.height, img.width)


def test_stack_levels_filter_original_not_cascade():
    img = make_texture(16, size=48)
    stack = build_scale_stack(img, ScaleStackConfig(base=1.5, count=3))
    lone = convolve(img, gaussian_kernel(1.5 ** 2))
    np.testing.assert_array_equal(stack.levels[3].pixels, lone.pixels)


def test_stack_variance_monotone():
    img = make_texture(17, size=64)
    stack = build_scale_stack(img, ScaleStackConfig())
    variances = [float(level.pixels.var()) for level in stack.levels]
    for a, b in zip(variances, variances[1:]):
        assert b <= a + 1e-9


def test_stack_count_zero_and_bounds():
    img = make_texture(18, size=32)
    stack = build_scale_stack(img, ScaleStackConfig(count=0))
    assert len(stack) == 1 and stack.sigmas == ()
    with pytest.raises(ConfigError):
        ScaleStackConfig(base=1.0)
    with pytest.raises(ConfigError):
        ScaleStackConfig(count=33)
    with pytest.raises(ConfigError):
        ScaleStackConfig(count=-1)
