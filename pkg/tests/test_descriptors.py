"""Dense oriented ring descriptors vs a from-scratch oracle."""

import math
import time

import numpy as np
import pytest

from celltex.descriptors import (
    DESCRIPTOR_DIM,
    DescriptorSet,
    SamplingGrid,
    dense_sample,
    estimate_orientation,
    extract_all,
    load_at,
    load_descriptors,
    load_vector_rows,
    save_descriptors,
    save_vector_rows,
)
from celltex.errors import ConfigError, DataError
from celltex.image import GrayImage
from celltex.scalespace import ScaleStackConfig, build_scale_stack
from conftest import make_texture


# ---------------------------------------------------------------------------
# independent slow oracle


def oracle_u2_bin(code: int) -> int:
    """Uniform-2 bin via string rotation, counted independently."""
    bits = format(code, "08b")
    transitions = sum(bits[i] != bits[(i + 1) % 8] for i in range(8))
    if transitions > 2:
        return 58
    uniform_before = 0
    for c in range(code):
        b = format(c, "08b")
        t = sum(b[i] != b[(i + 1) % 8] for i in range(8))
        if t <= 2:
            uniform_before += 1
    return uniform_before


def oracle_orientation(px, cx, cy, radius):
    sigma = radius / 2.0
    gx = gy = 0.0
    for dy in range(-(radius - 1), radius):
        for dx in range(-(radius - 1), radius):
            if dx * dx + dy * dy > (radius - 1) ** 2:
                continue
            w = math.exp(-(dx * dx + dy * dy) / (2 * sigma * sigma))
            x, y = cx + dx, cy + dy
            gx += w * (px[y, x + 1] - px[y, x - 1]) / 2.0
            gy += w * (px[y + 1, x] - px[y - 1, x]) / 2.0
    if gx == 0.0 and gy == 0.0:
        return 0.0
    theta = math.atan2(gy, gx)
    return theta + 2 * math.pi if theta < 0 else theta


def oracle_descriptor(px, cx, cy, radius):
    theta = oracle_orientation(px, cx, cy, radius)
    out = np.zeros(4 * 59)
    for ring in range(4):
        r = ring + 1
        hist = np.zeros(59)
        for dy in range(-(radius - r), radius - r + 1):
            for dx in range(-(radius - r), radius - r + 1):
                if dx * dx + dy * dy > (radius - r) ** 2:
                    continue
                x, y = cx + dx, cy + dy
                g0 = px[y, x]
                code = 0
                for k in range(8):
                    phi = theta + 2 * math.pi * k / 8
                    sx = x + r * math.cos(phi)
                    sy = y + r * math.sin(phi)
                    x0, y0 = math.floor(sx), math.floor(sy)
                    fx, fy = sx - x0, sy - y0
                    x1 = min(x0 + 1, px.shape[1] - 1)
                    y1 = min(y0 + 1, px.shape[0] - 1)
                    top = (1 - fx) * px[y0, x0] + fx * px[y0, x1]
                    bot = (1 - fx) * px[y1, x0] + fx * px[y1, x1]
                    if (1 - fy) * top + fy * bot >= g0:
                        code |= 1 << k
                hist[oracle_u2_bin(code)] += 1
        out[59 * ring: 59 * (ring + 1)] = hist / hist.sum()
    return out


# ---------------------------------------------------------------------------


def test_dense_sample_grid_counts():
    grid = SamplingGrid()
    big = dense_sample(GrayImage(np.zeros((70, 70))), grid)
    assert len(big) == 968  # 44 x-positions, 22 y-positions
    assert big[0] == (13, 13)
    assert big[1] == (14, 13)
    assert big[-1] == (56, 55)
    assert dense_sample(GrayImage(np.zeros((27, 27))), grid) == [(13, 13)]
    # a radius-13 patch needs 27 pixels, so 26x26 has no valid center
    assert dense_sample(GrayImage(np.zeros((26, 26))), grid) == []
    assert dense_sample(GrayImage(np.zeros((10, 10))), grid) == []


def test_dense_sample_strides():
    grid = SamplingGrid(radius=5, stride_x=3, stride_y=4)
    centers = dense_sample(GrayImage(np.zeros((20, 23))), grid)
    xs = sorted({c[0] for c in centers})
    ys = sorted({c[1] for c in centers})
    assert xs == [5, 8, 11, 14, 17]
    assert ys == [5, 9, 13]
    assert centers == [(x, y) for y in ys for x in xs]


def test_grid_validation():
    with pytest.raises(ConfigError):
        SamplingGrid(radius=4)
    with pytest.raises(ConfigError):
        SamplingGrid(stride_x=0)
    with pytest.raises(ConfigError):
        SamplingGrid(stride_y=-1)


def test_descriptor_dim_and_block_sums():
    img = make_texture(40, size=40)
    d = load_at(img, 20, 20, SamplingGrid())
    assert d.shape == (DESCRIPTOR_DIM,) == (236,)
    for ring in range(4):
        assert d[59 * ring: 59 * (ring + 1)].sum() == pytest.approx(1.0, abs=1e-9)
    assert np.all(d >= 0)


def test_descriptor_matches_oracle():
    grid = SamplingGrid()
    for seed, center in ((41, (20, 20)), (42, (15, 22)), (43, (18, 14))):
        img = make_texture(seed, size=40, smooth=(seed == 42))
        expected = oracle_descriptor(img.pixels, center[0], center[1], grid.radius)
        got = load_at(img, center[0], center[1], grid)
        np.testing.assert_allclose(got, expected, rtol=0, atol=1e-12)


def test_constant_patch_mass_on_all_ones_bin():
    img = GrayImage(np.full((30, 30), 9.0))
    d = load_at(img, 14, 14, SamplingGrid())
    all_ones_bin = oracle_u2_bin(255)
    for ring in range(4):
        block = d[59 * ring: 59 * (ring + 1)]
        assert block[all_ones_bin] == 1.0
        assert block.sum() == 1.0


def test_orientation_ramps():
    xs = np.tile(np.arange(40.0), (40, 1))
    assert estimate_orientation(GrayImage(xs), 20, 20, 13) == 0.0
    ys = xs.T.copy()
    assert estimate_orientation(GrayImage(ys), 20, 20, 13) == pytest.approx(math.pi / 2)
    combo = GrayImage(2.0 * xs + 5.0 * ys + 1.0)
    assert estimate_orientation(combo, 20, 20, 13) == pytest.approx(math.atan2(5.0, 2.0))
    down = GrayImage(-xs + 100.0)
    assert estimate_orientation(down, 20, 20, 13) == pytest.approx(math.pi)


def test_orientation_zero_gradient_and_bounds():
    flat = GrayImage(np.full((30, 30), 3.0))
    assert estimate_orientation(flat, 15, 15, 13) == 0.0
    with pytest.raises(DataError):
        estimate_orientation(flat, 5, 15, 13)


def test_orientation_matches_oracle():
    img = make_texture(44, size=36)
    got = estimate_orientation(img, 17, 18, 13)
    assert got == pytest.approx(oracle_orientation(img.pixels, 17, 18, 13), abs=1e-9)


def test_affine_intensity_invariance():
    img = make_texture(45, size=34)
    grid = SamplingGrid()
    base = load_at(img, 17, 17, grid)
    mapped = load_at(GrayImage(2.0 * img.pixels + 3.0, white=513.0), 17, 17, grid)
    np.testing.assert_allclose(mapped, base, rtol=0, atol=1e-12)


def test_quarter_rotation_robustness():
    grid = SamplingGrid()
    img = make_texture(46, size=35, smooth=True)
    base = load_at(img, 17, 17, grid)
    rotated = GrayImage(np.rot90(img.pixels).copy())
    dist = np.abs(load_at(rotated, 17, 17, grid) - base).sum()
    assert dist < 0.15, f"90-degree rotation moved descriptor by L1 {dist}"


def test_extract_all_counts_and_provenance():
    img = make_texture(47, size=40)
    stack = build_scale_stack(img, ScaleStackConfig(count=3))
    grid = SamplingGrid(stride_x=2, stride_y=2)
    dset = extract_all(stack, grid)
    per_level = len(dense_sample(img, grid))
    assert dset.count == 4 * per_level
    assert dset.dim == 236
    for level in range(4):
        rows = dset.provenance[dset.provenance[:, 0] == level]
        assert [(int(x), int(y)) for _, x, y in rows] == dense_sample(img, grid)
    # level-major: provenance levels are non-decreasing
    assert np.all(np.diff(dset.provenance[:, 0].astype(int)) >= 0)


def test_extract_all_matches_load_at():
    img = make_texture(48, size=32)
    stack = build_scale_stack(img, ScaleStackConfig(count=1))
    grid = SamplingGrid(stride_x=5, stride_y=5)
    dset = extract_all(stack, grid)
    idx = 0
    for level in stack.levels:
        for x, y in dense_sample(level, grid):
            np.testing.assert_array_equal(dset.descriptors[idx], load_at(level, x, y, grid))
            idx += 1
    assert idx == dset.count


def test_extract_all_empty_grid():
    img = GrayImage(np.zeros((20, 20)))
    stack = build_scale_stack(img, ScaleStackConfig(count=2))
    dset = extract_all(stack, SamplingGrid())
    assert dset.count == 0 and dset.dim == 236


def test_serialization_round_trip(tmp_path):
    img = make_texture(49, size=30)
    stack = build_scale_stack(img, ScaleStackConfig(count=2))
    dset = extract_all(stack, SamplingGrid(stride_x=4, stride_y=4))
    path = tmp_path / "d.desc"
    save_descriptors(dset, path)
    again = load_descriptors(path)
    assert again.count == dset.count and again.dim == dset.dim
    np.testing.assert_array_equal(again.provenance, dset.provenance)
    # values are stored as f32: reload equals the f32 quantization exactly
    np.testing.assert_array_equal(
        again.descriptors, dset.descriptors.astype(np.float32).astype(np.float64))
    save_descriptors(again, tmp_path / "e.desc")
    assert (tmp_path / "e.desc").read_bytes() == path.read_bytes()


def test_serialization_errors(tmp_path):
    bad = tmp_path / "bad.desc"
    bad.write_bytes(b"\x00" * 8)
    with pytest.raises(DataError):
        load_descriptors(bad)
    bad.write_bytes(b"\xec\x00\x00\x00" + b"\x02" + b"\x00" * 7 + b"\x01" * 10)
    with pytest.raises(DataError):
        load_descriptors(bad)


def test_vector_rows_round_trip(tmp_path):
    rng = np.random.default_rng(50)
    rows = rng.standard_normal((5, 7)).astype(np.float32).astype(np.float64)
    binary = tmp_path / "f.bin"
    save_vector_rows(rows, binary)
    np.testing.assert_array_equal(load_vector_rows(binary), rows)
    csv_path = tmp_path / "f.csv"
    save_vector_rows(rows, csv_path)
    np.testing.assert_allclose(load_vector_rows(csv_path), rows, rtol=1e-8, atol=1e-12)


def test_descriptor_set_validation():
    with pytest.raises(DataError):
        DescriptorSet(descriptors=np.zeros((3, 5)), provenance=np.zeros((2, 3)))


def test_extraction_timing_budget():
    img = make_texture(51, size=70)
    stack = build_scale_stack(img, ScaleStackConfig())
    grid = SamplingGrid()
    extract_all(stack, grid)  # warm
    t0 = time.perf_counter()
    dset = extract_all(stack, grid)
    elapsed = time.perf_counter() - t0
    assert dset.count == 968 * 8
    assert elapsed <= 2.0, f"descriptor extraction took {elapsed:.3f}s"
