"""Shared fixtures: seeded textures and a JIT warm-up."""

import numpy as np
import pytest

from celltex.descriptors import SamplingGrid, load_at
from celltex.image import GrayImage


def make_texture(seed: int, size: int = 64, smooth: bool = False) -> GrayImage:
    """Reproducible random texture; smooth variant has band-limited content."""
    rng = np.random.default_rng(seed)
    if smooth:
        from scipy import ndimage

        base = ndimage.gaussian_filter(rng.standard_normal((size, size)), 2.0,
                                       mode="nearest")
        lo, hi = base.min(), base.max()
        return GrayImage(255.0 * (base - lo) / (hi - lo), white=255.0)
    return GrayImage(rng.uniform(0.0, 255.0, (size, size)), white=255.0)


@pytest.fixture(scope="session", autouse=True)
def warm_jit():
    """Compile the descriptor kernel once so timed tests measure steady state."""
    img = make_texture(0, size=32)
    load_at(img, 14, 14, SamplingGrid(radius=13))
    yield
