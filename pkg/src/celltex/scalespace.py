"""Gaussian scale space with fixed resolution across levels.

Every filtered level smooths the *original* image (no cascading), so the
level at sigma is exactly one Gaussian blur away from the input.  Borders
replicate edge pixels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import ConfigError, DataError
from .image import GrayImage


def gaussian_value(dx: float, dy: float, sigma: float) -> float:
    """The 2-D Gaussian 1/(2*pi*sigma^2) * exp(-(dx^2+dy^2)/(2*sigma^2))."""
    s2 = sigma * sigma
    return math.exp(-(dx * dx + dy * dy) / (2.0 * s2)) / (2.0 * math.pi * s2)


@dataclass(frozen=True)
class Kernel2D:
    """Square convolution kernel with odd side 2*radius+1."""

    radius: int
    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        side = 2 * self.radius + 1
        if self.radius < 0 or w.shape != (side, side):
            raise DataError(f"kernel weights must be {side}x{side}, got {w.shape}")
        if not np.all(np.isfinite(w)):
            raise DataError("kernel contains non-finite weights")
        w = w.copy()
        w.flags.writeable = False
        object.__setattr__(self, "weights", w)


def gaussian_kernel(sigma: float) -> Kernel2D:
    """Truncated sampled Gaussian, radius ceil(3*sigma), renormalized to sum 1."""
    if not (sigma > 0 and math.isfinite(sigma)):
        raise ConfigError(f"sigma must be positive and finite, got {sigma}")
    radius = math.ceil(3.0 * sigma)
    offsets = np.arange(-radius, radius + 1, dtype=np.float64)
    profile = np.exp(-(offsets ** 2) / (2.0 * sigma * sigma))
    profile /= profile.sum()
    # The outer product of the normalized 1-D profile equals the normalized
    # truncated 2-D Gaussian exactly, and keeps the kernel separable.
    return Kernel2D(radius=radius, weights=np.outer(profile, profile))


def _separable_profile(kernel: Kernel2D) -> np.ndarray | None:
    w = kernel.weights
    r = kernel.radius
    center = w[r, r]
    if center <= 0:
        return None
    profile = w[r, :] / math.sqrt(center)
    if np.allclose(np.outer(profile, profile), w, rtol=0, atol=1e-13 * w.max()):
        return profile
    return None


def convolve(img: GrayImage, kernel: Kernel2D) -> GrayImage:
    """Convolve with replicated borders; separable kernels run as two 1-D passes."""
    side = 2 * kernel.radius + 1
    if side > 2 * min(img.width, img.height) + 1:
        raise DataError(
            f"kernel side {side} exceeds 2*min(width,height)+1 "
            f"for a {img.width}x{img.height} image"
        )
    profile = _separable_profile(kernel)
    if profile is not None:
        out = ndimage.convolve1d(img.pixels, profile, axis=0, mode="nearest")
        out = ndimage.convolve1d(out, profile, axis=1, mode="nearest")
    else:
        out = ndimage.convolve(img.pixels, kernel.weights, mode="nearest")
    return GrayImage(out, white=img.white)


@dataclass(frozen=True)
class ScaleStackConfig:
    """Geometric sigma schedule: sigma_n = base**(n-1) for n = 1..count."""

    base: float = 1.5
    count: int = 7

    def __post_init__(self):
        if not (math.isfinite(self.base) and self.base > 1.0):
            raise ConfigError(f"scale base must be > 1, got {self.base}")
        if not 0 <= self.count <= 32:
            raise ConfigError(f"filter count must be in 0..32, got {self.count}")

    @property
    def sigmas(self) -> list[float]:
        return [self.base ** n for n in range(self.count)]


@dataclass(frozen=True)
class ScaleStack:
    """Unfiltered input at index 0 followed by one level per sigma."""

    levels: tuple[GrayImage, ...]
    sigmas: tuple[float, ...]

    def __len__(self) -> int:
        return len(self.levels)


def build_scale_stack(img: GrayImage, cfg: ScaleStackConfig) -> ScaleStack:
    """Filter the original image once per sigma; level 0 is the input itself."""
    sigmas = cfg.sigmas
    levels = [img]
    for sigma in sigmas:
        levels.append(convolve(img, gaussian_kernel(sigma)))
    return ScaleStack(levels=tuple(levels), sigmas=tuple(sigmas))
