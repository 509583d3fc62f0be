"""Rotation-invariant uniform local binary patterns over a scale stack.

A code compares n circular neighbors against the center pixel: bit k is set
when the neighbor at angle 2*pi*k/n (measured from the +x axis toward +y,
i.e. counterclockwise in array coordinates) is >= the center.  Ties count
as set, so a constant image yields the all-ones code.  Uniform codes (at
most two circular 0/1 transitions) map to their popcount, everything else
to a single catch-all bin, giving n+2 bins per scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError
from .image import GrayImage
from .scalespace import ScaleStack

DEFAULT_SCALES = ((8, 1.0), (16, 2.0), (24, 3.0))


@dataclass(frozen=True)
class LBPConfig:
    """Per-scale (neighbor count, radius) pairs, finest first."""

    scales: tuple[tuple[int, float], ...] = DEFAULT_SCALES

    def __post_init__(self):
        if not self.scales:
            raise ConfigError("at least one LBP scale is required")
        for n, r in self.scales:
            if not 2 <= n <= 32:
                raise ConfigError(f"neighbor count must be in 2..32, got {n}")
            if not (r > 0 and math.isfinite(r)):
                raise ConfigError(f"LBP radius must be positive, got {r}")

    @property
    def dims(self) -> int:
        return sum(n + 2 for n, _ in self.scales)

    @property
    def margin(self) -> int:
        """Scan margin shared by every scale: the largest radius, rounded up."""
        return math.ceil(max(r for _, r in self.scales))


def _lerp(a, b, t):
    return a + t * (b - a)


def _bilinear(px: np.ndarray, x: float, y: float) -> float:
    x0 = math.floor(x)
    y0 = math.floor(y)
    fx = x - x0
    fy = y - y0
    x1 = x0 + 1 if fx > 0 else x0
    y1 = y0 + 1 if fy > 0 else y0
    top = _lerp(px[y0, x0], px[y0, x1], fx)
    bot = _lerp(px[y1, x0], px[y1, x1], fx)
    return _lerp(top, bot, fy)


def lbp_code(img: GrayImage, cx: int, cy: int, n: int, r: float) -> int:
    """LBP code at one center; the sampling circle must fit inside the image."""
    px = img.pixels
    if not (cx - r >= 0 and cy - r >= 0 and cx + r <= img.width - 1 and cy + r <= img.height - 1):
        raise DataError(
            f"radius-{r} circle at ({cx}, {cy}) leaves the {img.width}x{img.height} image"
        )
    center = px[cy, cx]
    code = 0
    for k in range(n):
        theta = 2.0 * math.pi * k / n
        gk = _bilinear(px, cx + r * math.cos(theta), cy + r * math.sin(theta))
        if gk >= center:
            code |= 1 << k
    return code


def riu2_bin(code: int, n: int) -> int:
    """Map a raw code to its rotation-invariant uniform bin (0..n+1)."""
    mask = (1 << n) - 1
    if not 0 <= code <= mask:
        raise DataError(f"code {code} out of range for {n} neighbors")
    rotated = ((code << 1) | (code >> (n - 1))) & mask
    transitions = (code ^ rotated).bit_count()
    if transitions <= 2:
        return code.bit_count()
    return n + 1


def _neighbor_plane(px: np.ndarray, margin: int, dx: float, dy: float) -> np.ndarray:
    """Bilinear samples at (x+dx, y+dy) for every interior center at once."""
    h, w = px.shape
    x0 = math.floor(dx)
    y0 = math.floor(dy)
    fx = dx - x0
    fy = dy - y0
    x1 = x0 + 1 if fx > 0 else x0
    y1 = y0 + 1 if fy > 0 else y0

    def block(oy, ox):
        return px[margin + oy: h - margin + oy, margin + ox: w - margin + ox]

    top = _lerp(block(y0, x0), block(y0, x1), fx)
    bot = _lerp(block(y1, x0), block(y1, x1), fx)
    return _lerp(top, bot, fy)


def _scale_histogram(px: np.ndarray, n: int, r: float, margin: int) -> np.ndarray:
    center = px[margin: px.shape[0] - margin, margin: px.shape[1] - margin]
    bits = np.empty((n,) + center.shape, dtype=bool)
    for k in range(n):
        theta = 2.0 * math.pi * k / n
        plane = _neighbor_plane(px, margin, r * math.cos(theta), r * math.sin(theta))
        bits[k] = plane >= center
    ones = bits.sum(axis=0)
    transitions = np.zeros(center.shape, dtype=np.int64)
    for k in range(n):
        transitions += bits[k] ^ bits[(k + 1) % n]
    bins = np.where(transitions <= 2, ones, n + 1)
    hist = np.bincount(bins.ravel(), minlength=n + 2).astype(np.float64)
    return hist / hist.sum()


def lbp_histogram(img: GrayImage, cfg: LBPConfig) -> np.ndarray:
    """Concatenated riu2 histograms over all scales, each L1-normalized.

    All scales scan the same interior region, with the margin set by the
    largest radius, so every block counts the same population of centers.
    """
    margin = cfg.margin
    if img.width < 2 * margin + 1 or img.height < 2 * margin + 1:
        raise DataError(
            f"image {img.width}x{img.height} too small for LBP margin {margin}"
        )
    parts = [_scale_histogram(img.pixels, n, r, margin) for n, r in cfg.scales]
    return np.concatenate(parts)


def gss_lbp_representation(stack: ScaleStack, cfg: LBPConfig) -> np.ndarray:
    """Per-level LBP histograms concatenated in level order."""
    return np.concatenate([lbp_histogram(level, cfg) for level in stack.levels])
