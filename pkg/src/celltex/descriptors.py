"""Dense rotation-adaptive local descriptors over circular patches.

Each patch is oriented by its Gaussian-weighted mean gradient, then four
concentric LBP rings (8 neighbors at radii 1..4, sampling frame rotated to
the patch orientation) are accumulated over every pixel whose ring still
fits inside the patch.  Ring histograms use the uniform-2 mapping (58
uniform codes plus one catch-all), are L1-normalized per ring, and are
concatenated into a 4 * 59 = 236 dimensional descriptor.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numba import njit

from .errors import ConfigError, DataError
from .image import GrayImage
from .scalespace import ScaleStack

RING_COUNT = 4
RING_NEIGHBORS = 8
RING_BINS = 59
DESCRIPTOR_DIM = RING_COUNT * RING_BINS

_TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class SamplingGrid:
    """Dense center grid: patch radius plus per-axis strides."""

    radius: int = 13
    stride_x: int = 1
    stride_y: int = 2

    def __post_init__(self):
        if self.radius < RING_COUNT + 1:
            raise ConfigError(f"patch radius must be >= {RING_COUNT + 1}, got {self.radius}")
        if self.stride_x < 1 or self.stride_y < 1:
            raise ConfigError(
                f"strides must be >= 1, got ({self.stride_x}, {self.stride_y})"
            )


def dense_sample(img: GrayImage, grid: SamplingGrid) -> list[tuple[int, int]]:
    """Centers whose radius-R patch fits fully inside the image, row-major."""
    r = grid.radius
    xs = range(r, img.width - r, grid.stride_x)
    ys = range(r, img.height - r, grid.stride_y)
    return [(x, y) for y in ys for x in xs]


def _u2_table() -> np.ndarray:
    """Uniform-2 bin for every 8-bit code: 58 uniform bins then a catch-all."""
    table = np.empty(256, dtype=np.int64)
    nxt = 0
    for code in range(256):
        rotated = ((code << 1) | (code >> 7)) & 0xFF
        if ((code ^ rotated).bit_count()) <= 2:
            table[code] = nxt
            nxt += 1
        else:
            table[code] = RING_BINS - 1
    assert nxt == RING_BINS - 1
    return table


_U2_TABLE = _u2_table()


def _disc_offsets(radius: float) -> np.ndarray:
    """Integer (dx, dy) offsets with dx^2 + dy^2 <= radius^2, row-major."""
    lim = math.floor(radius)
    out = [
        (dx, dy)
        for dy in range(-lim, lim + 1)
        for dx in range(-lim, lim + 1)
        if dx * dx + dy * dy <= radius * radius
    ]
    return np.array(out, dtype=np.int64).reshape(-1, 2)


def _orientation_weights(radius: int) -> tuple[np.ndarray, np.ndarray]:
    offsets = _disc_offsets(radius - 1)
    sigma = radius / 2.0
    d2 = (offsets[:, 0] ** 2 + offsets[:, 1] ** 2).astype(np.float64)
    return offsets, np.exp(-d2 / (2.0 * sigma * sigma))


def _ring_offsets(radius: int) -> tuple[np.ndarray, np.ndarray]:
    parts = [_disc_offsets(radius - (ring + 1)) for ring in range(RING_COUNT)]
    starts = np.zeros(RING_COUNT + 1, dtype=np.int64)
    for i, p in enumerate(parts):
        starts[i + 1] = starts[i] + len(p)
    return np.concatenate(parts, axis=0), starts


def estimate_orientation(img: GrayImage, cx: int, cy: int, radius: int) -> float:
    """Angle of the Gaussian-weighted mean gradient in [0, 2*pi).

    Gradients are central differences over pixels strictly inside the patch
    (distance <= radius-1 from the center), weighted with sigma = radius/2.
    A zero mean gradient maps to angle 0.
    """
    if not (radius <= cx < img.width - radius and radius <= cy < img.height - radius):
        raise DataError(
            f"radius-{radius} patch at ({cx}, {cy}) leaves the "
            f"{img.width}x{img.height} image"
        )
    px = img.pixels
    offsets, weights = _orientation_weights(radius)
    xs = cx + offsets[:, 0]
    ys = cy + offsets[:, 1]
    gx = float(np.sum(weights * (px[ys, xs + 1] - px[ys, xs - 1]) * 0.5))
    gy = float(np.sum(weights * (px[ys + 1, xs] - px[ys - 1, xs]) * 0.5))
    if gx == 0.0 and gy == 0.0:
        return 0.0
    theta = math.atan2(gy, gx)
    return theta + _TWO_PI if theta < 0.0 else theta


@njit(cache=True)
def _extract_kernel(px, xs, ys, orient_off, orient_w, ring_off, ring_starts,
                    u2_table, out):  # pragma: no cover - exercised via wrappers
    for i in range(xs.shape[0]):
        cx = xs[i]
        cy = ys[i]
        gx = 0.0
        gy = 0.0
        for j in range(orient_off.shape[0]):
            x = cx + orient_off[j, 0]
            y = cy + orient_off[j, 1]
            w = orient_w[j]
            gx += w * (px[y, x + 1] - px[y, x - 1]) * 0.5
            gy += w * (px[y + 1, x] - px[y - 1, x]) * 0.5
        if gx == 0.0 and gy == 0.0:
            theta = 0.0
        else:
            theta = math.atan2(gy, gx)
            if theta < 0.0:
                theta += _TWO_PI

        for ring in range(RING_COUNT):
            rr = float(ring + 1)
            base = RING_BINS * ring
            offx = np.empty(RING_NEIGHBORS)
            offy = np.empty(RING_NEIGHBORS)
            for k in range(RING_NEIGHBORS):
                phi = theta + _TWO_PI * k / RING_NEIGHBORS
                offx[k] = rr * math.cos(phi)
                offy[k] = rr * math.sin(phi)
            for j in range(ring_starts[ring], ring_starts[ring + 1]):
                x = cx + ring_off[j, 0]
                y = cy + ring_off[j, 1]
                g0 = px[y, x]
                code = 0
                for k in range(RING_NEIGHBORS):
                    sx = x + offx[k]
                    sy = y + offy[k]
                    x0 = int(math.floor(sx))
                    y0 = int(math.floor(sy))
                    fx = sx - x0
                    fy = sy - y0
                    x1 = x0 + 1 if fx > 0.0 else x0
                    y1 = y0 + 1 if fy > 0.0 else y0
                    top = px[y0, x0] + fx * (px[y0, x1] - px[y0, x0])
                    bot = px[y1, x0] + fx * (px[y1, x1] - px[y1, x0])
                    val = top + fy * (bot - top)
                    if val >= g0:
                        code |= 1 << k
                out[i, base + u2_table[code]] += 1.0

        for ring in range(RING_COUNT):
            base = RING_BINS * ring
            total = 0.0
            for b in range(RING_BINS):
                total += out[i, base + b]
            for b in range(RING_BINS):
                out[i, base + b] /= total


def _extract_at_centers(px: np.ndarray, centers: np.ndarray, grid: SamplingGrid) -> np.ndarray:
    out = np.zeros((len(centers), DESCRIPTOR_DIM), dtype=np.float64)
    if len(centers) == 0:
        return out
    orient_off, orient_w = _orientation_weights(grid.radius)
    ring_off, ring_starts = _ring_offsets(grid.radius)
    xs = np.ascontiguousarray(centers[:, 0], dtype=np.int64)
    ys = np.ascontiguousarray(centers[:, 1], dtype=np.int64)
    _extract_kernel(px, xs, ys, orient_off, orient_w, ring_off, ring_starts,
                    _U2_TABLE, out)
    return out


def load_at(img: GrayImage, cx: int, cy: int, grid: SamplingGrid) -> np.ndarray:
    """Descriptor for the single patch centered at (cx, cy)."""
    r = grid.radius
    if not (r <= cx < img.width - r and r <= cy < img.height - r):
        raise DataError(
            f"radius-{r} patch at ({cx}, {cy}) leaves the {img.width}x{img.height} image"
        )
    centers = np.array([[cx, cy]], dtype=np.int64)
    return _extract_at_centers(img.pixels, centers, grid)[0]


@dataclass(frozen=True)
class DescriptorSet:
    """Descriptor rows plus (level, x, y) provenance for each row."""

    descriptors: np.ndarray
    provenance: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.descriptors, dtype=np.float64)
        p = np.asarray(self.provenance, dtype=np.uint16)
        if d.ndim != 2 or p.ndim != 2 or p.shape != (d.shape[0], 3):
            raise DataError(
                f"descriptor/provenance shape mismatch: {d.shape} vs {p.shape}"
            )
        object.__setattr__(self, "descriptors", d)
        object.__setattr__(self, "provenance", p)

    @property
    def count(self) -> int:
        return self.descriptors.shape[0]

    @property
    def dim(self) -> int:
        return self.descriptors.shape[1]


def extract_all(stack: ScaleStack, grid: SamplingGrid) -> DescriptorSet:
    """Dense descriptors for every stack level, level-major then row-major."""
    blocks = []
    rows = []
    for level_idx, level in enumerate(stack.levels):
        centers = np.array(dense_sample(level, grid), dtype=np.int64).reshape(-1, 2)
        blocks.append(_extract_at_centers(level.pixels, centers, grid))
        for x, y in centers:
            rows.append((level_idx, x, y))
    if blocks:
        descriptors = np.concatenate(blocks, axis=0)
    else:
        descriptors = np.zeros((0, DESCRIPTOR_DIM))
    provenance = np.array(rows, dtype=np.uint16).reshape(-1, 3)
    return DescriptorSet(descriptors=descriptors, provenance=provenance)


def save_descriptors(dset: DescriptorSet, path) -> None:
    """Write the binary descriptor container (f32 rows + u16 provenance)."""
    path = Path(path)
    with path.open("wb") as fh:
        fh.write(struct.pack("<IQ", dset.dim, dset.count))
        fh.write(dset.descriptors.astype("<f4").tobytes())
        fh.write(dset.provenance.astype("<u2").tobytes())


def save_vector_rows(values: np.ndarray, path) -> None:
    """Write generic feature rows: CSV for .csv paths, otherwise the binary
    descriptor container with zeroed provenance."""
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2:
        raise DataError(f"feature rows must be 2-D, got shape {values.shape}")
    path = Path(path)
    if path.suffix.lower() == ".csv":
        np.savetxt(path, values, delimiter=",", fmt="%.9g")
        return
    prov = np.zeros((values.shape[0], 3), dtype=np.uint16)
    save_descriptors(DescriptorSet(descriptors=values, provenance=prov), path)


def load_vector_rows(path) -> np.ndarray:
    """Read feature rows written by save_vector_rows (binary or CSV)."""
    path = Path(path)
    if path.suffix.lower() == ".csv":
        try:
            values = np.loadtxt(path, delimiter=",", dtype=np.float64, ndmin=2)
        except ValueError as exc:
            raise DataError(f"{path}: malformed feature CSV: {exc}") from None
        return values
    return load_descriptors(path).descriptors


def load_descriptors(path) -> DescriptorSet:
    path = Path(path)
    buf = path.read_bytes()
    if len(buf) < 12:
        raise DataError(f"{path}: descriptor file truncated")
    dim, count = struct.unpack_from("<IQ", buf, 0)
    values_bytes = 4 * dim * count
    prov_bytes = 6 * count
    if len(buf) != 12 + values_bytes + prov_bytes:
        raise DataError(
            f"{path}: descriptor file size {len(buf)} does not match "
            f"header ({count} x {dim})"
        )
    values = np.frombuffer(buf, dtype="<f4", count=dim * count, offset=12)
    prov = np.frombuffer(buf, dtype="<u2", count=3 * count, offset=12 + values_bytes)
    return DescriptorSet(
        descriptors=values.reshape(count, dim).astype(np.float64),
        provenance=prov.reshape(count, 3).copy(),
    )
