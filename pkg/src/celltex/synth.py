"""Seeded synthetic texture corpus for self-contained evaluation runs.

Six families with distinct spatial statistics: two oriented gratings
(coarse/fine), two Gaussian blob fields (sparse/dense), a concentric ring
pattern, and band-limited filtered noise.  Each class is split into
specimens that share rendering parameters (frequency, density, gain), so
leave-one-specimen-out folds separate genuinely different draws.  Additive
pixel noise is applied last, before clipping to [0, 1].
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import ConfigError
from .evaluation import DatasetManifest, save_manifest
from .image import GrayImage, save_image
from .pipeline import STAGE_SYNTH, stage_seed

FAMILIES = (
    "grating-coarse",
    "grating-fine",
    "blobs-sparse",
    "blobs-dense",
    "rings",
    "filtered-noise",
)


def _grid(size: int):
    ys, xs = np.mgrid[0:size, 0:size].astype(np.float64)
    return xs, ys


def _grating(size, rng, freq):
    xs, ys = _grid(size)
    theta = rng.uniform(0, np.pi)
    phase = rng.uniform(0, 2 * np.pi)
    wave = np.sin(2 * np.pi * freq * (xs * np.cos(theta) + ys * np.sin(theta)) + phase)
    return 0.5 + 0.4 * wave


def _blobs(size, rng, count, blob_sigma):
    xs, ys = _grid(size)
    img = np.zeros((size, size))
    centers = rng.uniform(0, size, size=(count, 2))
    for cx, cy in centers:
        img += np.exp(-((xs - cx) ** 2 + (ys - cy) ** 2) / (2 * blob_sigma ** 2))
    top = img.max()
    return 0.1 + 0.8 * (img / top if top > 0 else img)


def _rings(size, rng, freq):
    xs, ys = _grid(size)
    cx = size / 2 + rng.uniform(-size / 6, size / 6)
    cy = size / 2 + rng.uniform(-size / 6, size / 6)
    dist = np.sqrt((xs - cx) ** 2 + (ys - cy) ** 2)
    return 0.5 + 0.4 * np.cos(2 * np.pi * freq * dist + rng.uniform(0, 2 * np.pi))


def _filtered_noise(size, rng, smooth_sigma):
    from scipy import ndimage

    white = rng.standard_normal((size, size))
    low = ndimage.gaussian_filter(white, smooth_sigma, mode="nearest")
    lo, hi = low.min(), low.max()
    return (low - lo) / (hi - lo) if hi > lo else np.full_like(low, 0.5)


def _render(family: str, size: int, rng: np.random.Generator, params: dict) -> np.ndarray:
    if family == "grating-coarse" or family == "grating-fine":
        return _grating(size, rng, params["freq"])
    if family == "blobs-sparse" or family == "blobs-dense":
        return _blobs(size, rng, params["count"], params["blob_sigma"])
    if family == "rings":
        return _rings(size, rng, params["freq"])
    return _filtered_noise(size, rng, params["smooth_sigma"])


def _specimen_params(family: str, size: int, rng: np.random.Generator) -> dict:
    jitter = rng.uniform(0.9, 1.1)
    if family == "grating-coarse":
        return {"freq": 0.06 * jitter}
    if family == "grating-fine":
        return {"freq": 0.16 * jitter}
    if family == "blobs-sparse":
        return {"count": max(3, round(size * size * 0.004 * jitter)), "blob_sigma": 2.6 * jitter}
    if family == "blobs-dense":
        return {"count": max(6, round(size * size * 0.016 * jitter)), "blob_sigma": 1.4 * jitter}
    if family == "rings":
        return {"freq": 0.09 * jitter}
    return {"smooth_sigma": 1.3 * jitter}


def generate_corpus(out_dir, seed: int, classes: int = 6, per_class: int = 50,
                    specimens_per_class: int = 5, noise: float = 0.15,
                    size: int = 64) -> DatasetManifest:
    """Write PGM images plus manifest.csv under out_dir; fully seeded."""
    if not 1 <= classes <= len(FAMILIES):
        raise ConfigError(f"classes must be in 1..{len(FAMILIES)}, got {classes}")
    if per_class < specimens_per_class or specimens_per_class < 1:
        raise ConfigError(
            f"need per_class >= specimens_per_class >= 1, got "
            f"{per_class}/{specimens_per_class}"
        )
    if not (0 <= noise < 1):
        raise ConfigError(f"noise must be in [0, 1), got {noise}")
    if size < 32:
        raise ConfigError(f"image size must be >= 32, got {size}")

    out_dir = Path(out_dir)
    image_dir = out_dir / "images"
    image_dir.mkdir(parents=True, exist_ok=True)

    paths, labels, specimens = [], [], []
    for cls_idx in range(classes):
        family = FAMILIES[cls_idx]
        for spec_idx in range(specimens_per_class):
            spec_rng = np.random.default_rng(
                stage_seed(seed, STAGE_SYNTH, cls_idx, spec_idx))
            params = _specimen_params(family, size, spec_rng)
            gain = spec_rng.uniform(0.75, 1.0)
            offset = spec_rng.uniform(0.0, 0.1)
            spec_id = f"{family}-s{spec_idx}"
            lo = spec_idx * per_class // specimens_per_class
            hi = (spec_idx + 1) * per_class // specimens_per_class
            for img_idx in range(lo, hi):
                clean = _render(family, size, spec_rng, params)
                noisy = gain * clean + offset + noise * spec_rng.standard_normal(clean.shape)
                img = GrayImage(np.clip(noisy, 0.0, 1.0), white=1.0)
                name = f"{family}_s{spec_idx}_i{img_idx:03d}.pgm"
                save_image(img, image_dir / name, bit_depth=8)
                paths.append(f"images/{name}")
                labels.append(family)
                specimens.append(spec_id)

    manifest = DatasetManifest(paths=tuple(paths), labels=tuple(labels),
                               specimens=tuple(specimens))
    save_manifest(manifest, out_dir / "manifest.csv")
    return manifest
