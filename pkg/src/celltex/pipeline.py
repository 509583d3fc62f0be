"""Glue between the core stages: seeds, per-image features, fold training.

Seeds for every randomized stage derive from the root seed plus a fixed
stage key, so results are reproducible regardless of execution order or
worker count.
"""

from __future__ import annotations

import numpy as np

from .config import RunConfig
from .descriptors import DescriptorSet, extract_all
from .encoding import EncoderModel, apply_pca, encode_fv, fit_gmm, fit_pca
from .errors import DataError
from .image import GrayImage, enhance, load_image
from .lbp import gss_lbp_representation
from .scalespace import ScaleStack, build_scale_stack
from .svm import FeatureMatrix, SVMModel, train_svm

# Stage keys for seed derivation.
STAGE_SUBSAMPLE = 1
STAGE_GMM = 2
STAGE_SVM = 3
STAGE_SYNTH = 4


def stage_seed(root: int, *parts: int) -> int:
    """Deterministic child seed for a (root, stage, ...) key."""
    ss = np.random.SeedSequence([root, *parts])
    return int(ss.generate_state(1, np.uint64)[0])


def load_gray(path, cfg: RunConfig) -> GrayImage:
    img = load_image(path, color=cfg["image.color"])
    if cfg["image.enhance"]:
        img = enhance(img)
    return img


def image_stack(img: GrayImage, cfg: RunConfig) -> ScaleStack:
    return build_scale_stack(img, cfg.scale_config())


def lbp_vector(stack: ScaleStack, cfg: RunConfig) -> np.ndarray:
    return gss_lbp_representation(stack, cfg.lbp_config())


def image_descriptors(img: GrayImage, cfg: RunConfig) -> DescriptorSet:
    return extract_all(image_stack(img, cfg), cfg.sampling_grid())


def subsample_rows(counts: list[int], cap: int, seed: int) -> list[np.ndarray]:
    """Pick <= cap global row indices uniformly across blocks of given sizes.

    Returns one sorted index array per block, so callers can gather without
    materializing the concatenated pool.
    """
    total = int(sum(counts))
    if total == 0:
        raise DataError("descriptor pool is empty")
    starts = np.cumsum([0] + list(counts))
    if total <= cap:
        return [np.arange(c, dtype=np.int64) for c in counts]
    rng = np.random.default_rng(seed)
    chosen = np.sort(rng.choice(total, size=cap, replace=False))
    out = []
    for i, count in enumerate(counts):
        lo, hi = np.searchsorted(chosen, [starts[i], starts[i + 1]])
        out.append(chosen[lo:hi] - starts[i])
    return out


def fit_encoder(blocks: list[np.ndarray], cfg: RunConfig, seed: int) -> EncoderModel:
    """Fit PCA plus GMM codebook(s) on a capped uniform subsample of blocks."""
    counts = [b.shape[0] for b in blocks]
    picks = subsample_rows(counts, cfg["encode.pool_cap"],
                           stage_seed(seed, STAGE_SUBSAMPLE))
    pool = np.concatenate(
        [np.asarray(b, dtype=np.float64)[idx] for b, idx in zip(blocks, picks)
         if idx.size], axis=0)
    pca = fit_pca(pool, cfg["encode.pca_dim"])
    projected = apply_pca(pca, pool)
    gmms = tuple(
        fit_gmm(projected, cfg["encode.gmm_k"], stage_seed(seed, STAGE_GMM, book),
                tol=cfg["encode.em_tol"], max_iter=cfg["encode.em_iters"])
        for book in range(cfg["encode.codebooks"])
    )
    echo = {str(k): v for k, v in cfg.resolved().items()}
    return EncoderModel(pca=pca, gmms=gmms, config_echo=echo)


def encode_image(model: EncoderModel, descriptors, cfg: RunConfig) -> np.ndarray:
    return encode_fv(model, descriptors, power=cfg["encode.power"])


def train_classifier(data: FeatureMatrix, cfg: RunConfig, seed: int) -> SVMModel:
    """Train the one-vs-rest SVM; optional standardization is folded into
    the returned hyperplanes so prediction runs on raw features."""
    values = data.values
    if cfg["svm.standardize"]:
        mean = values.mean(axis=0)
        scale = values.std(axis=0)
        scale = np.where(scale > 0, scale, 1.0)
        scaled = FeatureMatrix(values=(values - mean) / scale, labels=data.labels,
                               specimens=data.specimens)
        model = train_svm(scaled, C=cfg["svm.c"], seed=stage_seed(seed, STAGE_SVM),
                          tol=cfg["svm.tol"], max_epochs=cfg["svm.epochs"])
        weights = model.weights / scale
        biases = model.biases - weights @ mean
        return SVMModel(weights=weights, biases=biases, C=model.C,
                        diagnostics=model.diagnostics)
    return train_svm(data, C=cfg["svm.c"], seed=stage_seed(seed, STAGE_SVM),
                     tol=cfg["svm.tol"], max_epochs=cfg["svm.epochs"])
