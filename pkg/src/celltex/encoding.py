"""Descriptor encoding: PCA reduction, diagonal GMM codebook, Fisher vectors.

The improved-Fisher-vector pipeline: descriptors are PCA-projected, a
diagonal-covariance GMM is fit with EM on a training pool, and each image
is encoded by the normalized gradient statistics of its descriptors under
that model (first and second moments only), followed by signed power and
L2 normalization.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError, NumericError

POSTERIOR_FLOOR = 1e-10
_CHUNK = 65536


@dataclass(frozen=True)
class PCAModel:
    """Mean vector plus an orthonormal column basis (in_dim x out_dim)."""

    mean: np.ndarray
    basis: np.ndarray

    @property
    def in_dim(self) -> int:
        return self.basis.shape[0]

    @property
    def out_dim(self) -> int:
        return self.basis.shape[1]


def fit_pca(pool: np.ndarray, out_dim: int) -> PCAModel:
    """Eigendecomposition of the pool covariance, components by falling variance.

    Each basis column is sign-fixed so its largest-magnitude entry is positive.
    """
    pool = np.asarray(pool, dtype=np.float64)
    if pool.ndim != 2:
        raise DataError(f"PCA pool must be 2-D, got shape {pool.shape}")
    n, dim = pool.shape
    if not 1 <= out_dim <= dim:
        raise DataError(f"PCA output dim must be in 1..{dim}, got {out_dim}")
    if n <= out_dim:
        raise DataError(f"PCA needs more than {out_dim} samples, got {n}")
    mean = pool.mean(axis=0)
    centered = pool - mean
    cov = centered.T @ centered / (n - 1)
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1]
    eigvals = eigvals[order]
    eigvecs = eigvecs[:, order]
    tol = max(n, dim) * np.finfo(np.float64).eps * max(eigvals[0], 0.0)
    rank = int(np.sum(eigvals > tol))
    if rank < out_dim:
        raise NumericError(
            f"PCA pool has rank {rank}, cannot extract {out_dim} components"
        )
    basis = eigvecs[:, :out_dim].copy()
    flip = basis[np.abs(basis).argmax(axis=0), np.arange(out_dim)] < 0
    basis[:, flip] *= -1.0
    return PCAModel(mean=mean, basis=basis)


def apply_pca(model: PCAModel, x: np.ndarray) -> np.ndarray:
    """Project rows (or a single vector) onto the PCA basis."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != model.in_dim:
        raise DataError(f"expected dim {model.in_dim}, got {x.shape[-1]}")
    return (x - model.mean) @ model.basis


@dataclass(frozen=True)
class GMMModel:
    """Diagonal-covariance mixture: weights (k,), means/variances (k, dim)."""

    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray
    log_likelihoods: tuple[float, ...] = field(default=(), compare=False)

    @property
    def k(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]


def _log_gaussians(x: np.ndarray, gmm_weights, means, variances) -> np.ndarray:
    """Per-sample, per-component joint log density log w_k + log N(x | k)."""
    inv = 1.0 / variances
    const = np.log(gmm_weights) - 0.5 * (
        means.shape[1] * math.log(2.0 * math.pi) + np.sum(np.log(variances), axis=1)
    )
    # ||(x - mu)/sigma||^2 expanded so the N x K part is a single matmul.
    quad = (
        (x * x) @ inv.T
        - 2.0 * (x @ (means * inv).T)
        + np.sum(means * means * inv, axis=1)
    )
    return const - 0.5 * quad


def _posteriors(x, weights, means, variances):
    logp = _log_gaussians(x, weights, means, variances)
    mx = logp.max(axis=1, keepdims=True)
    shifted = np.exp(logp - mx)
    total = shifted.sum(axis=1, keepdims=True)
    ll = float(np.sum(np.log(total) + mx))
    return shifted / total, ll


def _kmeanspp(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = x.shape[0]
    centers = np.empty((k, x.shape[1]))
    centers[0] = x[rng.integers(n)]
    d2 = np.sum((x - centers[0]) ** 2, axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total > 0:
            idx = int(rng.choice(n, p=d2 / total))
        else:
            idx = int(rng.integers(n))
        centers[j] = x[idx]
        d2 = np.minimum(d2, np.sum((x - centers[j]) ** 2, axis=1))
    return centers


def fit_gmm(pool: np.ndarray, k: int, seed: int, tol: float = 1e-5,
            max_iter: int = 100) -> GMMModel:
    """EM fit with k-means++ seeding; stops on relative gain < tol.

    Variances are floored at 1e-4 times the mean per-dimension pool variance,
    which keeps the M-step a constrained maximizer, so the log-likelihood is
    non-decreasing (asserted every iteration).
    """
    pool = np.asarray(pool, dtype=np.float64)
    if pool.ndim != 2:
        raise DataError(f"GMM pool must be 2-D, got shape {pool.shape}")
    n, dim = pool.shape
    if k < 1:
        raise DataError(f"component count must be >= 1, got {k}")
    if n < 10 * k:
        raise DataError(f"GMM pool too small: {n} samples for k={k} (need >= {10 * k})")
    pool_var = pool.var(axis=0)
    if not np.any(pool_var > 0):
        raise NumericError("GMM pool is degenerate: all rows identical")
    floor = 1e-4 * float(pool_var.mean())

    rng = np.random.default_rng(seed)
    means = _kmeanspp(pool, k, rng)
    variances = np.tile(np.maximum(pool_var, floor), (k, 1))
    weights = np.full(k, 1.0 / k)

    history: list[float] = []
    while True:
        nk = np.zeros(k)
        s1 = np.zeros((k, dim))
        s2 = np.zeros((k, dim))
        ll = 0.0
        for lo in range(0, n, _CHUNK):
            chunk = pool[lo: lo + _CHUNK]
            gamma, chunk_ll = _posteriors(chunk, weights, means, variances)
            ll += chunk_ll
            nk += gamma.sum(axis=0)
            s1 += gamma.T @ chunk
            s2 += gamma.T @ (chunk * chunk)
        if history and ll < history[-1] - 1e-9 * max(1.0, abs(history[-1])):
            raise NumericError(
                f"EM log-likelihood decreased: {history[-1]} -> {ll}"
            )
        gain = math.inf if not history else (ll - history[-1]) / max(abs(history[-1]), 1e-12)
        history.append(ll)
        # Returned parameters always correspond to the last history entry.
        if gain < tol or len(history) >= max_iter:
            break
        nk = np.maximum(nk, 1e-300)
        weights = np.maximum(nk / n, 1e-12)
        weights /= weights.sum()
        means = s1 / nk[:, None]
        variances = np.maximum(s2 / nk[:, None] - means ** 2, floor)

    return GMMModel(weights=weights, means=means, variances=variances,
                    log_likelihoods=tuple(history))


def fisher_vector(pca: PCAModel, gmm: GMMModel, descriptors, power: float = 0.5) -> np.ndarray:
    """Improved Fisher vector of a descriptor set: length 2 * k * dim.

    Layout is all first-order blocks (component-major) followed by all
    second-order blocks.  Posteriors below 1e-10 are dropped from the
    accumulation.  The result is signed-power transformed (exponent
    `power`) and L2-normalized.
    """
    raw = getattr(descriptors, "descriptors", descriptors)
    raw = np.asarray(raw, dtype=np.float64)
    if raw.ndim != 2 or raw.shape[0] == 0:
        raise DataError(f"need a non-empty 2-D descriptor array, got shape {raw.shape}")
    x = apply_pca(pca, raw)
    n = x.shape[0]
    gamma, _ = _posteriors(x, gmm.weights, gmm.means, gmm.variances)
    gamma = np.where(gamma < POSTERIOR_FLOOR, 0.0, gamma)

    nk = gamma.sum(axis=0)
    gx = gamma.T @ x
    gx2 = gamma.T @ (x * x)
    sigma = np.sqrt(gmm.variances)
    moment1 = (gx - nk[:, None] * gmm.means) / sigma
    moment2 = (
        gx2 - 2.0 * gmm.means * gx + nk[:, None] * gmm.means ** 2
    ) / gmm.variances - nk[:, None]

    u = moment1 / (n * np.sqrt(gmm.weights)[:, None])
    v = moment2 / (n * np.sqrt(2.0 * gmm.weights)[:, None])
    fv = np.concatenate([u.ravel(), v.ravel()])

    fv = np.sign(fv) * np.abs(fv) ** power
    norm = float(np.linalg.norm(fv))
    if norm == 0.0 or not math.isfinite(norm):
        raise NumericError("Fisher vector has zero or non-finite norm")
    return fv / norm


@dataclass(frozen=True)
class EncoderModel:
    """PCA projection plus one or more GMM codebooks and a config echo."""

    pca: PCAModel
    gmms: tuple[GMMModel, ...]
    config_echo: dict

    def __post_init__(self):
        if not self.gmms:
            raise DataError("encoder needs at least one codebook")

    @property
    def fv_dim(self) -> int:
        return sum(2 * g.k * g.dim for g in self.gmms)


def encode_fv(model: EncoderModel, descriptors, power: float = 0.5) -> np.ndarray:
    """Fisher vector under each codebook, concatenated and re-normalized."""
    parts = [fisher_vector(model.pca, g, descriptors, power=power) for g in model.gmms]
    if len(parts) == 1:
        return parts[0]
    fv = np.concatenate(parts)
    return fv / np.linalg.norm(fv)


_ENCODER_MAGIC = b"CTEN"
_ENCODER_VERSION = 1


def save_encoder(model: EncoderModel, path) -> None:
    """Self-describing binary container; all floats little-endian f64."""
    path = Path(path)
    echo = json.dumps(model.config_echo, sort_keys=True).encode("utf-8")
    with path.open("wb") as fh:
        fh.write(_ENCODER_MAGIC)
        fh.write(struct.pack("<IIII", _ENCODER_VERSION, model.pca.in_dim,
                             model.pca.out_dim, len(model.gmms)))
        fh.write(model.pca.mean.astype("<f8").tobytes())
        fh.write(model.pca.basis.astype("<f8").tobytes())
        for g in model.gmms:
            fh.write(struct.pack("<I", g.k))
            fh.write(g.weights.astype("<f8").tobytes())
            fh.write(g.means.astype("<f8").tobytes())
            fh.write(g.variances.astype("<f8").tobytes())
        fh.write(struct.pack("<Q", len(echo)))
        fh.write(echo)


def load_encoder(path) -> EncoderModel:
    path = Path(path)
    with path.open("rb") as fh:
        if fh.read(4) != _ENCODER_MAGIC:
            raise DataError(f"{path}: not an encoder model file")
        version, in_dim, out_dim, n_books = struct.unpack("<IIII", fh.read(16))
        if version != _ENCODER_VERSION:
            raise DataError(f"{path}: unsupported encoder version {version}")

        def arr(count):
            buf = fh.read(8 * count)
            if len(buf) != 8 * count:
                raise DataError(f"{path}: encoder file truncated")
            return np.frombuffer(buf, dtype="<f8").astype(np.float64)

        mean = arr(in_dim)
        basis = arr(in_dim * out_dim).reshape(in_dim, out_dim)
        gmms = []
        for _ in range(n_books):
            (k,) = struct.unpack("<I", fh.read(4))
            weights = arr(k)
            means = arr(k * out_dim).reshape(k, out_dim)
            variances = arr(k * out_dim).reshape(k, out_dim)
            gmms.append(GMMModel(weights=weights, means=means, variances=variances))
        (echo_len,) = struct.unpack("<Q", fh.read(8))
        echo = json.loads(fh.read(echo_len).decode("utf-8"))
    return EncoderModel(pca=PCAModel(mean=mean, basis=basis), gmms=tuple(gmms),
                        config_echo=echo)
