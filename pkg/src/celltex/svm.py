"""One-vs-rest linear SVM trained by dual coordinate descent.

L2-regularized hinge loss with the bias handled as an augmented constant
feature (so it is regularized like the weights).  Each binary subproblem
runs coordinate descent over a seeded permutation schedule and stops when
the duality gap falls under tolerance or the epoch cap is reached.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError, NumericError


@dataclass(frozen=True)
class FeatureMatrix:
    """Feature rows with integer class labels and optional specimen ids."""

    values: np.ndarray
    labels: np.ndarray
    specimens: tuple[str, ...] = ()

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        y = np.asarray(self.labels, dtype=np.int64)
        if v.ndim != 2:
            raise DataError(f"feature values must be 2-D, got shape {v.shape}")
        if y.shape != (v.shape[0],):
            raise DataError(f"got {y.shape[0] if y.ndim else 0} labels for {v.shape[0]} rows")
        if self.specimens and len(self.specimens) != v.shape[0]:
            raise DataError(
                f"got {len(self.specimens)} specimen ids for {v.shape[0]} rows"
            )
        if not np.all(np.isfinite(v)):
            raise DataError("feature values contain non-finite entries")
        if v.shape[0] and y.min() < 0:
            raise DataError("labels must be non-negative integers")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "labels", y)

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class SVMModel:
    """Per-class hyperplanes: scores are weights @ x + biases."""

    weights: np.ndarray
    biases: np.ndarray
    C: float
    diagnostics: tuple[dict, ...] = field(default=(), compare=False)

    @property
    def num_classes(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.weights.shape[1]


def _solve_binary(x_aug: np.ndarray, y: np.ndarray, c: float, rng: np.random.Generator,
                  tol: float, max_epochs: int) -> tuple[np.ndarray, dict]:
    """Dual coordinate descent on one binary subproblem; returns augmented w."""
    n, dim = x_aug.shape
    alpha = np.zeros(n)
    w = np.zeros(dim)
    q_diag = np.einsum("ij,ij->i", x_aug, x_aug)
    yx = y[:, None] * x_aug
    gap = np.inf
    epoch = 0
    for epoch in range(1, max_epochs + 1):
        for i in rng.permutation(n):
            g = y[i] * (w @ x_aug[i]) - 1.0
            if alpha[i] == 0.0:
                pg = min(g, 0.0)
            elif alpha[i] == c:
                pg = max(g, 0.0)
            else:
                pg = g
            if pg != 0.0:
                new = min(max(alpha[i] - g / q_diag[i], 0.0), c)
                if new != alpha[i]:
                    w += (new - alpha[i]) * yx[i]
                    alpha[i] = new
        margins = 1.0 - y * (x_aug @ w)
        reg = 0.5 * float(w @ w)
        primal = reg + c * float(np.maximum(margins, 0.0).sum())
        dual = float(alpha.sum()) - reg
        gap = primal - dual
        if gap <= tol * max(1.0, abs(primal)):
            break
    if not np.isfinite(gap):
        raise NumericError("SVM subproblem diverged (non-finite duality gap)")
    return w, {"epochs": epoch, "gap": gap}


def train_svm(data: FeatureMatrix, C: float = 1.0, seed: int = 0,
              tol: float = 1e-4, max_epochs: int = 1000) -> SVMModel:
    """Train one-vs-rest hyperplanes; deterministic for a fixed seed."""
    if not C > 0:
        raise ConfigError(f"C must be positive, got {C}")
    if data.rows < 2:
        raise DataError(f"need at least 2 training rows, got {data.rows}")
    present = np.unique(data.labels)
    if present.size < 2:
        raise DataError("training data contains a single class")
    num_classes = int(present.max()) + 1
    missing = sorted(set(range(num_classes)) - set(present.tolist()))
    if missing:
        raise DataError(f"classes {missing} have no training rows")

    x_aug = np.concatenate([data.values, np.ones((data.rows, 1))], axis=1)
    weights = np.empty((num_classes, data.dim))
    biases = np.empty(num_classes)
    diagnostics = []
    children = np.random.SeedSequence(seed).spawn(num_classes)
    for cls in range(num_classes):
        y = np.where(data.labels == cls, 1.0, -1.0)
        w_aug, diag = _solve_binary(x_aug, y, C, np.random.default_rng(children[cls]),
                                    tol, max_epochs)
        weights[cls] = w_aug[:-1]
        biases[cls] = w_aug[-1]
        diagnostics.append(diag)
    return SVMModel(weights=weights, biases=biases, C=float(C),
                    diagnostics=tuple(diagnostics))


def decision_function(model: SVMModel, x: np.ndarray) -> np.ndarray:
    """Per-class scores for one vector or a matrix of rows."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != model.dim:
        raise DataError(f"expected dim {model.dim}, got {x.shape[-1]}")
    return x @ model.weights.T + model.biases


def predict(model: SVMModel, x: np.ndarray) -> np.ndarray | int:
    """Highest-scoring class; ties resolve to the lowest class id."""
    scores = decision_function(model, x)
    return np.argmax(scores, axis=-1)


def save_svm(model: SVMModel, path) -> None:
    """Binary layout: num_classes u32, dim u64, C f64, weights, biases (f64 LE)."""
    path = Path(path)
    with path.open("wb") as fh:
        fh.write(struct.pack("<IQd", model.num_classes, model.dim, model.C))
        fh.write(model.weights.astype("<f8").tobytes())
        fh.write(model.biases.astype("<f8").tobytes())


def load_svm(path) -> SVMModel:
    path = Path(path)
    buf = path.read_bytes()
    if len(buf) < 20:
        raise DataError(f"{path}: SVM model file truncated")
    num_classes, dim, c = struct.unpack_from("<IQd", buf, 0)
    need = 20 + 8 * num_classes * dim + 8 * num_classes
    if len(buf) != need:
        raise DataError(f"{path}: SVM model file size {len(buf)}, expected {need}")
    weights = np.frombuffer(buf, dtype="<f8", count=num_classes * dim, offset=20)
    biases = np.frombuffer(buf, dtype="<f8", count=num_classes,
                           offset=20 + 8 * num_classes * dim)
    return SVMModel(weights=weights.reshape(num_classes, dim).astype(np.float64),
                    biases=biases.astype(np.float64), C=float(c))
