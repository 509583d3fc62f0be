"""Leave-one-specimen-out evaluation and its metrics.

Folds are defined by specimen id so no specimen contributes to both sides
of a split.  All fold-dependent fitting (encoder, classifier) happens on
the training side only.  Two mean-class-accuracy numbers are reported:
`mca_counts` recomputed from the summed confusion matrix (the headline
number) and `mca_foldmean`, the unweighted mean of per-fold MCAs; they
differ whenever folds have unbalanced class populations.
"""

from __future__ import annotations

import csv
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import RunConfig
from .errors import DataError
from .pipeline import (
    STAGE_SVM,
    encode_image,
    fit_encoder,
    image_descriptors,
    image_stack,
    lbp_vector,
    load_gray,
    stage_seed,
    train_classifier,
)
from .svm import FeatureMatrix, predict

CANONICAL_CLASSES = (
    "Homogeneous",
    "Speckled",
    "Nucleolar",
    "Centromere",
    "Golgi",
    "Nuclear Membrane",
)

_FOLD_ENCODER = 10
_FOLD_SVM = 20


@dataclass(frozen=True)
class DatasetManifest:
    """Rows of (image path, class label, specimen id)."""

    paths: tuple[str, ...]
    labels: tuple[str, ...]
    specimens: tuple[str, ...]

    def __post_init__(self):
        n = len(self.paths)
        if n == 0:
            raise DataError("manifest is empty")
        if len(self.labels) != n or len(self.specimens) != n:
            raise DataError("manifest columns have mismatched lengths")
        owner: dict[str, str] = {}
        for label, spec in zip(self.labels, self.specimens):
            if not spec:
                raise DataError("manifest row has an empty specimen id")
            if not label:
                raise DataError("manifest row has an empty label")
            if owner.setdefault(spec, label) != label:
                raise DataError(
                    f"specimen '{spec}' appears under classes "
                    f"'{owner[spec]}' and '{label}'"
                )

    @property
    def rows(self) -> int:
        return len(self.paths)

    def class_names(self) -> tuple[str, ...]:
        present = set(self.labels)
        if present <= set(CANONICAL_CLASSES):
            return tuple(c for c in CANONICAL_CLASSES if c in present)
        return tuple(sorted(present))

    def label_ids(self) -> np.ndarray:
        index = {name: i for i, name in enumerate(self.class_names())}
        return np.array([index[label] for label in self.labels], dtype=np.int64)


def load_manifest(path) -> tuple[DatasetManifest, Path]:
    """Read a `path,label,specimen` CSV; image paths resolve against its directory."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"no such manifest: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: manifest is empty") from None
        if [h.strip().lower() for h in header] != ["path", "label", "specimen"]:
            raise DataError(
                f"{path}: manifest header must be 'path,label,specimen', got {header}"
            )
        rows = [row for row in reader if row]
    for i, row in enumerate(rows):
        if len(row) != 3:
            raise DataError(f"{path}: row {i + 2} has {len(row)} fields, expected 3")
    if not rows:
        raise DataError(f"{path}: manifest has no data rows")
    manifest = DatasetManifest(
        paths=tuple(r[0].strip() for r in rows),
        labels=tuple(r[1].strip() for r in rows),
        specimens=tuple(r[2].strip() for r in rows),
    )
    return manifest, path.parent


def save_manifest(manifest: DatasetManifest, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["path", "label", "specimen"])
        for row in zip(manifest.paths, manifest.labels, manifest.specimens):
            writer.writerow(row)


def loso_splits(manifest: DatasetManifest) -> list[tuple[str, np.ndarray, np.ndarray]]:
    """One (specimen, train_indices, test_indices) fold per specimen, sorted by id."""
    specs = np.array(manifest.specimens)
    folds = []
    for spec in sorted(set(manifest.specimens)):
        test = np.flatnonzero(specs == spec)
        train = np.flatnonzero(specs != spec)
        folds.append((spec, train, test))
    return folds


def confusion_matrix(truth: np.ndarray, pred: np.ndarray, num_classes: int) -> np.ndarray:
    """Counts with rows indexed by true class, columns by prediction."""
    truth = np.asarray(truth, dtype=np.int64)
    pred = np.asarray(pred, dtype=np.int64)
    if truth.shape != pred.shape:
        raise DataError(f"truth/prediction length mismatch: {truth.shape} vs {pred.shape}")
    if truth.size and not (
        0 <= truth.min() and truth.max() < num_classes
        and 0 <= pred.min() and pred.max() < num_classes
    ):
        raise DataError(f"labels out of range for {num_classes} classes")
    cm = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(cm, (truth, pred), 1)
    return cm


def confusion_percentages(cm: np.ndarray) -> np.ndarray:
    """Each row rescaled to percentages; empty rows stay zero."""
    cm = np.asarray(cm, dtype=np.float64)
    sums = cm.sum(axis=1, keepdims=True)
    return np.divide(cm * 100.0, sums, out=np.zeros_like(cm), where=sums > 0)


def mca(cm: np.ndarray) -> float:
    """Mean per-class recall over classes that have at least one true row."""
    cm = np.asarray(cm, dtype=np.float64)
    sums = cm.sum(axis=1)
    present = sums > 0
    if not np.any(present):
        raise DataError("confusion matrix has no populated rows")
    recalls = np.diag(cm)[present] / sums[present]
    return float(recalls.mean())


def _bow_fold_features(blocks, train_idx, cfg, encoder_seed):
    encoder = fit_encoder([blocks[i] for i in train_idx], cfg, encoder_seed)
    return np.stack([encode_image(encoder, block, cfg) for block in blocks])


def run_loso(manifest: DatasetManifest, cfg: RunConfig, *, base_dir=None,
             features=None, progress=None) -> dict:
    """Full leave-one-specimen-out evaluation under the given config.

    features: optional precomputed per-image features; a (rows, dim) array
    for the lbp framework or a list of per-image descriptor arrays for bow.
    Folds whose training side is missing a class are skipped with a warning.
    """
    framework = cfg["framework"]
    class_names = manifest.class_names()
    num_classes = len(class_names)
    y = manifest.label_ids()
    root = cfg["seed"]

    if features is None:
        features = compute_manifest_features(manifest, cfg, base_dir=base_dir,
                                             progress=progress)
    if framework == "lbp":
        matrix = np.asarray(features, dtype=np.float64)
        if matrix.shape[0] != manifest.rows:
            raise DataError(
                f"got {matrix.shape[0]} feature rows for {manifest.rows} manifest rows"
            )
    else:
        if len(features) != manifest.rows:
            raise DataError(
                f"got {len(features)} descriptor sets for {manifest.rows} manifest rows"
            )

    folds = loso_splits(manifest)

    def run_fold(fold_idx):
        spec, train_idx, test_idx = folds[fold_idx]
        missing = sorted(set(range(num_classes)) - set(y[train_idx].tolist()))
        if missing:
            names = [class_names[m] for m in missing]
            warnings.warn(
                f"skipping fold '{spec}': classes missing from training side: {names}"
            )
            return {"specimen": spec, "status": "skipped", "missing_classes": names,
                    "rows": int(test_idx.size)}
        fold_seed = stage_seed(root, STAGE_SVM, fold_idx)
        if framework == "lbp":
            train_x, test_x = matrix[train_idx], matrix[test_idx]
        else:
            fvs = _bow_fold_features(features, train_idx, cfg,
                                     stage_seed(root, _FOLD_ENCODER, fold_idx))
            train_x, test_x = fvs[train_idx], fvs[test_idx]
        fm = FeatureMatrix(values=train_x, labels=y[train_idx])
        model = train_classifier(fm, cfg, seed=fold_seed)
        pred = np.atleast_1d(predict(model, test_x))
        cm = confusion_matrix(y[test_idx], pred, num_classes)
        return {"specimen": spec, "status": "ok", "rows": int(test_idx.size),
                "confusion": cm.tolist(), "mca": mca(cm)}

    if cfg["jobs"] > 1:
        with ThreadPoolExecutor(max_workers=cfg["jobs"]) as pool:
            per_fold = list(pool.map(run_fold, range(len(folds))))
    else:
        per_fold = []
        for i in range(len(folds)):
            per_fold.append(run_fold(i))
            if progress is not None:
                progress(f"fold {i + 1}/{len(folds)} ({folds[i][0]}) done")

    aggregate = np.zeros((num_classes, num_classes), dtype=np.int64)
    fold_mcas = []
    skipped = []
    for entry in per_fold:
        if entry["status"] == "ok":
            aggregate += np.array(entry["confusion"], dtype=np.int64)
            fold_mcas.append(entry["mca"])
        else:
            skipped.append(entry["specimen"])
    executed = len(fold_mcas)
    return {
        "framework": framework,
        "classes": list(class_names),
        "per_fold": per_fold,
        "executed_folds": executed,
        "skipped_folds": skipped,
        "aggregate_confusion": aggregate.tolist(),
        "mca_counts": mca(aggregate) if executed else None,
        "mca_foldmean": float(np.mean(fold_mcas)) if executed else None,
    }


def compute_manifest_features(manifest: DatasetManifest, cfg: RunConfig, *,
                              base_dir=None, progress=None):
    """Per-image features for every manifest row, in row order."""
    base = Path(base_dir) if base_dir is not None else Path(".")
    out = []
    for i, rel in enumerate(manifest.paths):
        img = load_gray(base / rel, cfg)
        stack = image_stack(img, cfg)
        if cfg["framework"] == "lbp":
            out.append(lbp_vector(stack, cfg))
        else:
            dset = image_descriptors(img, cfg)
            out.append(dset.descriptors)
        if progress is not None and (i + 1) % 50 == 0:
            progress(f"features {i + 1}/{manifest.rows}")
    if cfg["framework"] == "lbp":
        return np.stack(out)
    return out


def sweep_filter_counts(manifest: DatasetManifest, cfg: RunConfig, counts,
                        *, base_dir=None, progress=None) -> list[tuple[int, dict]]:
    """LOSO results per scale-stack depth, extracting features only once.

    Every level filters the original image independently, so features for a
    shallower stack are an exact prefix (lbp) or provenance subset (bow) of
    the deepest one.
    """
    counts = sorted(set(int(c) for c in counts))
    top = cfg.override(gss__count=counts[-1])
    results = []
    if cfg["framework"] == "lbp":
        per_level = top.lbp_config().dims
        full = compute_manifest_features(manifest, top, base_dir=base_dir,
                                         progress=progress)
        for count in counts:
            sub_cfg = cfg.override(gss__count=count)
            sliced = full[:, : per_level * (count + 1)]
            results.append((count, run_loso(manifest, sub_cfg, features=sliced,
                                            progress=progress)))
    else:
        base = Path(base_dir) if base_dir is not None else Path(".")
        cache = []
        for i, rel in enumerate(manifest.paths):
            dset = image_descriptors(load_gray(base / rel, top), top)
            cache.append((dset.descriptors.astype(np.float32),
                          dset.provenance[:, 0].copy()))
            if progress is not None and (i + 1) % 50 == 0:
                progress(f"features {i + 1}/{manifest.rows}")
        for count in counts:
            sub_cfg = cfg.override(gss__count=count)
            sliced = [values[levels <= count] for values, levels in cache]
            results.append((count, run_loso(manifest, sub_cfg, features=sliced,
                                            progress=progress)))
    return results
