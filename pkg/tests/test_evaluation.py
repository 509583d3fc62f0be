"""Leave-one-specimen-out machinery and confusion statistics."""

import warnings

import numpy as np
import pytest

from celltex.config import default_config
from celltex.errors import DataError
from celltex.evaluation import (
    CANONICAL_CLASSES,
    DatasetManifest,
    confusion_matrix,
    confusion_percentages,
    load_manifest,
    loso_splits,
    mca,
    run_loso,
    save_manifest,
)
from celltex.synth import generate_corpus


def toy_manifest(num_specimens=10, images_per=4, classes=("a", "b")):
    paths, labels, specimens = [], [], []
    for s in range(num_specimens):
        cls = classes[s % len(classes)]
        for i in range(images_per):
            paths.append(f"img_{s}_{i}.pgm")
            labels.append(cls)
            specimens.append(f"spec{s:03d}")
    return DatasetManifest(paths=tuple(paths), labels=tuple(labels),
                           specimens=tuple(specimens))


def test_loso_partition_properties():
    manifest = toy_manifest(num_specimens=9, images_per=3, classes=("a", "b", "c"))
    folds = loso_splits(manifest)
    assert [f[0] for f in folds] == sorted({s for s in manifest.specimens})
    n = len(manifest.paths)
    seen_test = np.zeros(n, dtype=int)
    for spec, train_idx, test_idx in folds:
        assert len(np.intersect1d(train_idx, test_idx)) == 0
        assert len(train_idx) + len(test_idx) == n
        assert all(manifest.specimens[i] == spec for i in test_idx)
        assert all(manifest.specimens[i] != spec for i in train_idx)
        seen_test[test_idx] += 1
    assert np.array_equal(seen_test, np.ones(n, dtype=int))


def test_loso_fold_count_full_protocol():
    manifest = toy_manifest(num_specimens=83, images_per=2, classes=("a", "b", "c"))
    assert len(loso_splits(manifest)) == 83


def test_confusion_matrix_hand_counts():
    truth = np.array([0, 0, 1, 1, 2, 2, 2])
    pred = np.array([0, 1, 1, 1, 0, 2, 2])
    cm = confusion_matrix(truth, pred, 3)
    assert cm.tolist() == [[1, 1, 0], [0, 2, 0], [1, 0, 2]]
    with pytest.raises(DataError):
        confusion_matrix(truth, np.array([0, 1, 1, 1, 0, 2, 3]), 3)
    with pytest.raises(DataError):
        confusion_matrix(np.array([-1]), np.array([0]), 3)


def test_confusion_percentages():
    cm = np.array([[3, 1], [0, 0]])
    pct = confusion_percentages(cm)
    assert pct[0].tolist() == [75.0, 25.0]
    assert pct[1].tolist() == [0.0, 0.0]


def test_mca_hand_value():
    cm = np.array([[8, 2], [3, 7]])
    assert mca(cm) == pytest.approx((0.8 + 0.7) / 2)
    with_empty = np.array([[8, 2, 0], [3, 7, 0], [0, 0, 0]])
    assert mca(with_empty) == pytest.approx((0.8 + 0.7) / 2)
    with pytest.raises(DataError):
        mca(np.zeros((3, 3), dtype=int))


def test_mca_uniform_predictions_monte_carlo():
    rng = np.random.default_rng(100)
    n = 10_000
    truth = np.repeat(np.arange(6), n // 6 + 1)[:n]
    pred = rng.integers(0, 6, size=n)
    value = mca(confusion_matrix(truth, pred, 6))
    assert value == pytest.approx(1 / 6, abs=0.03)


def test_manifest_validation():
    with pytest.raises(DataError):
        DatasetManifest(paths=(), labels=(), specimens=())
    with pytest.raises(DataError):
        DatasetManifest(paths=("a.pgm",), labels=("x", "y"), specimens=("s1",))
    # one specimen cannot span two classes
    with pytest.raises(DataError, match="spec1"):
        DatasetManifest(paths=("a.pgm", "b.pgm"), labels=("x", "y"),
                        specimens=("spec1", "spec1"))


def test_manifest_class_ordering():
    canon = DatasetManifest(
        paths=("a", "b", "c"),
        labels=("Golgi", "Homogeneous", "Centromere"),
        specimens=("s1", "s2", "s3"))
    assert canon.class_names() == ("Homogeneous", "Centromere", "Golgi")
    other = DatasetManifest(
        paths=("a", "b"), labels=("zebra", "ant"), specimens=("s1", "s2"))
    assert other.class_names() == ("ant", "zebra")
    ids = canon.label_ids()
    assert ids.tolist() == [2, 0, 1]


def test_canonical_class_list():
    assert CANONICAL_CLASSES == (
        "Homogeneous", "Speckled", "Nucleolar", "Centromere", "Golgi",
        "Nuclear Membrane")


def test_manifest_round_trip(tmp_path):
    manifest = toy_manifest(num_specimens=4)
    path = tmp_path / "manifest.csv"
    save_manifest(manifest, path)
    again, base = load_manifest(path)
    assert again == manifest
    assert base == tmp_path
    bad = tmp_path / "bad.csv"
    bad.write_text("path,label\nx.pgm,a\n")
    with pytest.raises(DataError):
        load_manifest(bad)


@pytest.fixture(scope="module")
def small_corpus(tmp_path_factory):
    out = tmp_path_factory.mktemp("corpus")
    manifest = generate_corpus(out, seed=5, classes=3, per_class=8,
                               specimens_per_class=4, size=40)
    return manifest, out


def lbp_test_config():
    return default_config().override(
        framework="lbp", gss__count=2, lbp__scales="8:1,8:2", seed=0)


def test_run_loso_lbp_end_to_end(small_corpus):
    manifest, base = small_corpus
    cfg = lbp_test_config()
    result = run_loso(manifest, cfg, base_dir=base)
    assert result["framework"] == "lbp"
    assert len(result["classes"]) == 3
    assert result["executed_folds"] == 12
    assert result["skipped_folds"] == []
    cm = np.asarray(result["aggregate_confusion"])
    assert cm.sum() == len(manifest.paths)
    assert 0.0 <= result["mca_counts"] <= 1.0
    assert 0.0 <= result["mca_foldmean"] <= 1.0
    per_fold = result["per_fold"]
    assert len(per_fold) == 12
    assert sum(f["rows"] for f in per_fold) == len(manifest.paths)


def test_run_loso_deterministic(small_corpus):
    manifest, base = small_corpus
    cfg = lbp_test_config()
    a = run_loso(manifest, cfg, base_dir=base)
    b = run_loso(manifest, cfg, base_dir=base)
    assert np.array_equal(a["aggregate_confusion"], b["aggregate_confusion"])
    assert a["mca_counts"] == b["mca_counts"]
    assert a["mca_foldmean"] == b["mca_foldmean"]


def test_run_loso_threaded_matches_serial(small_corpus):
    manifest, base = small_corpus
    cfg = lbp_test_config()
    serial = run_loso(manifest, cfg, base_dir=base)
    threaded = run_loso(manifest, cfg.override(jobs=2), base_dir=base)
    assert np.array_equal(serial["aggregate_confusion"],
                          threaded["aggregate_confusion"])
    assert serial["mca_counts"] == threaded["mca_counts"]


def test_run_loso_skips_fold_missing_a_train_class(small_corpus, tmp_path):
    manifest, base = small_corpus
    # keep one specimen of class 0 so its fold trains without that class
    keep = [i for i, s in enumerate(manifest.specimens)
            if manifest.labels[i] != manifest.labels[0] or s == manifest.specimens[0]]
    sub = DatasetManifest(
        paths=tuple(manifest.paths[i] for i in keep),
        labels=tuple(manifest.labels[i] for i in keep),
        specimens=tuple(manifest.specimens[i] for i in keep))
    cfg = lbp_test_config()
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        result = run_loso(sub, cfg, base_dir=base)
    assert result["skipped_folds"] == [manifest.specimens[0]]
    assert result["executed_folds"] == len(set(sub.specimens)) - 1
    assert any("skip" in str(w.message).lower() for w in caught)
    # the skipped specimen's rows contribute nothing to the aggregate
    skipped_rows = sub.specimens.count(manifest.specimens[0])
    assert np.asarray(result["aggregate_confusion"]).sum() == len(sub.paths) - skipped_rows


def test_run_loso_all_folds_skipped():
    # two specimens, each owning one class: every fold lacks a train class
    manifest = DatasetManifest(
        paths=("x0.pgm", "x1.pgm"), labels=("a", "b"), specimens=("s0", "s1"))
    features = np.eye(2)
    cfg = lbp_test_config()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        result = run_loso(manifest, cfg, features=features)
    assert result["executed_folds"] == 0
    assert result["mca_counts"] is None
    assert result["mca_foldmean"] is None
    assert sorted(result["skipped_folds"]) == ["s0", "s1"]


def test_run_loso_precomputed_features(small_corpus):
    manifest, base = small_corpus
    rng = np.random.default_rng(101)
    ids = manifest.label_ids()
    features = np.eye(3)[ids] + 0.01 * rng.standard_normal((len(ids), 3))
    result = run_loso(manifest, lbp_test_config(), features=features)
    assert result["mca_counts"] == 1.0
