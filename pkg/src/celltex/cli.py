"""Command-line front end.

Every subcommand accepts --config (flat dotted-key text or JSON), with
--seed / --jobs / --framework overriding the file, and writes a run.json
echo of the fully-resolved configuration so any run can be replayed
exactly from its output directory.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric
failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .config import RunConfig, default_config
from .descriptors import load_vector_rows, save_descriptors, save_vector_rows
from .encoding import load_encoder, save_encoder
from .errors import CelltexError, ConfigError, DataError, NumericError
from .evaluation import (
    confusion_matrix,
    confusion_percentages,
    load_manifest,
    mca,
    run_loso,
    sweep_filter_counts,
)
from .image import save_image
from .pipeline import (
    encode_image,
    fit_encoder,
    image_descriptors,
    image_stack,
    lbp_vector,
    load_gray,
    train_classifier,
)
from .svm import FeatureMatrix, load_svm, predict, save_svm
from .synth import generate_corpus

log = logging.getLogger("celltex")


def _load_config(args) -> RunConfig:
    cfg = RunConfig.from_file(args.config) if args.config else default_config()
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.jobs is not None:
        overrides["jobs"] = args.jobs
    if args.framework is not None:
        overrides["framework"] = args.framework
    return cfg.override(**overrides) if overrides else cfg


def _write_run_echo(cfg: RunConfig, out: Path) -> None:
    if out.suffix:
        out.parent.mkdir(parents=True, exist_ok=True)
        echo_path = out.parent / f"{out.stem}.run.json"
    else:
        out.mkdir(parents=True, exist_ok=True)
        echo_path = out / "run.json"
    echo_path.write_text(json.dumps(cfg.resolved(), indent=2, sort_keys=True) + "\n",
                         encoding="utf-8")


def cmd_synth(args, cfg: RunConfig) -> None:
    out = Path(args.out)
    _write_run_echo(cfg, out)
    manifest = generate_corpus(out, seed=cfg["seed"], classes=args.classes,
                               per_class=args.per_class,
                               specimens_per_class=args.specimens_per_class,
                               noise=args.noise, size=args.size)
    log.info("wrote %d images across %d specimens to %s", manifest.rows,
             len(set(manifest.specimens)), out)


def cmd_preprocess(args, cfg: RunConfig) -> None:
    out = Path(args.out)
    _write_run_echo(cfg, out)
    img = load_gray(args.image, cfg)
    stack = image_stack(img, cfg)
    depth = 16 if img.white > 255 else 8
    for idx, level in enumerate(stack.levels):
        save_image(level, out / f"level_{idx:02d}.pgm", bit_depth=depth)
    log.info("wrote %d scale levels (sigmas: %s)", len(stack.levels),
             ", ".join(f"{s:g}" for s in stack.sigmas))


def cmd_extract(args, cfg: RunConfig) -> None:
    out = Path(args.out)
    _write_run_echo(cfg, out)
    if args.image:
        if cfg["framework"] == "lbp":
            vec = lbp_vector(image_stack(load_gray(args.image, cfg), cfg), cfg)
            save_vector_rows(vec.reshape(1, -1), out)
            log.info("wrote 1 LBP row of dim %d to %s", vec.size, out)
        else:
            dset = image_descriptors(load_gray(args.image, cfg), cfg)
            save_descriptors(dset, out)
            log.info("wrote %d descriptors of dim %d to %s", dset.count, dset.dim, out)
        return
    manifest, base = load_manifest(args.manifest)
    if cfg["framework"] == "lbp":
        rows = [lbp_vector(image_stack(load_gray(base / p, cfg), cfg), cfg)
                for p in manifest.paths]
        target = out / "features.bin"
        save_vector_rows(np.stack(rows), target)
        log.info("wrote %d LBP rows of dim %d to %s", len(rows), rows[0].size, target)
    else:
        for i, p in enumerate(manifest.paths):
            dset = image_descriptors(load_gray(base / p, cfg), cfg)
            save_descriptors(dset, out / f"row_{i:06d}.desc")
        log.info("wrote %d descriptor files to %s", manifest.rows, out)


def cmd_fit_encoder(args, cfg: RunConfig) -> None:
    out = Path(args.out)
    _write_run_echo(cfg, out)
    manifest, base = load_manifest(args.manifest)
    blocks = [image_descriptors(load_gray(base / p, cfg), cfg).descriptors
              for p in manifest.paths]
    model = fit_encoder(blocks, cfg, cfg["seed"])
    save_encoder(model, out)
    log.info("fit encoder on %d images (%d descriptors); fv dim %d",
             manifest.rows, sum(b.shape[0] for b in blocks), model.fv_dim)


def cmd_encode(args, cfg: RunConfig) -> None:
    out = Path(args.out)
    _write_run_echo(cfg, out)
    manifest, base = load_manifest(args.manifest)
    model = load_encoder(args.encoder)
    rows = [encode_image(model, image_descriptors(load_gray(base / p, cfg), cfg), cfg)
            for p in manifest.paths]
    save_vector_rows(np.stack(rows), out)
    log.info("encoded %d images to fv dim %d at %s", len(rows), rows[0].size, out)


def cmd_train(args, cfg: RunConfig) -> None:
    out = Path(args.out)
    _write_run_echo(cfg, out)
    manifest, _ = load_manifest(args.manifest)
    values = load_vector_rows(args.features)
    if values.shape[0] != manifest.rows:
        raise DataError(
            f"{args.features} has {values.shape[0]} rows, manifest has {manifest.rows}"
        )
    fm = FeatureMatrix(values=values, labels=manifest.label_ids(),
                       specimens=manifest.specimens)
    model = train_classifier(fm, cfg, seed=cfg["seed"])
    save_svm(model, out)
    log.info("trained %d-class SVM on %d rows (dim %d)", model.num_classes,
             fm.rows, fm.dim)


def cmd_predict(args, cfg: RunConfig) -> None:
    out = Path(args.out)
    _write_run_echo(cfg, out)
    model = load_svm(args.model)
    values = load_vector_rows(args.features)
    preds = np.atleast_1d(predict(model, values))
    manifest = None
    if args.manifest:
        manifest, _ = load_manifest(args.manifest)
        if manifest.rows != values.shape[0]:
            raise DataError(
                f"{args.features} has {values.shape[0]} rows, manifest has "
                f"{manifest.rows}"
            )
    with out.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        if manifest is None:
            writer.writerow(["row", "prediction"])
            for i, p in enumerate(preds):
                writer.writerow([i, int(p)])
        else:
            names = manifest.class_names()
            writer.writerow(["path", "truth", "prediction"])
            for path, label, p in zip(manifest.paths, manifest.labels, preds):
                writer.writerow([path, label, names[int(p)]])
            truth = manifest.label_ids()
            acc = float(np.mean(truth == preds))
            cm = confusion_matrix(truth, preds, len(names))
            log.info("accuracy %.4f, mca %.4f over %d rows", acc, mca(cm), len(preds))
    log.info("wrote predictions to %s", out)


def _write_confusion_csv(path: Path, classes, cm) -> None:
    pct = confusion_percentages(np.asarray(cm))
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["truth\\prediction", *classes])
        for name, row in zip(classes, pct):
            writer.writerow([name, *[f"{v:.2f}" for v in row]])


def cmd_loso(args, cfg: RunConfig) -> None:
    out = Path(args.out)
    _write_run_echo(cfg, out)
    manifest, base = load_manifest(args.manifest)
    if cfg["framework"] == "lbp":
        log.info("feature dim %d", (cfg["gss.count"] + 1) * cfg.lbp_config().dims)
    results = run_loso(manifest, cfg, base_dir=base, progress=log.info)
    results["config"] = {str(k): v for k, v in cfg.resolved().items()}
    (out / "results.json").write_text(json.dumps(results, indent=2) + "\n",
                                      encoding="utf-8")
    _write_confusion_csv(out / "confusion.csv", results["classes"],
                         results["aggregate_confusion"])
    if results["mca_counts"] is None:
        log.warning("every fold was skipped; no MCA available")
    else:
        log.info("mca (from counts) %.4f | mca (fold mean) %.4f | folds %d run, %d skipped",
                 results["mca_counts"], results["mca_foldmean"],
                 results["executed_folds"], len(results["skipped_folds"]))


def cmd_sweep(args, cfg: RunConfig) -> None:
    out = Path(args.out)
    _write_run_echo(cfg, out)
    manifest, base = load_manifest(args.manifest)
    axis, _, values_text = args.axis.partition("=")
    axis = axis.strip()
    values = [v.strip() for v in values_text.split(",") if v.strip()]
    if not values:
        raise ConfigError(f"sweep axis '{args.axis}' has no values")
    rows = []
    if axis == "filters":
        try:
            counts = [int(v) for v in values]
        except ValueError:
            raise ConfigError(f"filters sweep expects integers, got {values}") from None
        for count, results in sweep_filter_counts(manifest, cfg, counts,
                                                  base_dir=base, progress=log.info):
            rows.append((count, results))
    elif axis == "base":
        try:
            bases = sorted(set(float(v) for v in values))
        except ValueError:
            raise ConfigError(f"base sweep expects numbers, got {values}") from None
        for b in bases:
            sub = cfg.override(gss__base=b)
            rows.append((b, run_loso(manifest, sub, base_dir=base, progress=log.info)))
    else:
        raise ConfigError(f"unknown sweep axis '{axis}' (expected filters= or base=)")
    sweep_path = out / "sweep.csv"
    with sweep_path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([axis, "mca_counts", "mca_foldmean", "executed_folds"])
        for value, results in rows:
            writer.writerow([value,
                             "" if results["mca_counts"] is None else f"{results['mca_counts']:.6f}",
                             "" if results["mca_foldmean"] is None else f"{results['mca_foldmean']:.6f}",
                             results["executed_folds"]])
        for value, results in rows:
            log.info("%s=%s -> mca %s", axis, value,
                     "n/a" if results["mca_counts"] is None
                     else f"{results['mca_counts']:.4f}")
    log.info("wrote %s", sweep_path)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="config file (dotted-key text or JSON)")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--jobs", type=int, help="worker count for fold loops")
    common.add_argument("--framework", choices=["lbp", "bow"],
                        help="feature framework override")
    common.add_argument("--out", required=True, help="output file or directory")

    parser = argparse.ArgumentParser(
        prog="celltex",
        description="Multi-scale texture classification for grayscale cell images",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic corpus")
    p.add_argument("--classes", type=int, default=6)
    p.add_argument("--per-class", type=int, default=50)
    p.add_argument("--specimens-per-class", type=int, default=5)
    p.add_argument("--noise", type=float, default=0.15)
    p.add_argument("--size", type=int, default=64)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("preprocess", parents=[common],
                       help="write the Gaussian scale stack of one image")
    p.add_argument("--image", required=True)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("extract", parents=[common],
                       help="extract features (descriptors or LBP rows)")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--image")
    group.add_argument("--manifest")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("fit-encoder", parents=[common],
                       help="fit the PCA+GMM encoder on a manifest")
    p.add_argument("--manifest", required=True)
    p.set_defaults(func=cmd_fit_encoder)

    p = sub.add_parser("encode", parents=[common],
                       help="encode manifest images to Fisher vectors")
    p.add_argument("--manifest", required=True)
    p.add_argument("--encoder", required=True)
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("train", parents=[common], help="train the linear SVM")
    p.add_argument("--features", required=True)
    p.add_argument("--manifest", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", parents=[common], help="predict with a trained SVM")
    p.add_argument("--model", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--manifest")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("loso", parents=[common],
                       help="leave-one-specimen-out evaluation")
    p.add_argument("--manifest", required=True)
    p.set_defaults(func=cmd_loso)

    p = sub.add_parser("sweep", parents=[common],
                       help="sweep a scale-space axis (filters=... or base=...)")
    p.add_argument("--manifest", required=True)
    p.add_argument("--axis", required=True)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(message)s",
                        stream=sys.stderr)
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _load_config(args)
        args.func(args, cfg)
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return 2
    except DataError as exc:
        log.error("data error: %s", exc)
        return 3
    except NumericError as exc:
        log.error("numeric failure: %s", exc)
        return 4
    except CelltexError as exc:  # pragma: no cover - safety net
        log.error("error: %s", exc)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
