"""``xrnet`` command line: split, train, eval, predict, gradcheck.

Exit codes: 0 success, 2 usage/config/data, 3 numeric failure,
4 checkpoint or manifest failure. Logs go to stderr; artifacts go to files.
"""
from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import (CheckpointError, ConfigurationError, DataError, ManifestError,
                     NumericError, UsageError)

log = logging.getLogger("xrnet")

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_ARTIFACT = 0, 2, 3, 4


def _require_data_root(cfg):
    if not cfg.data_root.is_dir():
        raise ConfigurationError(f"data_root {cfg.data_root} does not exist or is not a directory")


def _write(path: Path, content) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(content, bytes):
        path.write_bytes(content)
    else:
        path.write_text(content)


def _manifest(cfg, create: bool):
    from .data import Manifest, build_manifest, list_images

    if cfg.manifest_path.exists():
        try:
            return Manifest.from_text(cfg.manifest_path.read_text())
        except OSError as exc:
            raise ManifestError(f"cannot read {cfg.manifest_path}: {exc}") from None
    if not create:
        raise ManifestError(f"no split manifest at {cfg.manifest_path}; run 'xrnet split' first")
    names, entries = list_images(cfg.data_root)
    manifest = build_manifest(names, entries, cfg.split)
    _write(cfg.manifest_path, manifest.to_text())
    return manifest


def _load_side(cfg, manifest, side: str):
    from .data import load_samples

    samples, skipped = load_samples(cfg.data_root, manifest.entries(side), cfg.model.input_size)
    if skipped:
        log.warning("%d %s image(s) skipped as undecodable", skipped, side)
    if not samples:
        raise DataError(f"no usable {side} images")
    images = np.stack([s.image for s in samples])
    labels = np.array([s.label for s in samples], dtype=np.int64)
    return images, labels


def cmd_split(args) -> int:
    from .config import load_config
    from .data import build_manifest, list_images

    cfg = load_config(args.config)
    _require_data_root(cfg)
    names, entries = list_images(cfg.data_root)
    manifest = build_manifest(names, entries, cfg.split)
    _write(cfg.manifest_path, manifest.to_text())
    n_train = n_test = 0
    for label, name in enumerate(names):
        tr = sum(1 for _, lab, s in manifest.rows if lab == label and s == "train")
        te = sum(1 for _, lab, s in manifest.rows if lab == label and s == "test")
        n_train += tr
        n_test += te
        print(f"{name}: train={tr} test={te}")
    print(f"train={n_train} test={n_test}")
    log.info("wrote %s", cfg.manifest_path)
    return EXIT_OK


def cmd_train(args) -> int:
    from .checkpoint import save_checkpoint
    from .config import load_config
    from .model import build_model, train
    from .plotting import history_png

    cfg = load_config(args.config)
    _require_data_root(cfg)
    model = build_model(cfg.model)
    manifest = _manifest(cfg, create=True)
    if len(manifest.class_names) != cfg.model.num_classes:
        raise ConfigurationError(
            f"manifest has {len(manifest.class_names)} classes, model expects {cfg.model.num_classes}"
        )
    model.class_names = list(manifest.class_names)
    trace = model.shape_trace()
    _write(cfg.output_dir / "shape_trace.txt", trace + "\n")
    log.info("model shape trace:\n%s", trace)
    images, labels = _load_side(cfg, manifest, "train")
    log.info("training on %d images for %d epochs", len(labels), cfg.train.epochs)
    history = train(model, images, labels, cfg.train)
    save_checkpoint(model, cfg.checkpoint)
    _write(cfg.output_dir / "history.csv", history.to_csv())
    _write(cfg.output_dir / "history.png", history_png(history))
    log.info("wrote %s and history to %s", cfg.checkpoint, cfg.output_dir)
    return EXIT_OK


def evaluate(model, images, labels):
    """Return ``(confusion_matrix, report)`` for eval-mode predictions."""
    from .metrics import classification_report, confusion_matrix
    from .model import predict

    pred, _ = predict(model, images)
    cm = confusion_matrix(labels, pred, model.config.num_classes, model.class_names)
    return cm, classification_report(cm)


def cmd_eval(args) -> int:
    from .checkpoint import load_checkpoint
    from .config import load_config
    from .metrics import render_report

    cfg = load_config(args.config)
    _require_data_root(cfg)
    model = load_checkpoint(cfg.checkpoint, expected=cfg.model)
    manifest = _manifest(cfg, create=False)
    images, labels = _load_side(cfg, manifest, "test")
    cm, report = evaluate(model, images, labels)
    _write(cfg.output_dir / "report.csv", render_report(report, cm, "csv"))
    text = render_report(report, cm, "text")
    _write(cfg.output_dir / "report.txt", text)
    _write(cfg.output_dir / "confusion_matrix.svg", render_report(report, cm, "svg"))
    print(text, end="")
    return EXIT_OK


def cmd_predict(args) -> int:
    from .checkpoint import load_checkpoint
    from .data import load_image
    from .model import predict

    model = load_checkpoint(args.checkpoint)
    out = csv.writer(sys.stdout, lineterminator="\n")
    failures = 0
    for path in args.images:
        try:
            img = load_image(path, model.config.input_size)
        except DataError as exc:
            failures += 1
            print(f"{path}: error: {exc}", file=sys.stderr)
            out.writerow([path, "ERROR"])
            continue
        cls, probs = predict(model, img[None])
        out.writerow([path, model.class_names[cls[0]], *(f"{p:.4f}" for p in probs[0])])
    return EXIT_USAGE if failures else EXIT_OK


def cmd_gradcheck(args) -> int:
    from . import gradcheck

    results = gradcheck.run_gradcheck(args.seed)
    for kind, err in results.items():
        status = "ok" if err < gradcheck.TOLERANCE else "FAIL"
        print(f"{kind:<15} max_rel_error={err:.3e} {status}")
    ok = gradcheck.passed(results)
    print("gradcheck " + ("passed" if ok else "FAILED") + f" (tolerance {gradcheck.TOLERANCE:g})")
    return EXIT_OK if ok else EXIT_NUMERIC


class _StderrHandler(logging.StreamHandler):
    """Writes to whatever ``sys.stderr`` is at emit time."""

    def emit(self, record):
        self.stream = sys.stderr
        super().emit(record)


def _configure_logging(verbose: bool) -> None:
    root = logging.getLogger("xrnet")
    root.setLevel(logging.DEBUG if verbose else logging.INFO)
    if not any(isinstance(h, _StderrHandler) for h in root.handlers):
        handler = _StderrHandler()
        handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s"))
        root.addHandler(handler)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="xrnet", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"xrnet {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    for name, func, help_ in (
        ("split", cmd_split, "write the stratified train/test manifest"),
        ("train", cmd_train, "train a model and write checkpoint + history"),
        ("eval", cmd_eval, "evaluate the checkpoint on the test side"),
    ):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", required=True, help="JSON run configuration")
        p.set_defaults(func=func)

    p = sub.add_parser("predict", help="classify individual images")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("images", nargs="*")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("gradcheck", help="finite-difference check of every layer")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _configure_logging(args.verbose)
    if args.command == "predict" and not args.images:
        parser.error("predict needs at least one image path")
    try:
        return args.func(args)
    except NumericError as exc:
        log.error("numeric failure: %s", exc)
        return EXIT_NUMERIC
    except (CheckpointError, ManifestError) as exc:
        log.error("%s", exc)
        return EXIT_ARTIFACT
    except (ConfigurationError, DataError, UsageError) as exc:
        log.error("%s", exc)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
