"""Operator CLI: protect a dataset, verify protection, inspect, compare XAI.

Exit codes: 0 success, 1 configuration error, 2 I/O error, 3 perceptibility
budget violation (strict mode), 4 verification failed (protection too weak).
Epsilon is given on the human-friendly 0-255 scale and converted internally.
SHORTCUTFORGE_THREADS caps per-image parallelism during protect.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from .codebook import AttributeCodebook
from .dataset_io import (
    DatasetManifest,
    ManifestRecord,
    ProtectionReport,
    load_image,
    parse_manifest,
    save_image,
    to_float,
    to_uint8,
    write_manifest,
    write_protected_dataset,
)
from .errors import (
    BudgetExceededError,
    CorruptImageError,
    ManifestError,
    MissingInputError,
    ShapeMismatchError,
    ShortcutForgeError,
    SpecError,
    UnsupportedFormatError,
)
from .perceptibility import compare
from .probe import (
    TrainConfig,
    evaluate,
    generalization_gap,
    load_checkpoint,
    save_checkpoint,
    train_linear_probe,
)
from .shapes import make_shapes_split
from .shortcuts import ShortcutSpec
from .xai import xai_difference

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_IO = 2
EXIT_BUDGET = 3
EXIT_VERIFY = 4


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors by default; the CLI contract wants 1
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _build_parser() -> _Parser:
    parser = _Parser(prog="shortcutforge", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("protect", parents=[], help="write a shortcut-protected copy of a dataset")
    p.add_argument("--in", dest="in_dir", required=True, help="input image directory")
    p.add_argument("--out", dest="out_dir", required=True, help="output directory (mirrors input)")
    p.add_argument("--manifest", required=True, help="manifest CSV (path,attr[,attr...])")
    p.add_argument("--attrs", help="comma-separated attribute columns to encode (default: all)")
    p.add_argument("--kind", default="sensor", choices=("dust", "hue", "lens", "sensor"))
    p.add_argument("--epsilon", type=float, default=4.0, help="amplitude budget, 0-255 scale (default 4)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--strict", action="store_true", help="fail on any budget violation")
    p.add_argument("--keep-partial", action="store_true", help="keep partial output on errors")
    p.add_argument("--report", help="protection report path (default: OUT/protection_report.jsonl)")
    p.add_argument("--cell-px", type=int, default=4, help="sensor block size at 32px reference")
    p.add_argument("--channel-coupled", action="store_true", help="sensor: same sign on all channels")
    p.add_argument("--degrees-per-code", type=float, help="hue step (default 360/capacity)")
    p.add_argument("--falloff-exponent", type=float, default=2.0)
    p.add_argument("--max-darkening", type=float, default=0.15)
    p.add_argument("--speck-count", type=int, default=12)
    p.add_argument("--radius-px", type=float, default=2.0)
    p.add_argument("--opacity", type=float, default=0.25)

    v = sub.add_parser("verify", help="probe + train/test gap check of a protected dataset")
    v.add_argument("--protected", required=True, help="protected image directory")
    v.add_argument("--clean", required=True, help="original image directory")
    v.add_argument("--manifest", required=True)
    v.add_argument("--attrs")
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--probe-threshold", type=float, default=0.95)
    v.add_argument("--gap-threshold", type=float, default=30.0, help="required clean-test drop, points")
    v.add_argument("--lr", type=float, default=0.01)
    v.add_argument("--batch-size", type=int, default=64)
    v.add_argument("--max-epochs", type=int, default=40)
    v.add_argument("--patience", type=int, default=5)
    v.add_argument("--no-augment", action="store_true")
    v.add_argument("--report", help="write the verification report JSON here")
    v.add_argument("--save-models", help="directory for clean/shortcut CNN checkpoints")

    i = sub.add_parser("inspect", help="perceptibility metrics between two images")
    i.add_argument("image_a")
    i.add_argument("image_b")

    x = sub.add_parser("xai-diff", help="explanation-difference score between two checkpoints")
    x.add_argument("--model-a", required=True)
    x.add_argument("--model-b", required=True)
    x.add_argument("--images", required=True, help="image directory")
    x.add_argument("--manifest", required=True)
    x.add_argument("--attrs")
    x.add_argument("--method", required=True)
    x.add_argument("--max-images", type=int, default=64)
    x.add_argument("--sg-samples", type=int, default=32)
    x.add_argument("--sigma", type=float, default=0.1)
    x.add_argument("--steps", type=int, default=64)
    x.add_argument("--xai-seed", type=int, default=0)
    x.add_argument("--out", help="also write the score JSON here")

    s = sub.add_parser("make-shapes", help="generate the 4-class shapes verification dataset")
    s.add_argument("--out", dest="out_dir", required=True)
    s.add_argument("--train-per-class", type=int, default=500)
    s.add_argument("--test-per-class", type=int, default=100)
    s.add_argument("--seed", type=int, default=7)
    s.add_argument("--noise", type=float, default=0.18)

    return parser


def _spec_from_args(args) -> ShortcutSpec:
    return ShortcutSpec(
        kind=args.kind,
        epsilon=args.epsilon / 255.0,
        seed=args.seed,
        cell_px=args.cell_px,
        channel_coupled=args.channel_coupled,
        degrees_per_code=args.degrees_per_code,
        falloff_exponent=args.falloff_exponent,
        max_darkening=args.max_darkening,
        speck_count=args.speck_count,
        radius_px=args.radius_px,
        opacity=args.opacity,
    )


def _select(manifest: DatasetManifest, attrs: str | None) -> DatasetManifest:
    if attrs:
        return manifest.select([a.strip() for a in attrs.split(",") if a.strip()])
    return manifest


def _load_images(root, manifest: DatasetManifest) -> np.ndarray:
    imgs = [to_float(load_image(Path(root) / rec.path)) for rec in manifest.records]
    shapes = {im.shape for im in imgs}
    if len(shapes) != 1:
        raise ShapeMismatchError(f"images under {root} have mixed shapes: {sorted(shapes)}")
    return np.stack(imgs)


def _threads() -> int | None:
    raw = os.environ.get("SHORTCUTFORGE_THREADS")
    if not raw:
        return None
    try:
        return max(1, int(raw))
    except ValueError:
        raise SpecError(f"SHORTCUTFORGE_THREADS={raw!r} is not an integer") from None


def _cmd_protect(args) -> int:
    manifest = _select(parse_manifest(args.manifest), args.attrs)
    codebook = manifest.codebook(seed=args.seed)
    spec = _spec_from_args(args)
    report = write_protected_dataset(
        manifest,
        args.in_dir,
        args.out_dir,
        spec,
        codebook,
        strict=args.strict,
        keep_partial=args.keep_partial,
        threads=_threads(),
    )
    report_path = args.report or str(Path(args.out_dir) / "protection_report.jsonl")
    Path(report_path).parent.mkdir(parents=True, exist_ok=True)
    report.write(report_path)
    min_psnr = report.min_psnr
    print(
        f"protected {len(report.entries)} image(s) -> {args.out_dir} "
        f"(max linf {report.max_linf * 255:.2f}/255, "
        f"min psnr {'inf' if min_psnr == float('inf') else f'{min_psnr:.2f}'} dB); "
        f"report: {report_path}"
    )
    if report.skipped:
        print(f"skipped {len(report.skipped)} missing file(s)", file=sys.stderr)
    return EXIT_OK


def _cmd_verify(args) -> int:
    manifest = _select(parse_manifest(args.manifest), args.attrs)
    codebook = manifest.codebook(seed=args.seed)
    codes = manifest.codes(codebook)
    clean_X = _load_images(args.clean, manifest)
    prot_X = _load_images(args.protected, manifest)
    if clean_X.shape != prot_X.shape:
        raise ShapeMismatchError(
            f"clean {clean_X.shape} vs protected {prot_X.shape} shape mismatch"
        )

    rng = np.random.default_rng(args.seed)
    perm = rng.permutation(len(clean_X))
    n_test = max(1, int(round(0.2 * len(clean_X))))
    test_idx, train_idx = perm[:n_test], perm[n_test:]

    probe_cfg = TrainConfig(
        learning_rate=0.05, batch_size=64, max_epochs=100, patience=10, seed=args.seed
    )
    probe = train_linear_probe(prot_X[train_idx], codes[train_idx], probe_cfg)
    probe_acc = evaluate(probe, prot_X[test_idx], codes[test_idx]).accuracy

    cnn_cfg = TrainConfig(
        learning_rate=args.lr,
        batch_size=args.batch_size,
        max_epochs=args.max_epochs,
        patience=args.patience,
        seed=args.seed,
        augment=not args.no_augment,
    )
    gap, baseline, shortcut = generalization_gap(
        (clean_X[train_idx], codes[train_idx]),
        (prot_X[train_idx], codes[train_idx]),
        (clean_X[test_idx], codes[test_idx]),
        cnn_cfg,
        protected_test=(prot_X[test_idx], codes[test_idx]),
    )

    if args.save_models:
        outdir = Path(args.save_models)
        outdir.mkdir(parents=True, exist_ok=True)
        save_checkpoint(baseline, outdir / "clean_model.npz")
        save_checkpoint(shortcut, outdir / "shortcut_model.npz")

    gap_points = gap.drop * 100.0
    passed = probe_acc >= args.probe_threshold and gap_points >= args.gap_threshold
    result = {
        "passed": passed,
        "probe_accuracy": probe_acc,
        "probe_threshold": args.probe_threshold,
        "gap_points": gap_points,
        "gap_threshold": args.gap_threshold,
        "gap": gap.to_json_dict(),
        "probe_seed": probe_cfg.seed,
        "n_train": int(len(train_idx)),
        "n_test": int(len(test_idx)),
    }
    text = json.dumps(result, indent=2, sort_keys=True)
    print(text)
    if args.report:
        Path(args.report).write_text(text + "\n", encoding="utf-8")
    return EXIT_OK if passed else EXIT_VERIFY


def _cmd_inspect(args) -> int:
    a = to_float(load_image(args.image_a))
    b = to_float(load_image(args.image_b))
    report = compare(a, b)
    print(json.dumps(report.to_json_dict(), indent=2, sort_keys=True))
    return EXIT_OK


def _cmd_xai_diff(args) -> int:
    net_a = _load_checkpoint_io(args.model_a)
    net_b = _load_checkpoint_io(args.model_b)
    manifest = _select(parse_manifest(args.manifest), args.attrs)
    if args.max_images and len(manifest.records) > args.max_images:
        manifest = DatasetManifest(
            names=manifest.names,
            arities=manifest.arities,
            records=manifest.records[: args.max_images],
        )
    codebook = manifest.codebook(seed=0)
    X = _load_images(args.images, manifest)
    y = manifest.codes(codebook)
    params = {
        "n_samples": args.sg_samples,
        "sigma": args.sigma,
        "steps": args.steps,
        "seed": args.xai_seed,
    }
    score = xai_difference(net_a, net_b, X, y, method=args.method, **params)
    result = {
        "method": args.method,
        "score": score,
        "n": int(len(X)),
        "params": params,
        "model_a": args.model_a,
        "model_b": args.model_b,
    }
    text = json.dumps(result, indent=2, sort_keys=True)
    print(text)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    return EXIT_OK


def _load_checkpoint_io(path):
    # checkpoint problems are I/O-class failures per the CLI contract
    try:
        return load_checkpoint(path)
    except FileNotFoundError:
        raise MissingInputError(f"no such checkpoint: {path}") from None
    except (OSError, ValueError, KeyError) as exc:
        raise CorruptImageError(f"{path}: undecodable checkpoint ({exc})") from exc


def _cmd_make_shapes(args) -> int:
    out = Path(args.out_dir)
    Xtr, ytr, Xte, yte = make_shapes_split(
        n_train_per_class=args.train_per_class,
        n_test_per_class=args.test_per_class,
        seed=args.seed,
        noise=args.noise,
    )
    for split, X, y in (("train", Xtr, ytr), ("test", Xte, yte)):
        split_dir = out / split
        split_dir.mkdir(parents=True, exist_ok=True)
        records = []
        for i, (img, label) in enumerate(zip(X, y)):
            name = f"shape_{i:05d}.png"
            save_image(split_dir / name, to_uint8(img))
            records.append(ManifestRecord(name, (int(label),)))
        write_manifest(
            out / f"manifest_{split}.csv",
            DatasetManifest(names=("shape",), arities=(4,), records=tuple(records)),
        )
    print(
        f"wrote {len(ytr)} train / {len(yte)} test images under {out} "
        f"(manifest_train.csv, manifest_test.csv)"
    )
    return EXIT_OK


_COMMANDS = {
    "protect": _cmd_protect,
    "verify": _cmd_verify,
    "inspect": _cmd_inspect,
    "xai-diff": _cmd_xai_diff,
    "make-shapes": _cmd_make_shapes,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except BudgetExceededError as exc:
        print(f"error: budget violation: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except (
        MissingInputError,
        CorruptImageError,
        UnsupportedFormatError,
        ShapeMismatchError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (SpecError, ManifestError, ShortcutForgeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
