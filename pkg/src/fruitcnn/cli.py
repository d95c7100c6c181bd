"""Command-line entry point: ``fruitcnn <command> [flags]``.

Exit codes: 0 success, 2 usage or input error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import _kernels
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .curves import render_svg
from .data import (DatasetError, SplitSpec, decode_image, export_image_dir, has_split_tree,
                   load_image_dir, load_split_tree, one_hot, split, synth_dataset)
from .gradcheck import gradient_check
from .network import CASES, build_case
from .trainer import TrainConfig, TrainHistory, TrainState, TrainingDiverged, predict_proba, evaluate, train

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 2, 3
OUT_ENV = "FRUITCNN_OUT"


class UsageError(Exception):
    pass


def _fail(msg: str, code: int = EXIT_USAGE) -> int:
    print(f"error: {msg}", file=sys.stderr)
    return code


def _atomic_write(path: Path, data: bytes | str) -> None:
    raw = data.encode("utf-8") if isinstance(data, str) else data
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    with os.fdopen(fd, "wb") as fh:
        fh.write(raw)
    os.replace(tmp, path)


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def _positive_float(text: str) -> float:
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text}")
    return v


# ---------------------------------------------------------------- train

def _load_train_test(args):
    root = Path(args.data)
    if not root.is_dir():
        raise DatasetError(f"dataset directory {root} does not exist")
    mode = args.split
    if mode == "auto":
        mode = "given" if has_split_tree(root) else "random"
    if mode == "given":
        ds = load_split_tree(root, args.image_size)
        spec = SplitSpec(args.train_fraction, args.seed, "directory_given")
    else:
        ds = load_image_dir(root, args.image_size)
        spec = SplitSpec(args.train_fraction, args.seed, "random_stratified")
    train_ds, test_ds = split(ds, spec)
    return ds, train_ds, test_ds, spec


def cmd_train(args) -> int:
    out = Path(args.out or os.environ.get(OUT_ENV) or f"runs/case{args.case}")
    try:
        ds, train_ds, test_ds, split_spec = _load_train_test(args)
    except DatasetError as exc:
        return _fail(str(exc))
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        return _fail(f"cannot create output directory {out}: {exc}")

    cfg = TrainConfig(epochs=args.epochs, batch_size=args.batch, eta=args.lr, seed=args.seed,
                      deterministic=args.deterministic, lr_factor=args.lr_factor,
                      lr_patience=args.lr_patience, min_lr=args.min_lr)
    state = None
    if args.resume:
        try:
            ck = load_checkpoint(args.resume)
        except CheckpointError as exc:
            return _fail(str(exc))
        if ck.class_names != ds.class_names:
            return _fail("checkpoint classes differ from the dataset classes")
        net, state = ck.net, ck.state
    else:
        net = build_case(args.case, ds.num_classes, args.seed, input_shape=ds.image_shape,
                         width=args.precision, filters=args.filters, hidden=args.hidden)

    manifest = {
        "command": [Path(sys.argv[0]).name] + sys.argv[1:],
        "config": cfg.as_dict(),
        "network": net.spec.as_dict(),
        "seed": args.seed,
        "split": {"mode": split_spec.mode, "train_fraction": split_spec.train_fraction,
                  "train": len(train_ds), "test": len(test_ds)},
        "dataset": {"root": str(Path(args.data).resolve()), "samples": len(ds),
                    "classes": ds.class_names, "sha256": ds.digest()},
        "kernels": _kernels.backend(),
        "artifacts": {"history": "history.csv", "checkpoint": "checkpoint.frck", "curves_hint": "fruitcnn curves"},
        "started_at": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
    }
    _atomic_write(out / "manifest.json", json.dumps(manifest, indent=2) + "\n")
    print(f"case {args.case}: {net!r} | {net.num_parameters()} parameters | "
          f"{len(train_ds)} train / {len(test_ds)} test, {ds.num_classes} classes", flush=True)

    def on_epoch(rec, st: TrainState):
        print(f"epoch {rec.epoch:3d}  train_loss {rec.train_loss:.4f}  train_acc {rec.train_acc:.4f}  "
              f"test_loss {rec.test_loss:.4f}  test_acc {rec.test_acc:.4f}  lr {rec.lr:.6g}  "
              f"{rec.seconds:.1f}s", flush=True)
        _atomic_write(out / "history.csv", st.history.to_csv(zero_seconds=cfg.deterministic))
        save_checkpoint(net, cfg, st, ds.class_names, out / "checkpoint.frck")

    try:
        history = train(net, train_ds, test_ds, cfg, state=state, on_epoch=on_epoch)
    except TrainingDiverged as exc:
        return _fail(str(exc), EXIT_NUMERIC)
    except FloatingPointError as exc:
        return _fail(str(exc), EXIT_NUMERIC)
    if len(history):
        _atomic_write(out / "history.csv", history.to_csv(zero_seconds=cfg.deterministic))
    return EXIT_OK


# ---------------------------------------------------------------- eval / predict

def cmd_eval(args) -> int:
    try:
        ck = load_checkpoint(args.checkpoint)
    except CheckpointError as exc:
        return _fail(str(exc))
    size = ck.net.spec.input_shape[1]
    try:
        ds = load_image_dir(args.data, size)
    except DatasetError as exc:
        return _fail(str(exc))
    if ds.num_classes != ck.net.spec.num_classes:
        return _fail(f"dataset has {ds.num_classes} classes but checkpoint expects {ck.net.spec.num_classes}")
    loss, acc = evaluate(ck.net, ds)
    print(f"samples {len(ds)}  loss {loss:.6f}  accuracy {acc:.6f}")
    return EXIT_OK


def cmd_predict(args) -> int:
    try:
        ck = load_checkpoint(args.checkpoint)
    except CheckpointError as exc:
        return _fail(str(exc))
    size = ck.net.spec.input_shape[1]
    try:
        x = decode_image(args.image, size)[None]
    except DatasetError as exc:
        return _fail(str(exc))
    probs = predict_proba(ck.net, x)[0].astype(np.float64)
    order = np.argsort(-probs, kind="stable")[: min(args.topk, len(probs))]
    for rank, k in enumerate(order, start=1):
        print(f"{rank}\t{ck.class_names[k]}\t{probs[k]:.6f}")
    return EXIT_OK


# ---------------------------------------------------------------- gradcheck / synth / curves

def cmd_gradcheck(args) -> int:
    net = build_case(args.case, args.classes, args.seed, input_shape=(3, args.size, args.size),
                     width="double", filters=args.filters, hidden=args.hidden)
    ds = synth_dataset(max(args.classes, 2), -(-args.batch // max(args.classes, 2)), args.size, args.seed)
    x = ds.images[: args.batch].astype(np.float64)
    t = one_hot(ds.labels[: args.batch] % args.classes, args.classes, np.float64)
    report = gradient_check(net, x, t, eps=args.eps, samples=args.samples, seed=args.seed)
    for label, err in report.per_param.items():
        flag = "ok" if err < args.tol else "FAIL"
        print(f"{label:32s} max_rel_error {err:.3e}  ({report.checked[label]} coords)  {flag}")
    print(f"case {args.case}: worst {report.max_rel_error:.3e} (tolerance {args.tol:g}, "
          f"{report.kinks_skipped} kink coordinates resampled)")
    return EXIT_OK if report.passed(args.tol) else EXIT_NUMERIC


def cmd_synth(args) -> int:
    ds = synth_dataset(args.classes, args.per_class, args.size, args.seed)
    out = Path(args.out)
    try:
        paths = export_image_dir(ds, out)
    except OSError as exc:
        return _fail(f"cannot write dataset to {out}: {exc}")
    print(f"wrote {len(paths)} images in {ds.num_classes} class directories under {out}")
    return EXIT_OK


def cmd_curves(args) -> int:
    try:
        text = Path(args.history).read_text()
    except OSError as exc:
        return _fail(f"cannot read {args.history}: {exc}")
    try:
        history = TrainHistory.from_csv(text)
    except ValueError as exc:
        return _fail(f"{args.history}: {exc}")
    try:
        _atomic_write(Path(args.out), render_svg(history, title=Path(args.history).name))
    except OSError as exc:
        return _fail(f"cannot write {args.out}: {exc}")
    print(f"wrote {args.out} ({len(history)} epochs)")
    return EXIT_OK


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    p = argparse.ArgumentParser(prog="fruitcnn", description="Train and inspect the fruit CNN cases.",
                                formatter_class=fmt)
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train one case network", formatter_class=fmt)
    t.add_argument("--data", required=True, help="root/<class>/*.png|jpg, or a tree with Training/ and Test/")
    t.add_argument("--case", type=int, required=True, choices=CASES, help="hidden-layer case")
    t.add_argument("--epochs", type=_positive_int, default=15, help="training epochs")
    t.add_argument("--batch", type=_positive_int, default=15, help="mini-batch size")
    t.add_argument("--lr", type=_positive_float, default=0.002, help="Adam learning rate")
    t.add_argument("--seed", type=int, default=0, help="seed for init, split, shuffling and dropout")
    t.add_argument("--out", default=None, help=f"output directory (default ${OUT_ENV} or runs/case<N>)")
    t.add_argument("--precision", choices=("single", "double"), default="single", help="float width")
    t.add_argument("--deterministic", action="store_true",
                   help="write reproducible files (wall times recorded as 0 in history.csv)")
    t.add_argument("--image-size", type=_positive_int, default=100, help="images are resized to SIZE x SIZE")
    t.add_argument("--split", choices=("auto", "random", "given"), default="auto",
                   help="stratified random split, or the Training/Test folders of the tree")
    t.add_argument("--train-fraction", type=float, default=0.8, help="training share for the random split")
    t.add_argument("--filters", type=_positive_int, default=64, help="filters per conv layer")
    t.add_argument("--hidden", type=_positive_int, default=500, help="units in the hidden dense layer")
    t.add_argument("--lr-factor", type=float, default=0.5, help="plateau reduction factor")
    t.add_argument("--lr-patience", type=_positive_int, default=3, help="epochs without test-accuracy gain")
    t.add_argument("--min-lr", type=float, default=1e-5, help="learning-rate floor")
    t.add_argument("--resume", default=None, help="continue from a checkpoint.frck")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="loss and accuracy of a checkpoint on an image folder", formatter_class=fmt)
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--data", required=True)
    e.set_defaults(func=cmd_eval)

    pr = sub.add_parser("predict", help="top-K classes for one image", formatter_class=fmt)
    pr.add_argument("--checkpoint", required=True)
    pr.add_argument("--image", required=True)
    pr.add_argument("--topk", type=_positive_int, default=5, help="number of classes to print")
    pr.set_defaults(func=cmd_predict)

    g = sub.add_parser("gradcheck", help="finite-difference check of a case network", formatter_class=fmt)
    g.add_argument("--case", type=int, required=True, choices=CASES)
    g.add_argument("--eps", type=_positive_float, default=1e-5, help="central-difference step")
    g.add_argument("--tol", type=_positive_float, default=1e-5, help="max relative error allowed")
    g.add_argument("--size", type=_positive_int, default=16, help="input side length")
    g.add_argument("--classes", type=_positive_int, default=4)
    g.add_argument("--batch", type=_positive_int, default=2)
    g.add_argument("--samples", type=_positive_int, default=50, help="coordinates per parameter tensor")
    g.add_argument("--filters", type=_positive_int, default=64)
    g.add_argument("--hidden", type=_positive_int, default=500)
    g.add_argument("--seed", type=int, default=0)
    g.set_defaults(func=cmd_gradcheck)

    s = sub.add_parser("synth", help="write a synthetic dataset as PNG folders", formatter_class=fmt)
    s.add_argument("--classes", type=int, default=3)
    s.add_argument("--per-class", type=_positive_int, default=100)
    s.add_argument("--size", type=int, default=32)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth)

    c = sub.add_parser("curves", help="render history.csv as an SVG", formatter_class=fmt)
    c.add_argument("--history", required=True)
    c.add_argument("--out", required=True)
    c.set_defaults(func=cmd_curves)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "synth" and (args.classes < 2 or args.size < 4):
        parser.error("synth needs --classes >= 2 and --size >= 4")
    if args.command == "train" and not 0.0 < args.train_fraction < 1.0:
        parser.error("--train-fraction must be in (0, 1)")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
