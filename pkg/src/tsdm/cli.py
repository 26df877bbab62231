"""Command-line entry point: ``tsdm <command> ...``."""

from __future__ import annotations

import argparse
import logging
import os
import sys

import numpy as np
from PIL import Image

from .config import RunConfig
from .errors import ConfigError, CoreContractError, NumericError, SequenceFormatError, TsdmError
from .evalkit import SequenceResult, category_report, format_curve, success_curve, auc
from .frames import load_sequence, parse_box_line, read_groundtruth, read_tags
from .pipeline import format_results, parse_results, run_sequence
from .refiner import (
    Arch,
    RefinerModel,
    TrainConfig,
    WeightsFormatError,
    grad_check,
    load_weights,
    save_weights,
    train,
)
from .refiner.pretreat import stack_inputs
from .synthlab import AugmentSpec, distractor_scene, load_scene, make_refiner_dataset, mg_augment, render_sequence

log = logging.getLogger("tsdm")

# exit codes by error category
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_INPUT = 4
EXIT_NUMERIC = 5
EXIT_TRACKING = 6


def _write_text(path, text):
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)
    with open(path, "w") as fh:
        fh.write(text)


# -- commands ----------------------------------------------------------------

def cmd_synth(args):
    spec = distractor_scene(args.distractor, args.frames) if args.distractor is not None else load_scene(args.spec)
    render_sequence(spec, args.out)
    print(f"wrote {spec.frames} frames to {args.out}")


def _save_png(path, arr):
    Image.fromarray(np.ascontiguousarray(arr)).save(path)


def cmd_track(args):
    cfg = RunConfig.load(args.config)
    overrides = {}
    if args.no_mg:
        overrides["enable_mg"] = False
    if args.no_dr:
        overrides["enable_dr"] = False
    if args.weights:
        overrides["weights"] = args.weights
    if overrides:
        cfg = RunConfig(**{**cfg.__dict__, **overrides})
    model = None
    if cfg.enable_dr:
        if not cfg.weights:
            raise ConfigError("refinement is enabled: pass --weights or set weights in the config (or use --no-dr)")
        model = load_weights(cfg.weights)
    frames, gt = load_sequence(args.seq)

    on_frame = None
    if args.dump_masks is not None:
        dump_dir = args.dump_masks or os.path.splitext(args.out)[0] + "_masks"
        os.makedirs(dump_dir, exist_ok=True)

        def on_frame(frame, box, diag):
            if diag.mask_pair is None:
                return
            stem = os.path.join(dump_dir, f"{frame.index:08d}")
            _save_png(stem + "_m.png", diag.mask_pair.m * 255)
            _save_png(stem + "_mc.png", diag.mask_pair.mc)
            _save_png(stem + "_xm.png", diag.masked_image)

    result = run_sequence(frames, gt, cfg, model=model, name=os.path.basename(os.path.normpath(args.seq)),
                          on_frame=on_frame)
    _write_text(args.out, format_results(result))
    print(f"{result.name}: {len(frames)} frames, mean IOU {result.mean_iou:.4f}, {result.fps:.1f} fps")


def cmd_train_refiner(args):
    data = make_refiner_dataset(args.n, seed=args.seed)
    cfg = TrainConfig(epochs=args.epochs, seed=args.seed)
    model = RefinerModel.init(Arch(pool_grid=args.pool_grid), seed=args.seed)
    model, trace = train(model, data, cfg, progress=lambda e, l: print(f"epoch {e:2d}  loss {l:.5f}", flush=True))
    save_weights(model, args.out)
    print(f"saved weights to {args.out}")


def cmd_eval(args):
    if len(args.results) != len(args.gt):
        raise ConfigError("give one --gt directory per --results file")
    if args.tags and len(args.tags) != len(args.results):
        raise ConfigError("give one --tags file per --results file")
    results, tags = [], []
    for i, (res_path, gt_dir) in enumerate(zip(args.results, args.gt)):
        with open(res_path) as fh:
            boxes, _, _ = parse_results(fh.read())
        gt = read_groundtruth(os.path.join(gt_dir, "groundtruth.txt"))
        if len(boxes) != len(gt):
            raise SequenceFormatError(f"{res_path}: {len(boxes)} result lines for {len(gt)} ground-truth frames")
        results.append(SequenceResult.from_boxes(boxes, gt, name=os.path.basename(os.path.normpath(gt_dir))))
        tag_path = args.tags[i] if args.tags else os.path.join(gt_dir, "tags.txt")
        tags.append(read_tags(tag_path) if os.path.exists(tag_path) else None)
    report = category_report(results, tags)
    curve = success_curve(np.concatenate([r.ious for r in results]))
    _write_text(args.report, report.to_text())
    _write_text(args.curve, format_curve(curve))
    print(f"AUC {auc(curve):.4f}  overall mean IOU {report.overall:.4f}  frames {report.n_frames}")


def cmd_augment(args):
    try:
        box = parse_box_line(args.box)
    except (ValueError, SequenceFormatError) as exc:
        raise ConfigError(f"bad --box: {exc}") from None
    try:
        image = np.asarray(Image.open(args.inp).convert("RGB"))
    except OSError as exc:
        raise SequenceFormatError(f"cannot read image {args.inp}: {exc}") from None
    out = mg_augment(image, box, AugmentSpec(seed=args.seed))
    _save_png(args.out, out)
    print(f"wrote {args.out}")


def standard_grad_check(seed=0, per_tensor=14):
    """Gradient check of the default architecture on two synthetic crops."""
    model = RefinerModel.init(Arch(), seed=seed)
    data = make_refiner_dataset(2, seed=seed)
    color, depth = stack_inputs([inp for inp, _ in data])
    gt = np.array([g.as_array() for _, g in data])
    return grad_check(model, color, depth, gt, per_tensor=per_tensor, seed=seed)


def cmd_gradcheck(args):
    err, n = standard_grad_check(args.seed)
    print(f"max relative error {err:.3e} over {n} parameters")


# -- parser ------------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(prog="tsdm", description="Depth-masked RGB-D tracking toolkit")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="render a synthetic RGB-D sequence")
    src = s.add_mutually_exclusive_group(required=True)
    src.add_argument("--spec", help="scene description (key = value file)")
    src.add_argument("--distractor", type=int, metavar="SEED", help="render a seeded distractor scene")
    s.add_argument("--frames", type=int, default=40, help="frame count for --distractor")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("track", help="track a sequence and write per-frame results")
    s.add_argument("--seq", required=True)
    s.add_argument("--config")
    s.add_argument("--weights")
    s.add_argument("--out", required=True)
    s.add_argument("--no-mg", action="store_true", help="disable the mask generator")
    s.add_argument("--no-dr", action="store_true", help="disable the depth refiner")
    s.add_argument("--dump-masks", nargs="?", const="", metavar="DIR",
                   help="write M, M_c and X_m PNGs per frame (default: <out>_masks/)")
    s.set_defaults(func=cmd_track)

    s = sub.add_parser("train-refiner", help="train the box refiner on synthetic crops")
    s.add_argument("--n", type=int, default=2000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--epochs", type=int, default=TrainConfig.epochs)
    s.add_argument("--pool-grid", type=int, default=Arch.pool_grid)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_train_refiner)

    s = sub.add_parser("eval", help="success curve and per-category report")
    s.add_argument("--results", action="append", required=True)
    s.add_argument("--gt", action="append", required=True, help="sequence directory with groundtruth.txt")
    s.add_argument("--tags", action="append")
    s.add_argument("--report", required=True)
    s.add_argument("--curve", required=True)
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("augment", help="paint mask-colored rectangles outside a box")
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--box", required=True, help="left,top,w,h")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_augment)

    s = sub.add_parser("gradcheck", help="finite-difference check of the refiner gradients")
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_gradcheck)
    return p


def _category(exc):
    if isinstance(exc, ConfigError):
        return "config", EXIT_CONFIG
    if isinstance(exc, (SequenceFormatError, WeightsFormatError, OSError)):
        return "input", EXIT_INPUT
    if isinstance(exc, NumericError):
        return "numeric", EXIT_NUMERIC
    if isinstance(exc, CoreContractError):
        return "tracking", EXIT_TRACKING
    return "error", 1


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (TsdmError, WeightsFormatError, OSError, ValueError) as exc:
        kind, code = _category(exc)
        detail = f"{exc.filename}: {exc.strerror}" if isinstance(exc, OSError) and exc.filename else str(exc)
        print(f"tsdm: {kind} error: {detail}", file=sys.stderr)
        return code
    return 0


if __name__ == "__main__":
    sys.exit(main())
