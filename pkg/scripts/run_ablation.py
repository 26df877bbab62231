"""Ablation table on the synthetic distractor suite (core only / +mask / +refiner / one-color mask).

    python3 scripts/run_ablation.py --weights refiner.bin
"""

import argparse
import time

import numpy as np

from tsdm.config import RunConfig
from tsdm.evalkit import auc, success_curve
from tsdm.pipeline import run_sequence
from tsdm.refiner import load_weights
from tsdm.synthlab import distractor_suite, render_frames


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--weights", help="refiner weights; variants using the refiner are skipped without it")
    ap.add_argument("--n", type=int, default=10)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--frames", type=int, default=40)
    ap.add_argument("--search-scale", type=float, default=4.0)
    args = ap.parse_args()

    model = load_weights(args.weights) if args.weights else None
    suite = [render_frames(s) for s in distractor_suite(args.n, args.seed, args.frames)]
    base = dict(search_scale=args.search_scale)
    variants = [
        ("core", RunConfig(enable_mg=False, enable_dr=False, **base)),
        ("core+mask", RunConfig(enable_dr=False, **base)),
        ("core+mask(1 color)", RunConfig(enable_dr=False, mask_colors=1, **base)),
        ("core+refiner", RunConfig(enable_mg=False, **base)),
        ("full", RunConfig(**base)),
        ("full(1 color)", RunConfig(mask_colors=1, **base)),
    ]
    print(f"{'variant':<20} {'mean IOU':>8} {'AUC':>7} {'fps':>7}")
    for name, cfg in variants:
        if cfg.enable_dr and model is None:
            continue
        t0 = time.perf_counter()
        results = [run_sequence(f, g, cfg, model=model) for f, g in suite]
        dt = time.perf_counter() - t0
        ious = np.concatenate([r.ious[1:] for r in results])
        n_frames = sum(len(r.ious) - 1 for r in results)
        print(f"{name:<20} {np.mean([r.mean_iou for r in results]):8.4f} {auc(success_curve(ious)):7.4f} "
              f"{n_frames / dt:7.1f}")


if __name__ == "__main__":
    main()
