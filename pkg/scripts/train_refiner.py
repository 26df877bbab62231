"""Train the box refiner on synthetic crops and report held-out IOU.

    python3 scripts/train_refiner.py --out weights/refiner.bin
"""

import argparse
import time

import numpy as np

from tsdm.evalkit import iou
from tsdm.refiner import Arch, RefinerModel, TrainConfig, denormalize_box, predict, save_weights, train
from tsdm.refiner.pretreat import clamp_inside
from tsdm.synthlab import make_refiner_dataset


def held_out_iou(model, held):
    outs = predict(model, [inp for inp, _, _ in held])
    refined = [iou(clamp_inside(denormalize_box(o, inp.crop_box), inp.crop_box), box)
               for (inp, _, box), o in zip(held, outs)]
    crops = [iou(inp.crop_box, box) for inp, _, box in held]
    return float(np.mean(refined)), float(np.mean(crops))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=2000)
    ap.add_argument("--held", type=int, default=400)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--pool-grid", type=int, default=Arch.pool_grid)
    ap.add_argument("--epochs", type=int, default=TrainConfig.epochs)
    ap.add_argument("--out", default="refiner.bin")
    args = ap.parse_args()

    t0 = time.perf_counter()
    data = make_refiner_dataset(args.n, seed=args.seed)
    held = make_refiner_dataset(args.held, seed=args.seed + 1, with_boxes=True)
    print(f"data: {args.n} train / {args.held} held-out crops in {time.perf_counter() - t0:.0f}s")
    model = RefinerModel.init(Arch(pool_grid=args.pool_grid), seed=0)
    model, _ = train(model, data, TrainConfig(epochs=args.epochs, seed=0),
                     progress=lambda e, l: print(f"epoch {e:2d}  loss {l:.5f}", flush=True))
    refined, crop = held_out_iou(model, held)
    print(f"held-out mean IOU: refined {refined:.3f}, enlarged crop {crop:.3f}")
    print(f"total {time.perf_counter() - t0:.0f}s")
    save_weights(model, args.out)
    print(f"saved {args.out}")


if __name__ == "__main__":
    main()
