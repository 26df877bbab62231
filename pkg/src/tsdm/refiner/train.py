"""Mini-batch gradient descent trainer and finite-difference gradient check."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from ..errors import NumericError
from .loss import loss, loss_grad
from .model import backward, forward, is_backbone
from .pretreat import stack_inputs

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    batch: int = 16
    epochs: int = 20
    lr_start: float = 0.05
    lr_end: float = 0.0001
    backbone_freeze_epochs: int = 3
    seed: int = 0

    def __post_init__(self):
        if self.batch < 1 or self.epochs < 1:
            raise ValueError("batch and epochs must be >= 1")
        if not self.lr_start > self.lr_end > 0:
            raise ValueError("need lr_start > lr_end > 0")


def n_batches(n_samples, batch):
    return -(-n_samples // batch)


def lr_at(cfg, iteration, total_iterations):
    """Learning rate, linear per iteration from ``lr_start`` (first) to ``lr_end`` (last)."""
    if total_iterations <= 1:
        return cfg.lr_start
    frac = iteration / (total_iterations - 1)
    return cfg.lr_start + (cfg.lr_end - cfg.lr_start) * frac


def _as_arrays(dataset):
    inputs = [inp for inp, _ in dataset]
    color, depth = stack_inputs(inputs)
    gt = np.array([g.as_array() for _, g in dataset])
    return color.astype(np.float32), depth[:, :1].astype(np.float32), gt


def train(model, dataset, cfg=TrainConfig(), progress=None):
    """Train a copy of ``model``; returns ``(trained_model, per_epoch_mean_loss)``."""
    if len(dataset) < 1:
        raise ValueError("empty training set")
    model = model.copy()
    color, depth, gt = _as_arrays(dataset)
    n = len(dataset)
    nb = n_batches(n, cfg.batch)
    total = nb * cfg.epochs
    rng = np.random.default_rng(cfg.seed)
    trace = []
    it = 0
    for epoch in range(cfg.epochs):
        train_backbone = epoch >= cfg.backbone_freeze_epochs
        order = rng.permutation(n)
        losses = []
        for b in range(nb):
            idx = order[b * cfg.batch:(b + 1) * cfg.batch]
            xc = color[idx].astype(np.float64)
            xd = np.repeat(depth[idx].astype(np.float64), 3, axis=1)
            pred, cache = forward(model, xc, xd, keep_cache=True)
            value = loss(pred, gt[idx])
            if not np.isfinite(value):
                raise NumericError(f"loss diverged at epoch {epoch + 1}, batch {b + 1}")
            grads = backward(model, cache, loss_grad(pred, gt[idx]), train_backbone)
            lr = lr_at(cfg, it, total)
            for name, g in grads.items():
                if train_backbone or not is_backbone(name):
                    model.params[name] -= lr * g
            losses.append(value * len(idx))
            it += 1
        trace.append(float(np.sum(losses) / n))
        log.info("epoch %d/%d  loss %.5f  lr %.5f", epoch + 1, cfg.epochs, trace[-1], lr)
        if progress is not None:
            progress(epoch + 1, trace[-1])
    return model, trace


def _loss_and_pattern(model, color, depth, gt):
    """Loss plus the on/off pattern of every piecewise-linear switch it passes through."""
    pred, cache = forward(model, color, depth, keep_cache=True)
    switches = [cache[k][2] > 0 for k in cache if k.split(".")[0] in ("color", "depth")]
    switches += [cache["fz"] > 0, cache["z1"] > 0, np.abs((pred - gt) / gt) < 1.0]
    return loss(pred, gt), np.concatenate([s.ravel() for s in switches])


def analytic_grads(model, color, depth, gt):
    pred, cache = forward(model, color, depth, keep_cache=True)
    return backward(model, cache, loss_grad(pred, gt))


def relative_error(a, b, floor=1e-8):
    return abs(a - b) / max(abs(a), abs(b), floor)


def grad_check(model, color, depth, gt, eps=1e-5, per_tensor=14, seed=0, grads=None):
    """Max relative error between analytic and central-difference gradients.

    Up to ``per_tensor`` random coordinates are probed in every parameter
    tensor.  A probe whose +/-eps evaluations straddle a ReLU or smooth-L1
    kink is not differentiable there and is replaced by another coordinate
    of the same tensor.  ``grads`` overrides the analytic gradients (used to
    test the checker itself).  Returns ``(max_error, n_checked)``.
    """
    if not 1e-6 <= eps <= 1e-3:
        raise ValueError("eps must lie in [1e-6, 1e-3]")
    if grads is None:
        grads = analytic_grads(model, color, depth, gt)
    rng = np.random.default_rng(seed)
    probe = model.copy()
    worst, checked = 0.0, 0
    for name, arr in probe.params.items():
        want = min(per_tensor, arr.size)
        done = 0
        for flat in rng.permutation(arr.size):
            if done == want:
                break
            idx = np.unravel_index(int(flat), arr.shape)
            orig = arr[idx]
            arr[idx] = orig + eps
            up, pat_up = _loss_and_pattern(probe, color, depth, gt)
            arr[idx] = orig - eps
            down, pat_down = _loss_and_pattern(probe, color, depth, gt)
            arr[idx] = orig
            if not np.array_equal(pat_up, pat_down):
                continue
            numeric = (up - down) / (2.0 * eps)
            worst = max(worst, relative_error(float(grads[name][idx]), numeric))
            done += 1
        checked += done
    return worst, checked
