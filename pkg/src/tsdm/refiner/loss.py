from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class RefinerOutput:
    """Crop-normalized box: extents and bottom-right corner as fractions of the crop."""

    w: float
    h: float
    xr: float
    yb: float

    def as_array(self):
        return np.array([self.w, self.h, self.xr, self.yb])

    @classmethod
    def from_array(cls, arr):
        return cls(*(float(v) for v in arr))


def smooth_l1(x):
    ax = np.abs(x)
    out = np.where(ax < 1.0, 0.5 * x * x, ax - 0.5)
    return float(out) if np.ndim(x) == 0 else out


def smooth_l1_grad(x):
    return np.where(np.abs(x) < 1.0, x, np.sign(x))


def _as_rows(v):
    if isinstance(v, RefinerOutput):
        v = v.as_array()
    return np.atleast_2d(np.asarray(v, dtype=np.float64))


def loss(pred, gt):
    """Sum over (w, h, xr, yb) of smooth-L1 relative errors; batches are averaged."""
    p, g = _as_rows(pred), _as_rows(gt)
    if np.any(g <= 0):
        raise ValueError("ground-truth components must be positive")
    per_sample = smooth_l1((p - g) / g).sum(axis=1)
    return float(per_sample.mean())


def loss_grad(pred, gt):
    """d loss / d pred for the batch-averaged loss, shape ``(N, 4)``."""
    p, g = _as_rows(pred), _as_rows(gt)
    return smooth_l1_grad((p - g) / g) / g / p.shape[0]
