"""Mask-generator: depth-gated keep mask, two-color background fill, masked search image."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import DegenerateHistogramError, MissingDepthError
from .frames import MM_PER_M, HsvColor, crop, hsv_to_rgb, rgb_to_hsv, rgb_to_hsv_array

DEPTH_BINS = 256
KEEP_WINDOW = 0.75
MASK_SATURATION = 1.0
MASK_VALUE = 0.7


@dataclass(frozen=True)
class MaskColors:
    c1: tuple
    c2: tuple
    source_hue: float
    hsv: tuple = ()   # the HsvColor each of c1, c2 was quantized from

    def single(self):
        """Same colors object with both slots set to ``c1`` (one-color ablation)."""
        return replace(self, c2=self.c1, hsv=self.hsv[:1] * 2)


@dataclass(frozen=True, eq=False)
class MaskPair:
    m: np.ndarray   # (H, W) uint8, 1 = keep
    mc: np.ndarray  # (H, W, 3) uint8, zero where m == 1


def otsu_threshold(histogram):
    """Threshold bin ``t`` maximizing between-class variance of bins ``[0, t)`` vs ``[t, n)``.

    Exact integer arithmetic, so ties resolve to the smallest ``t`` reliably.
    """
    counts = [int(c) for c in histogram]
    if any(c < 0 for c in counts):
        raise ValueError("histogram counts must be non-negative")
    if sum(1 for c in counts if c > 0) < 2:
        raise DegenerateHistogramError("histogram needs at least 2 nonzero bins")
    total_n = sum(counts)
    total_s = sum(i * c for i, c in enumerate(counts))
    n0 = s0 = 0
    best_t, best_num, best_den = None, -1, 1
    for t in range(1, len(counts)):
        n0 += counts[t - 1]
        s0 += (t - 1) * counts[t - 1]
        n1 = total_n - n0
        if n0 == 0 or n1 == 0:
            continue
        s1 = total_s - s0
        # sigma_b^2 * N^2 = (s0*n1 - s1*n0)^2 / (n0*n1)
        num = (s0 * n1 - s1 * n0) ** 2
        den = n0 * n1
        if best_t is None or num * best_den > best_num * den:
            best_t, best_num, best_den = t, num, den
    return best_t


def _valid_depths_m(depth, box):
    patch = crop(depth, box, clamp=True)
    vals = patch[patch > 0].astype(np.float64) / MM_PER_M
    if vals.size == 0:
        raise MissingDepthError(f"no valid depth inside {box}")
    return vals


def mean_target_depth(depth, box):
    """Mean depth (meters) of the nearer Otsu class of valid depths inside ``box``."""
    vals = _valid_depths_m(depth, box)
    lo, hi = vals.min(), vals.max()
    if hi == lo:
        return float(vals.mean())
    bins = np.minimum(((vals - lo) / (hi - lo) * DEPTH_BINS).astype(np.intp), DEPTH_BINS - 1)
    hist = np.bincount(bins, minlength=DEPTH_BINS)
    if np.count_nonzero(hist) < 2:
        return float(vals.mean())
    t = otsu_threshold(hist)
    return float(vals[bins < t].mean())


def binary_mask(depth, dt_prev, prev_box):
    """Keep mask over a depth raster.

    ``prev_box`` must be in the raster's own coordinates; pixel ``(x, y)`` is
    sampled at its center ``(x + 0.5, y + 0.5)``.
    """
    if not dt_prev > 0:
        raise ValueError("previous target depth must be positive")
    d = depth.astype(np.float64) / MM_PER_M
    in_range = (d > dt_prev / 2.0) & (d < 2.0 * dt_prev)
    h, w = depth.shape
    xs = np.arange(w) + 0.5
    ys = np.arange(h) + 0.5
    near_x = np.abs(xs - prev_box.cx) < KEEP_WINDOW * prev_box.w
    near_y = np.abs(ys - prev_box.cy) < KEEP_WINDOW * prev_box.h
    window = near_y[:, None] & near_x[None, :]
    return (in_range | window).astype(np.uint8)


def select_mask_colors(avg):
    hsv = tuple(HsvColor((avg.h + k) % 360.0, MASK_SATURATION, MASK_VALUE) for k in (120.0, 240.0))
    return MaskColors(hsv_to_rgb(hsv[0]), hsv_to_rgb(hsv[1]), avg.h, hsv)


def average_target_color(color, box):
    """Saturation-weighted circular mean hue, arithmetic mean S and V inside ``box``."""
    patch = crop(color, box, clamp=True).reshape(-1, 3)
    h, s, v = rgb_to_hsv_array(patch)
    weight = s.sum()
    if weight > 0:
        rad = np.deg2rad(h)
        hue = math.degrees(math.atan2((s * np.sin(rad)).sum(), (s * np.cos(rad)).sum()))
        hue = round(hue % 360.0, 9) % 360.0
    else:
        hue = 0.0
    return HsvColor(hue, float(min(s.mean(), 1.0)), float(min(v.mean(), 1.0)))


def color_mask(m, colors, cell=8, seed=0):
    """Background fill: ``cell``-sized tiles colored c1/c2 by a seeded coin, zero where kept."""
    if cell < 1:
        raise ValueError("cell must be >= 1")
    h, w = m.shape
    ny, nx = -(-h // cell), -(-w // cell)
    coins = np.random.default_rng(seed).integers(0, 2, size=(ny, nx))
    palette = np.array([colors.c1, colors.c2], dtype=np.uint8)
    tiles = palette[coins]
    full = np.repeat(np.repeat(tiles, cell, axis=0), cell, axis=1)[:h, :w]
    return full * (1 - m[..., None]).astype(np.uint8)


def make_mask_pair(depth, dt_prev, prev_box, colors, cell=8, seed=0):
    m = binary_mask(depth, dt_prev, prev_box)
    return MaskPair(m, color_mask(m, colors, cell, seed))


def apply_mask(xc, pair):
    if xc.shape[:2] != pair.m.shape or pair.mc.shape != xc.shape:
        raise ValueError(f"mask {pair.m.shape} does not match image {xc.shape[:2]}")
    return np.where(pair.m[..., None] == 1, xc, pair.mc)


def hue_distance(a, b):
    d = abs(a - b) % 360.0
    return min(d, 360.0 - d)


def mask_color_hues(colors):
    return rgb_to_hsv(*colors.c1).h, rgb_to_hsv(*colors.c2).h
