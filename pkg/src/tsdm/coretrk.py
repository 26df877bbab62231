"""Core tracker interface and the reference multi-scale NCC matcher.

The reference core keeps the structure of a siamese matcher, a feature map
applied to template and search image followed by cross-correlation, but uses
per-channel mean-subtracted intensities as the feature map.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol, Sequence

import numpy as np
from scipy import signal

from .frames import Box, crop, resize

DEFAULT_SCALES = (0.95, 1.0, 1.05)


@dataclass(frozen=True)
class ScoredBox:
    box: Box
    score: float

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score {self.score} outside [0, 1]")


@dataclass(frozen=True, eq=False)
class Template:
    patch: np.ndarray
    origin_box: Box

    @classmethod
    def from_frame(cls, color, box):
        return cls(crop(color, box, clamp=False), box)


@dataclass(frozen=True)
class SearchRegion:
    window: Box
    scale: float


class Core(Protocol):
    def track(self, template: Template, search: np.ndarray, search_origin: Box) -> Sequence[ScoredBox]:
        ...


def make_search_region(prev_box, frame_w, frame_h, scale=2.0):
    if not scale > 1.0:
        raise ValueError("search scale must exceed 1")
    window = Box.from_center(prev_box.cx, prev_box.cy, prev_box.w * scale, prev_box.h * scale)
    clipped = window.clip(frame_w, frame_h)
    if clipped is None:
        raise ValueError(f"search window for {prev_box} lies outside the frame")
    return SearchRegion(clipped, scale)


def _window_sums(arr, th, tw):
    """Sliding ``th x tw`` window sums via an integral image."""
    acc = np.zeros((arr.shape[0] + 1, arr.shape[1] + 1), dtype=arr.dtype)
    acc[1:, 1:] = arr.cumsum(0).cumsum(1)
    return acc[th:, tw:] - acc[:-th, tw:] - acc[th:, :-tw] + acc[:-th, :-tw]


def ncc_map(search, template):
    """Zero-mean NCC of ``template`` at every valid shift inside ``search``.

    Channels are mean-subtracted independently and correlated jointly.
    Windows or templates with zero variance score 0.
    """
    th, tw = template.shape[:2]
    sh, sw = search.shape[:2]
    if th > sh or tw > sw:
        raise ValueError(f"template {tw}x{th} larger than search {sw}x{sh}")
    t = template.astype(np.float64)
    t = t - t.reshape(-1, 3).mean(axis=0)
    t_energy = float((t * t).sum())
    n = th * tw
    exact = np.issubdtype(search.dtype, np.integer)
    s_acc = np.int64 if exact else np.float64
    num = np.zeros((sh - th + 1, sw - tw + 1))
    var_n = np.zeros(num.shape, dtype=s_acc)  # n * sum of squared deviations
    for c in range(3):
        sc = search[..., c].astype(s_acc)
        num += signal.correlate(sc.astype(np.float64), t[..., c], mode="valid")
        ssum = _window_sums(sc, th, tw)
        ssq = _window_sums(sc * sc, th, tw)
        var_n += n * ssq - ssum * ssum
    var = var_n.astype(np.float64) / n
    if not exact:
        var[var < 1e-12 * max(1.0, float(np.abs(search).max()) ** 2) * n] = 0.0
    out = np.zeros(num.shape)
    if t_energy <= 0.0:
        return out
    ok = var > 0
    out[ok] = num[ok] / np.sqrt(t_energy * var[ok])
    return np.clip(out, -1.0, 1.0)


class ReferenceCore:
    """Multi-scale NCC matcher returning the ``k`` best (scale, shift) candidates."""

    def __init__(self, k=8, scales=DEFAULT_SCALES):
        if k < 1:
            raise ValueError("k must be >= 1")
        self.k = k
        self.scales = tuple(scales)

    def _scaled_templates(self, template):
        ph, pw = template.patch.shape[:2]
        for s in self.scales:
            tw, th = max(1, round(pw * s)), max(1, round(ph * s))
            if (tw, th) == (pw, ph):
                yield template.patch.astype(np.float64)
            else:
                yield resize(template.patch, tw, th, "bilinear")

    def track(self, template, search, search_origin):
        sh, sw = search.shape[:2]
        scores, boxes_meta = [], []
        fitted = False
        for t in self._scaled_templates(template):
            th, tw = t.shape[:2]
            if th > sh or tw > sw:
                continue
            fitted = True
            ncc = ncc_map(search, t)
            scores.append(((ncc + 1.0) / 2.0).ravel())
            boxes_meta.append((ncc.shape[1], tw, th))
        if not fitted:
            raise ValueError("template larger than search region at every scale")
        flat = np.concatenate(scores)
        order = np.argsort(-flat, kind="stable")[: self.k]
        offsets = np.cumsum([0] + [len(s) for s in scores])
        out = []
        for idx in order:
            si = int(np.searchsorted(offsets, idx, side="right") - 1)
            local = int(idx - offsets[si])
            width, tw, th = boxes_meta[si]
            y, x = divmod(local, width)
            box = Box(search_origin.left + x, search_origin.top + y, float(tw), float(th))
            out.append(ScoredBox(box, float(flat[idx])))
        return out
