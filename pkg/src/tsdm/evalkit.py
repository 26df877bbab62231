"""Overlap metrics, success curves, per-category reports and throughput."""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np

THRESHOLDS = np.round(np.arange(101) * 0.01, 2)
UNTAGGED = "untagged"
MIN_ELAPSED = 1e-9


def iou(a, b):
    ix = min(a.right, b.right) - max(a.left, b.left)
    iy = min(a.bottom, b.bottom) - max(a.top, b.top)
    if ix <= 0 or iy <= 0:
        return 0.0
    inter = ix * iy
    area_a = (a.right - a.left) * (a.bottom - a.top)
    area_b = (b.right - b.left) * (b.bottom - b.top)
    return float(min(1.0, inter / (area_a + area_b - inter)))


@dataclass
class SequenceResult:
    boxes: list
    ious: list
    seconds: float = 0.0
    fps: float = 0.0
    name: str = ""
    scores: list = field(default_factory=list)
    mg_states: list = field(default_factory=list)

    @classmethod
    def from_boxes(cls, boxes, gt, seconds=0.0, name=""):
        if len(boxes) != len(gt):
            raise ValueError(f"{len(boxes)} predictions for {len(gt)} ground-truth frames")
        ious = [iou(p, g) for p, g in zip(boxes, gt)]
        return cls(list(boxes), ious, seconds, measure_fps(len(boxes), seconds), name)

    @property
    def mean_iou(self):
        return float(np.mean(self.ious)) if self.ious else 0.0


def success_curve(ious, thresholds=THRESHOLDS):
    """Fraction of frames with IOU strictly above each threshold."""
    vals = np.asarray(ious, dtype=np.float64)
    if vals.size == 0:
        raise ValueError("success curve needs at least one IOU")
    return (vals[None, :] > np.asarray(thresholds)[:, None]).mean(axis=1)


def auc(curve):
    return float(np.mean(curve))


def measure_fps(n_frames, seconds):
    return n_frames / max(seconds, MIN_ELAPSED)


@dataclass
class CategoryReport:
    rows: "OrderedDict[str, tuple]"   # category -> (mean IOU, frame count)
    overall: float
    n_frames: int

    def to_text(self):
        width = max([len("category"), len(UNTAGGED)] + [len(k) for k in self.rows])
        lines = [
            "# average IOU overlap per category (plain per-frame mean, no occlusion handling)",
            f"{'category':<{width}}  {'mean_iou':>8}  {'frames':>6}",
            f"{'Overall':<{width}}  {self.overall:8.4f}  {self.n_frames:6d}",
        ]
        for cat, (mean, count) in self.rows.items():
            lines.append(f"{cat:<{width}}  {mean:8.4f}  {count:6d}")
        return "\n".join(lines) + "\n"

    def to_csv_rows(self):
        rows = ["category,mean_iou,frames", f"Overall,{self.overall!r},{self.n_frames}"]
        rows += [f"{cat},{mean!r},{count}" for cat, (mean, count) in self.rows.items()]
        return rows


def category_report(results, tags=None):
    """Per-category mean IOU (frame-weighted) plus the overall mean across all frames.

    ``tags`` holds one list of per-frame tokens per result; missing or short
    tag lists put the remaining frames under ``untagged``.
    """
    buckets = OrderedDict()
    everything = []
    for i, res in enumerate(results):
        seq_tags = (tags[i] if tags is not None and i < len(tags) else None) or []
        for j, value in enumerate(res.ious):
            cat = seq_tags[j] if j < len(seq_tags) and seq_tags[j] else UNTAGGED
            buckets.setdefault(cat, []).append(value)
            everything.append(value)
    if not everything:
        raise ValueError("no frames to report")
    rows = OrderedDict((cat, (float(np.mean(v)), len(v))) for cat, v in buckets.items())
    return CategoryReport(rows, float(np.mean(everything)), len(everything))


def format_curve(curve, thresholds=THRESHOLDS):
    lines = [f"# success curve, thresholds {thresholds[0]:.2f}..{thresholds[-1]:.2f} step 0.01, IOU > t"]
    lines += [f"{t:.2f},{r:.6f}" for t, r in zip(thresholds, curve)]
    return "\n".join(lines) + "\n"
