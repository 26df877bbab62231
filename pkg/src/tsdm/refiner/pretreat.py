"""Candidate pretreatment, network input preparation and box (de)normalization."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..evalkit import iou
from ..frames import Box, crop, resize
from .loss import RefinerOutput
from .model import forward

INPUT_SIZE = 100


@dataclass(frozen=True, eq=False)
class RefinerInput:
    rc: np.ndarray   # (S, S, 3) color in [0, 1]
    rd: np.ndarray   # (S, S, 3) normalized depth, identical channels
    crop_box: Box    # integer-aligned crop in frame coordinates

    def __post_init__(self):
        for name in ("rc", "rd"):
            arr = getattr(self, name)
            if arr.ndim != 3 or arr.shape[2] != 3 or arr.shape[0] != arr.shape[1]:
                raise ValueError(f"{name} must be (S, S, 3), got {arr.shape}")


def nms_merge(candidates, alpha1=0.7):
    """Union of the top-scoring box and every candidate overlapping it by IOU >= alpha1."""
    if not candidates:
        raise ValueError("nms_merge needs at least one candidate")
    top = candidates[0]
    for c in candidates[1:]:
        if c.score > top.score:
            top = c
    merged = top.box
    for c in candidates:
        if iou(c.box, top.box) >= alpha1:
            merged = merged.union(c.box)
    return merged


def amplify(box, alpha2, frame_w, frame_h):
    """Scale w and h by ``1 + alpha2`` about the center, then clip to the frame."""
    if not alpha2 > 0:
        raise ValueError("alpha2 must be positive")
    grown = Box.from_center(box.cx, box.cy, box.w * (1.0 + alpha2), box.h * (1.0 + alpha2))
    clipped = grown.clip(frame_w, frame_h)
    if clipped is None:
        raise ValueError(f"amplified box {grown} lies outside the frame")
    return clipped


def prepare_input(xc, xd, crop_box, size=INPUT_SIZE):
    rect = crop_box.rasterized()
    color = crop(xc, rect, clamp=False)
    depth = crop(xd, rect, clamp=False)
    rc = (resize(color, size, size, "bilinear") / 255.0).astype(np.float32)
    dmax = float(xd.max())
    dn = resize(depth, size, size, "nearest").astype(np.float32)
    dn = dn / dmax if dmax > 0 else np.zeros_like(dn)
    return RefinerInput(rc, np.broadcast_to(dn[..., None], dn.shape + (3,)), rect)


def normalize_box(box, crop_box):
    """Frame box -> crop-relative ``RefinerOutput``."""
    return RefinerOutput(
        box.w / crop_box.w,
        box.h / crop_box.h,
        (box.right - crop_box.left) / crop_box.w,
        (box.bottom - crop_box.top) / crop_box.h,
    )


def denormalize_box(out, crop_box):
    """Crop-relative output -> frame box; extents are clamped so the box starts inside the crop."""
    xr = min(max(out.xr, 1e-6), 1.0)
    yb = min(max(out.yb, 1e-6), 1.0)
    w = min(max(out.w, 1e-6), xr)
    h = min(max(out.h, 1e-6), yb)
    right = crop_box.left + xr * crop_box.w
    bottom = crop_box.top + yb * crop_box.h
    return Box.from_corners(right - w * crop_box.w, bottom - h * crop_box.h, right, bottom)


def stack_inputs(inputs):
    color = np.stack([np.moveaxis(i.rc, -1, 0) for i in inputs]).astype(np.float64)
    depth = np.stack([np.moveaxis(i.rd, -1, 0) for i in inputs]).astype(np.float64)
    return color, depth


def predict(model, inputs):
    """Forward a list of inputs; returns one ``RefinerOutput`` each."""
    color, depth = stack_inputs(inputs)
    return [RefinerOutput.from_array(row) for row in forward(model, color, depth)]


def clamp_inside(box, container):
    inner = box.intersection(container)
    return inner if inner is not None else container


def pretreat(candidates, alpha1, alpha2, frame_w, frame_h):
    return amplify(nms_merge(candidates, alpha1), alpha2, frame_w, frame_h)


def refine(color, depth, model, candidates, alpha1=0.7, alpha2=0.1):
    """Refined box for one frame; always contained in the amplified candidate region."""
    height, width = depth.shape
    region = pretreat(candidates, alpha1, alpha2, width, height)
    inp = prepare_input(color, depth, region)
    out = predict(model, [inp])[0]
    return clamp_inside(denormalize_box(out, inp.crop_box), region)
