"""Per-frame orchestration: mask the search region, run the core, refine the box."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, replace

from . import mgfsm
from .config import RunConfig
from .coretrk import ReferenceCore, Template, make_search_region
from .errors import ConfigError, CoreContractError, MissingDepthError, TsdmError
from .evalkit import SequenceResult, iou, measure_fps
from .frames import Box, crop
from .maskgen import (
    MaskColors,
    apply_mask,
    average_target_color,
    make_mask_pair,
    mean_target_depth,
    select_mask_colors,
)
from .refiner import refine

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrackState:
    template: Template
    prev_box: Box
    prev_dt: float
    mg_status: mgfsm.MgStatus
    mask_colors: MaskColors
    cfg: RunConfig


@dataclass
class Diagnostics:
    score: float
    mg_active: bool          # whether masking was applied this frame
    dt: float
    core_box: Box
    coasted: bool = False
    error: str = ""
    mask_pair: object = None
    masked_image: object = None


def strategy_params(cfg):
    return mgfsm.StrategyParams(cfg.mu1, cfg.mu2, cfg.mu3, cfg.gamma_frac)


def make_core(cfg):
    return ReferenceCore(k=cfg.core_k, scales=cfg.core_scales)


def init(first_frame, gt, cfg):
    if not Box(0.0, 0.0, first_frame.width, first_frame.height).contains(gt):
        raise ValueError(f"ground-truth box {gt} is not inside the frame")
    try:
        dt = mean_target_depth(first_frame.depth, gt)
    except MissingDepthError as exc:
        raise TsdmError(f"cannot initialize: {exc}") from None
    colors = select_mask_colors(average_target_color(first_frame.color, gt))
    return TrackState(
        template=Template.from_frame(first_frame.color, gt),
        prev_box=gt,
        prev_dt=dt,
        mg_status=mgfsm.MgStatus(),
        mask_colors=colors,
        cfg=cfg,
    )


def _top(candidates):
    if not candidates:
        raise CoreContractError("core returned no candidate boxes")
    best = candidates[0]
    for c in candidates[1:]:
        if c.score > best.score:
            best = c
    return best


def step_frame(state, frame, core, model=None, keep_images=False):
    """Track one frame. Returns ``(box, new_state, diagnostics)``.

    A frame-level failure repeats the previous box and leaves the state
    untouched; core contract violations and configuration errors abort.
    """
    cfg = state.cfg
    try:
        return _step(state, frame, core, model, keep_images)
    except (CoreContractError, ConfigError):
        raise
    except (TsdmError, ValueError) as exc:
        log.warning("frame %d: coasting (%s)", frame.index, exc)
        diag = Diagnostics(0.0, cfg.enable_mg and state.mg_status.active, state.prev_dt,
                           state.prev_box, coasted=True, error=str(exc))
        return state.prev_box, state, diag


def _step(state, frame, core, model, keep_images):
    cfg = state.cfg
    width, height = frame.width, frame.height
    window = make_search_region(state.prev_box, width, height, cfg.search_scale).window.rasterized()
    xc = crop(frame.color, window, clamp=True)
    masking = cfg.enable_mg and state.mg_status.active
    pair = None
    if masking:
        xd = crop(frame.depth, window, clamp=True)
        colors = state.mask_colors if cfg.mask_colors == 2 else state.mask_colors.single()
        local_prev = state.prev_box.translate(-window.left, -window.top)
        pair = make_mask_pair(xd, state.prev_dt, local_prev, colors, cfg.cell, [cfg.seed, frame.index])
        xm = apply_mask(xc, pair)
    else:
        xm = xc
    candidates = list(core.track(state.template, xm, window))
    top = _top(candidates)
    if cfg.enable_dr:
        if model is None:
            raise ConfigError("refinement enabled but no refiner model loaded")
        box = refine(frame.color, frame.depth, model, candidates, cfg.alpha1, cfg.alpha2)
    else:
        box = top.box
    try:
        dt_now = mean_target_depth(frame.depth, box)
    except MissingDepthError:
        dt_now = state.prev_dt
    status = mgfsm.step(state.mg_status, top.score, dt_now, state.prev_dt,
                        frame.max_depth_m(), strategy_params(cfg))
    diag = Diagnostics(top.score, masking, dt_now, top.box)
    if keep_images:
        diag.mask_pair, diag.masked_image = pair, xm
    return box, replace(state, prev_box=box, prev_dt=dt_now, mg_status=status), diag


def run_sequence(frames, gt, cfg, core=None, model=None, name="", on_frame=None):
    """Track a whole sequence initialized from ``gt[0]``; frame 1 reports the ground truth."""
    core = core or make_core(cfg)
    state = init(frames[0], gt[0], cfg)
    boxes, scores, states = [gt[0]], [1.0], ["active"]
    elapsed = 0.0
    for frame in frames[1:]:
        t0 = time.perf_counter()
        box, state, diag = step_frame(state, frame, core, model, keep_images=on_frame is not None)
        elapsed += time.perf_counter() - t0
        boxes.append(box)
        scores.append(diag.score)
        states.append("active" if diag.mg_active else "stopped")
        if on_frame is not None:
            on_frame(frame, box, diag)
    ious = [iou(b, g) for b, g in zip(boxes, gt)] if len(gt) == len(frames) else []
    result = SequenceResult(boxes, ious, elapsed, measure_fps(len(frames) - 1, elapsed), name)
    result.scores, result.mg_states = scores, states
    return result


def format_results(result):
    lines = []
    for box, score, st in zip(result.boxes, result.scores, result.mg_states):
        lines.append(f"{box.left:.6f},{box.top:.6f},{box.w:.6f},{box.h:.6f},{score:.6f},{st}")
    return "\n".join(lines) + "\n"


def parse_results(text):
    """Inverse of :func:`format_results`: ``(boxes, scores, mg_states)``."""
    boxes, scores, states = [], [], []
    for n, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        parts = line.strip().split(",")
        if len(parts) != 6:
            raise ValueError(f"results line {n}: expected 6 fields, got {len(parts)}")
        left, top, w, h, score = (float(p) for p in parts[:5])
        boxes.append(Box(left, top, w, h))
        scores.append(score)
        states.append(parts[5])
    return boxes, scores, states
