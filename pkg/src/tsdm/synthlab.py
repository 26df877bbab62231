"""Synthetic RGB-D data: scripted sequences, refiner training crops, mask-style augmentation."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, replace

import numpy as np

from .config import read_kv
from .errors import ConfigError
from .frames import MM_PER_M, Box, RgbdFrame, resize, write_sequence
from .maskgen import average_target_color, select_mask_colors
from .refiner.pretreat import normalize_box, prepare_input

BACKGROUND_CELL = 12
TEXTURE_CELL = 4
MARGIN = (0.05, 0.40)   # crop margin per side, fraction of the target extent


@dataclass(frozen=True)
class ObjectSpec:
    shape: str = "rect"
    color: tuple = (200, 60, 60)
    depth: float = 2.0
    size: tuple = (24.0, 24.0)
    start: tuple = (40.0, 40.0)      # top-left at frame 1
    velocity: tuple = (0.0, 0.0)     # px / frame
    texture_seed: int = 0
    texture_amp: float = 50.0

    def box_at(self, i):
        """Box in frame ``i`` (0-based)."""
        return Box(
            self.start[0] + self.velocity[0] * i,
            self.start[1] + self.velocity[1] * i,
            float(self.size[0]),
            float(self.size[1]),
        )


@dataclass(frozen=True)
class SceneSpec:
    width: int = 160
    height: int = 120
    background_seed: int = 0
    background_depth: float = 6.0
    uniform_background: bool = False
    target: ObjectSpec = ObjectSpec()
    distractors: tuple = ()
    depth_noise: float = 0.01        # meters
    color_noise: float = 3.0         # 8-bit levels
    frames: int = 20
    seed: int = 0
    category: str = ""

    def validate(self):
        if self.width < 8 or self.height < 8 or self.frames < 1:
            raise ValueError("scene too small or empty")
        for obj in (self.target,) + tuple(self.distractors):
            if obj.shape not in ("rect", "ellipse"):
                raise ValueError(f"unknown shape {obj.shape!r}")
            if not obj.depth > 0:
                raise ValueError("object depths must be positive")
        if not self.background_depth > 0:
            raise ValueError("background depth must be positive")
        for i in range(self.frames):
            box = self.target.box_at(i)
            inside = box.clip(self.width, self.height)
            if inside is None or inside.area < 0.5 * box.area:
                raise ValueError(f"target less than 50% inside the frame at frame {i + 1}")


@dataclass(frozen=True)
class AugmentSpec:
    count: tuple = (3, 8)
    size: tuple = (0.05, 0.25)
    seed: int = 0
    max_tries: int = 100

    def __post_init__(self):
        if not 1 <= self.count[0] <= self.count[1]:
            raise ValueError("rectangle count range must be >= 1")
        if not 0 < self.size[0] <= self.size[1] < 1:
            raise ValueError("size fractions must lie in (0, 1)")


def value_noise(height, width, cell, rng, channels=3):
    """Smooth random texture in [0, 1]: a coarse random grid, bilinearly upsampled."""
    gh, gw = max(2, -(-height // cell) + 1), max(2, -(-width // cell) + 1)
    coarse = rng.random((gh, gw, channels))
    return resize(coarse, (gw - 1) * cell, (gh - 1) * cell, "bilinear")[:height, :width]


def _object_texture(obj):
    w, h = int(np.ceil(obj.size[0])) + 1, int(np.ceil(obj.size[1])) + 1
    rng = np.random.default_rng(obj.texture_seed)
    tex = value_noise(h, w, TEXTURE_CELL, rng, channels=1)[..., 0]
    return (tex - 0.5) * 2.0 * obj.texture_amp


def _coverage(obj, box, width, height):
    """Boolean mask of pixels whose centers fall inside the object at ``box``."""
    xs = np.arange(width) + 0.5
    ys = np.arange(height) + 0.5
    if obj.shape == "rect":
        mx = (xs >= box.left) & (xs < box.right)
        my = (ys >= box.top) & (ys < box.bottom)
        return my[:, None] & mx[None, :]
    nx = (xs - box.cx) / (box.w / 2.0)
    ny = (ys - box.cy) / (box.h / 2.0)
    return ny[:, None] ** 2 + nx[None, :] ** 2 <= 1.0


class _Painter:
    def __init__(self, spec):
        self.spec = spec
        rng = np.random.default_rng([spec.background_seed, 1])
        if spec.uniform_background:
            self.bg = np.full((spec.height, spec.width, 3), 110.0)
        else:
            self.bg = 40.0 + 180.0 * value_noise(spec.height, spec.width, BACKGROUND_CELL, rng)
        objs = [spec.target] + list(spec.distractors)
        # far to near so nearer objects overwrite
        self.order = sorted(range(len(objs)), key=lambda k: -objs[k].depth)
        self.objs = objs
        self.textures = [_object_texture(o) for o in objs]

    def paint(self, i, rng):
        spec = self.spec
        color = self.bg.copy()
        depth = np.full((spec.height, spec.width), spec.background_depth)
        for k in self.order:
            obj, tex = self.objs[k], self.textures[k]
            box = obj.box_at(i)
            mask = _coverage(obj, box, spec.width, spec.height)
            if not mask.any():
                continue
            ys, xs = np.nonzero(mask)
            ty = np.clip(np.floor(ys + 0.5 - box.top).astype(int), 0, tex.shape[0] - 1)
            tx = np.clip(np.floor(xs + 0.5 - box.left).astype(int), 0, tex.shape[1] - 1)
            color[ys, xs] = np.asarray(obj.color, dtype=np.float64) + tex[ty, tx][:, None]
            depth[ys, xs] = obj.depth
        if spec.color_noise > 0:
            color = color + rng.normal(0.0, spec.color_noise, color.shape)
        if spec.depth_noise > 0:
            depth = depth + rng.normal(0.0, spec.depth_noise, depth.shape)
        color8 = np.clip(np.rint(color), 0, 255).astype(np.uint8)
        depth_mm = np.clip(np.rint(depth * MM_PER_M), 1, 65535).astype(np.uint16)
        return RgbdFrame(color8, depth_mm, i + 1)


def render_frames(spec):
    """In-memory rendering: ``(frames, ground_truth_boxes)``; deterministic per seed."""
    spec.validate()
    painter = _Painter(spec)
    frames, boxes = [], []
    for i in range(spec.frames):
        rng = np.random.default_rng([spec.seed, i])
        frames.append(painter.paint(i, rng))
        boxes.append(spec.target.box_at(i))
    return frames, boxes


def render_sequence(spec, out_dir):
    frames, boxes = render_frames(spec)
    tags = [spec.category] * len(frames) if spec.category else None
    write_sequence(out_dir, frames, boxes, tags)
    return out_dir


# -- scene spec files --------------------------------------------------------

def _floats(raw):
    return tuple(float(v) for v in raw.split(","))


_OBJECT_KEYS = {
    "shape": str, "color": lambda r: tuple(int(v) for v in r.split(",")), "depth": float,
    "size": _floats, "start": _floats, "velocity": _floats, "texture_seed": int,
    "texture_amp": float,
}
_SCENE_KEYS = {
    "width": int, "height": int, "background_seed": int, "background_depth": float,
    "uniform_background": lambda r: r.strip().lower() in ("1", "true", "yes"),
    "depth_noise": float, "color_noise": float, "frames": int, "seed": int, "category": str,
}


def scene_from_mapping(values):
    """Build a SceneSpec from flat keys: ``width``, ``target.depth``, ``distractor.0.color``, ..."""
    scene, target, distractors = {}, {}, {}
    try:
        for key, raw in values.items():
            parts = key.split(".")
            if len(parts) == 1 and key in _SCENE_KEYS:
                scene[key] = _SCENE_KEYS[key](raw)
            elif len(parts) == 2 and parts[0] == "target" and parts[1] in _OBJECT_KEYS:
                target[parts[1]] = _OBJECT_KEYS[parts[1]](raw)
            elif len(parts) == 3 and parts[0] == "distractor" and parts[2] in _OBJECT_KEYS:
                distractors.setdefault(int(parts[1]), {})[parts[2]] = _OBJECT_KEYS[parts[2]](raw)
            else:
                raise ConfigError(f"unknown scene key {key!r}")
    except ValueError as exc:
        raise ConfigError(f"bad scene value: {exc}") from None
    spec = SceneSpec(
        target=ObjectSpec(**target),
        distractors=tuple(ObjectSpec(**distractors[k]) for k in sorted(distractors)),
        **scene,
    )
    try:
        spec.validate()
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return spec


def load_scene(path):
    return scene_from_mapping(read_kv(path))


# -- distractor suite --------------------------------------------------------

def distractor_scene(seed, frames=40):
    """Textured target at ~2 m passing an identical copy placed at ~5 m.

    The copy sits just outside the keep window (vertical gap) but well inside
    a 4x search window, so a color-only matcher sees two equal peaks.
    """
    rng = np.random.default_rng([seed, 77])
    size = float(rng.integers(20, 27))
    hue_color = tuple(int(v) for v in rng.integers(40, 216, size=3))
    vx = float(rng.uniform(1.5, 2.5)) * (1 if rng.random() < 0.5 else -1)
    width, height = 200, 150
    x0 = 20.0 if vx > 0 else width - 20.0 - size
    y0 = float(rng.uniform(35, 55))
    meet = int(rng.integers(8, 14))           # frame at which the copy is alongside
    gap = float(rng.uniform(0.3, 0.45)) * size     # outside 0.75h keep window, inside 4x window
    below = rng.random() < 0.5
    dy = (size + gap) if below else -(size + gap)
    if not below:
        y0 += size + gap
    target = ObjectSpec(
        shape="rect", color=hue_color, depth=float(rng.uniform(1.8, 2.2)),
        size=(size, size), start=(x0, y0), velocity=(vx, 0.0),
        texture_seed=int(rng.integers(1 << 30)),
    )
    copy = replace(
        target,
        depth=float(rng.uniform(4.6, 5.4)),
        start=(x0 + vx * meet, y0 + dy),
        velocity=(0.0, 0.0),
    )
    return SceneSpec(
        width=width, height=height, background_seed=int(rng.integers(1 << 30)),
        background_depth=float(rng.uniform(6.5, 7.5)), target=target, distractors=(copy,),
        depth_noise=0.01, color_noise=6.0, frames=frames, seed=seed, category="distractor",
    )


def distractor_suite(n=10, seed=0, frames=40):
    return [distractor_scene(seed * 1000 + k, frames) for k in range(n)]


# -- refiner training crops --------------------------------------------------

def _random_object(rng, frame, depth, size_range):
    w, h = (float(v) for v in rng.integers(size_range[0], size_range[1] + 1, size=2))
    return ObjectSpec(
        shape="rect" if rng.random() < 0.5 else "ellipse",
        color=tuple(int(v) for v in rng.integers(30, 226, size=3)),
        depth=depth,
        size=(w, h),
        start=(float(rng.uniform(0, frame - w)), float(rng.uniform(0, frame - h))),
        texture_seed=int(rng.integers(1 << 30)),
        texture_amp=float(rng.uniform(10, 50)),
    )


def refiner_sample(seed, index, frame=128, size_range=(16, 48)):
    """One ``(RefinerInput, RefinerOutput, target_box)`` sample."""
    rng = np.random.default_rng([seed, index])
    t_depth = float(rng.uniform(1.0, 3.0))
    target = _random_object(rng, frame, t_depth, size_range)
    clutter = tuple(
        _random_object(rng, frame, float(rng.uniform(1.6, 2.6)) * t_depth, (8, 40))
        for _ in range(int(rng.integers(1, 4)))
    )
    spec = SceneSpec(
        width=frame, height=frame, background_seed=int(rng.integers(1 << 30)),
        background_depth=float(rng.uniform(2.8, 4.0)) * t_depth,
        target=target, distractors=clutter, depth_noise=float(rng.uniform(0.0, 0.02)),
        color_noise=float(rng.uniform(0.0, 6.0)), frames=1, seed=int(rng.integers(1 << 30)),
    )
    frames, boxes = render_frames(spec)
    fr, box = frames[0], boxes[0]
    # per-sample margin ceiling, so tight crops (like amplified tracker boxes) are common
    ml, mr, mt, mb = rng.uniform(MARGIN[0], rng.uniform(*MARGIN), size=4)
    crop_box = Box.from_corners(
        box.left - ml * box.w, box.top - mt * box.h, box.right + mr * box.w, box.bottom + mb * box.h
    )
    inp = prepare_input(fr.color, fr.depth, crop_box)
    return inp, normalize_box(box, inp.crop_box), box


def make_refiner_dataset(n, seed=0, with_boxes=False):
    if n < 1:
        raise ValueError("n must be >= 1")
    samples = [refiner_sample(seed, i) for i in range(n)]
    if with_boxes:
        return samples
    return [(inp, gt) for inp, gt, _ in samples]


def dataset_hash(dataset):
    h = hashlib.sha256()
    for item in dataset:
        inp, gt = item[0], item[1]
        h.update(np.ascontiguousarray(inp.rc).tobytes())
        h.update(np.ascontiguousarray(inp.rd).tobytes())
        h.update(np.array(inp.crop_box.as_tuple() + tuple(gt.as_array())).tobytes())
    return h.hexdigest()


# -- mask-style augmentation -------------------------------------------------

def mg_augment(image, gt, spec=AugmentSpec()):
    """Paint random rectangles in the two mask colors, never touching the ``gt`` box."""
    height, width = image.shape[:2]
    inside = gt.clip(width, height)
    if inside is None:
        raise ValueError("ground-truth box lies outside the image")
    colors = select_mask_colors(average_target_color(image, gt))
    palette = (colors.c1, colors.c2)
    gx0, gy0, gx1, gy1 = gt.pixel_bounds()
    rng = np.random.default_rng(spec.seed)
    out = image.copy()
    k = int(rng.integers(spec.count[0], spec.count[1] + 1))
    placed = 0
    for _ in range(k):
        for _ in range(spec.max_tries):
            rw = max(1, int(round(rng.uniform(*spec.size) * width)))
            rh = max(1, int(round(rng.uniform(*spec.size) * height)))
            if rw > width or rh > height:
                continue
            x0 = int(rng.integers(0, width - rw + 1))
            y0 = int(rng.integers(0, height - rh + 1))
            if x0 < gx1 and x0 + rw > gx0 and y0 < gy1 and y0 + rh > gy0:
                continue
            out[y0:y0 + rh, x0:x0 + rw] = palette[int(rng.integers(0, 2))]
            placed += 1
            break
    if placed == 0:
        raise ValueError("image too small to place any rectangle outside the ground-truth box")
    return out
