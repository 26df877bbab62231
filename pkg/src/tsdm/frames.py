"""Value types, color-space conversions, raster cropping/resizing and sequence I/O.

Rasters are plain numpy arrays: color is ``(H, W, 3) uint8`` RGB, depth is
``(H, W) uint16`` millimeters with 0 meaning "no reading".
"""

from __future__ import annotations

import colorsys
import math
import os
from dataclasses import dataclass

import numpy as np
from PIL import Image

from .errors import SequenceFormatError

MM_PER_M = 1000.0


@dataclass(frozen=True)
class Box:
    """Axis-aligned rectangle with subpixel left/top and extents."""

    left: float
    top: float
    w: float
    h: float

    def __post_init__(self):
        if not (self.w > 0 and self.h > 0):
            raise ValueError(f"box extents must be positive, got w={self.w} h={self.h}")

    @classmethod
    def from_center(cls, cx, cy, w, h):
        return cls(cx - w / 2.0, cy - h / 2.0, w, h)

    @classmethod
    def from_corners(cls, left, top, right, bottom):
        return cls(left, top, right - left, bottom - top)

    @property
    def cx(self):
        return self.left + self.w / 2.0

    @property
    def cy(self):
        return self.top + self.h / 2.0

    @property
    def right(self):
        return self.left + self.w

    @property
    def bottom(self):
        return self.top + self.h

    @property
    def area(self):
        return self.w * self.h

    def translate(self, dx, dy):
        return Box(self.left + dx, self.top + dy, self.w, self.h)

    def pixel_bounds(self):
        """Integer ``(x0, y0, x1, y1)``, half-open, rounded outward."""
        return (
            math.floor(self.left),
            math.floor(self.top),
            math.ceil(self.right),
            math.ceil(self.bottom),
        )

    def rasterized(self):
        x0, y0, x1, y1 = self.pixel_bounds()
        return Box(float(x0), float(y0), float(x1 - x0), float(y1 - y0))

    def clip(self, width, height):
        """Intersection with the frame ``[0, width] x [0, height]``, or None."""
        return self.intersection(Box(0.0, 0.0, float(width), float(height)))

    def intersection(self, other):
        left = max(self.left, other.left)
        top = max(self.top, other.top)
        right = min(self.right, other.right)
        bottom = min(self.bottom, other.bottom)
        if right <= left or bottom <= top:
            return None
        return Box.from_corners(left, top, right, bottom)

    def union(self, other):
        """Smallest box enclosing both."""
        return Box.from_corners(
            min(self.left, other.left),
            min(self.top, other.top),
            max(self.right, other.right),
            max(self.bottom, other.bottom),
        )

    def contains(self, other, tol=1e-9):
        return (
            other.left >= self.left - tol
            and other.top >= self.top - tol
            and other.right <= self.right + tol
            and other.bottom <= self.bottom + tol
        )

    def as_tuple(self):
        return (self.left, self.top, self.w, self.h)


@dataclass(frozen=True)
class HsvColor:
    h: float  # degrees, [0, 360)
    s: float
    v: float

    def __post_init__(self):
        if not (0.0 <= self.h < 360.0):
            raise ValueError(f"hue out of range: {self.h}")
        if not (0.0 <= self.s <= 1.0 and 0.0 <= self.v <= 1.0):
            raise ValueError(f"saturation/value out of range: {self.s}, {self.v}")


@dataclass(frozen=True, eq=False)
class RgbdFrame:
    color: np.ndarray
    depth: np.ndarray
    index: int

    def __post_init__(self):
        check_color(self.color)
        check_depth(self.depth)
        if self.color.shape[:2] != self.depth.shape:
            raise ValueError(
                f"color {self.color.shape[:2]} and depth {self.depth.shape} dimensions differ"
            )
        if self.index < 1:
            raise ValueError("frame index starts at 1")

    @property
    def width(self):
        return self.depth.shape[1]

    @property
    def height(self):
        return self.depth.shape[0]

    def depth_m(self):
        return self.depth.astype(np.float64) / MM_PER_M

    def max_depth_m(self):
        return float(self.depth.max()) / MM_PER_M


def check_color(arr):
    if arr.dtype != np.uint8 or arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError(f"color raster must be (H, W, 3) uint8, got {arr.shape} {arr.dtype}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError("empty color raster")


def check_depth(arr):
    if arr.dtype != np.uint16 or arr.ndim != 2:
        raise ValueError(f"depth raster must be (H, W) uint16, got {arr.shape} {arr.dtype}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError("empty depth raster")


# -- color space -------------------------------------------------------------

def rgb_to_hsv(r, g, b):
    h, s, v = colorsys.rgb_to_hsv(r / 255.0, g / 255.0, b / 255.0)
    return HsvColor((h * 360.0) % 360.0, s, v)


def _round_half_up(x):
    return int(math.floor(x + 0.5))


def hsv_to_rgb(color):
    r, g, b = colorsys.hsv_to_rgb((color.h % 360.0) / 360.0, color.s, color.v)
    return tuple(_round_half_up(c * 255.0) for c in (r, g, b))


def rgb_to_hsv_array(rgb):
    """Vectorized hexcone conversion of an ``(..., 3)`` uint8 array.

    Returns hue in degrees, saturation and value in [0, 1]; hue is 0 where
    the pixel is achromatic.
    """
    rgb = np.asarray(rgb, dtype=np.float64) / 255.0
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    maxc = rgb.max(axis=-1)
    minc = rgb.min(axis=-1)
    delta = maxc - minc
    v = maxc
    s = np.where(maxc > 0, delta / np.where(maxc > 0, maxc, 1.0), 0.0)
    safe = np.where(delta > 0, delta, 1.0)
    rc = (maxc - r) / safe
    gc = (maxc - g) / safe
    bc = (maxc - b) / safe
    h = np.where(r == maxc, bc - gc, np.where(g == maxc, 2.0 + rc - bc, 4.0 + gc - rc))
    h = np.where(delta > 0, (h / 6.0) % 1.0, 0.0) * 360.0
    return h, s, v


# -- raster geometry ---------------------------------------------------------

def crop(raster, box, clamp=False):
    """Cut ``box`` (rounded outward) out of ``raster``.

    With ``clamp`` the crop is clipped to the raster; otherwise the output
    always has the rounded box size and out-of-bounds pixels are zero.
    """
    height, width = raster.shape[:2]
    x0, y0, x1, y1 = box.pixel_bounds()
    cx0, cy0 = max(x0, 0), max(y0, 0)
    cx1, cy1 = min(x1, width), min(y1, height)
    if cx1 <= cx0 or cy1 <= cy0:
        raise ValueError(f"box {box} lies fully outside the {width}x{height} raster")
    if clamp:
        return raster[cy0:cy1, cx0:cx1].copy()
    out = np.zeros((y1 - y0, x1 - x0) + raster.shape[2:], dtype=raster.dtype)
    out[cy0 - y0:cy1 - y0, cx0 - x0:cx1 - x0] = raster[cy0:cy1, cx0:cx1]
    return out


def _bilinear_axis(n_in, n_out):
    src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0.0, n_in - 1)
    i0 = np.floor(src).astype(np.intp)
    i1 = np.minimum(i0 + 1, n_in - 1)
    return i0, i1, src - i0


def resize(raster, out_w, out_h, mode="bilinear"):
    """Resize with pixel-center alignment.

    ``bilinear`` returns float64 (no re-quantization); ``nearest`` keeps the
    input dtype so depth values are never invented.
    """
    if out_w < 1 or out_h < 1:
        raise ValueError("output size must be positive")
    in_h, in_w = raster.shape[:2]
    if mode == "nearest":
        ys = np.minimum(((np.arange(out_h) + 0.5) * in_h / out_h).astype(np.intp), in_h - 1)
        xs = np.minimum(((np.arange(out_w) + 0.5) * in_w / out_w).astype(np.intp), in_w - 1)
        return raster[ys[:, None], xs[None, :]].copy()
    if mode != "bilinear":
        raise ValueError(f"unknown resize mode {mode!r}")
    data = raster.astype(np.float64)
    y0, y1, fy = _bilinear_axis(in_h, out_h)
    x0, x1, fx = _bilinear_axis(in_w, out_w)
    extra = (1,) * (data.ndim - 2)
    fy = fy.reshape((-1, 1) + extra)
    rows = data[y0] * (1.0 - fy) + data[y1] * fy
    fx = fx.reshape((1, -1) + extra)
    return rows[:, x0] * (1.0 - fx) + rows[:, x1] * fx


# -- sequence directories ----------------------------------------------------

def _frame_name(index):
    return f"{index:08d}.png"


def parse_box_line(line, frame=None):
    parts = line.replace("\t", ",").split(",")
    if len(parts) != 4:
        raise SequenceFormatError(f"expected 'left,top,w,h', got {line.strip()!r}", frame)
    try:
        left, top, w, h = (float(p) for p in parts)
        return Box(left, top, w, h)
    except ValueError as exc:
        raise SequenceFormatError(f"bad box line {line.strip()!r}: {exc}", frame) from None


def format_box(box):
    return ",".join(f"{v:.6g}" for v in box.as_tuple())


def write_sequence(directory, frames, boxes, tags=None):
    """Write frames and ground truth in the on-disk sequence layout."""
    if len(frames) != len(boxes):
        raise ValueError("one ground-truth box per frame required")
    os.makedirs(os.path.join(directory, "color"), exist_ok=True)
    os.makedirs(os.path.join(directory, "depth"), exist_ok=True)
    for frame in frames:
        name = _frame_name(frame.index)
        Image.fromarray(frame.color).save(os.path.join(directory, "color", name))
        Image.fromarray(frame.depth).save(os.path.join(directory, "depth", name))
    with open(os.path.join(directory, "groundtruth.txt"), "w") as fh:
        for box in boxes:
            fh.write(format_box(box) + "\n")
    if tags is not None:
        with open(os.path.join(directory, "tags.txt"), "w") as fh:
            fh.write("\n".join(tags) + "\n")


def _read_depth_png(path):
    with Image.open(path) as img:
        arr = np.array(img)
    if arr.ndim != 2:
        raise ValueError(f"depth image must be single-channel, got shape {arr.shape}")
    if arr.dtype != np.uint16:
        if arr.min() < 0 or arr.max() > 65535:
            raise ValueError("depth values exceed 16 bits")
        arr = arr.astype(np.uint16)
    return arr


def _read_color_png(path):
    with Image.open(path) as img:
        return np.array(img.convert("RGB"))


def read_groundtruth(path):
    with open(path) as fh:
        lines = [ln for ln in fh.read().splitlines() if ln.strip()]
    return [parse_box_line(ln, i + 1) for i, ln in enumerate(lines)]


def read_tags(path):
    if not os.path.exists(path):
        return None
    with open(path) as fh:
        return [ln.strip() for ln in fh.read().splitlines() if ln.strip()]


def load_sequence(directory):
    """Read a sequence directory; returns ``(frames, boxes)``."""
    gt_path = os.path.join(directory, "groundtruth.txt")
    if not os.path.exists(gt_path):
        raise SequenceFormatError(f"missing {gt_path}")
    boxes = read_groundtruth(gt_path)
    frames = []
    for index in range(1, len(boxes) + 1):
        name = _frame_name(index)
        cpath = os.path.join(directory, "color", name)
        dpath = os.path.join(directory, "depth", name)
        for path in (cpath, dpath):
            if not os.path.exists(path):
                raise SequenceFormatError(f"missing file {path}", index)
        try:
            color = _read_color_png(cpath)
            depth = _read_depth_png(dpath)
        except (OSError, ValueError) as exc:
            raise SequenceFormatError(str(exc), index) from None
        if color.shape[:2] != depth.shape:
            raise SequenceFormatError(
                f"color {color.shape[1]}x{color.shape[0]} vs depth {depth.shape[1]}x{depth.shape[0]}",
                index,
            )
        frames.append(RgbdFrame(color, depth, index))
    extra = os.path.join(directory, "color", _frame_name(len(boxes) + 1))
    if os.path.exists(extra):
        raise SequenceFormatError("more frames than ground-truth lines", len(boxes) + 1)
    return frames, boxes
