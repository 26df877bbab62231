import math
import os

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tsdm.errors import SequenceFormatError
from tsdm.frames import (
    Box,
    HsvColor,
    RgbdFrame,
    crop,
    hsv_to_rgb,
    load_sequence,
    parse_box_line,
    resize,
    rgb_to_hsv,
    rgb_to_hsv_array,
    write_sequence,
)
from tsdm.synthlab import ObjectSpec, SceneSpec, render_frames, render_sequence


def hexcone_rgb(h, s, v):
    """Textbook HSV -> RGB via chroma / sector, rounded half-up."""
    c = v * s
    hp = (h % 360.0) / 60.0
    x = c * (1 - abs(hp % 2 - 1))
    sector = [(c, x, 0), (x, c, 0), (0, c, x), (0, x, c), (x, 0, c), (c, 0, x)][int(hp) % 6]
    m = v - c
    return tuple(int(math.floor((ch + m) * 255 + 0.5)) for ch in sector)


def test_pure_red():
    assert rgb_to_hsv(255, 0, 0) == HsvColor(0.0, 1.0, 1.0)


def test_green_at_70_percent_value():
    expected = hexcone_rgb(120.0, 1.0, 0.7)
    assert expected == (0, 179, 0)
    assert hsv_to_rgb(HsvColor(120.0, 1.0, 0.7)) == expected


def test_gray_is_achromatic():
    assert rgb_to_hsv(128, 128, 128).s == 0.0


@pytest.mark.parametrize("h", [0.0, 37.5, 60.0, 119.0, 181.0, 240.0, 299.9, 359.0])
@pytest.mark.parametrize("s,v", [(1.0, 0.7), (0.5, 0.5), (0.25, 1.0)])
def test_hsv_to_rgb_matches_hexcone(h, s, v):
    assert hsv_to_rgb(HsvColor(h, s, v)) == hexcone_rgb(h, s, v)


def test_roundtrip_on_channel_grid():
    levels = np.rint(np.linspace(0, 255, 32)).astype(int)
    worst = 0
    for r in levels:
        for g in levels:
            for b in levels:
                back = hsv_to_rgb(rgb_to_hsv(int(r), int(g), int(b)))
                worst = max(worst, abs(back[0] - r), abs(back[1] - g), abs(back[2] - b))
    assert worst <= 1


def test_vectorized_hsv_matches_scalar():
    rng = np.random.default_rng(3)
    px = rng.integers(0, 256, size=(500, 3))
    h, s, v = rgb_to_hsv_array(px.astype(np.uint8))
    for i, (r, g, b) in enumerate(px):
        ref = rgb_to_hsv(int(r), int(g), int(b))
        assert h[i] == pytest.approx(ref.h, abs=1e-9)
        assert s[i] == pytest.approx(ref.s, abs=1e-12)
        assert v[i] == pytest.approx(ref.v, abs=1e-12)


# -- boxes -------------------------------------------------------------------

def test_box_accessors():
    b = Box(10, 20, 30, 40)
    assert (b.cx, b.cy, b.right, b.bottom) == (25, 40, 40, 60)
    assert Box.from_center(25, 40, 30, 40) == b
    with pytest.raises(ValueError):
        Box(0, 0, 0, 5)


def test_box_rasterization_rounds_outward():
    assert Box(1.2, 2.7, 3.0, 1.1).pixel_bounds() == (1, 2, 5, 4)


# -- crop / resize -----------------------------------------------------------

def gradient_image(h=20, w=30):
    y, x = np.mgrid[0:h, 0:w]
    return np.stack([x * 5, y * 7, x + y], axis=-1).astype(np.uint8)


def test_crop_full_frame_is_identity():
    img = gradient_image()
    assert np.array_equal(crop(img, Box(0, 0, 30, 20)), img)


def test_crop_half_off_left_zero_fills():
    img = np.full((10, 10, 3), 200, np.uint8)
    out = crop(img, Box(-5, 0, 10, 10), clamp=False)
    assert out.shape == (10, 10, 3)
    assert np.all(out[:, :5] == 0)
    assert np.all(out[:, 5:] == 200)
    assert crop(img, Box(-5, 0, 10, 10), clamp=True).shape == (10, 5, 3)


def test_crop_matches_direct_indexing():
    img = gradient_image()
    out = crop(img, Box(7, 4, 10, 10))
    for y in range(10):
        for x in range(10):
            assert np.array_equal(out[y, x], img[4 + y, 7 + x])


def test_crop_outside_raises():
    with pytest.raises(ValueError):
        crop(gradient_image(), Box(100, 100, 5, 5))


@given(st.integers(1, 29), st.integers(1, 19))
def test_crop_and_complement_tile_the_raster(sx, sy):
    img = gradient_image()
    tl = crop(img, Box(0, 0, sx, sy), clamp=True)
    tr = crop(img, Box(sx, 0, 30 - sx, sy), clamp=True)
    bl = crop(img, Box(0, sy, sx, 20 - sy), clamp=True)
    br = crop(img, Box(sx, sy, 30 - sx, 20 - sy), clamp=True)
    rebuilt = np.vstack([np.hstack([tl, tr]), np.hstack([bl, br])])
    assert np.array_equal(rebuilt, img)


def test_resize_identity_and_constant():
    img = gradient_image()
    assert np.array_equal(resize(img, 30, 20), img.astype(np.float64))
    assert np.array_equal(resize(img, 30, 20, "nearest"), img)
    const = np.full((2, 2), 9.0)
    for w, h in [(1, 1), (5, 3), (17, 40)]:
        assert np.all(resize(const, w, h) == 9.0)


def bilinear_oracle(src, out_w, out_h):
    in_h, in_w = src.shape
    out = np.zeros((out_h, out_w))
    for i in range(out_h):
        for j in range(out_w):
            y = min(max((i + 0.5) * in_h / out_h - 0.5, 0.0), in_h - 1)
            x = min(max((j + 0.5) * in_w / out_w - 0.5, 0.0), in_w - 1)
            y0, x0 = int(math.floor(y)), int(math.floor(x))
            y1, x1 = min(y0 + 1, in_h - 1), min(x0 + 1, in_w - 1)
            fy, fx = y - y0, x - x0
            out[i, j] = (
                src[y0, x0] * (1 - fy) * (1 - fx) + src[y0, x1] * (1 - fy) * fx
                + src[y1, x0] * fy * (1 - fx) + src[y1, x1] * fy * fx
            )
    return out


@pytest.mark.parametrize("out_w,out_h", [(7, 7), (3, 5), (10, 2), (4, 4)])
def test_resize_ramp_matches_bilinear_oracle(out_w, out_h):
    ramp = np.arange(16, dtype=np.float64).reshape(4, 4) * 3.0 + np.arange(4)[:, None]
    np.testing.assert_allclose(resize(ramp, out_w, out_h), bilinear_oracle(ramp, out_w, out_h), atol=1e-12)


def test_nearest_never_invents_values():
    depth = np.array([[1000, 3000], [5000, 7000]], dtype=np.uint16)
    out = resize(depth, 9, 7, "nearest")
    assert out.dtype == np.uint16
    assert set(np.unique(out)) <= {1000, 3000, 5000, 7000}


# -- sequence I/O ------------------------------------------------------------

def small_scene(frames=3):
    return SceneSpec(width=48, height=40, target=ObjectSpec(size=(12, 10), start=(10, 8)), frames=frames)


def test_load_roundtrip(tmp_path):
    spec = small_scene()
    frames, boxes = render_frames(spec)
    render_sequence(spec, str(tmp_path))
    loaded, gt = load_sequence(str(tmp_path))
    assert len(loaded) == 3 and gt == boxes
    for a, b in zip(frames, loaded):
        assert a.index == b.index
        assert np.array_equal(a.color, b.color)
        assert np.array_equal(a.depth, b.depth) and b.depth.dtype == np.uint16


def test_missing_depth_names_frame(tmp_path):
    render_sequence(small_scene(), str(tmp_path))
    os.remove(tmp_path / "depth" / "00000002.png")
    with pytest.raises(SequenceFormatError, match="frame 2"):
        load_sequence(str(tmp_path))


def test_dimension_mismatch_names_frame(tmp_path):
    frames, boxes = render_frames(small_scene())
    write_sequence(str(tmp_path), frames, boxes)
    odd = RgbdFrame(np.zeros((10, 10, 3), np.uint8), np.ones((10, 10), np.uint16), 3)
    write_sequence(str(tmp_path / "x"), [odd], [boxes[0]])
    os.replace(tmp_path / "x" / "color" / "00000003.png", tmp_path / "color" / "00000003.png")
    with pytest.raises(SequenceFormatError, match="frame 3"):
        load_sequence(str(tmp_path))


def test_malformed_groundtruth(tmp_path):
    render_sequence(small_scene(), str(tmp_path))
    (tmp_path / "groundtruth.txt").write_text("1,2,3,4\n1,2,x,4\n1,2,3,4\n")
    with pytest.raises(SequenceFormatError, match="frame 2"):
        load_sequence(str(tmp_path))


def test_groundtruth_line_format():
    assert parse_box_line("10,20,30,40") == Box(10, 20, 30, 40)


def test_frame_rejects_mismatched_rasters():
    with pytest.raises(ValueError):
        RgbdFrame(np.zeros((4, 5, 3), np.uint8), np.zeros((5, 4), np.uint16), 1)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_depth_png_roundtrip_is_bit_exact(tmp_path_factory, seed):
    rng = np.random.default_rng(seed)
    depth = rng.integers(0, 65536, size=(6, 7), dtype=np.uint16)
    color = rng.integers(0, 256, size=(6, 7, 3), dtype=np.uint8)
    d = tmp_path_factory.mktemp("seq")
    write_sequence(str(d), [RgbdFrame(color, depth, 1)], [Box(0, 0, 1, 1)])
    frames, _ = load_sequence(str(d))
    assert np.array_equal(frames[0].depth, depth)
    assert np.array_equal(frames[0].color, color)
