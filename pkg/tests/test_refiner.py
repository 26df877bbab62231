import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import refiner_loss_direct, smooth_l1_direct
from tsdm.coretrk import ScoredBox
from tsdm.errors import NumericError
from tsdm.frames import Box
from tsdm.refiner import (
    Arch,
    RefinerModel,
    RefinerOutput,
    TrainConfig,
    WeightsFormatError,
    amplify,
    denormalize_box,
    forward,
    grad_check,
    load_weights,
    loss,
    loss_grad,
    lr_at,
    nms_merge,
    normalize_box,
    prepare_input,
    refine,
    save_weights,
    smooth_l1,
    train,
)
from tsdm.refiner.model import pool_matrix
from tsdm.refiner.train import analytic_grads

TINY = Arch(input_size=9, widths=(2, 3, 2), fuse_channels=3, pool_grid=2, hidden=5)


def tiny_model(seed=0):
    m = RefinerModel.init(TINY, seed)
    rng = np.random.default_rng(seed + 100)
    for k in m.params:
        if k.endswith(".b"):
            m.params[k] = rng.normal(0, 0.1, m.params[k].shape)
    return m


def tiny_batch(seed=0, n=2):
    rng = np.random.default_rng(seed)
    color = rng.uniform(0, 1, (n, 3, 9, 9))
    depth = np.repeat(rng.uniform(0, 1, (n, 1, 9, 9)), 3, axis=1)
    gt = rng.uniform(0.2, 0.9, (n, 4))
    return color, depth, gt


# -- straight-line forward oracle -------------------------------------------

def conv_loop(x, w, b):
    c_out = w.shape[0]
    h = x.shape[1]
    ho = (h - 1) // 2 + 1
    out = np.zeros((c_out, ho, ho))
    for o in range(c_out):
        for i in range(ho):
            for j in range(ho):
                acc = b[o]
                for c in range(x.shape[0]):
                    for ky in range(3):
                        for kx in range(3):
                            y, xx = 2 * i + ky - 1, 2 * j + kx - 1
                            if 0 <= y < h and 0 <= xx < h:
                                acc += w[o, c, ky, kx] * x[c, y, xx]
                out[o, i, j] = acc
    return out


def adaptive_pool_loop(x, n_out):
    n_in = x.shape[1]
    out = np.zeros((x.shape[0], n_out, n_out))
    for i in range(n_out):
        y0, y1 = math.floor(i * n_in / n_out), math.ceil((i + 1) * n_in / n_out)
        for j in range(n_out):
            x0, x1 = math.floor(j * n_in / n_out), math.ceil((j + 1) * n_in / n_out)
            out[:, i, j] = x[:, y0:y1, x0:x1].mean(axis=(1, 2))
    return out


def forward_loop(model, color, depth):
    p = model.params
    taps = []
    for br, x in (("color", color), ("depth", depth)):
        h = x
        acts = []
        for i in (1, 2, 3):
            h = np.maximum(conv_loop(h, p[f"{br}.conv{i}.w"], p[f"{br}.conv{i}.b"]), 0)
            acts.append(h)
        taps += [adaptive_pool_loop(acts[0], h.shape[1]), h]
    feat = np.concatenate(taps, axis=0)
    fz = np.einsum("oc,chw->ohw", p["fuse.w"], feat) + p["fuse.b"][:, None, None]
    g = adaptive_pool_loop(np.maximum(fz, 0), model.arch.pool_grid).ravel()
    a1 = np.maximum(p["fc1.w"] @ g + p["fc1.b"], 0)
    z2 = p["fc2.w"] @ a1 + p["fc2.b"]
    return 1 / (1 + np.exp(-z2))


def test_forward_matches_loop_oracle():
    model = tiny_model(3)
    color, depth, _ = tiny_batch(4, n=3)
    fast = forward(model, color, depth)
    for i in range(3):
        np.testing.assert_allclose(fast[i], forward_loop(model, color[i], depth[i]), rtol=0, atol=1e-9)


def test_pool_matrix_rows_average():
    m = pool_matrix(13, 4)
    np.testing.assert_allclose(m.sum(axis=1), 1.0)
    assert np.all(m.sum(axis=0) > 0)  # every input feeds some bin
    np.testing.assert_allclose(pool_matrix(5, 5), np.eye(5))


def test_default_arch_shapes():
    arch = Arch()
    assert arch.conv_sizes() == [100, 50, 25, 13]
    out = forward(RefinerModel.init(arch, 0), np.zeros((2, 3, 100, 100)), np.zeros((2, 3, 100, 100)))
    assert out.shape == (2, 4)
    assert np.all((out > 0) & (out < 1))


def test_nonfinite_input_raises():
    color, depth, _ = tiny_batch()
    color[0, 0, 0, 0] = np.nan
    with pytest.raises(NumericError, match="color.conv1"):
        forward(tiny_model(), color, depth)


# -- loss --------------------------------------------------------------------

def test_smooth_l1_branches_meet():
    assert smooth_l1(1.0) == 0.5 and smooth_l1(-1.0) == 0.5
    assert smooth_l1(0.0) == 0.0


@given(st.floats(-10, 10))
def test_smooth_l1_matches_direct(x):
    assert smooth_l1(x) == smooth_l1_direct(x)


def test_loss_zero_at_target_and_matches_direct():
    rng = np.random.default_rng(0)
    for _ in range(100):
        g = rng.uniform(0.05, 1, (3, 4))
        p = rng.uniform(0, 1, (3, 4))
        assert loss(g, g) == 0.0
        assert abs(loss(p, g) - refiner_loss_direct(p, g)) <= 1e-12


def test_loss_rejects_nonpositive_truth():
    with pytest.raises(ValueError):
        loss(np.ones(4), np.array([1, 0, 1, 1.0]))


def test_loss_grad_finite_difference():
    rng = np.random.default_rng(1)
    p, g = rng.uniform(0, 1, (2, 4)), rng.uniform(0.2, 1, (2, 4))
    eps = 1e-7
    num = np.zeros_like(p)
    for idx in np.ndindex(p.shape):
        up, dn = p.copy(), p.copy()
        up[idx] += eps
        dn[idx] -= eps
        num[idx] = (loss(up, g) - loss(dn, g)) / (2 * eps)
    np.testing.assert_allclose(loss_grad(p, g), num, atol=1e-6)


# -- gradient check ----------------------------------------------------------

def test_grad_check_tiny():
    color, depth, gt = tiny_batch(5)
    err, n = grad_check(tiny_model(5), color, depth, gt, per_tensor=6)
    assert err < 1e-5
    assert n > 50


def test_grad_check_detects_wrong_gradient():
    model = tiny_model(6)
    color, depth, gt = tiny_batch(6)
    grads = analytic_grads(model, color, depth, gt)
    grads = {k: v * 1.5 for k, v in grads.items()}
    err, _ = grad_check(model, color, depth, gt, per_tensor=3, grads=grads)
    assert err > 0.1


def test_grad_check_eps_range():
    color, depth, gt = tiny_batch()
    with pytest.raises(ValueError):
        grad_check(tiny_model(), color, depth, gt, eps=1e-2)


# -- training ----------------------------------------------------------------

def test_lr_schedule_endpoints():
    cfg = TrainConfig()
    assert lr_at(cfg, 0, 100) == 0.05
    assert lr_at(cfg, 99, 100) == pytest.approx(0.0001)
    lrs = [lr_at(cfg, i, 100) for i in range(100)]
    assert all(a > b for a, b in zip(lrs, lrs[1:]))


def tiny_dataset(n=12, seed=0):
    from tsdm.refiner import RefinerInput
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        rc = rng.uniform(0, 1, (9, 9, 3)).astype(np.float32)
        rd = np.repeat(rng.uniform(0, 1, (9, 9, 1)), 3, axis=2).astype(np.float32)
        gt = RefinerOutput(*rng.uniform(0.3, 0.8, 4))
        out.append((RefinerInput(rc, rd, Box(0, 0, 9, 9)), gt))
    return out


def test_backbone_frozen_then_trained():
    model = tiny_model(7)
    data = tiny_dataset()
    frozen, _ = train(model, data, TrainConfig(batch=4, epochs=1, backbone_freeze_epochs=1))
    assert np.array_equal(frozen.params["color.conv1.w"], model.params["color.conv1.w"])
    assert not np.array_equal(frozen.params["fc2.w"], model.params["fc2.w"])
    thawed, _ = train(model, data, TrainConfig(batch=4, epochs=2, backbone_freeze_epochs=1))
    assert not np.array_equal(thawed.params["color.conv1.w"], model.params["color.conv1.w"])


def test_training_is_deterministic_and_reduces_loss():
    data = tiny_dataset(16)
    cfg = TrainConfig(batch=4, epochs=6, lr_start=0.05, backbone_freeze_epochs=1)
    a, trace = train(tiny_model(8), data, cfg)
    b, _ = train(tiny_model(8), data, cfg)
    for k in a.params:
        assert np.array_equal(a.params[k], b.params[k])
    assert trace[-1] < trace[0]


def test_training_does_not_mutate_input():
    model = tiny_model(9)
    before = model.copy()
    train(model, tiny_dataset(4), TrainConfig(batch=4, epochs=1, backbone_freeze_epochs=0))
    for k in model.params:
        assert np.array_equal(model.params[k], before.params[k])


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_is_reported():
    model = tiny_model(10)
    model.params["fc1.w"][:] = np.inf
    with pytest.raises(NumericError):
        train(model, tiny_dataset(4), TrainConfig(batch=4, epochs=1))


# -- weights file ------------------------------------------------------------

def test_weights_roundtrip(tmp_path):
    model = tiny_model(11)
    path = tmp_path / "w.bin"
    save_weights(model, str(path))
    back = load_weights(str(path), expected_arch=TINY)
    assert back.arch == TINY
    for k, v in model.params.items():
        assert np.array_equal(back.params[k], v.astype(np.float32).astype(np.float64))


def test_weights_rejects_bad_files(tmp_path):
    path = tmp_path / "w.bin"
    save_weights(tiny_model(), str(path))
    raw = path.read_bytes()
    with pytest.raises(WeightsFormatError, match="different architecture"):
        load_weights(str(path), expected_arch=Arch())
    (tmp_path / "bad").write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(WeightsFormatError, match="magic"):
        load_weights(str(tmp_path / "bad"))
    (tmp_path / "short").write_bytes(raw[:-5])
    with pytest.raises(WeightsFormatError, match="truncated"):
        load_weights(str(tmp_path / "short"))
    (tmp_path / "long").write_bytes(raw + b"\0")
    with pytest.raises(WeightsFormatError, match="trailing"):
        load_weights(str(tmp_path / "long"))


# -- pretreatment ------------------------------------------------------------

def test_nms_merge_unions_overlapping_candidates():
    cands = [
        ScoredBox(Box(10, 10, 20, 20), 0.9),
        ScoredBox(Box(11, 10, 20, 20), 0.8),   # IOU ~0.9
        ScoredBox(Box(40, 40, 20, 20), 0.85),  # disjoint
    ]
    assert nms_merge(cands, 0.7) == Box(10, 10, 21, 20)
    assert nms_merge(cands, 1.0) == Box(10, 10, 20, 20)
    with pytest.raises(ValueError):
        nms_merge([])


def test_amplify_grows_about_center_and_clips():
    assert amplify(Box(40, 40, 20, 10), 0.1, 100, 100) == Box(39, 39.5, 22, 11)
    assert amplify(Box(0, 0, 20, 20), 0.1, 100, 100) == Box(0, 0, 21, 21)


@given(st.floats(0, 50), st.floats(0, 50), st.floats(1, 50), st.floats(1, 50))
def test_normalize_denormalize_roundtrip(l, t, w, h):
    crop_box = Box(l, t, 60, 70)
    inner = Box(l + 1, t + 2, min(w, 58), min(h, 67))
    back = denormalize_box(normalize_box(inner, crop_box), crop_box)
    for a, b in zip(back.as_tuple(), inner.as_tuple()):
        assert a == pytest.approx(b, abs=1e-9)


def test_prepare_input_ranges():
    rng = np.random.default_rng(0)
    color = rng.integers(0, 256, (50, 60, 3), dtype=np.uint8)
    depth = rng.integers(0, 5000, (50, 60)).astype(np.uint16)
    inp = prepare_input(color, depth, Box(-5, 10.5, 30, 20))
    assert inp.rc.shape == (100, 100, 3) and inp.rd.shape == (100, 100, 3)
    assert inp.crop_box == Box(-5, 10, 30, 21)
    assert 0 <= inp.rc.min() and inp.rc.max() <= 1
    assert 0 <= inp.rd.min() and inp.rd.max() <= 1
    assert np.array_equal(inp.rd[..., 0], inp.rd[..., 2])


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 1000))
def test_refined_box_inside_amplified_region(seed):
    rng = np.random.default_rng(seed)
    color = rng.integers(0, 256, (60, 80, 3), dtype=np.uint8)
    depth = rng.integers(500, 5000, (60, 80)).astype(np.uint16)
    box = Box(rng.uniform(0, 50), rng.uniform(0, 30), rng.uniform(5, 30), rng.uniform(5, 30))
    model = RefinerModel.init(Arch(), seed % 7)
    out = refine(color, depth, model, [ScoredBox(box, 0.9)], 0.7, 0.1)
    region = amplify(box, 0.1, 80, 60)
    assert region.contains(out)
