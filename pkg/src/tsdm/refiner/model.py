"""Two-branch color/depth fusion regressor with hand-written backprop.

Per branch: three 3x3 stride-2 convolutions (ReLU).  The first layer's output
is average-pooled down to the last layer's spatial size and concatenated with
it (spatial + semantic taps).  Both branches are concatenated channel-wise,
fused by a 1x1 convolution, average-pooled to a ``pool_grid`` square grid
(1 = global average pool; the default keeps the full 13x13 map) and regressed
by two fully-connected layers to four sigmoid outputs ``(w, h, xr, yb)``.

Arrays are NCHW float64.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..errors import NumericError

BRANCHES = ("color", "depth")


@dataclass(frozen=True)
class Arch:
    input_size: int = 100
    widths: tuple = (8, 16, 32)
    fuse_channels: int = 32
    pool_grid: int = 13       # = conv3 size: the fused map reaches the FC layer unpooled
    hidden: int = 128
    outputs: int = 4

    def conv_sizes(self):
        sizes = [self.input_size]
        for _ in self.widths:
            sizes.append((sizes[-1] - 1) // 2 + 1)
        return sizes

    def param_shapes(self):
        shapes = {}
        for br in BRANCHES:
            cin = 3
            for i, cout in enumerate(self.widths, 1):
                shapes[f"{br}.conv{i}.w"] = (cout, cin, 3, 3)
                shapes[f"{br}.conv{i}.b"] = (cout,)
                cin = cout
        tap = self.widths[0] + self.widths[-1]
        shapes["fuse.w"] = (self.fuse_channels, 2 * tap)
        shapes["fuse.b"] = (self.fuse_channels,)
        shapes["fc1.w"] = (self.hidden, self.fuse_channels * self.pool_grid ** 2)
        shapes["fc1.b"] = (self.hidden,)
        shapes["fc2.w"] = (self.outputs, self.hidden)
        shapes["fc2.b"] = (self.outputs,)
        return shapes

    def descriptor(self):
        d = asdict(self)
        d["widths"] = list(self.widths)
        d["layers"] = [[name, list(shape)] for name, shape in self.param_shapes().items()]
        return d


def is_backbone(name):
    return name.split(".")[0] in BRANCHES


@dataclass
class RefinerModel:
    arch: Arch
    params: dict

    @classmethod
    def init(cls, arch=Arch(), seed=0):
        """Glorot-uniform weights, zero biases."""
        rng = np.random.default_rng(seed)
        params = {}
        for name, shape in arch.param_shapes().items():
            if name.endswith(".b"):
                params[name] = np.zeros(shape)
                continue
            receptive = int(np.prod(shape[2:])) if len(shape) > 2 else 1
            fan_in, fan_out = shape[1] * receptive, shape[0] * receptive
            a = np.sqrt(6.0 / (fan_in + fan_out))
            params[name] = rng.uniform(-a, a, size=shape)
        return cls(arch, params)

    @classmethod
    def zeros(cls, arch=Arch()):
        return cls(arch, {n: np.zeros(s) for n, s in arch.param_shapes().items()})

    def copy(self):
        return RefinerModel(self.arch, {k: v.copy() for k, v in self.params.items()})

    def n_params(self):
        return sum(v.size for v in self.params.values())


# -- layer primitives --------------------------------------------------------

def _im2col(x):
    """``(N, C, H, W)`` -> ``(N, C*9, Ho*Wo)`` columns for a 3x3/stride-2/pad-1 conv."""
    n, c, h, w = x.shape
    ho, wo = (h - 1) // 2 + 1, (w - 1) // 2 + 1
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    taps = [xp[:, :, ky:ky + 2 * ho - 1:2, kx:kx + 2 * wo - 1:2] for ky in range(3) for kx in range(3)]
    cols = np.stack(taps, axis=2)  # (N, C, 9, Ho, Wo)
    return cols.reshape(n, c * 9, ho * wo), (ho, wo)


def _col2im(dcols, x_shape, out_hw):
    n, c, h, w = x_shape
    ho, wo = out_hw
    dcols = dcols.reshape(n, c, 9, ho, wo)
    dxp = np.zeros((n, c, h + 2, w + 2))
    k = 0
    for ky in range(3):
        for kx in range(3):
            dxp[:, :, ky:ky + 2 * ho - 1:2, kx:kx + 2 * wo - 1:2] += dcols[:, :, k]
            k += 1
    return dxp[:, :, 1:-1, 1:-1]


def conv_forward(x, w, b):
    cols, (ho, wo) = _im2col(x)
    out = np.matmul(w.reshape(w.shape[0], -1), cols) + b[None, :, None]
    return out.reshape(x.shape[0], w.shape[0], ho, wo), cols


def conv_backward(dout, cols, x_shape, w, need_dx=True):
    n, o = dout.shape[:2]
    d = dout.reshape(n, o, -1)
    dw = np.matmul(d, cols.transpose(0, 2, 1)).sum(axis=0).reshape(w.shape)
    db = d.sum(axis=(0, 2))
    dx = None
    if need_dx:
        dcols = np.matmul(w.reshape(o, -1).T, d)
        dx = _col2im(dcols, x_shape, dout.shape[2:])
    return dx, dw, db


def pool_matrix(n_in, n_out):
    """Adaptive average pooling along one axis as an ``(n_out, n_in)`` matrix."""
    m = np.zeros((n_out, n_in))
    for i in range(n_out):
        start = (i * n_in) // n_out
        end = -((-(i + 1) * n_in) // n_out)
        m[i, start:end] = 1.0 / (end - start)
    return m


def pool_forward(x, ph, pw):
    return np.matmul(np.matmul(ph, x), pw.T)


def pool_backward(dout, ph, pw):
    return np.matmul(np.matmul(ph.T, dout), pw)


def pointwise_forward(x, w, b):
    n, c, h, wd = x.shape
    out = np.matmul(w, x.reshape(n, c, h * wd)) + b[None, :, None]
    return out.reshape(n, w.shape[0], h, wd)


def pointwise_backward(dout, x, w):
    n, o, h, wd = dout.shape
    d = dout.reshape(n, o, h * wd)
    xf = x.reshape(n, x.shape[1], h * wd)
    dw = np.matmul(d, xf.transpose(0, 2, 1)).sum(axis=0)
    dx = np.matmul(w.T, d).reshape(x.shape)
    return dx, dw, d.sum(axis=(0, 2))


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _check(name, arr):
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"non-finite activation in layer {name}")


# -- network -----------------------------------------------------------------

def forward(model, color, depth, keep_cache=False):
    """Batched forward pass. ``color``/``depth``: ``(N, 3, S, S)``. Returns ``(N, 4)``."""
    arch, p = model.arch, model.params
    sizes = arch.conv_sizes()
    early_pool = pool_matrix(sizes[1], sizes[-1])
    cache = {"early_pool": early_pool}
    taps = []
    for br, x in zip(BRANCHES, (color, depth)):
        h = np.asarray(x, dtype=np.float64)
        early = None
        for i in range(1, len(arch.widths) + 1):
            name = f"{br}.conv{i}"
            z, cols = conv_forward(h, p[name + ".w"], p[name + ".b"])
            _check(name, z)
            if keep_cache:
                cache[name] = (cols, h.shape, z)
            h = np.maximum(z, 0.0)
            if i == 1:
                early = h
        pooled = pool_forward(early, early_pool, early_pool)
        taps.append(np.concatenate([pooled, h], axis=1))
    feat = np.concatenate(taps, axis=1)
    fz = pointwise_forward(feat, p["fuse.w"], p["fuse.b"])
    _check("fuse", fz)
    fa = np.maximum(fz, 0.0)
    grid = pool_matrix(sizes[-1], arch.pool_grid)
    g = pool_forward(fa, grid, grid)
    flat = g.reshape(g.shape[0], -1)
    z1 = flat @ p["fc1.w"].T + p["fc1.b"]
    _check("fc1", z1)
    a1 = np.maximum(z1, 0.0)
    z2 = a1 @ p["fc2.w"].T + p["fc2.b"]
    _check("fc2", z2)
    out = sigmoid(z2)
    if keep_cache:
        cache.update(feat=feat, fz=fz, grid=grid, g_shape=g.shape, flat=flat, z1=z1, a1=a1, out=out)
        return out, cache
    return out


def backward(model, cache, dout, train_backbone=True):
    """Gradients of a scalar whose derivative w.r.t. the outputs is ``dout``."""
    arch, p = model.arch, model.params
    grads = {}
    out = cache["out"]
    dz2 = dout * out * (1.0 - out)
    grads["fc2.w"] = dz2.T @ cache["a1"]
    grads["fc2.b"] = dz2.sum(axis=0)
    dz1 = (dz2 @ p["fc2.w"]) * (cache["z1"] > 0)
    grads["fc1.w"] = dz1.T @ cache["flat"]
    grads["fc1.b"] = dz1.sum(axis=0)
    dg = (dz1 @ p["fc1.w"]).reshape(cache["g_shape"])
    dfa = pool_backward(dg, cache["grid"], cache["grid"])
    dfz = dfa * (cache["fz"] > 0)
    dfeat, grads["fuse.w"], grads["fuse.b"] = pointwise_backward(dfz, cache["feat"], p["fuse.w"])
    if not train_backbone:
        return grads
    c_early, c_late = arch.widths[0], arch.widths[-1]
    tap = c_early + c_late
    n_layers = len(arch.widths)
    for bi, br in enumerate(BRANCHES):
        dtap = dfeat[:, bi * tap:(bi + 1) * tap]
        d_early = pool_backward(dtap[:, :c_early], cache["early_pool"], cache["early_pool"])
        dh = dtap[:, c_early:]
        for i in range(n_layers, 0, -1):
            name = f"{br}.conv{i}"
            cols, x_shape, z = cache[name]
            if i == 1:
                dh = dh + d_early
            dz = dh * (z > 0)
            dh, dw, db = conv_backward(dz, cols, x_shape, p[name + ".w"], need_dx=i > 1)
            grads[name + ".w"] = dw
            grads[name + ".b"] = db
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient for {name}")
    return grads
