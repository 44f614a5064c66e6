"""Self-check suites: fast/naive up-sampling equivalence and finite-difference gradients.

Each suite returns the worst error it saw, keyed by case, so callers decide
on tolerances. Random inputs are kept away from the kinks of relu and max
pooling (and from the berHu cutoff) so central differences are meaningful.
"""

from __future__ import annotations

import numpy as np

from .archgraph import ArchGraph, instantiate
from .gradcheck import max_rel_error, numerical_grad
from .loss import batch_loss, berhu_grad, berhu_value
from .tensor import (ConvParams, avgpool_backward, avgpool_forward, batchnorm_backward, batchnorm_forward,
                     bilinear_upsample, bilinear_upsample_backward, conv2d_backward, conv2d_forward,
                     dropout_backward, dropout_forward, fc_backward, fc_forward, maxpool_backward,
                     maxpool_forward, relu, relu_backward)
from .upsample import (UpProjParams, decompose_filter, recompose_filter, unpool, unpool_backward,
                       upconv_fast, upconv_fast_backward, upconv_naive, upconv_naive_backward,
                       upproject_backward, upproject_forward)

FD_STEP = 1e-5
KINK_MARGIN = 1e-3  # pre-activations closer than this to 0 trigger a redraw


def _conv(rng, o, c, k, bias=True):
    kh, kw = (k, k) if np.isscalar(k) else k
    return ConvParams(rng.standard_normal((o, c, kh, kw)),
                      rng.standard_normal(o) if bias else None)


def _upproj_params(rng, c, o, bias=True):
    return UpProjParams(_conv(rng, o, c, 5, bias), _conv(rng, o, o, 3, bias), _conv(rng, o, c, 5, bias))


# ---------------------------------------------------------------------------
# fast vs naive

def equivalence_suite(n_configs: int = 200, seed: int = 0) -> dict[str, float]:
    """Max abs deviation between fast and naive up-convolution / up-projection, values and grads."""
    rng = np.random.default_rng(seed)
    worst = dict.fromkeys(["upconv", "upconv_grad", "upproject", "upproject_grad"], 0.0)
    for _ in range(n_configs):
        N = int(rng.integers(1, 3))
        C = int(rng.integers(1, 6))
        O = int(rng.integers(1, 6))
        H = int(rng.integers(1, 8))
        W = int(rng.integers(1, 8))
        bias = bool(rng.random() < 0.8)
        x = rng.standard_normal((N, C, H, W))
        g = rng.standard_normal((N, O, 2 * H, 2 * W))

        params = _conv(rng, O, C, 5, bias)
        dec = decompose_filter(params)
        worst["upconv"] = max(worst["upconv"], float(np.abs(upconv_fast(x, dec) - upconv_naive(x, params)).max()))
        gx_n, gw_n, gb_n = upconv_naive_backward(x, params, g)
        gx_f, gdec = upconv_fast_backward(x, dec, g)
        gf = recompose_filter(gdec)
        errs = [np.abs(gx_f - gx_n).max(), np.abs(gf.weight - gw_n).max()]
        if bias:
            errs.append(np.abs(gf.bias - gb_n).max())
        worst["upconv_grad"] = max(worst["upconv_grad"], float(max(errs)))

        p = _upproj_params(rng, C, O, bias)
        y_n, cache_n = upproject_forward(x, p, fast=False)
        y_f, cache_f = upproject_forward(x, p, fast=True)
        worst["upproject"] = max(worst["upproject"], float(np.abs(y_f - y_n).max()))
        gx_n, gp_n = upproject_backward(x, p, g, cache=cache_n)
        gx_f, gp_f = upproject_backward(x, p, g, cache=cache_f)
        errs = [np.abs(gx_f - gx_n).max()]
        for name in ("conv1", "conv2", "proj"):
            a, b = getattr(gp_f, name), getattr(gp_n, name)
            errs.append(np.abs(a.weight - b.weight).max())
            if bias:
                errs.append(np.abs(a.bias - b.bias).max())
        worst["upproject_grad"] = max(worst["upproject_grad"], float(max(errs)))
    return worst


# ---------------------------------------------------------------------------
# finite differences

def _away_from_zero(rng, shape, lo=0.1):
    return rng.choice([-1.0, 1.0], size=shape) * rng.uniform(lo, 1.0, size=shape)


def _distinct(rng, shape, spacing=0.01):
    """Values with pairwise gaps of at least ``spacing``, so max pooling has no near-ties."""
    n = int(np.prod(shape))
    return (rng.permutation(n) * spacing - n * spacing / 2).reshape(shape)


def _case_conv(rng):
    N, C, O = int(rng.integers(1, 3)), int(rng.integers(1, 4)), int(rng.integers(1, 4))
    k = (int(rng.integers(1, 4)), int(rng.integers(1, 4)))
    stride = (int(rng.integers(1, 3)), int(rng.integers(1, 3)))
    pad = tuple(int(v) for v in rng.integers(0, 3, size=4))
    H, W = int(rng.integers(k[0], 7)), int(rng.integers(k[1], 7))
    x = rng.standard_normal((N, C, H, W))
    p = ConvParams(rng.standard_normal((O, C, *k)), rng.standard_normal(O), stride, pad)
    R = rng.standard_normal(conv2d_forward(x, p).shape)
    f = lambda: float(np.sum(conv2d_forward(x, p) * R))
    gx, gw, gb = conv2d_backward(x, p, R)
    return [(gx, x, f), (gw, p.weight, f), (gb, p.bias, f)]


def _case_fc(rng):
    N, C, H, W, O = (int(v) for v in rng.integers(1, 4, size=5))
    x = rng.standard_normal((N, C, H, W))
    w, b = rng.standard_normal((O, C * H * W)), rng.standard_normal(O)
    R = rng.standard_normal((N, O))
    f = lambda: float(np.sum(fc_forward(x, w, b) * R))
    gx, gw, gb = fc_backward(x, w, R, True)
    return [(gx, x, f), (gw, w, f), (gb, b, f)]


def _case_relu(rng):
    x = _away_from_zero(rng, (2, 3, 4, 4))
    R = rng.standard_normal(x.shape)
    return [(relu_backward(x, R), x, lambda: float(np.sum(relu(x) * R)))]


def _case_dropout(rng):
    x = rng.standard_normal((2, 3, 4, 4))
    keep = float(rng.uniform(0.3, 0.9))
    s = int(rng.integers(1 << 31))
    R = rng.standard_normal(x.shape)
    _, mask = dropout_forward(x, keep, np.random.default_rng(s))
    f = lambda: float(np.sum(dropout_forward(x, keep, np.random.default_rng(s))[0] * R))
    return [(dropout_backward(R, mask), x, f)]


def _case_batchnorm(rng, train):
    C = int(rng.integers(1, 4))
    x = rng.standard_normal((int(rng.integers(2, 4)), C, 3, 3)) * 2 + 1
    gamma, beta = rng.standard_normal(C), rng.standard_normal(C)
    rm, rv = rng.standard_normal(C), rng.uniform(0.5, 2.0, C)
    R = rng.standard_normal(x.shape)
    f = lambda: float(np.sum(batchnorm_forward(x, gamma, beta, rm, rv, train)[0] * R))
    gx, gg, gb = batchnorm_backward(x, gamma, R, train, rm, rv)
    return [(gx, x, f), (gg, gamma, f), (gb, beta, f)]


def _case_pool(rng, mode):
    k = int(rng.integers(2, 4))
    s = int(rng.integers(1, 3))
    pad = int(rng.integers(0, k // 2 + 1))
    x = _distinct(rng, (2, 2, int(rng.integers(k, 7)), int(rng.integers(k, 7))))
    fwd, bwd = (maxpool_forward, maxpool_backward) if mode == "max" else (avgpool_forward, avgpool_backward)
    R = rng.standard_normal(fwd(x, k, s, pad).shape)
    return [(bwd(x, R, k, s, pad), x, lambda: float(np.sum(fwd(x, k, s, pad) * R)))]


def _case_bilinear(rng):
    h, w = (int(v) for v in rng.integers(1, 6, size=2))
    th, tw = (int(v) for v in rng.integers(1, 11, size=2))
    x = rng.standard_normal((2, 2, h, w))
    R = rng.standard_normal((2, 2, th, tw))
    f = lambda: float(np.sum(bilinear_upsample(x, th, tw) * R))
    return [(bilinear_upsample_backward(R, h, w), x, f)]


def _case_unpool(rng):
    x = rng.standard_normal((2, 2, int(rng.integers(1, 5)), int(rng.integers(1, 5))))
    R = rng.standard_normal(unpool(x).shape)
    return [(unpool_backward(R), x, lambda: float(np.sum(unpool(x) * R)))]


def _redraw(make, rng, ok, tries=100):
    for _ in range(tries):
        case = make(rng)
        if ok(case):
            return case
    raise RuntimeError("could not draw a case away from the relu kinks")


def _case_upconv(rng, fast):
    def make(r):
        C, O, H, W = (int(v) for v in r.integers(1, 4, size=4))
        return r.standard_normal((2, C, H, W)), _conv(r, O, C, 5)
    x, p = _redraw(make, rng, lambda c: np.abs(upconv_naive(c[0], c[1], activation=False)).min() > KINK_MARGIN)
    R = rng.standard_normal(upconv_naive(x, p).shape)
    if fast:
        dec = decompose_filter(p)
        f = lambda: float(np.sum(upconv_fast(x, dec) * R))
        gx, gd = upconv_fast_backward(x, dec, R)
        return [(gx, x, f)] + [(getattr(gd, k), getattr(dec, k), f) for k in ("a", "b", "c", "d", "bias")]
    f = lambda: float(np.sum(upconv_naive(x, p) * R))
    gx, gw, gb = upconv_naive_backward(x, p, R)
    return [(gx, x, f), (gw, p.weight, f), (gb, p.bias, f)]


def _case_upproject(rng, fast):
    def make(r):
        C, O, H, W = (int(v) for v in r.integers(1, 4, size=4))
        return r.standard_normal((2, C, H, W)), _upproj_params(r, C, O)

    def ok(case):
        _, cache = upproject_forward(*case)
        return min(np.abs(cache["pre1"]).min(), np.abs(cache["total"]).min()) > KINK_MARGIN

    x, p = _redraw(make, rng, ok)
    R = rng.standard_normal(upproject_forward(x, p)[0].shape)
    f = lambda: float(np.sum(upproject_forward(x, p, fast)[0] * R))
    gx, gp = upproject_backward(x, p, R, fast=fast)
    out = [(gx, x, f)]
    for name in ("conv1", "conv2", "proj"):
        out += [(getattr(gp, name).weight, getattr(p, name).weight, f),
                (getattr(gp, name).bias, getattr(p, name).bias, f)]
    return out


def _case_berhu(rng):
    # c is held fixed: the training loss treats the cutoff as a constant
    c = float(rng.uniform(0.2, 1.0))
    x = _away_from_zero(rng, (40,), 0.05) * 3 * c
    x = x[np.abs(np.abs(x) - c) > 0.05 * c]
    f = lambda: float(np.sum(berhu_value(x, c)))
    return [(berhu_grad(x, c), x, f)]


def _case_l2(rng):
    pred = rng.standard_normal((2, 1, 4, 4))
    target = rng.standard_normal((2, 1, 4, 4))
    mask = rng.random(pred.shape) < 0.7
    mask.flat[0] = True
    _, g = batch_loss(pred, target, mask, "l2")
    return [(g, pred, lambda: batch_loss(pred, target, mask, "l2")[0])]


def _case_network(rng):
    """Grouped conv, batch norm, residual add, unpool and dense output wired through a graph."""
    g = ArchGraph((4, 4, 4), "gradcheck")
    g.add("conv", "c1", kernel=3, padding=1, out_channels=4, groups=2)
    a = g.add("batchnorm", "bn1")
    g.add("conv", "c2", kernel=1, out_channels=4, bias=False)
    g.add("add", "sum", inputs=[g.output, a])
    g.add("unpool", "up")
    g.add("pool", "avg", kernel=2, stride=2, mode="avg")
    g.add("fc", "out", out_shape=(1, 2, 3))
    net = instantiate(g, seed=int(rng.integers(1 << 31)))
    x = rng.standard_normal((2, 4, 4, 4))
    R = rng.standard_normal((2, 1, 2, 3))
    net.forward(x, train=True)
    gx = net.backward(R, input_grad=True)
    f = lambda: float(np.sum(net.forward(x, train=True) * R))
    grads = net.gradients()
    # snapshot: later forward calls must not disturb the analytic values
    return [(gx.copy(), x, f)] + [(grads[k].copy(), v, f) for k, v in net.parameters().items()]


LAYER_CASES = {
    "conv2d": _case_conv,
    "fc": _case_fc,
    "relu": _case_relu,
    "dropout": _case_dropout,
    "batchnorm_train": lambda r: _case_batchnorm(r, True),
    "batchnorm_eval": lambda r: _case_batchnorm(r, False),
    "maxpool": lambda r: _case_pool(r, "max"),
    "avgpool": lambda r: _case_pool(r, "avg"),
    "bilinear": _case_bilinear,
    "unpool": _case_unpool,
    "upconv_naive": lambda r: _case_upconv(r, False),
    "upconv_fast": lambda r: _case_upconv(r, True),
    "upproject_naive": lambda r: _case_upproject(r, False),
    "upproject_fast": lambda r: _case_upproject(r, True),
    "berhu": _case_berhu,
    "l2": _case_l2,
    "network": _case_network,
}


def gradient_suite(cases: int = 20, seed: int = 0, layers=None, eps: float = FD_STEP) -> dict[str, float]:
    """Worst relative error of each layer's backward pass against central differences."""
    rng = np.random.default_rng(seed)
    worst = {}
    for name in layers or LAYER_CASES:
        make = LAYER_CASES[name]
        err = 0.0
        for _ in range(cases):
            for analytic, wrt, f in make(rng):
                if wrt is None:
                    continue
                err = max(err, max_rel_error(analytic, numerical_grad(f, wrt, eps)))
        worst[name] = err
    return worst
