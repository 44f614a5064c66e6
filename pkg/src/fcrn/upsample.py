"""Unpooling, up-convolution and up-projection blocks, in naive and fast form.

The naive path unpools (each value to the top-left of a 2x2 zero block) and
runs a 'same'-padded 5x5 convolution over the mostly-zero map. The fast path
splits the 5x5 filter by row/column parity into four sub-filters, convolves
the original map with each and interleaves the four results into the
2H x 2W output. The two paths compute the same function; the fast one skips
every multiplication by a structural zero (25 multiplies per 2x2 output
cell instead of 100).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import ConvParams, conv2d_backward, conv2d_forward, relu, relu_backward

SAME5 = (2, 2, 2, 2)
SAME3 = (1, 1, 1, 1)

# name -> (filter rows, filter cols, padding (t, b, l, r), output phase (row, col))
#
# Output row 2i reads unpooled rows 2i-2, 2i, 2i+2, i.e. source rows i-1, i, i+1
# through the even filter rows; output row 2i+1 reads source rows i, i+1 through
# the odd filter rows. Columns follow the same rule.
_PARITY = {
    "a": (slice(0, 5, 2), slice(0, 5, 2), (1, 1, 1, 1), (0, 0)),
    "b": (slice(0, 5, 2), slice(1, 5, 2), (1, 1, 0, 1), (0, 1)),
    "c": (slice(1, 5, 2), slice(0, 5, 2), (0, 1, 1, 1), (1, 0)),
    "d": (slice(1, 5, 2), slice(1, 5, 2), (0, 1, 0, 1), (1, 1)),
}


def unpool(x: np.ndarray) -> np.ndarray:
    N, C, H, W = x.shape
    out = np.zeros((N, C, 2 * H, 2 * W), dtype=x.dtype)
    out[:, :, ::2, ::2] = x
    return out


def unpool_backward(grad_out: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(grad_out[:, :, ::2, ::2])


def _check_5x5(params: ConvParams) -> None:
    if params.kernel != (5, 5):
        raise ValueError(f"up-convolution needs a 5x5 kernel, got weight shape {params.weight.shape}")
    if params.stride != (1, 1):
        raise ValueError(f"up-convolution needs stride 1, got {params.stride}")


@dataclass
class FilterDecomposition:
    a: np.ndarray  # (outC, inC, 3, 3)
    b: np.ndarray  # (outC, inC, 3, 2)
    c: np.ndarray  # (outC, inC, 2, 3)
    d: np.ndarray  # (outC, inC, 2, 2)
    bias: np.ndarray | None = None

    @property
    def out_channels(self) -> int:
        return self.a.shape[0]

    @property
    def in_channels(self) -> int:
        return self.a.shape[1]


def decompose_filter(params: ConvParams) -> FilterDecomposition:
    _check_5x5(params)
    w = params.weight
    subs = {name: w[:, :, rows, cols].copy() for name, (rows, cols, _, _) in _PARITY.items()}
    bias = None if params.bias is None else params.bias.copy()
    return FilterDecomposition(bias=bias, **subs)


def recompose_filter(dec: FilterDecomposition) -> ConvParams:
    w = np.zeros((dec.out_channels, dec.in_channels, 5, 5), dtype=dec.a.dtype)
    for name, (rows, cols, _, _) in _PARITY.items():
        w[:, :, rows, cols] = getattr(dec, name)
    bias = None if dec.bias is None else dec.bias.copy()
    return ConvParams(w, bias, (1, 1), SAME5)


def _check_decomposition(x: np.ndarray, dec: FilterDecomposition) -> None:
    O, C = dec.out_channels, dec.in_channels
    expected = {"a": (O, C, 3, 3), "b": (O, C, 3, 2), "c": (O, C, 2, 3), "d": (O, C, 2, 2)}
    for name, shape in expected.items():
        got = getattr(dec, name).shape
        if got != shape:
            raise ValueError(f"sub-filter {name.upper()} has shape {got}, expected {shape}")
    if x.shape[1] != C:
        raise ValueError(f"input shape {x.shape} has {x.shape[1]} channels but decomposition expects {C}")


# ---------------------------------------------------------------------------
# up-convolution

def _upconv_naive_pre(x, params):
    return conv2d_forward(unpool(x), params.with_padding(SAME5))


def upconv_naive(x: np.ndarray, params: ConvParams, activation: bool = True) -> np.ndarray:
    """relu(conv5x5(unpool(x))) with 'same' padding; output (N, outC, 2H, 2W).

    The padding stored in ``params`` is ignored.
    """
    _check_5x5(params)
    pre = _upconv_naive_pre(x, params)
    return relu(pre) if activation else pre


def upconv_naive_backward(x, params: ConvParams, grad_out, activation: bool = True):
    """Returns ``(grad_input, grad_weight, grad_bias)``."""
    _check_5x5(params)
    u = unpool(x)
    p = params.with_padding(SAME5)
    g = grad_out
    if activation:
        g = relu_backward(conv2d_forward(u, p), grad_out)
    gu, gw, gb = conv2d_backward(u, p, g)
    return unpool_backward(gu), gw, gb


def _upconv_fast_pre(x, dec):
    _check_decomposition(x, dec)
    N, _, H, W = x.shape
    out = np.empty((N, dec.out_channels, 2 * H, 2 * W), dtype=np.result_type(x, dec.a))
    for name, (_, _, pad, (pr, pc)) in _PARITY.items():
        out[:, :, pr::2, pc::2] = conv2d_forward(x, ConvParams(getattr(dec, name), None, (1, 1), pad))
    if dec.bias is not None:
        out += dec.bias[None, :, None, None]
    return out


def upconv_fast(x: np.ndarray, dec: FilterDecomposition, activation: bool = True) -> np.ndarray:
    pre = _upconv_fast_pre(x, dec)
    return relu(pre) if activation else pre


def upconv_fast_backward(x, dec: FilterDecomposition, grad_out, activation: bool = True):
    """Returns ``(grad_input, grad_decomposition)``.

    ``grad_decomposition`` holds the sub-filter and bias gradients; pass it to
    :func:`recompose_filter` to get the 5x5 weight gradient.
    """
    _check_decomposition(x, dec)
    N, _, H, W = x.shape
    if grad_out.shape != (N, dec.out_channels, 2 * H, 2 * W):
        raise ValueError(f"grad_out shape {grad_out.shape} does not match up-convolution output "
                         f"{(N, dec.out_channels, 2 * H, 2 * W)}")
    g = relu_backward(_upconv_fast_pre(x, dec), grad_out) if activation else grad_out
    grad_x = np.zeros(x.shape, dtype=np.result_type(x, g))
    subs = {}
    for name, (_, _, pad, (pr, pc)) in _PARITY.items():
        gx, gw, _ = conv2d_backward(x, ConvParams(getattr(dec, name), None, (1, 1), pad),
                                    np.ascontiguousarray(g[:, :, pr::2, pc::2]))
        grad_x += gx
        subs[name] = gw
    gb = None if dec.bias is None else g.sum(axis=(0, 2, 3))
    return grad_x, FilterDecomposition(bias=gb, **subs)


def upconv_multiplies(N: int, C: int, H: int, W: int, out_channels: int) -> tuple[int, int]:
    """(naive, fast) multiply counts for one up-convolution on an (N, C, H, W) input."""
    naive = N * out_channels * C * (2 * H) * (2 * W) * 25
    fast = N * out_channels * C * H * W * (9 + 6 + 6 + 4)
    return naive, fast


# ---------------------------------------------------------------------------
# up-projection

@dataclass
class UpProjParams:
    """Weights of one up-projection block.

    The main branch is 5x5 conv -> relu -> 3x3 conv, the projection branch a
    single 5x5 conv; both read the same unpooled map and are summed before the
    final relu.
    """

    conv1: ConvParams  # main 5x5
    conv2: ConvParams  # main 3x3
    proj: ConvParams   # projection 5x5

    def __post_init__(self):
        _check_5x5(self.conv1)
        _check_5x5(self.proj)
        if self.conv2.kernel != (3, 3):
            raise ValueError(f"up-projection main branch needs a 3x3 second conv, got {self.conv2.weight.shape}")
        c_in = self.conv1.weight.shape[1]
        if self.proj.weight.shape[1] != c_in:
            raise ValueError(f"branch input channels differ: conv1 {self.conv1.weight.shape}, "
                             f"proj {self.proj.weight.shape}")
        if self.conv2.weight.shape[1] != self.conv1.weight.shape[0]:
            raise ValueError(f"conv2 weight {self.conv2.weight.shape} does not follow conv1 weight "
                             f"{self.conv1.weight.shape}")
        if self.conv2.weight.shape[0] != self.proj.weight.shape[0]:
            raise ValueError(f"branch output channels differ: main {self.conv2.weight.shape[0]}, "
                             f"projection {self.proj.weight.shape[0]}")
        self.conv1 = self.conv1.with_padding(SAME5)
        self.conv2 = self.conv2.with_padding(SAME3)
        self.proj = self.proj.with_padding(SAME5)

    @property
    def in_channels(self) -> int:
        return self.conv1.weight.shape[1]

    @property
    def out_channels(self) -> int:
        return self.proj.weight.shape[0]


def _check_upproj_input(x, p: UpProjParams):
    if x.ndim != 4 or x.shape[1] != p.in_channels:
        raise ValueError(f"input shape {x.shape} does not match up-projection input channels {p.in_channels}")


def upproject_forward(x: np.ndarray, p: UpProjParams, fast: bool = False):
    """Returns ``(output, cache)``; ``cache`` feeds :func:`upproject_backward`."""
    _check_upproj_input(x, p)
    if fast:
        dec1, decp = decompose_filter(p.conv1), decompose_filter(p.proj)
        pre1 = _upconv_fast_pre(x, dec1)
        skip = _upconv_fast_pre(x, decp)
        u = None
    else:
        dec1 = decp = None
        u = unpool(x)
        pre1 = conv2d_forward(u, p.conv1)
        skip = conv2d_forward(u, p.proj)
    h = relu(pre1)
    total = conv2d_forward(h, p.conv2) + skip
    cache = dict(fast=fast, u=u, pre1=pre1, h=h, total=total, dec1=dec1, decp=decp)
    return relu(total), cache


def upproject(x: np.ndarray, p: UpProjParams) -> np.ndarray:
    return upproject_forward(x, p, fast=False)[0]


def upproject_fast(x: np.ndarray, p: UpProjParams) -> np.ndarray:
    return upproject_forward(x, p, fast=True)[0]


def upproject_backward(x: np.ndarray, p: UpProjParams, grad_out: np.ndarray, fast: bool = False, cache=None):
    """Returns ``(grad_input, grads)`` with ``grads`` an :class:`UpProjParams` of gradients."""
    if cache is None:
        _, cache = upproject_forward(x, p, fast=fast)
    fast = cache["fast"]
    if grad_out.shape != cache["total"].shape:
        raise ValueError(f"grad_out shape {grad_out.shape} does not match up-projection output "
                         f"{cache['total'].shape}")
    g = relu_backward(cache["total"], grad_out)
    gh, gw2, gb2 = conv2d_backward(cache["h"], p.conv2, g)
    g1 = relu_backward(cache["pre1"], gh)
    if fast:
        gx1, d1 = _fast_linear_backward(x, cache["dec1"], g1)
        gxp, dp = _fast_linear_backward(x, cache["decp"], g)
        gx = gx1 + gxp
        c1, cp = recompose_filter(d1), recompose_filter(dp)
        gw1, gb1, gwp, gbp = c1.weight, c1.bias, cp.weight, cp.bias
    else:
        u = cache["u"]
        gu1, gw1, gb1 = conv2d_backward(u, p.conv1, g1)
        gup, gwp, gbp = conv2d_backward(u, p.proj, g)
        gx = unpool_backward(gu1 + gup)
    grads = UpProjParams(ConvParams(gw1, gb1), ConvParams(gw2, gb2), ConvParams(gwp, gbp))
    return gx, grads


def _fast_linear_backward(x, dec, g):
    return upconv_fast_backward(x, dec, g, activation=False)


def upproject_fast_backward(x, p: UpProjParams, grad_out):
    return upproject_backward(x, p, grad_out, fast=True)
