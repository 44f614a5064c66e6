"""Dense NCHW layer kernels with explicit forward and backward passes.

Tensors are plain 4-D numpy arrays laid out as (batch, channel, height, width).
Convolution is cross-correlation (no kernel flip) everywhere in the package.
"""

from __future__ import annotations

from contextlib import contextmanager
from contextvars import ContextVar
from dataclasses import dataclass, replace

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def _pair(v) -> tuple[int, int]:
    if isinstance(v, (int, np.integer)):
        return int(v), int(v)
    a, b = v
    return int(a), int(b)


def _quad(v) -> tuple[int, int, int, int]:
    if isinstance(v, (int, np.integer)):
        return (int(v),) * 4
    if len(v) == 2:
        return int(v[0]), int(v[0]), int(v[1]), int(v[1])
    t, b, l, r = v
    return int(t), int(b), int(l), int(r)


def _check4d(x: np.ndarray, what: str = "input") -> None:
    if x.ndim != 4:
        raise ValueError(f"{what} must be 4-D (N, C, H, W), got shape {x.shape}")


def pad2d(x: np.ndarray, padding, value: float = 0.0) -> np.ndarray:
    t, b, l, r = _quad(padding)
    if not (t or b or l or r):
        return x
    return np.pad(x, ((0, 0), (0, 0), (t, b), (l, r)), constant_values=value)


# ---------------------------------------------------------------------------
# multiply accounting

class MultiplyCounter:
    def __init__(self):
        self.count = 0

    def add(self, n: int) -> None:
        self.count += int(n)


_active_counter: ContextVar[MultiplyCounter | None] = ContextVar("_active_counter", default=None)


@contextmanager
def count_multiplies():
    """Count the scalar multiplies done by convolution forward passes in this block.

    >>> with count_multiplies() as counter:
    ...     conv2d_forward(x, params)
    >>> counter.count
    """
    counter = MultiplyCounter()
    token = _active_counter.set(counter)
    try:
        yield counter
    finally:
        _active_counter.reset(token)


def _record_multiplies(n: int) -> None:
    counter = _active_counter.get()
    if counter is not None:
        counter.add(n)


# ---------------------------------------------------------------------------
# convolution

@dataclass
class ConvParams:
    weight: np.ndarray                  # (outC, inC, kH, kW)
    bias: np.ndarray | None = None      # (outC,)
    stride: tuple[int, int] = (1, 1)
    padding: tuple[int, int, int, int] = (0, 0, 0, 0)  # top, bottom, left, right

    def __post_init__(self):
        self.stride = _pair(self.stride)
        self.padding = _quad(self.padding)
        if self.weight.ndim != 4:
            raise ValueError(f"conv weight must be 4-D (outC, inC, kH, kW), got {self.weight.shape}")
        if self.bias is not None and self.bias.shape != (self.weight.shape[0],):
            raise ValueError(
                f"bias shape {self.bias.shape} does not match weight out-channels {self.weight.shape[0]}")
        if min(self.stride) < 1:
            raise ValueError(f"stride must be positive, got {self.stride}")
        if min(self.padding) < 0:
            raise ValueError(f"padding must be non-negative, got {self.padding}")

    @property
    def kernel(self) -> tuple[int, int]:
        return self.weight.shape[2], self.weight.shape[3]

    def with_padding(self, padding) -> "ConvParams":
        return replace(self, padding=_quad(padding))


def conv_output_size(size: int, k: int, stride: int, pad_lo: int, pad_hi: int) -> int:
    return (size + pad_lo + pad_hi - k) // stride + 1


def _conv_geometry(x: np.ndarray, params: ConvParams):
    _check4d(x)
    O, C, kh, kw = params.weight.shape
    if x.shape[1] != C:
        raise ValueError(
            f"input shape {x.shape} has {x.shape[1]} channels but weight shape "
            f"{params.weight.shape} expects {C}")
    t, b, l, r = params.padding
    H, W = x.shape[2] + t + b, x.shape[3] + l + r
    if H < kh or W < kw:
        raise ValueError(
            f"padded input extent {(H, W)} of input shape {x.shape} is smaller than "
            f"kernel of weight shape {params.weight.shape}")
    sh, sw = params.stride
    return (H - kh) // sh + 1, (W - kw) // sw + 1


def _windows(xp: np.ndarray, kh: int, kw: int, sh: int, sw: int, Ho: int, Wo: int) -> np.ndarray:
    # (N, C, Ho, Wo, kh, kw) strided view, no copy
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))
    return win[:, :, ::sh, ::sw][:, :, :Ho, :Wo]


def im2col(xp: np.ndarray, kh: int, kw: int, sh: int, sw: int, Ho: int, Wo: int) -> np.ndarray:
    """(C*kh*kw, N*Ho*Wo) patch matrix of an already padded input."""
    N, C = xp.shape[:2]
    win = _windows(xp, kh, kw, sh, sw, Ho, Wo)
    # copying with Wo innermost keeps the gather mostly contiguous
    return win.transpose(1, 4, 5, 0, 2, 3).reshape(C * kh * kw, N * Ho * Wo)


def conv2d_forward(x: np.ndarray, params: ConvParams) -> np.ndarray:
    Ho, Wo = _conv_geometry(x, params)
    w = params.weight
    N = x.shape[0]
    O, C, kh, kw = w.shape
    sh, sw = params.stride
    cols = im2col(pad2d(x, params.padding), kh, kw, sh, sw, Ho, Wo)
    out = (w.reshape(O, -1) @ cols).reshape(O, N, Ho, Wo)
    out = np.ascontiguousarray(out.transpose(1, 0, 2, 3))
    if params.bias is not None:
        out += params.bias[None, :, None, None]
    _record_multiplies(N * O * C * Ho * Wo * kh * kw)
    return out


def conv2d_backward(x: np.ndarray, params: ConvParams, grad_out: np.ndarray, input_grad: bool = True):
    """Gradients of ``sum(grad_out * conv2d_forward(x, params))``.

    Returns ``(grad_input, grad_weight, grad_bias)``; ``grad_bias`` is None when
    the layer has no bias, ``grad_input`` is None when ``input_grad`` is False.
    """
    Ho, Wo = _conv_geometry(x, params)
    N = x.shape[0]
    w = params.weight
    O, C, kh, kw = w.shape
    if grad_out.shape != (N, O, Ho, Wo):
        raise ValueError(
            f"grad_out shape {grad_out.shape} does not match conv output shape {(N, O, Ho, Wo)}")
    sh, sw = params.stride
    t, b, l, r = params.padding
    xp = pad2d(x, params.padding)
    cols = im2col(xp, kh, kw, sh, sw, Ho, Wo)
    g = grad_out.transpose(1, 0, 2, 3).reshape(O, N * Ho * Wo)

    grad_b = g.sum(axis=1) if params.bias is not None else None
    grad_w = (g @ cols.T).reshape(w.shape)
    if not input_grad:
        return None, grad_w, grad_b

    gcols = (w.reshape(O, -1).T @ g).reshape(C, kh, kw, N, Ho, Wo)
    gxp = np.zeros((C, N, xp.shape[2], xp.shape[3]), dtype=gcols.dtype)
    for i in range(kh):
        for j in range(kw):
            gxp[:, :, i:i + sh * (Ho - 1) + 1:sh, j:j + sw * (Wo - 1) + 1:sw] += gcols[:, i, j]
    grad_x = gxp[:, :, t:t + x.shape[2], l:l + x.shape[3]].transpose(1, 0, 2, 3)
    return np.ascontiguousarray(grad_x), grad_w, grad_b


# ---------------------------------------------------------------------------
# fully connected

def fc_forward(x: np.ndarray, weight: np.ndarray, bias: np.ndarray | None) -> np.ndarray:
    """Dense layer on the flattened input; ``weight`` is (out_features, in_features)."""
    flat = x.reshape(x.shape[0], -1)
    if flat.shape[1] != weight.shape[1]:
        raise ValueError(f"input shape {x.shape} flattens to {flat.shape[1]} features but "
                         f"weight shape {weight.shape} expects {weight.shape[1]}")
    out = flat @ weight.T
    if bias is not None:
        out += bias
    _record_multiplies(flat.shape[0] * weight.size)
    return out


def fc_backward(x: np.ndarray, weight: np.ndarray, grad_out: np.ndarray, has_bias: bool = True):
    flat = x.reshape(x.shape[0], -1)
    grad_out = grad_out.reshape(flat.shape[0], weight.shape[0])
    grad_x = (grad_out @ weight).reshape(x.shape)
    grad_w = grad_out.T @ flat
    grad_b = grad_out.sum(axis=0) if has_bias else None
    return grad_x, grad_w, grad_b


# ---------------------------------------------------------------------------
# pointwise

def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0)


def relu_backward(x: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
    return grad_out * (x > 0)


def dropout_forward(x: np.ndarray, keep_prob: float, rng: np.random.Generator, train: bool = True):
    """Inverted dropout. Returns ``(y, mask)``; in eval mode the mask is None and y is x."""
    if not 0.0 < keep_prob <= 1.0:
        raise ValueError(f"keep_prob must be in (0, 1], got {keep_prob}")
    if not train:
        return x, None
    mask = (rng.random(x.shape) < keep_prob) / keep_prob
    return x * mask, mask


def dropout_backward(grad_out: np.ndarray, mask: np.ndarray | None) -> np.ndarray:
    return grad_out if mask is None else grad_out * mask


# ---------------------------------------------------------------------------
# batch normalization

def batchnorm_forward(x, gamma, beta, running_mean, running_var, train=True, momentum=0.1, eps=1e-5):
    """Per-channel batch normalization.

    Train mode normalizes with batch statistics and returns updated running
    statistics (unbiased variance, exponential moving average). Eval mode uses
    the running statistics and returns them unchanged.

    Returns ``(y, new_running_mean, new_running_var)``.
    """
    _check4d(x)
    if train:
        mean = x.mean(axis=(0, 2, 3))
        var = x.var(axis=(0, 2, 3))
        m = x.shape[0] * x.shape[2] * x.shape[3]
        unbiased = var * m / max(m - 1, 1)
        new_mean = (1 - momentum) * running_mean + momentum * mean
        new_var = (1 - momentum) * running_var + momentum * unbiased
    else:
        mean, var = running_mean, running_var
        new_mean, new_var = running_mean, running_var
    xhat = (x - mean[None, :, None, None]) / np.sqrt(var + eps)[None, :, None, None]
    y = gamma[None, :, None, None] * xhat + beta[None, :, None, None]
    return y, new_mean, new_var


def batchnorm_backward(x, gamma, grad_out, train=True, running_mean=None, running_var=None, eps=1e-5):
    """Returns ``(grad_input, grad_gamma, grad_beta)``.

    Eval mode treats the running statistics as constants, so the layer is affine.
    """
    axes = (0, 2, 3)
    if train:
        mean = x.mean(axis=axes, keepdims=True)
        var = x.var(axis=axes, keepdims=True)
    else:
        if running_mean is None or running_var is None:
            raise ValueError("eval-mode batchnorm backward needs running_mean and running_var")
        mean = running_mean[None, :, None, None]
        var = running_var[None, :, None, None]
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x - mean) * inv_std
    grad_beta = grad_out.sum(axis=axes)
    grad_gamma = (grad_out * xhat).sum(axis=axes)
    dxhat = grad_out * gamma[None, :, None, None]
    if not train:
        return dxhat * inv_std, grad_gamma, grad_beta
    grad_x = inv_std * (dxhat - dxhat.mean(axis=axes, keepdims=True)
                        - xhat * (dxhat * xhat).mean(axis=axes, keepdims=True))
    return grad_x, grad_gamma, grad_beta


# ---------------------------------------------------------------------------
# pooling

def _pool_geometry(x, kernel, stride, padding):
    _check4d(x)
    kh, kw = _pair(kernel)
    sh, sw = _pair(stride)
    t, b, l, r = _quad(padding)
    Ho = conv_output_size(x.shape[2], kh, sh, t, b)
    Wo = conv_output_size(x.shape[3], kw, sw, l, r)
    if Ho < 1 or Wo < 1:
        raise ValueError(f"pooling window {(kh, kw)} does not fit input shape {x.shape} with padding {(t, b, l, r)}")
    return kh, kw, sh, sw, (t, b, l, r), Ho, Wo


def _maxpool_argmax(x, kernel, stride, padding):
    kh, kw, sh, sw, pad, Ho, Wo = _pool_geometry(x, kernel, stride, padding)
    xp = pad2d(x, pad, value=-np.inf)
    win = _windows(xp, kh, kw, sh, sw, Ho, Wo)
    flat = win.reshape(*win.shape[:4], kh * kw)
    # argmax returns the first maximum in row-major window order
    idx = flat.argmax(axis=-1)
    out = np.take_along_axis(flat, idx[..., None], axis=-1)[..., 0]
    return out, idx, xp.shape, (kh, kw, sh, sw, pad, Ho, Wo)


def maxpool_forward(x: np.ndarray, kernel, stride, padding=0) -> np.ndarray:
    return _maxpool_argmax(x, kernel, stride, padding)[0]


def maxpool_backward(x: np.ndarray, grad_out: np.ndarray, kernel, stride, padding=0) -> np.ndarray:
    out, idx, padded_shape, (kh, kw, sh, sw, pad, Ho, Wo) = _maxpool_argmax(x, kernel, stride, padding)
    if grad_out.shape != out.shape:
        raise ValueError(f"grad_out shape {grad_out.shape} does not match pooled shape {out.shape}")
    gxp = np.zeros(padded_shape, dtype=grad_out.dtype)
    for i in range(kh):
        for j in range(kw):
            hit = grad_out * (idx == i * kw + j)
            gxp[:, :, i:i + sh * (Ho - 1) + 1:sh, j:j + sw * (Wo - 1) + 1:sw] += hit
    t, _, l, _ = pad
    return np.ascontiguousarray(gxp[:, :, t:t + x.shape[2], l:l + x.shape[3]])


def avgpool_forward(x: np.ndarray, kernel, stride, padding=0) -> np.ndarray:
    # zero padding counts toward the window average
    kh, kw, sh, sw, pad, Ho, Wo = _pool_geometry(x, kernel, stride, padding)
    win = _windows(pad2d(x, pad), kh, kw, sh, sw, Ho, Wo)
    return win.mean(axis=(4, 5))


def avgpool_backward(x: np.ndarray, grad_out: np.ndarray, kernel, stride, padding=0) -> np.ndarray:
    kh, kw, sh, sw, pad, Ho, Wo = _pool_geometry(x, kernel, stride, padding)
    if grad_out.shape != (x.shape[0], x.shape[1], Ho, Wo):
        raise ValueError(f"grad_out shape {grad_out.shape} does not match pooled shape "
                         f"{(x.shape[0], x.shape[1], Ho, Wo)}")
    t, b, l, r = pad
    gxp = np.zeros((x.shape[0], x.shape[1], x.shape[2] + t + b, x.shape[3] + l + r), dtype=grad_out.dtype)
    share = grad_out / (kh * kw)
    for i in range(kh):
        for j in range(kw):
            gxp[:, :, i:i + sh * (Ho - 1) + 1:sh, j:j + sw * (Wo - 1) + 1:sw] += share
    return np.ascontiguousarray(gxp[:, :, t:t + x.shape[2], l:l + x.shape[3]])


# ---------------------------------------------------------------------------
# bilinear resampling (half-pixel centers, align_corners=False)

def bilinear_matrix(in_size: int, out_size: int) -> np.ndarray:
    """(out_size, in_size) interpolation matrix; rows sum to one."""
    if in_size < 1 or out_size < 1:
        raise ValueError(f"sizes must be positive, got in={in_size} out={out_size}")
    src = (np.arange(out_size) + 0.5) * (in_size / out_size) - 0.5
    src = np.clip(src, 0.0, in_size - 1)
    i0 = np.floor(src).astype(int)
    i1 = np.minimum(i0 + 1, in_size - 1)
    frac = src - i0
    m = np.zeros((out_size, in_size))
    rows = np.arange(out_size)
    np.add.at(m, (rows, i0), 1.0 - frac)
    np.add.at(m, (rows, i1), frac)
    return m


def bilinear_upsample(x: np.ndarray, target_h: int, target_w: int) -> np.ndarray:
    _check4d(x)
    if target_h < 1 or target_w < 1:
        raise ValueError(f"target size must be positive, got {(target_h, target_w)}")
    if (target_h, target_w) == x.shape[2:]:
        return x.copy()
    ry = bilinear_matrix(x.shape[2], target_h).astype(x.dtype, copy=False)
    rx = bilinear_matrix(x.shape[3], target_w).astype(x.dtype, copy=False)
    return np.ascontiguousarray(ry @ x @ rx.T)


def bilinear_upsample_backward(grad_out: np.ndarray, in_h: int, in_w: int) -> np.ndarray:
    _check4d(grad_out, "grad_out")
    ry = bilinear_matrix(in_h, grad_out.shape[2]).astype(grad_out.dtype, copy=False)
    rx = bilinear_matrix(in_w, grad_out.shape[3]).astype(grad_out.dtype, copy=False)
    return np.ascontiguousarray(ry.T @ grad_out @ rx)
