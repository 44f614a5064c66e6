"""Reverse Huber (berHu) and L2 depth regression losses.

berHu is L1 for residuals within [-c, c] and the scaled parabola
(x^2 + c^2) / 2c outside, which meets L1 with matching value and slope at
|x| = c. The cutoff c is recomputed per batch as one fifth of the largest
absolute residual over every valid pixel of every image in the batch.
"""

from __future__ import annotations

import numpy as np

LOSS_KINDS = ("berhu", "l2")


def _valid(pred, target, mask):
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ValueError(f"prediction shape {pred.shape} does not match target shape {target.shape}")
    if mask is None:
        mask = np.ones(pred.shape, dtype=bool)
    else:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != pred.shape:
            raise ValueError(f"mask shape {mask.shape} does not match prediction shape {pred.shape}")
    if not mask.any():
        raise ValueError("loss needs at least one valid pixel, mask is empty")
    return pred, target, mask


def berhu_cutoff(pred, target, mask=None) -> float:
    pred, target, mask = _valid(pred, target, mask)
    return float(np.abs(pred - target)[mask].max()) / 5.0


def berhu_value(x, c):
    x = np.asarray(x, dtype=np.float64)
    ax = np.abs(x)
    return np.where(ax <= c, ax, (x * x + c * c) / (2.0 * c))


def berhu_grad(x, c):
    x = np.asarray(x, dtype=np.float64)
    # subgradient 0 at x == 0
    return np.where(np.abs(x) <= c, np.sign(x), x / c)


def batch_loss(pred, target, mask=None, kind: str = "berhu"):
    """Mean per-pixel loss over valid pixels and its gradient w.r.t. ``pred``.

    The berHu cutoff is treated as a constant when differentiating. Masked
    pixels get exactly zero gradient. Returns ``(loss, grad)``.
    """
    pred, target, mask = _valid(pred, target, mask)
    n = int(mask.sum())
    r = np.where(mask, pred - target, 0.0)
    if kind == "l2":
        return float((r * r).sum() / n), 2.0 * r / n
    if kind != "berhu":
        raise ValueError(f"unknown loss kind {kind!r}, expected one of {LOSS_KINDS}")
    c = float(np.abs(r).max()) / 5.0
    if c == 0.0:
        return 0.0, np.zeros_like(r)
    value = np.where(mask, berhu_value(r, c), 0.0)
    grad = np.where(mask, berhu_grad(r, c), 0.0) / n
    return float(value.sum() / n), grad
