"""Depth evaluation measures: rel, rms, rms(log), log10 and the delta accuracies.

Metrics are pooled over every valid pixel of the evaluation set, not averaged
per image. Predictions at valid pixels are floored at ``DEPTH_FLOOR`` meters
before the log-space metrics; the number of floored pixels is reported.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

DEPTH_FLOOR = 1e-3
FIELDS = ("rel", "rms", "rms_log", "log10", "delta1", "delta2", "delta3")
HEADERS = ("rel", "rms", "rms(log)", "log10", "δ1", "δ2", "δ3")


@dataclass
class MetricsReport:
    rel: float
    rms: float
    rms_log: float
    log10: float
    delta1: float
    delta2: float
    delta3: float
    n_pixels: int
    n_clamped: int = 0

    def as_dict(self) -> dict:
        return asdict(self)

    def to_record(self, sep: str = ",") -> str:
        """Single delimited line: the seven metrics in table order, then pixel counts."""
        vals = [f"{getattr(self, f):.6f}" for f in FIELDS]
        return sep.join(vals + [str(self.n_pixels), str(self.n_clamped)])

    def to_table(self) -> str:
        width = 9
        head = "|".join(h.center(width) for h in HEADERS)
        row = "|".join(f"{getattr(self, f):.4f}".center(width) for f in FIELDS)
        rule = "+".join("-" * width for _ in HEADERS)
        return "\n".join([head, rule, row])


class MetricsAccumulator:
    """Running pixel-pooled sums, so large evaluation sets never sit in memory at once."""

    def __init__(self, max_depth: float | None = None):
        self.max_depth = max_depth
        self.n = 0
        self.n_clamped = 0
        self.abs_rel = 0.0
        self.sq = 0.0
        self.sq_log = 0.0
        self.abs_log10 = 0.0
        self.hits = np.zeros(3, dtype=np.int64)

    def add(self, pred, gt, mask=None) -> None:
        pred = np.asarray(pred, dtype=np.float64)
        gt = np.asarray(gt, dtype=np.float64)
        if pred.shape != gt.shape:
            raise ValueError(f"prediction shape {pred.shape} does not match ground truth shape {gt.shape}")
        valid = np.ones(gt.shape, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
        if valid.shape != gt.shape:
            raise ValueError(f"mask shape {valid.shape} does not match ground truth shape {gt.shape}")
        if self.max_depth is not None:
            valid = valid & (gt <= self.max_depth)
        y = gt[valid]
        if np.any(y <= 0):
            raise ValueError("ground truth must be positive on valid pixels")
        p = pred[valid]
        low = ~(p >= DEPTH_FLOOR)   # catches NaN too
        self.n_clamped += int(low.sum())
        p = np.where(low, DEPTH_FLOOR, p)

        self.n += y.size
        self.abs_rel += float(np.sum(np.abs(p - y) / y))
        self.sq += float(np.sum((p - y) ** 2))
        self.sq_log += float(np.sum((np.log(p) - np.log(y)) ** 2))
        self.abs_log10 += float(np.sum(np.abs(np.log10(p) - np.log10(y))))
        ratio = np.maximum(p / y, y / p)
        for i in range(3):
            self.hits[i] += int(np.sum(ratio < 1.25 ** (i + 1)))

    def report(self) -> MetricsReport:
        if self.n == 0:
            raise ValueError("no valid pixels to evaluate")
        n = self.n
        return MetricsReport(
            rel=self.abs_rel / n,
            rms=math.sqrt(self.sq / n),
            rms_log=math.sqrt(self.sq_log / n),
            log10=self.abs_log10 / n,
            delta1=float(self.hits[0] / n),
            delta2=float(self.hits[1] / n),
            delta3=float(self.hits[2] / n),
            n_pixels=n,
            n_clamped=self.n_clamped,
        )


def evaluate(pred, gt, mask=None, max_depth: float | None = None) -> MetricsReport:
    acc = MetricsAccumulator(max_depth)
    acc.add(pred, gt, mask)
    return acc.report()


def evaluate_many(pairs, max_depth: float | None = None) -> MetricsReport:
    """Pooled report over an iterable of ``(pred, gt)`` or ``(pred, gt, mask)``."""
    acc = MetricsAccumulator(max_depth)
    for item in pairs:
        acc.add(*item)
    return acc.report()
