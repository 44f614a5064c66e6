"""Wall-clock and multiply-count comparison of naive and fast up-convolution."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .tensor import ConvParams, count_multiplies
from .upsample import decompose_filter, upconv_fast, upconv_naive

# (N, C, H, W, outC): low-resolution inputs to an up-sampling block
DEFAULT_SHAPES = (
    (1, 8, 16, 16, 8),
    (1, 64, 32, 40, 32),
    (1, 128, 16, 20, 64),
    (1, 256, 8, 10, 128),
)

THEORETICAL_RATIO = 4.0


@dataclass
class BenchRow:
    shape: tuple[int, int, int, int, int]
    naive_ms: float
    fast_ms: float
    naive_multiplies: int
    fast_multiplies: int

    @property
    def speedup(self) -> float:
        return self.naive_ms / self.fast_ms

    @property
    def multiply_ratio(self) -> float:
        return self.naive_multiplies / self.fast_multiplies


def _median_ms(fn, reps: int, warmup: int) -> float:
    for _ in range(warmup):
        fn()
    times = []
    for _ in range(reps):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return float(np.median(times)) * 1e3


def bench_upconv(shapes=DEFAULT_SHAPES, repetitions: int = 20, warmup: int = 3,
                 dtype=np.float32, seed: int = 0) -> list[BenchRow]:
    """Median per-call time of both paths for each shape.

    The filter decomposition is a one-off weight rearrangement and happens
    outside the timed region.
    """
    if repetitions < 1:
        raise ValueError(f"repetitions must be at least 1, got {repetitions}")
    rng = np.random.default_rng(seed)
    rows = []
    for shape in shapes:
        N, C, H, W, O = shape
        x = rng.standard_normal((N, C, H, W)).astype(dtype)
        params = ConvParams(rng.standard_normal((O, C, 5, 5)).astype(dtype) * 0.1,
                            rng.standard_normal(O).astype(dtype))
        dec = decompose_filter(params)
        with count_multiplies() as naive_count:
            upconv_naive(x, params)
        with count_multiplies() as fast_count:
            upconv_fast(x, dec)
        naive_ms = _median_ms(lambda: upconv_naive(x, params), repetitions, warmup)
        fast_ms = _median_ms(lambda: upconv_fast(x, dec), repetitions, warmup)
        rows.append(BenchRow(tuple(shape), naive_ms, fast_ms, naive_count.count, fast_count.count))
    return rows


def format_report(rows: list[BenchRow]) -> str:
    lines = [f"{'N,C,H,W->outC':>20} {'naive ms':>10} {'fast ms':>10} {'speedup':>8} "
             f"{'mult naive':>14} {'mult fast':>14} {'ratio':>6}"]
    for r in rows:
        n, c, h, w, o = r.shape
        lines.append(f"{f'{n},{c},{h},{w}->{o}':>20} {r.naive_ms:10.3f} {r.fast_ms:10.3f} {r.speedup:8.2f} "
                     f"{r.naive_multiplies:14d} {r.fast_multiplies:14d} {r.multiply_ratio:6.2f}")
    lines.append(f"theoretical multiply ratio: {THEORETICAL_RATIO}")
    return "\n".join(lines)
