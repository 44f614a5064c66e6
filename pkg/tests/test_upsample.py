import time

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fcrn.archgraph import ArchGraph, instantiate
from fcrn.checks import equivalence_suite
from fcrn.tensor import ConvParams, count_multiplies
from fcrn.upsample import (UpProjParams, decompose_filter, recompose_filter, unpool, unpool_backward,
                           upconv_fast, upconv_multiplies, upconv_naive, upproject, upproject_fast)

from oracles import unpool_loops, upconv_loops


def test_unpool_places_values_top_left():
    x = np.array([[[[1.0, 2.0], [3.0, 4.0]]]])
    assert unpool(x).tolist() == [[[[1, 0, 2, 0], [0, 0, 0, 0], [3, 0, 4, 0], [0, 0, 0, 0]]]]
    x = np.random.default_rng(0).standard_normal((2, 3, 4, 5))
    assert np.array_equal(unpool(x), unpool_loops(x))
    assert np.array_equal(unpool_backward(unpool(x)), x)


def test_decompose_recompose_round_trip():
    rng = np.random.default_rng(0)
    p = ConvParams(rng.standard_normal((3, 2, 5, 5)), rng.standard_normal(3))
    d = decompose_filter(p)
    assert (d.a.shape, d.b.shape, d.c.shape, d.d.shape) == ((3, 2, 3, 3), (3, 2, 3, 2), (3, 2, 2, 3), (3, 2, 2, 2))
    back = recompose_filter(d)
    assert np.array_equal(back.weight, p.weight) and np.array_equal(back.bias, p.bias)


def test_decompose_rejects_other_kernels():
    with pytest.raises(ValueError):
        decompose_filter(ConvParams(np.zeros((1, 1, 3, 3))))


@pytest.mark.parametrize("u,v", [(0, 0), (2, 2), (1, 3), (4, 1), (3, 4)])
def test_delta_filter_shifts_input(u, v):
    # a single tap at (u, v) copies unpooled pixel (i + u - 2, j + v - 2) into output (i, j)
    x = np.random.default_rng(1).standard_normal((1, 1, 4, 4)) + 5.0
    w = np.zeros((1, 1, 5, 5))
    w[0, 0, u, v] = 1.0
    p = ConvParams(w, None)
    want = np.zeros((8, 8))
    up = unpool(x)[0, 0]
    for i in range(8):
        for j in range(8):
            a, b = i + u - 2, j + v - 2
            if 0 <= a < 8 and 0 <= b < 8:
                want[i, j] = up[a, b]
    assert np.array_equal(upconv_naive(x, p)[0, 0], want)
    assert np.abs(upconv_fast(x, decompose_filter(p))[0, 0] - want).max() < 1e-14


@pytest.mark.parametrize("trial", range(5))
def test_naive_upconv_matches_loop_oracle(trial):
    rng = np.random.default_rng(100 + trial)
    x = rng.standard_normal((1, 2, 3, 4))
    p = ConvParams(rng.standard_normal((2, 2, 5, 5)), rng.standard_normal(2))
    assert np.abs(upconv_naive(x, p) - upconv_loops(x, p.weight, p.bias)).max() < 1e-12


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(1, 4), st.integers(1, 4), st.integers(1, 9), st.integers(1, 9))
def test_fast_upconv_equals_naive(seed, C, O, H, W):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((1, C, H, W))
    p = ConvParams(rng.standard_normal((O, C, 5, 5)), rng.standard_normal(O))
    assert np.abs(upconv_fast(x, decompose_filter(p)) - upconv_naive(x, p)).max() < 1e-12


def test_equivalence_suite_200_configs():
    t0 = time.perf_counter()
    worst = equivalence_suite(200, seed=3)
    assert time.perf_counter() - t0 < 60
    assert worst["upconv"] < 1e-12 and worst["upproject"] < 1e-12
    assert worst["upconv_grad"] < 1e-10 and worst["upproject_grad"] < 1e-10


def test_upproject_structure():
    rng = np.random.default_rng(2)
    x = rng.standard_normal((1, 3, 4, 4))
    c1 = ConvParams(rng.standard_normal((2, 3, 5, 5)), rng.standard_normal(2))
    c2 = ConvParams(rng.standard_normal((2, 2, 3, 3)), rng.standard_normal(2))
    pr = ConvParams(rng.standard_normal((2, 3, 5, 5)), rng.standard_normal(2))
    p = UpProjParams(c1, c2, pr)
    from fcrn.tensor import conv2d_forward
    u = unpool(x)
    main = conv2d_forward(np.maximum(conv2d_forward(u, c1.with_padding(2)), 0), c2.with_padding(1))
    want = np.maximum(main + conv2d_forward(u, pr.with_padding(2)), 0)
    assert np.allclose(upproject(x, p), want, atol=1e-12)
    assert np.abs(upproject_fast(x, p) - want).max() < 1e-12


def test_upproject_rejects_mismatched_channels():
    z = np.zeros
    with pytest.raises(ValueError):
        UpProjParams(ConvParams(z((2, 3, 5, 5))), ConvParams(z((2, 2, 3, 3))), ConvParams(z((2, 4, 5, 5))))
    with pytest.raises(ValueError):
        UpProjParams(ConvParams(z((2, 3, 5, 5))), ConvParams(z((2, 2, 5, 5))), ConvParams(z((2, 3, 5, 5))))


@pytest.mark.parametrize("shape", [(1, 1, 1, 1, 1), (2, 3, 5, 7, 4), (1, 64, 8, 10, 32)])
def test_multiply_ratio_is_four(shape):
    N, C, H, W, O = shape
    rng = np.random.default_rng(0)
    x = rng.standard_normal((N, C, H, W))
    p = ConvParams(rng.standard_normal((O, C, 5, 5)), None)
    with count_multiplies() as naive:
        upconv_naive(x, p)
    with count_multiplies() as fast:
        upconv_fast(x, decompose_filter(p))
    assert naive.count / fast.count == 4.0
    assert (naive.count, fast.count) == upconv_multiplies(N, C, H, W, O)


@pytest.mark.parametrize("k", [1, 2, 3])
def test_chained_upprojections_scale_resolution(k):
    g = ArchGraph((8, 3, 5), "chain")
    c = 8
    for i in range(k):
        c //= 2
        g.add("upproject", f"up{i}", out_channels=c)
    assert g.output_shape == (c, 3 * 2**k, 5 * 2**k)
    y = instantiate(g).forward(np.ones((1, 8, 3, 5)))
    assert y.shape == (1, c, 3 * 2**k, 5 * 2**k)
