import numpy as np
import pytest
from hypothesis import given, strategies as st

from fcrn.gradcheck import max_rel_error, numerical_grad
from fcrn.loss import batch_loss, berhu_cutoff, berhu_grad, berhu_value


def test_berhu_pieces():
    assert berhu_value(3.0, 1.0) == 5.0
    assert berhu_value(-0.5, 1.0) == 0.5
    assert berhu_value(0.0, 1.0) == 0.0
    assert berhu_grad(0.0, 1.0) == 0.0
    assert berhu_grad(-0.5, 1.0) == -1.0
    assert berhu_grad(3.0, 1.0) == 3.0


def test_hand_evaluated_batch():
    pred = np.array([0.1, 0.4, 1.0])
    target = np.zeros(3)
    assert berhu_cutoff(pred, target) == pytest.approx(0.2, abs=1e-15)
    loss, _ = batch_loss(pred, target)
    # 0.1 ; (0.16 + 0.04) / 0.4 = 0.5 ; (1 + 0.04) / 0.4 = 2.6
    assert abs(loss - 3.2 / 3) < 1e-15


@pytest.mark.parametrize("c", [0.05, 0.2, 1.0, 7.5])
def test_value_and_slope_continuous_at_cutoff(c):
    eps = 1e-9
    for s in (1.0, -1.0):
        inside, outside = berhu_value(s * (c - eps), c), berhu_value(s * (c + eps), c)
        assert abs(inside - outside) < 1e-8
        # the outer slope is x / c, so the two sides differ by eps / c at most
        assert abs(berhu_grad(s * (c - eps), c) - berhu_grad(s * (c + eps), c)) <= eps / c * (1 + 1e-6)
        assert berhu_value(s * c, c) == c
        # one-sided limits at the cutoff: sign(x) inside, x / c outside
        assert berhu_grad(s * c, c) == s and (s * c) / c == s


@given(st.floats(0.05, 5.0), st.lists(st.floats(-10, 10), min_size=1, max_size=30))
def test_grad_matches_finite_differences_away_from_kinks(c, xs):
    x = np.array([v for v in xs if abs(v) > 1e-3 and abs(abs(v) - c) > 1e-3])
    if x.size == 0:
        return
    num = numerical_grad(lambda: float(berhu_value(x, c).sum()), x, 1e-6)
    assert max_rel_error(berhu_grad(x, c), num) < 1e-6


def test_batch_cutoff_spans_all_images_and_respects_mask():
    pred = np.zeros((2, 1, 2, 2))
    target = np.ones((2, 1, 2, 2))
    target[1, 0, 0, 0] = 6.0
    mask = np.ones_like(pred, bool)
    assert berhu_cutoff(pred, target, mask) == pytest.approx(1.2)
    mask[1, 0, 0, 0] = False
    assert berhu_cutoff(pred, target, mask) == pytest.approx(0.2)
    loss, g = batch_loss(pred, target, mask)
    assert g[1, 0, 0, 0] == 0.0
    assert loss == pytest.approx(((1 + 0.04) / 0.4))


def test_zero_residual_gives_zero_loss():
    x = np.ones((1, 1, 3, 3))
    loss, g = batch_loss(x, x)
    assert loss == 0.0 and not g.any()


def test_l2_loss():
    pred = np.array([1.0, 2.0, 4.0])
    loss, g = batch_loss(pred, np.zeros(3), kind="l2")
    assert loss == pytest.approx(21 / 3)
    assert np.allclose(g, 2 * pred / 3)


def test_errors():
    with pytest.raises(ValueError):
        batch_loss(np.zeros(3), np.zeros(4))
    with pytest.raises(ValueError):
        batch_loss(np.zeros(3), np.zeros(3), np.zeros(3, bool))
    with pytest.raises(ValueError):
        batch_loss(np.zeros(3), np.zeros(3), kind="l1")
