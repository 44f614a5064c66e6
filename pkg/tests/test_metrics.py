import numpy as np
import pytest
from hypothesis import given, strategies as st

from fcrn.metrics import FIELDS, MetricsAccumulator, evaluate, evaluate_many

from oracles import metrics_brute


def _close(report, want, tol=1e-10):
    for k in FIELDS:
        assert abs(getattr(report, k) - want[k]) < tol, k


@pytest.mark.parametrize("seed", range(50))
def test_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    h, w = rng.integers(1, 12, size=2)
    gt = rng.uniform(0.5, 10.0, (h, w))
    pred = gt * rng.uniform(0.5, 1.8, (h, w))
    mask = rng.random((h, w)) < 0.8
    mask.flat[0] = True
    _close(evaluate(pred, gt, mask), metrics_brute(pred, gt, mask))


def test_two_pixel_example():
    r = evaluate(np.array([1.2, 2.0]), np.array([1.0, 1.0]))
    assert abs(r.rel - 0.6) < 1e-12
    # 2.0 exceeds 1.25**3 = 1.953125, so only the first pixel counts at every threshold
    assert r.delta1 == 0.5 and r.delta2 == 0.5 and r.delta3 == 0.5
    assert abs(r.rms - np.sqrt((0.04 + 1.0) / 2)) < 1e-12


def test_delta_threshold_is_strict():
    r = evaluate(np.array([1.25]), np.array([1.0]))
    assert r.delta1 == 0.0 and r.delta2 == 1.0


def test_max_depth_drops_far_pixels():
    gt = np.array([5.0, 75.0, 60.0])
    pred = np.array([5.0, 1.0, 60.0])
    r = evaluate(pred, gt, max_depth=70.0)
    assert r.n_pixels == 2 and r.rel == 0.0
    _close(r, metrics_brute(pred, gt, max_depth=70.0))


def test_low_predictions_are_floored_and_counted():
    r = evaluate(np.array([0.0, -1.0, np.nan, 1.0]), np.ones(4))
    assert r.n_clamped == 3
    _close(r, metrics_brute(np.array([1e-3, 1e-3, 1e-3, 1.0]), np.ones(4)))


def test_pooling_is_per_pixel_not_per_image():
    a = (np.array([2.0]), np.array([1.0]))
    b = (np.ones(3), np.ones(3))
    r = evaluate_many([a, b])
    assert r.rel == pytest.approx(0.25)
    assert r.n_pixels == 4


@given(st.floats(0.1, 10.0), st.integers(0, 2**31 - 1))
def test_scale_invariant_measures(k, seed):
    rng = np.random.default_rng(seed)
    gt = rng.uniform(1, 5, 20)
    pred = gt * rng.uniform(0.7, 1.4, 20)
    r1, r2 = evaluate(pred, gt), evaluate(k * pred, k * gt)
    for f in ("rel", "rms_log", "log10", "delta1", "delta2", "delta3"):
        assert getattr(r1, f) == pytest.approx(getattr(r2, f), abs=1e-9)
    assert r2.rms == pytest.approx(k * r1.rms)


def test_errors():
    with pytest.raises(ValueError):
        evaluate(np.ones(2), np.array([1.0, 0.0]))
    with pytest.raises(ValueError):
        evaluate(np.ones(2), np.ones(3))
    with pytest.raises(ValueError):
        MetricsAccumulator().report()


def test_record_and_table():
    r = evaluate(np.array([1.2, 2.0]), np.array([1.0, 1.0]))
    assert r.to_record().split(",")[0] == "0.600000"
    assert "δ1" in r.to_table()
