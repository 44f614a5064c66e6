import numpy as np
import pytest

from fcrn.data import synth_dataset
from fcrn.train import TrainConfig, TrainingDiverged, config_from_dict, train
from fcrn.data import AugmentConfig


@pytest.fixture(scope="module")
def small():
    return synth_dataset(16, (32, 32), seed=11)


def test_zero_learning_rate_leaves_parameters(small):
    cfg = TrainConfig(epochs=2, batch_size=8, lr=0.0)
    r = train(cfg, small)
    from fcrn.archgraph import build_architecture, instantiate
    fresh = instantiate(build_architecture(cfg.arch, (3, 32, 32)), cfg.seed).parameters()
    for k, v in r.net.parameters().items():
        assert np.array_equal(v, fresh[k]), k


def test_same_seed_same_curve(small):
    cfg = TrainConfig(epochs=2, batch_size=8, augment=True)
    a, b = train(cfg, small), train(cfg, small)
    assert a.step_losses == b.step_losses
    c = train(TrainConfig(epochs=2, batch_size=8, augment=True, seed=1), small)
    assert c.step_losses != a.step_losses


def test_fast_and_naive_curves_agree(small):
    fast = train(TrainConfig(epochs=3, batch_size=8, fast=True), small)
    naive = train(TrainConfig(epochs=3, batch_size=8, fast=False), small)
    a, b = np.array(fast.step_losses), np.array(naive.step_losses)
    assert np.all(np.abs(a - b) <= 1e-6 * np.abs(b))


def test_validation_reports_per_epoch(small):
    r = train(TrainConfig(epochs=2, batch_size=8), small[:8], val=small[8:])
    assert len(r.val_reports) == len(r.epoch_losses) == 2
    assert r.val_reports[-1].n_pixels == 8 * 32 * 32


def test_divergence_is_reported(small):
    with pytest.raises(TrainingDiverged) as e:
        with np.errstate(all="ignore"):
            train(TrainConfig(epochs=5, batch_size=8, lr=1e12, loss="l2"), small)
    assert e.value.step >= 0


def test_schedule():
    cfg = TrainConfig(lr=0.01, milestones=(2, 4))
    assert [cfg.lr_at(e) for e in range(5)] == pytest.approx([0.01, 0.01, 1e-3, 1e-3, 1e-4])


def test_config_validation_and_parsing():
    with pytest.raises(ValueError):
        TrainConfig(batch_size=0)
    with pytest.raises(ValueError):
        TrainConfig(loss="l1")
    with pytest.raises(ValueError):
        train(TrainConfig(), [])
    cfg = config_from_dict(TrainConfig, {"lr": "0.5", "milestones": "3,5", "fast": "false", "loss": "l2"})
    assert cfg.lr == 0.5 and cfg.milestones == (3, 5) and cfg.fast is False and cfg.loss == "l2"
    aug = config_from_dict(AugmentConfig, {"rotation": "-2.5,2.5", "crop": "20x24"})
    assert aug.rotation == (-2.5, 2.5) and aug.crop == (20, 24)
    with pytest.raises(ValueError):
        config_from_dict(TrainConfig, {"learning_rate": "1"})
