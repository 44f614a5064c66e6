"""SGD-with-momentum training of small depth networks on in-memory samples."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, fields

import numpy as np

from .archgraph import Network, build_architecture, instantiate
from .data import AugmentConfig, DepthSample, augment
from .loss import LOSS_KINDS, batch_loss
from .metrics import MetricsAccumulator, MetricsReport
from .tensor import bilinear_upsample, bilinear_upsample_backward

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    def __init__(self, epoch: int, step: int, loss: float):
        super().__init__(f"loss became {loss} at epoch {epoch}, step {step}")
        self.epoch = epoch
        self.step = step


@dataclass
class TrainConfig:
    arch: str = "toy-upproj"
    batch_size: int = 16
    epochs: int = 30
    lr: float = 1e-2
    momentum: float = 0.9
    loss: str = "berhu"
    seed: int = 0
    milestones: tuple[int, ...] = (20, 27)   # epochs where the rate is multiplied by lr_decay
    lr_decay: float = 0.1
    fast: bool = True
    augment: bool = False

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.lr < 0:
            raise ValueError(f"learning rate must be non-negative, got {self.lr}")
        if self.loss not in LOSS_KINDS:
            raise ValueError(f"loss must be one of {LOSS_KINDS}, got {self.loss!r}")
        self.milestones = tuple(int(m) for m in self.milestones)

    def lr_at(self, epoch: int) -> float:
        return self.lr * self.lr_decay ** sum(epoch >= m for m in self.milestones)


@dataclass
class TrainResult:
    net: Network
    step_losses: list[float] = field(default_factory=list)
    epoch_losses: list[float] = field(default_factory=list)
    val_reports: list[MetricsReport] = field(default_factory=list)

    @property
    def initial_loss(self) -> float:
        return self.step_losses[0]

    @property
    def final_loss(self) -> float:
        return self.epoch_losses[-1]


def stack(samples: list[DepthSample]):
    rgb = np.stack([s.rgb for s in samples])
    depth = np.stack([s.depth for s in samples])
    mask = np.stack([s.mask for s in samples])
    return rgb, depth, mask


def predict(net: Network, rgb: np.ndarray, out_hw=None) -> np.ndarray:
    """Eval-mode depth for a (N, 3, H, W) batch, bilinearly resized to ``out_hw``."""
    pred = net.forward(rgb, train=False)
    if out_hw is not None:
        pred = bilinear_upsample(pred, *out_hw)
    return pred


def validate(net: Network, samples: list[DepthSample], batch_size: int = 16, max_depth=None) -> MetricsReport:
    acc = MetricsAccumulator(max_depth)
    for i in range(0, len(samples), batch_size):
        rgb, depth, mask = stack(samples[i:i + batch_size])
        acc.add(predict(net, rgb, depth.shape[2:]), depth, mask)
    return acc.report()


def train(cfg: TrainConfig, dataset: list[DepthSample], val: list[DepthSample] | None = None,
          augment_cfg: AugmentConfig | None = None) -> TrainResult:
    if not dataset:
        raise ValueError("training set is empty")
    H, W = dataset[0].rgb.shape[1:]
    if cfg.augment and augment_cfg is None:
        augment_cfg = AugmentConfig(crop=(H, W))
    net = instantiate(build_architecture(cfg.arch, (3, H, W)), cfg.seed, fast=cfg.fast)
    params = net.parameters()
    velocity = {k: np.zeros_like(v) for k, v in params.items()}
    order_rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 2]))
    result = TrainResult(net)

    step = 0
    for epoch in range(cfg.epochs):
        lr = cfg.lr_at(epoch)
        perm = order_rng.permutation(len(dataset))
        losses = []
        for start in range(0, len(dataset), cfg.batch_size):
            idx = perm[start:start + cfg.batch_size]
            batch = [dataset[i] for i in idx]
            if cfg.augment:
                # seeded by sample index and epoch, so worker layout never matters
                batch = [augment(s, augment_cfg, np.random.SeedSequence([cfg.seed, 3, epoch, int(i)]))
                         for s, i in zip(batch, idx)]
            rgb, depth, mask = stack(batch)
            pred = net.forward(rgb, train=True)
            up = bilinear_upsample(pred, *depth.shape[2:])
            loss, grad = batch_loss(up, depth, mask, cfg.loss)
            if not math.isfinite(loss):
                raise TrainingDiverged(epoch, step, loss)
            net.backward(bilinear_upsample_backward(grad, *pred.shape[2:]))
            grads = net.gradients()
            for k, p in params.items():
                v = velocity[k]
                v *= cfg.momentum
                v += grads[k]
                p -= lr * v
            result.step_losses.append(loss)
            losses.append(loss)
            step += 1
        result.epoch_losses.append(float(np.mean(losses)))
        msg = f"epoch {epoch + 1}/{cfg.epochs} lr {lr:g} loss {result.epoch_losses[-1]:.4f}"
        if val:
            result.val_reports.append(validate(net, val))
            msg += f" val rel {result.val_reports[-1].rel:.4f}"
        log.info(msg)
    return result


def config_from_dict(cls, values: dict):
    """Build a config dataclass from string values such as a parsed key=value file."""
    known = {f.name: f for f in fields(cls)}
    kwargs = {}
    for key, raw in values.items():
        if key not in known:
            raise ValueError(f"unknown {cls.__name__} field {key!r}; known: {', '.join(known)}")
        default = getattr(cls(), key) if key != "crop" else None
        kwargs[key] = _coerce(raw, default)
    return cls(**kwargs)


def _coerce(raw, default):
    if not isinstance(raw, str):
        return raw
    if isinstance(default, bool):
        return raw.strip().lower() in ("1", "true", "yes", "on")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    if isinstance(default, tuple) or default is None:
        parts = [p for p in raw.replace("x", ",").split(",") if p.strip()]
        if not parts or raw.strip().lower() == "none":
            return None if default is None else ()
        nums = [float(p) if "." in p or "e" in p.lower() else int(p) for p in parts]
        return tuple(nums)
    return raw.strip()
