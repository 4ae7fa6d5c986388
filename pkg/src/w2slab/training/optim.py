"""SGD with classic momentum and epoch-level learning-rate schedules."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from ..errors import ConfigError, NumericError
from ..tensor import Tensor

SCHEDULES = ("cosine", "step", "constant")


@dataclass
class OptimConfig:
    lr_max: float = 0.05
    lr_min: float = 5e-4
    momentum: float = 0.9
    weight_decay: float = 5e-4
    schedule: str = "cosine"
    step_size: int = 30
    gamma: float = 0.1
    milestones: list[int] | None = None  # step schedule: explicit decay epochs instead of step_size
    epochs: int = 30
    batch_size: int = 128
    augment: bool = False
    warmup_epochs: int = 0  # leading epochs trained with plain CE before distillation starts

    def validate(self) -> None:
        if not self.lr_max >= self.lr_min >= 0:
            raise ConfigError(f"need lr_max >= lr_min >= 0, got {self.lr_max}, {self.lr_min}")
        if not 0 <= self.momentum < 1:
            raise ConfigError(f"momentum must lie in [0, 1), got {self.momentum}")
        if self.weight_decay < 0:
            raise ConfigError("weight_decay must be >= 0")
        if self.schedule not in SCHEDULES:
            raise ConfigError(f"schedule must be one of {SCHEDULES}, got {self.schedule!r}")
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch_size must be >= 1")
        if self.schedule == "step" and self.milestones is None and self.step_size < 1:
            raise ConfigError("step schedule needs step_size >= 1")
        if not 0 <= self.warmup_epochs < self.epochs:
            raise ConfigError("warmup_epochs must lie in [0, epochs)")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "OptimConfig":
        cfg = cls(**d)
        cfg.validate()
        return cfg


PRESETS = {
    # scaled-down default for desk runs
    "desk": OptimConfig(),
    # CIFAR-100 recipe: 0.2 -> 2e-3 cosine, 240 epochs, batch 512, wd 5e-4
    "cifar": OptimConfig(lr_max=0.2, lr_min=2e-3, weight_decay=5e-4, epochs=240, batch_size=512,
                         augment=True),
    # ImageNet recipe: 0.1, x0.1 every 30 epochs, 100 epochs, wd 1e-4
    "imagenet": OptimConfig(lr_max=0.1, lr_min=0.0, weight_decay=1e-4, schedule="step",
                            step_size=30, gamma=0.1, epochs=100, batch_size=512, augment=True),
    # noisy-label recipe: 0.1, /10 after 125 and 200, 250 epochs, batch 128, one warm-up epoch
    "noisy": OptimConfig(lr_max=0.1, lr_min=0.0, weight_decay=1e-4, schedule="step",
                         milestones=[125, 200], gamma=0.1, epochs=250, batch_size=128,
                         augment=True, warmup_epochs=1),
}


def lr_at(cfg: OptimConfig, epoch: int) -> float:
    if cfg.schedule == "constant":
        return cfg.lr_max
    if cfg.schedule == "step":
        if cfg.milestones is not None:
            k = sum(1 for m in cfg.milestones if epoch >= m)
        else:
            k = epoch // cfg.step_size
        return cfg.lr_max * cfg.gamma ** k
    if cfg.epochs == 1:
        return cfg.lr_max
    return cfg.lr_min + (cfg.lr_max - cfg.lr_min) * (1 + math.cos(math.pi * epoch / (cfg.epochs - 1))) / 2


@dataclass
class SGDState:
    velocity: dict[str, np.ndarray] = field(default_factory=dict)
    steps: int = 0


def sgd_step(params: dict[str, Tensor], grads: dict[str, np.ndarray] | None, state: SGDState,
             cfg: OptimConfig, lr: float) -> None:
    """In-place update: ``g += wd*w; v = momentum*v + g; w -= lr*v``.

    ``grads`` defaults to each parameter's ``.grad``. Raises NumericError naming
    the first parameter with a non-finite gradient, before touching anything.
    """
    if grads is None:
        grads = {n: p.grad for n, p in params.items()}
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            continue
        if g.shape != p.shape:
            raise ConfigError(f"gradient for {name} has shape {g.shape}, parameter {p.shape}")
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient in parameter {name!r}")
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            continue
        if cfg.weight_decay:
            g = g + cfg.weight_decay * p.data
        v = state.velocity.get(name)
        if v is None or cfg.momentum == 0:
            v = np.array(g, dtype=p.dtype, copy=True)
        else:
            v *= cfg.momentum
            v += g
        state.velocity[name] = v
        p.data -= np.asarray(lr, dtype=p.dtype) * v
    state.steps += 1
