"""Train and evaluation loops."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .. import losses
from ..data import Dataset, make_batches
from ..errors import ConfigError, NumericError, TrainingAborted
from ..losses import BetaRecord, LossConfig, TeacherSignal
from ..models import Model, predict_logits
from ..tensor import Tensor, backward
from .checkpoint import save_checkpoint
from .optim import OptimConfig, SGDState, lr_at, sgd_step

logger = logging.getLogger(__name__)


def topk_accuracy(logits: np.ndarray, labels: np.ndarray, k: int) -> float:
    """Fraction of rows whose label is among the k largest logits (ties go to lower class ids)."""
    k = min(k, logits.shape[1])
    order = np.argsort(-logits, axis=1, kind="stable")[:, :k]
    return float(np.mean(np.any(order == labels[:, None], axis=1)))


def evaluate(model: Model, ds: Dataset, topk: Sequence[int] = (1, 5), batch_size: int = 1024,
             logits: np.ndarray | None = None) -> dict[str, float]:
    if logits is None:
        logits = predict_logits(model, ds.images, batch_size)
    metrics = {f"top{k}": topk_accuracy(logits, ds.labels, k) for k in topk}
    z = logits.astype(np.float64)
    z = z - z.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    metrics["loss"] = float(-np.mean(logp[np.arange(len(ds)), ds.labels]))
    return metrics


@dataclass
class EpochLog:
    epoch: int
    lr: float
    train_loss: float
    top1: float | None = None
    top5: float | None = None
    loss: float | None = None
    beta: BetaRecord | None = None
    warmup: bool = False

    def to_dict(self) -> dict:
        d = {"epoch": self.epoch, "lr": self.lr, "train_loss": self.train_loss,
             "top1": self.top1, "top5": self.top5, "loss": self.loss, "warmup": self.warmup}
        d["beta"] = None if self.beta is None else self.beta.to_dict()
        return d


@dataclass
class TrainResult:
    model: Model
    log: list[EpochLog] = field(default_factory=list)
    state: SGDState = field(default_factory=SGDState)


def _check_finite_loss(value: float, epoch: int, step: int) -> None:
    if not np.isfinite(value):
        raise NumericError(f"loss became non-finite ({value}) at epoch {epoch}, step {step}")


def train(model: Model, ds: Dataset, loss_cfg: LossConfig, optim_cfg: OptimConfig,
          teacher: Model | None = None, seed: int = 0, eval_ds: Dataset | None = None,
          use_labels: bool = True, checkpoint_dir: str | Path | None = None,
          on_epoch: Callable[[EpochLog], None] | None = None) -> TrainResult:
    """Train ``model`` in place and return it with a per-epoch log.

    Each step feeds the batch (after augmentation) through the frozen teacher,
    builds a :class:`TeacherSignal`, evaluates :func:`losses.total_objective`
    and applies one SGD step. ``use_labels=False`` hides ground truth from the
    objective (teacher-prediction-only training). During the first
    ``optim_cfg.warmup_epochs`` epochs the objective is plain CE on the labels.
    When ``eval_ds`` is given, each epoch logs top-1/top-5/loss on it, and for
    AdaptConf the adaptive-weight statistics against the teacher's labels.
    """
    loss_cfg.validate()
    optim_cfg.validate()
    if (teacher is None) != (loss_cfg.method == "CE"):
        raise ConfigError(f"method {loss_cfg.method} {'needs' if teacher is None else 'takes no'} teacher")
    if not use_labels and teacher is None:
        raise ConfigError("training without labels needs a teacher")
    if optim_cfg.warmup_epochs and not use_labels:
        raise ConfigError("warm-up epochs train on labels; they cannot be combined with use_labels=False")

    eval_teacher = None
    if eval_ds is not None and teacher is not None:
        eval_teacher = TeacherSignal.from_logits(predict_logits(teacher, eval_ds.images))

    state = SGDState()
    params = model.params
    result = TrainResult(model=model, state=state)
    ckpt_dir = Path(checkpoint_dir) if checkpoint_dir is not None else None
    warm_cfg = replace(loss_cfg, method="CE", gt_weight=1.0)

    for epoch in range(optim_cfg.epochs):
        lr = lr_at(optim_cfg, epoch)
        warm = epoch < optim_cfg.warmup_epochs
        cfg = warm_cfg if warm else loss_cfg
        total, seen = 0.0, 0
        batches = make_batches(ds, optim_cfg.batch_size, seed, epoch, augmentation=optim_cfg.augment)
        for step, batch in enumerate(batches):
            x = Tensor(batch.images.astype(model.dtype, copy=False))
            signal = None
            if teacher is not None and not warm:
                signal = TeacherSignal.from_logits(predict_logits(teacher, batch.images))
            gt = batch.labels if (use_labels and (warm or cfg.gt_weight > 0)) else None
            try:
                logits = model.forward(x)
                loss = losses.total_objective(logits, signal, gt, cfg)
                value = loss.item()
                _check_finite_loss(value, epoch, step)
                model.zero_grad()
                backward(loss)
                sgd_step(params, None, state, optim_cfg, lr)
            except NumericError as exc:
                path = None
                if ckpt_dir is not None:
                    ckpt_dir.mkdir(parents=True, exist_ok=True)
                    path = str(save_checkpoint(model, state, ckpt_dir / "last.w2sc", epoch=epoch))
                logger.error("training aborted: %s", exc)
                raise TrainingAborted(str(exc), checkpoint_path=path) from exc
            total += value * len(batch.labels)
            seen += len(batch.labels)

        entry = EpochLog(epoch=epoch, lr=lr, train_loss=total / seen, warmup=warm)
        if eval_ds is not None:
            logits = predict_logits(model, eval_ds.images)
            m = evaluate(model, eval_ds, logits=logits)
            entry.top1, entry.top5, entry.loss = m["top1"], m["top5"], m["loss"]
            if eval_teacher is not None and loss_cfg.method == "AdaptConf":
                entry.beta = losses.beta_stats(logits, eval_teacher, loss_cfg.temperature, epoch=epoch,
                                               eps=loss_cfg.prob_clamp)
        result.log.append(entry)
        logger.debug("epoch %d lr %.5f loss %.4f top1 %s", epoch, lr, entry.train_loss, entry.top1)
        if on_epoch is not None:
            on_epoch(entry)
    if ckpt_dir is not None:
        ckpt_dir.mkdir(parents=True, exist_ok=True)
        save_checkpoint(model, state, ckpt_dir / "final.w2sc", epoch=optim_cfg.epochs,
                        optimizer=optim_cfg.to_dict(), rng={"kind": "numpy-pcg64", "seed": seed})
    return result
