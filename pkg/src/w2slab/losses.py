"""Distillation objectives for training a strong student from a weak teacher.

Cross-entropy is written ``CE(prediction, target) = -sum_k target_k * ln(prediction_k)``
with predictions clamped to ``[eps, 1]`` before the log. The confidence losses
blend a soft-target term against the teacher with a self-label term against the
student's own argmax::

    augconf:   (1 - alpha) * CE(p, q_teacher) + alpha * CE(p, onehot(argmax p))
    adaptconf: (1 - beta)  * CE(p, q_teacher) + beta  * CE(p, onehot(argmax p))
    beta = exp(CE(p, argmax p)) / (exp(CE(p, argmax p)) + exp(CE(p, teacher hard)))
         = p_w / (p_max + p_w)

All distributions are taken at temperature T; both blended terms are scaled by
T**2 while beta itself uses the unscaled cross-entropies.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .errors import ConfigError, ContractError, ShapeError
from .tensor import Tensor

METHODS = ("CE", "KD", "AugConf", "AdaptConf")
DEFAULT_EPS = 1e-12
BETA_BINS = 20


@dataclass
class LossConfig:
    method: str = "AdaptConf"
    alpha: float = 0.5
    temperature: float = 1.0
    gt_weight: float = 1.0
    distill_weight: float = 1.0
    prob_clamp: float = DEFAULT_EPS
    hard_targets: bool = False  # use the teacher's argmax instead of its soft distribution

    def validate(self) -> None:
        if self.method not in METHODS:
            raise ConfigError(f"unknown loss method {self.method!r}; expected one of {METHODS}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError(f"alpha must lie in [0, 1], got {self.alpha}")
        if not self.temperature > 0:
            raise ConfigError(f"temperature must be > 0, got {self.temperature}")
        if self.gt_weight < 0 or self.distill_weight < 0:
            raise ConfigError("gt_weight and distill_weight must be >= 0")
        if not 0 < self.prob_clamp <= 1e-6:
            raise ConfigError(f"prob_clamp must lie in (0, 1e-6], got {self.prob_clamp}")

    @classmethod
    def from_dict(cls, d: dict) -> "LossConfig":
        cfg = cls(**d)
        cfg.validate()
        return cfg


@dataclass(frozen=True)
class TeacherSignal:
    """Frozen weak-model output for a batch: temperature-1 soft distribution and argmax."""

    soft: np.ndarray
    hard: np.ndarray

    @classmethod
    def from_logits(cls, logits) -> "TeacherSignal":
        z = logits.data if isinstance(logits, Tensor) else np.asarray(logits)
        z = z.astype(np.float64) if not np.issubdtype(z.dtype, np.floating) else z
        e = np.exp(z - z.max(axis=1, keepdims=True))
        soft = e / e.sum(axis=1, keepdims=True)
        return cls(soft=soft, hard=np.argmax(soft, axis=1))

    @property
    def num_classes(self) -> int:
        return self.soft.shape[1]

    def soften(self, temperature: float, eps: float = DEFAULT_EPS) -> np.ndarray:
        """The teacher distribution re-tempered to ``temperature``."""
        if temperature == 1.0:
            return self.soft
        z = np.log(np.clip(self.soft, eps, 1.0)) / temperature
        e = np.exp(z - z.max(axis=1, keepdims=True))
        return e / e.sum(axis=1, keepdims=True)

    def __len__(self) -> int:
        return self.soft.shape[0]


def _argmax(probs: np.ndarray) -> np.ndarray:
    # np.argmax returns the first maximal index, i.e. ties go to the lowest class
    return np.argmax(probs, axis=1)


def softmax_T(logits: Tensor, temperature: float) -> Tensor:
    if not temperature > 0:
        raise ConfigError(f"temperature must be > 0, got {temperature}")
    if temperature == 1.0:
        return T.softmax(logits)
    return T.softmax(T.mul(logits, 1.0 / temperature))


def ce_soft(student_probs: Tensor, target_probs, eps: float = DEFAULT_EPS) -> Tensor:
    """Per-sample ``-sum target * ln(clamp(student))``; the target is treated as a constant."""
    target = target_probs.data if isinstance(target_probs, Tensor) else np.asarray(target_probs)
    if target.shape != student_probs.shape:
        raise ShapeError(f"ce_soft shapes differ: {list(student_probs.shape)} vs {list(target.shape)}")
    logp = T.log(T.clamp(student_probs, eps, 1.0))
    return T.neg(T.tsum(T.mul(logp, target.astype(student_probs.dtype, copy=False)), axis=1))


def ce_hard(student_probs: Tensor, labels, eps: float = DEFAULT_EPS) -> Tensor:
    """Per-sample ``-ln(clamp(student[label]))``. Labels are indices and carry no gradient."""
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    k = student_probs.shape[1]
    if labels.shape[0] != student_probs.shape[0]:
        raise ShapeError(f"{labels.shape[0]} labels for {student_probs.shape[0]} rows")
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise ContractError(f"label out of range [0, {k}): {labels.min()}..{labels.max()}")
    picked = T.gather_rows(student_probs, labels)
    return T.neg(T.log(T.clamp(picked, eps, 1.0)))


def kd_loss(student_logits: Tensor, teacher_logits, temperature: float) -> Tensor:
    """Classical distillation: ``T**2 * KL(softmax_T(teacher) || softmax_T(student))``, batch mean."""
    if not temperature > 0:
        raise ConfigError(f"temperature must be > 0, got {temperature}")
    zt = teacher_logits.data if isinstance(teacher_logits, Tensor) else np.asarray(teacher_logits)
    if zt.shape != student_logits.shape:
        raise ShapeError(f"kd_loss shapes differ: {list(student_logits.shape)} vs {list(zt.shape)}")
    zt = zt / temperature
    et = np.exp(zt - zt.max(axis=1, keepdims=True))
    pt = et / et.sum(axis=1, keepdims=True)
    return _kd_from_probs(student_logits, pt, temperature)


def _kd_from_probs(student_logits: Tensor, pt: np.ndarray, temperature: float) -> Tensor:
    dtype = student_logits.dtype
    pt = pt.astype(dtype, copy=False)
    with np.errstate(divide="ignore"):
        entropy_part = np.where(pt > 0, pt * np.log(np.where(pt > 0, pt, 1.0)), 0.0).sum(axis=1)
    scaled = student_logits if temperature == 1.0 else T.mul(student_logits, 1.0 / temperature)
    cross = T.neg(T.tsum(T.mul(T.log_softmax(scaled), pt), axis=1))
    kl = T.add(cross, entropy_part.astype(dtype))
    return T.mean(T.mul(kl, temperature ** 2))


def beta_weight(student_probs_T, weak_hard, eps: float = DEFAULT_EPS) -> np.ndarray:
    """Per-sample adaptive weight ``p_w / (p_max + p_w)`` in (0, 0.5].

    ``p_max`` is the student's top probability and ``p_w`` its probability on the
    weak model's hard label, both clamped to ``[eps, 1]``. Always detached.
    """
    p = student_probs_T.data if isinstance(student_probs_T, Tensor) else np.asarray(student_probs_T)
    if p.ndim == 1:
        p = p[None, :]
    weak_hard = np.asarray(weak_hard, dtype=np.int64).reshape(-1)
    rows = np.arange(p.shape[0])
    p_max = np.clip(p[rows, _argmax(p)], eps, 1.0)
    p_w = np.clip(p[rows, weak_hard], eps, 1.0)
    return p_w / (p_max + p_w)


def _blend(student_logits: Tensor, teacher: TeacherSignal, weights: np.ndarray,
           cfg: LossConfig) -> Tensor:
    """Batch mean of ``T**2 * ((1 - w) * soft_term + w * self_term)`` with detached per-sample ``w``."""
    temp, eps = cfg.temperature, cfg.prob_clamp
    probs = softmax_T(student_logits, temp)
    if cfg.hard_targets:
        target = np.eye(teacher.num_classes, dtype=probs.dtype)[teacher.hard]
    else:
        target = teacher.soften(temp, eps)
    soft = ce_soft(probs, target, eps)
    self_label = _argmax(probs.data)
    hard = ce_hard(probs, self_label, eps)
    w = np.broadcast_to(np.asarray(weights, dtype=probs.dtype), (probs.shape[0],))
    per_sample = T.add(T.mul(soft, 1.0 - w), T.mul(hard, w))
    return T.mean(T.mul(per_sample, temp ** 2))


def augconf_loss(student_logits: Tensor, teacher: TeacherSignal, cfg: LossConfig) -> Tensor:
    if not 0.0 <= cfg.alpha <= 1.0:
        raise ConfigError(f"alpha must lie in [0, 1], got {cfg.alpha}")
    return _blend(student_logits, teacher, np.full(len(teacher), cfg.alpha), cfg)


def adaptconf_loss(student_logits: Tensor, teacher: TeacherSignal, cfg: LossConfig,
                   beta_override: np.ndarray | float | None = None) -> Tensor:
    """Adaptive-confidence loss. ``beta_override`` pins the per-sample weight (used for reductions)."""
    if beta_override is None:
        probs = softmax_T(student_logits.detach(), cfg.temperature)
        beta = beta_weight(probs.data, teacher.hard, cfg.prob_clamp)
    else:
        beta = np.broadcast_to(np.asarray(beta_override, dtype=np.float64), (len(teacher),))
    return _blend(student_logits, teacher, beta, cfg)


def pinned_beta(student_logits, teacher: TeacherSignal, cfg: LossConfig) -> np.ndarray:
    """The detached weight AdaptConf would use on these logits, for holding it fixed."""
    z = student_logits.data if isinstance(student_logits, Tensor) else np.asarray(student_logits)
    probs = softmax_T(Tensor(z), cfg.temperature)
    return beta_weight(probs.data, teacher.hard, cfg.prob_clamp)


def soft_term_loss(student_logits: Tensor, teacher: TeacherSignal, cfg: LossConfig) -> Tensor:
    """The teacher-imitation term alone, T**2-scaled and batch-averaged."""
    probs = softmax_T(student_logits, cfg.temperature)
    target = (np.eye(teacher.num_classes, dtype=probs.dtype)[teacher.hard] if cfg.hard_targets
              else teacher.soften(cfg.temperature, cfg.prob_clamp))
    return T.mean(T.mul(ce_soft(probs, target, cfg.prob_clamp), cfg.temperature ** 2))


def self_term_loss(student_logits: Tensor, cfg: LossConfig) -> Tensor:
    """The self-label term alone, T**2-scaled and batch-averaged."""
    probs = softmax_T(student_logits, cfg.temperature)
    hard = ce_hard(probs, _argmax(probs.data), cfg.prob_clamp)
    return T.mean(T.mul(hard, cfg.temperature ** 2))


def method_loss(student_logits: Tensor, teacher: TeacherSignal, cfg: LossConfig,
                beta_override=None) -> Tensor:
    if cfg.method == "KD":
        return _kd_from_probs(student_logits, teacher.soften(cfg.temperature, cfg.prob_clamp),
                              cfg.temperature)
    if cfg.method == "AugConf":
        return augconf_loss(student_logits, teacher, cfg)
    if cfg.method == "AdaptConf":
        return adaptconf_loss(student_logits, teacher, cfg, beta_override)
    raise ConfigError(f"method {cfg.method!r} has no distillation term")


def supervised_ce(student_logits: Tensor, labels, eps: float = DEFAULT_EPS) -> Tensor:
    return T.mean(ce_hard(T.softmax(student_logits), labels, eps))


def total_objective(student_logits: Tensor, teacher: TeacherSignal | None, gt_labels,
                    cfg: LossConfig, beta_override=None) -> Tensor:
    """``gt_weight * CE(student, ground truth) + distill_weight * method_loss``.

    Either source may be absent (``None``); absent or zero-weighted components
    are skipped entirely. With ``method="CE"`` there is no distillation term.
    ``beta_override`` is forwarded to the AdaptConf term; finite-difference checks
    pin it because the weight is detached during backprop.
    """
    if teacher is None and gt_labels is None:
        raise ConfigError("total_objective needs a teacher signal, ground-truth labels, or both")
    terms: list[Tensor] = []
    if gt_labels is not None and cfg.gt_weight > 0:
        ce = supervised_ce(student_logits, gt_labels, cfg.prob_clamp)
        terms.append(ce if cfg.gt_weight == 1.0 else T.mul(ce, cfg.gt_weight))
    if teacher is not None and cfg.method != "CE" and cfg.distill_weight > 0:
        d = method_loss(student_logits, teacher, cfg, beta_override)
        terms.append(d if cfg.distill_weight == 1.0 else T.mul(d, cfg.distill_weight))
    if not terms:
        return Tensor(np.zeros((), dtype=student_logits.dtype))
    out = terms[0]
    for t in terms[1:]:
        out = T.add(out, t)
    return out


@dataclass
class BetaRecord:
    """Adaptive weights over one evaluation pass."""

    betas: np.ndarray
    agree: np.ndarray  # student argmax == weak hard label, per sample
    epoch: int = -1
    edges: np.ndarray = field(default_factory=lambda: np.linspace(0.0, 0.5, BETA_BINS + 1))

    @property
    def mean(self) -> float:
        return float(np.mean(self.betas))

    @property
    def frac_half(self) -> float:
        return float(np.mean(self.agree))

    @property
    def histogram(self) -> np.ndarray:
        counts, _ = np.histogram(self.betas, bins=self.edges)
        return counts

    def merge(self, other: "BetaRecord") -> "BetaRecord":
        """Concatenate records; call in batch-index order for reproducible output."""
        return BetaRecord(np.concatenate([self.betas, other.betas]),
                          np.concatenate([self.agree, other.agree]), self.epoch, self.edges)

    def to_dict(self) -> dict:
        return {"epoch": self.epoch, "mean": self.mean, "frac_half": self.frac_half,
                "histogram": self.histogram.tolist(), "n": int(self.betas.size)}


def beta_stats(student_logits, teacher: TeacherSignal, temperature: float = 1.0,
               epoch: int = -1, eps: float = DEFAULT_EPS) -> BetaRecord:
    z = student_logits.data if isinstance(student_logits, Tensor) else np.asarray(student_logits)
    if z.shape[0] == 0:
        raise ContractError("beta_stats needs a non-empty batch")
    z = z.astype(np.float64) / temperature
    e = np.exp(z - z.max(axis=1, keepdims=True))
    probs = e / e.sum(axis=1, keepdims=True)
    betas = beta_weight(probs, teacher.hard, eps)
    agree = _argmax(probs) == teacher.hard
    return BetaRecord(betas=betas, agree=agree, epoch=epoch)
