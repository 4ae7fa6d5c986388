"""Weak-to-strong distillation lab: a small autodiff engine, weak/strong model pairs,
confidence-weighted distillation losses and reproducible experiment pipelines."""

from .errors import (CheckpointError, ConfigError, ContractError, NumericError, ParseError,
                     ShapeError, TrainingAborted, W2SError)
from .losses import (BetaRecord, LossConfig, TeacherSignal, adaptconf_loss, augconf_loss,
                     beta_stats, beta_weight, ce_hard, ce_soft, kd_loss, softmax_T, total_objective)
from .models import Model, ModelConfig, build, num_params
from .tensor import Tape, Tensor, backward, grad_check

__version__ = "0.1.0"
