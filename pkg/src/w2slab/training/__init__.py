from .checkpoint import Checkpoint, load_checkpoint, load_into, save_checkpoint
from .loop import EpochLog, TrainResult, evaluate, topk_accuracy, train
from .optim import PRESETS, OptimConfig, SGDState, lr_at, sgd_step

__all__ = [
    "Checkpoint", "load_checkpoint", "load_into", "save_checkpoint",
    "EpochLog", "TrainResult", "evaluate", "topk_accuracy", "train",
    "PRESETS", "OptimConfig", "SGDState", "lr_at", "sgd_step",
]
