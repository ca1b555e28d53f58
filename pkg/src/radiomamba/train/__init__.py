"""AdamW training with cosine annealing, checkpoints and telemetry."""

from .checkpoint import (
    CheckpointError,
    build_from_checkpoint,
    load_checkpoint,
    model_config_from,
    read_checkpoint,
    save_checkpoint,
)
from .loop import History, TrainConfig, evaluate, predict, train_loop
from .optim import TrainState, adamw_step, clip_grad_norm, cosine_lr

__all__ = [
    "CheckpointError",
    "History",
    "TrainConfig",
    "TrainState",
    "adamw_step",
    "build_from_checkpoint",
    "clip_grad_norm",
    "cosine_lr",
    "evaluate",
    "load_checkpoint",
    "model_config_from",
    "predict",
    "read_checkpoint",
    "save_checkpoint",
    "train_loop",
]
