"""Pooling back-ends over encoder layer stacks, a toy encoder and a trainer."""

from .encoder import FRAME_HOP, FRAMES_PER_SECOND, ToyEncoder, log_band_frames
from .loss import CLASS_WEIGHTS, l2_to_init, weighted_cross_entropy
from .models import (
    BACKENDS,
    MhfaModel,
    StaleCacheError,
    WaModel,
    detection_score,
    init_backend,
    softmax,
)
from .stack_io import dumps_stack, loads_stack, read_stack, write_stack
from .train import (
    Adam,
    TrainConfig,
    TrainingDivergedError,
    TrainResult,
    crop_time,
    load_checkpoint,
    lr_schedule,
    save_checkpoint,
    score_inputs,
    train,
)

__all__ = [
    "Adam", "BACKENDS", "CLASS_WEIGHTS", "FRAME_HOP", "FRAMES_PER_SECOND", "MhfaModel",
    "StaleCacheError", "ToyEncoder", "TrainConfig", "TrainResult", "TrainingDivergedError",
    "WaModel", "crop_time", "detection_score", "dumps_stack", "init_backend", "l2_to_init",
    "load_checkpoint", "loads_stack", "log_band_frames", "lr_schedule", "read_stack",
    "save_checkpoint", "score_inputs", "softmax", "train", "weighted_cross_entropy", "write_stack",
]
