"""Per-layer neural unsigned distance fields: model, sampler, training."""

from .model import (
    DEFAULT_CLAMP,
    DEFAULT_HIDDEN,
    DEFAULT_PE_COUNT,
    MlpUdf,
    forward_raw,
    load_model,
    positional_encode,
    save_model,
    udf_eval,
    udf_eval_many,
)
from .sampling import BOX, NEAR_SURFACE, ON_SURFACE, SampleSet, sample_training_points
from .training import TrainConfig, load_loss_history, save_loss_history, train_udf, udf_loss

__all__ = [
    "BOX",
    "DEFAULT_CLAMP",
    "DEFAULT_HIDDEN",
    "DEFAULT_PE_COUNT",
    "MlpUdf",
    "NEAR_SURFACE",
    "ON_SURFACE",
    "SampleSet",
    "TrainConfig",
    "forward_raw",
    "load_loss_history",
    "load_model",
    "positional_encode",
    "sample_training_points",
    "save_loss_history",
    "save_model",
    "train_udf",
    "udf_eval",
    "udf_eval_many",
    "udf_loss",
]
