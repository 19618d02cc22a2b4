"""Minimal reverse-mode differentiation stack: layers, losses, optimizers."""

from .layers import (
    Conv1d,
    Dense,
    DepthwiseSeparable2d,
    Flatten,
    FrameEncoder,
    GlobalAvgPool2d,
    GlobalMaxPool1d,
    Layer,
    MaxPool2d,
    ModelGraph,
    Swish,
    count_params,
    swish,
    swish_derivative,
)
from .train import (
    AdamState,
    TrainConfig,
    adam_step,
    finite_diff_grad,
    gradient_rel_error,
    iterate_batches,
    mae_loss,
    mae_value_and_grad,
    make_optimizer,
    mse_loss,
    mse_value_and_grad,
    sgd_step,
    value_and_grad,
)

__all__ = [
    "AdamState",
    "Conv1d",
    "Dense",
    "DepthwiseSeparable2d",
    "Flatten",
    "FrameEncoder",
    "GlobalAvgPool2d",
    "GlobalMaxPool1d",
    "Layer",
    "MaxPool2d",
    "ModelGraph",
    "Swish",
    "TrainConfig",
    "adam_step",
    "count_params",
    "finite_diff_grad",
    "gradient_rel_error",
    "iterate_batches",
    "mae_loss",
    "mae_value_and_grad",
    "make_optimizer",
    "mse_loss",
    "mse_value_and_grad",
    "sgd_step",
    "swish",
    "swish_derivative",
    "value_and_grad",
]
