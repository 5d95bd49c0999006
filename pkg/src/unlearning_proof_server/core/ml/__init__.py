"""Constituent-model trainer."""

from __future__ import annotations

from .network import (
    Gradients,
    Hyperparams,
    ModelDims,
    ModelParams,
    Prediction,
    accuracy,
    canonical_bytes,
    derive_seed,
    from_canonical_bytes,
    init_model,
    loss_and_grads,
    predict,
    scores,
    train_sgd,
)

__all__ = [
    "Gradients",
    "Hyperparams",
    "ModelDims",
    "ModelParams",
    "Prediction",
    "accuracy",
    "canonical_bytes",
    "derive_seed",
    "from_canonical_bytes",
    "init_model",
    "loss_and_grads",
    "predict",
    "scores",
    "train_sgd",
]
