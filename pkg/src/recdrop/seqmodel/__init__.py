"""Gated recurrent next-item model: forward, BPTT, and per-step Jacobians."""

from .checkpoint import load_checkpoint, save_checkpoint
from .model import (
    ForwardTrace,
    PROB_FLOOR,
    Gradients,
    ModelConfig,
    ModelParams,
    TENSOR_FIELDS,
    Workspace,
    backward,
    backward_batch,
    batch_loss,
    forward,
    forward_batch,
    init_params,
    loss_nll,
    predict_batch,
    step_jacobian,
)

__all__ = [
    "ForwardTrace",
    "PROB_FLOOR",
    "Gradients",
    "ModelConfig",
    "ModelParams",
    "TENSOR_FIELDS",
    "Workspace",
    "backward",
    "backward_batch",
    "batch_loss",
    "forward",
    "forward_batch",
    "init_params",
    "load_checkpoint",
    "loss_nll",
    "predict_batch",
    "save_checkpoint",
    "step_jacobian",
]
