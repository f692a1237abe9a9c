"""Minimal numpy neural-network engine with explicit backward passes."""

from .critic import double_backward_mlp, input_gradient, make_critic
from .gradcheck import GradCheckReport, grad_check
from .layers import (
    Conv2d,
    Dense,
    Dropout,
    Flatten,
    Layer,
    MaxPool2x2,
    Param,
    ReLU,
    Reshape,
    Sequential,
    Sigmoid,
    Softmax,
    Upsample2x2,
    conv3x3,
    sigmoid,
    softmax,
)
from .optim import Adam, AdamConfig, AdamState, adam_step

__all__ = [
    "Adam", "AdamConfig", "AdamState", "Conv2d", "Dense", "Dropout", "Flatten",
    "GradCheckReport", "Layer", "MaxPool2x2", "Param", "ReLU", "Reshape", "Sequential",
    "Sigmoid", "Softmax", "Upsample2x2", "adam_step", "conv3x3", "double_backward_mlp",
    "grad_check", "input_gradient", "make_critic", "sigmoid", "softmax",
]
