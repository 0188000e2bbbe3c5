"""Numpy-backed differentiable layers, losses, optimizer and gradient checking."""

from .adam import Adam, adam_step
from .gradcheck import GradCheckReport, central_difference, grad_check
from .layers import (
    BatchNorm,
    Conv2d,
    ConvGeometry,
    Dense,
    Flatten,
    Layer,
    LeakyReLU,
    Reshape,
    Sequential,
    Sigmoid,
    Softmax,
    TConv2d,
    conv_backward_input,
    conv_backward_weights,
    conv_forward,
)
from .losses import xent_loss

__all__ = [
    "Adam",
    "adam_step",
    "BatchNorm",
    "Conv2d",
    "ConvGeometry",
    "Dense",
    "Flatten",
    "GradCheckReport",
    "Layer",
    "LeakyReLU",
    "Reshape",
    "Sequential",
    "Sigmoid",
    "Softmax",
    "TConv2d",
    "central_difference",
    "conv_backward_input",
    "conv_backward_weights",
    "conv_forward",
    "grad_check",
    "xent_loss",
]
