"""Reverse-mode autodiff, layers and the desk-scale reference networks."""

from .layers import (ANALOG, DIGITAL, AvgPool, BatchNorm, Conv2d, Dense, Flatten,
                     GlobalAvgPool, Module, Network, Parameter, ReLU, ResidualBlock,
                     Sequential, backward, build, forward, load_snapshot, log_prior_gradient,
                     mlp, project_to_prior, save_snapshot, tiny_resnet)
from .tensor import Tensor, cross_entropy, softmax

__all__ = [
    "ANALOG", "DIGITAL", "AvgPool", "BatchNorm", "Conv2d", "Dense", "Flatten", "GlobalAvgPool",
    "Module", "Network", "Parameter", "ReLU", "ResidualBlock", "Sequential", "Tensor",
    "backward", "build", "cross_entropy", "forward", "load_snapshot", "log_prior_gradient",
    "mlp", "project_to_prior", "save_snapshot", "softmax", "tiny_resnet",
]
