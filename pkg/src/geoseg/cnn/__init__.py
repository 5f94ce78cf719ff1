"""Patch CNN: layers, network, training and dense inference."""

import numpy as np

from .dense import dense_exact, infer_dense, infer_raster
from .layers import Conv2D, Dense, Flatten, Pool2D, ReLU, Tensor
from .network import (
    Network,
    backward,
    cross_entropy,
    dimension_chain,
    forward,
    is_feasible,
    softmax_normalize,
)
from .train import TrainResult, load_weights, save_weights, train, write_loss_csv


def conv_forward(x, layer):
    """Convolve a (C, H, W) or (B, C, H, W) array with a Conv2D layer."""
    x = np.asarray(x)
    single = x.ndim == 3
    out = layer.forward(x[None] if single else x)
    return out[0] if single else out


def pool_forward(x, layer):
    x = np.asarray(x)
    single = x.ndim == 3
    out = layer.forward(x[None] if single else x)
    return out[0] if single else out


def relu(x):
    return np.maximum(np.asarray(x), 0)


__all__ = [
    "Conv2D",
    "Dense",
    "Flatten",
    "Network",
    "Pool2D",
    "ReLU",
    "Tensor",
    "TrainResult",
    "backward",
    "conv_forward",
    "cross_entropy",
    "dense_exact",
    "dimension_chain",
    "forward",
    "infer_dense",
    "infer_raster",
    "is_feasible",
    "load_weights",
    "pool_forward",
    "relu",
    "save_weights",
    "softmax_normalize",
    "train",
    "write_loss_csv",
]
