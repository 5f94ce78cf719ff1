"""Layers of the patch classifier with explicit forward/backward passes.

Activations are NCHW arrays. Each layer caches what its backward pass needs
during ``forward``; calling ``backward`` without a cached forward raises
StateError.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ShapeError, StateError
from . import kernels


@dataclass
class Tensor:
    """Parameter array with an optional gradient buffer of the same shape."""

    values: np.ndarray
    grad: np.ndarray | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values)
        if self.grad is not None and np.shape(self.grad) != self.values.shape:
            raise ShapeError(f"grad shape {np.shape(self.grad)} != values {self.values.shape}")

    @property
    def shape(self):
        return self.values.shape

    @property
    def size(self):
        return self.values.size

    def zero_grad(self):
        self.grad = np.zeros_like(self.values)


def glorot_uniform(rng, shape, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


class Layer:
    kind = "layer"

    def params(self):
        return []

    def _cached(self, name):
        value = getattr(self, name, None)
        if value is None:
            raise StateError(f"{type(self).__name__}.backward called before forward")
        return value


class Conv2D(Layer):
    """Valid cross-correlation, stride 1, odd square kernel."""

    kind = "conv"

    def __init__(self, in_channels, out_channels, kernel_size, rng=None, dtype=np.float32):
        if kernel_size % 2 != 1:
            raise ValueError("kernel size must be odd")
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel_size = kernel_size
        shape = (out_channels, in_channels, kernel_size, kernel_size)
        if rng is None:
            w = np.zeros(shape)
        else:
            area = kernel_size * kernel_size
            w = glorot_uniform(rng, shape, in_channels * area, out_channels * area)
        self.weight = Tensor(w.astype(dtype))
        self.bias = Tensor(np.zeros(out_channels, dtype=dtype))
        self._x = None

    def params(self):
        return [self.weight, self.bias]

    def output_shape(self, shape):
        c, h, w = shape
        if c != self.in_channels:
            raise ShapeError(f"conv expects {self.in_channels} channels, got {c}")
        k = self.kernel_size
        if h < k or w < k:
            raise ShapeError(f"input {h}x{w} smaller than kernel {k}x{k}")
        return (self.out_channels, h - k + 1, w - k + 1)

    def forward(self, x):
        self.output_shape(x.shape[1:])
        self._x = x
        w = self.weight.values.astype(x.dtype, copy=False)
        b = self.bias.values.astype(x.dtype, copy=False)
        return kernels.conv_forward(x, w, b)

    def backward(self, g, need_input_grad=True):
        x = self._cached("_x")
        dw = kernels.conv_weight_grad(x, g, self.kernel_size).sum(axis=0)
        db = g.sum(axis=(0, 2, 3))
        self.weight.grad = self.weight.grad + dw if self.weight.grad is not None else dw
        self.bias.grad = self.bias.grad + db if self.bias.grad is not None else db
        if not need_input_grad:
            return None
        w = self.weight.values.astype(g.dtype, copy=False)
        return kernels.conv_input_grad(g, w, x.shape[2], x.shape[3])


class Pool2D(Layer):
    """3x3 stride-2 pooling; ``ceil_mode`` keeps a clipped last window."""

    kind = "pool"

    def __init__(self, mode, ceil_mode, window=3, stride=2):
        if mode not in ("avg", "max"):
            raise ValueError(f"unknown pooling mode {mode!r}")
        self.mode = mode
        self.ceil_mode = ceil_mode
        self.window = window
        self.stride = stride
        self._in_shape = None
        self._arg = None

    def output_shape(self, shape):
        c, h, w = shape
        ho = kernels.pool_out_size(h, self.window, self.stride, self.ceil_mode)
        wo = kernels.pool_out_size(w, self.window, self.stride, self.ceil_mode)
        if ho < 1 or wo < 1:
            raise ShapeError(f"{h}x{w} input too small for {self.window}x{self.window} pooling")
        return (c, ho, wo)

    def forward(self, x):
        _, ho, wo = self.output_shape(x.shape[1:])
        self._in_shape = x.shape
        if self.mode == "avg":
            return kernels.avg_pool_forward(x, self.window, self.stride, ho, wo)
        out, self._arg = kernels.max_pool_forward(x, self.window, self.stride, ho, wo)
        return out

    def backward(self, g, need_input_grad=True):
        shape = self._cached("_in_shape")
        if self.mode == "avg":
            return kernels.avg_pool_backward(g, self.window, self.stride, shape[2], shape[3])
        return kernels.max_pool_backward(g, self._cached("_arg"), shape[2], shape[3])


class ReLU(Layer):
    kind = "relu"

    def __init__(self):
        self._y = None

    def output_shape(self, shape):
        return shape

    def forward(self, x):
        self._y = kernels.relu_forward(np.ascontiguousarray(x))
        return self._y

    def backward(self, g, need_input_grad=True):
        return kernels.relu_backward(np.ascontiguousarray(g), self._cached("_y"))


class Flatten(Layer):
    kind = "flatten"

    def __init__(self):
        self._in_shape = None

    def output_shape(self, shape):
        return (int(np.prod(shape)),)

    def forward(self, x):
        self._in_shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, g, need_input_grad=True):
        return g.reshape(self._cached("_in_shape"))


class Dense(Layer):
    """Fully connected layer y = x W^T + b with W of shape (out, in)."""

    kind = "fc"

    def __init__(self, in_features, out_features, rng=None, dtype=np.float32):
        self.in_features = in_features
        self.out_features = out_features
        if rng is None:
            w = np.zeros((out_features, in_features))
        else:
            w = glorot_uniform(rng, (out_features, in_features), in_features, out_features)
        self.weight = Tensor(w.astype(dtype))
        self.bias = Tensor(np.zeros(out_features, dtype=dtype))
        self._x = None

    def params(self):
        return [self.weight, self.bias]

    def output_shape(self, shape):
        if shape != (self.in_features,):
            raise ShapeError(f"fc expects ({self.in_features},), got {shape}")
        return (self.out_features,)

    def forward(self, x):
        self.output_shape(x.shape[1:])
        self._x = x
        w = self.weight.values.astype(x.dtype, copy=False)
        return x @ w.T + self.bias.values.astype(x.dtype, copy=False)

    def backward(self, g, need_input_grad=True):
        x = self._cached("_x")
        dw = g.T @ x
        db = g.sum(axis=0)
        self.weight.grad = self.weight.grad + dw if self.weight.grad is not None else dw
        self.bias.grad = self.bias.grad + db if self.bias.grad is not None else db
        if not need_input_grad:
            return None
        return g @ self.weight.values.astype(g.dtype, copy=False)
