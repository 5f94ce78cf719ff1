"""The 13-layer patch network and its softmax / cross-entropy head.

conv(4->6, k) - ReLU - avgpool - conv(6->12, k) - ReLU - maxpool - flatten
- fc(->120) - fc(120->80) - fc(80->6)

Pooling is 3x3 with stride 2. The average pool keeps a clipped last window
(ceil mode) and the max pool drops it (floor mode); with N=100, k=5 this gives
the map sides 96, 48, 44, 21 and a 5292-wide flattened vector.
"""

from __future__ import annotations

import numpy as np

from ..errors import ShapeError, StateError
from ..raster import NUM_CLASSES
from .kernels import pool_out_size
from .layers import Conv2D, Dense, Flatten, Pool2D, ReLU

IN_CHANNELS = 4
CONV1_FILTERS = 6
CONV2_FILTERS = 12
HIDDEN = (120, 80)


def dimension_chain(patch_size, kernel_size):
    """Activation shapes after every layer, or ShapeError if a map vanishes."""
    n, k = int(patch_size), int(kernel_size)
    shapes = [(IN_CHANNELS, n, n)]

    def conv(shape, out):
        c, h, _ = shape
        side = h - k + 1
        if side < 1:
            raise ShapeError(f"patch {n} too small for kernel {k}: conv output side {side}")
        return (out, side, side)

    def pool(shape, ceil_mode):
        c, h, _ = shape
        side = pool_out_size(h, 3, 2, ceil_mode)
        if side < 1:
            raise ShapeError(f"patch {n} too small for kernel {k}: pooling input side {h} < 3")
        return (c, side, side)

    s = conv(shapes[-1], CONV1_FILTERS)
    shapes += [s, s]
    shapes.append(pool(s, True))
    s = conv(shapes[-1], CONV2_FILTERS)
    shapes += [s, s]
    shapes.append(pool(s, False))
    flat = int(np.prod(shapes[-1]))
    shapes.append((flat,))
    shapes += [(HIDDEN[0],), (HIDDEN[1],), (NUM_CLASSES,)]
    return shapes


def is_feasible(patch_size, kernel_size):
    if kernel_size % 2 != 1 or kernel_size < 1:
        return False
    try:
        dimension_chain(patch_size, kernel_size)
    except ShapeError:
        return False
    return True


def softmax_normalize(phi):
    """Normalized likelihoods exp(phi) / sum(exp(phi)) along the last axis."""
    phi = np.asarray(phi, dtype=np.float64)
    z = np.exp(phi - phi.max(axis=-1, keepdims=True))
    return z / z.sum(axis=-1, keepdims=True)


def cross_entropy(logits, labels):
    """Mean softmax cross-entropy and its gradient w.r.t. the logits."""
    logits = np.asarray(logits)
    labels = np.asarray(labels, dtype=np.int64)
    shifted = logits.astype(np.float64) - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1))
    rows = np.arange(len(labels))
    loss = float(np.mean(log_z - shifted[rows, labels]))
    grad = softmax_normalize(logits)
    grad[rows, labels] -= 1.0
    grad /= len(labels)
    return loss, grad


class Network:
    """Patch classifier producing six unnormalized likelihoods per patch."""

    def __init__(self, patch_size=100, kernel_size=5, seed=0, dtype=np.float32, zero=False):
        self.patch_size = int(patch_size)
        self.kernel_size = int(kernel_size)
        self.dtype = np.dtype(dtype)
        self.shapes = dimension_chain(self.patch_size, self.kernel_size)
        rng = None if zero else np.random.default_rng(seed)
        k = self.kernel_size
        flat = self.shapes[7][0]
        self.layers = [
            Conv2D(IN_CHANNELS, CONV1_FILTERS, k, rng, self.dtype),
            ReLU(),
            Pool2D("avg", ceil_mode=True),
            Conv2D(CONV1_FILTERS, CONV2_FILTERS, k, rng, self.dtype),
            ReLU(),
            Pool2D("max", ceil_mode=False),
            Flatten(),
            Dense(flat, HIDDEN[0], rng, self.dtype),
            Dense(HIDDEN[0], HIDDEN[1], rng, self.dtype),
            Dense(HIDDEN[1], NUM_CLASSES, rng, self.dtype),
        ]
        self._forward_done = False

    # -- parameters --

    def params(self):
        return [p for layer in self.layers for p in layer.params()]

    def param_layers(self):
        return [layer for layer in self.layers if layer.params()]

    def zero_grad(self):
        for p in self.params():
            p.grad = None

    def astype(self, dtype):
        """Copy of this network with parameters cast to ``dtype``."""
        net = Network(self.patch_size, self.kernel_size, dtype=dtype, zero=True)
        for dst, src in zip(net.params(), self.params()):
            dst.values = src.values.astype(dtype)
        return net

    # -- passes --

    def check_input(self, x):
        n = self.patch_size
        if x.ndim != 4 or x.shape[1:] != (IN_CHANNELS, n, n):
            raise ShapeError(f"expected (B, {IN_CHANNELS}, {n}, {n}) input, got {x.shape}")

    def forward(self, x, trace=None):
        """Logits for a (B, 4, N, N) batch; optionally append each activation shape."""
        x = np.asarray(x)
        self.check_input(x)
        x = x.astype(self.dtype, copy=False)
        for layer in self.layers:
            x = layer.forward(x)
            if trace is not None:
                trace.append(x.shape[1:])
        self._forward_done = True
        return x

    def backward(self, dlogits):
        """Accumulate parameter gradients given dLoss/dlogits from the last forward."""
        if not self._forward_done:
            raise StateError("backward called before forward")
        g = np.asarray(dlogits).astype(self.dtype, copy=False)
        for i in range(len(self.layers) - 1, -1, -1):
            g = self.layers[i].backward(g, need_input_grad=i > 0)
        self._forward_done = False

    def loss_and_grad(self, x, labels, loss_scale=1.0):
        """Forward + backward for softmax cross-entropy; returns the (scaled) loss."""
        logits = self.forward(x)
        loss, dlogits = cross_entropy(logits, labels)
        self.zero_grad()
        self.backward(dlogits * loss_scale)
        return loss * loss_scale

    def predict_proba(self, x, batch_size=256):
        x = np.asarray(x)
        out = []
        for i in range(0, len(x), batch_size):
            out.append(softmax_normalize(self.forward(x[i : i + batch_size])))
        self._forward_done = False
        return np.concatenate(out) if out else np.zeros((0, NUM_CLASSES))


def patch_input(patch):
    """(1, 4, N, N) input array from a Patch or an (N, N, 4) pixel array."""
    pixels = getattr(patch, "pixels", patch)
    pixels = np.asarray(pixels)
    if pixels.ndim != 3 or pixels.shape[2] != IN_CHANNELS:
        raise ShapeError(f"patch pixels must be (N, N, 4), got {pixels.shape}")
    return pixels.transpose(2, 0, 1)[None]


def forward(network, patch):
    """Unnormalized 6-tuple for the center pixel of one patch."""
    return network.forward(patch_input(patch))[0].astype(np.float64)


def backward(network, patch, target, loss_scale=1.0):
    """Gradients of the cross-entropy loss for one patch, keyed by parameter."""
    network.loss_and_grad(patch_input(patch), [int(target)], loss_scale)
    grads = {}
    for li, layer in enumerate(network.layers):
        for name, p in zip(("weight", "bias"), layer.params()):
            grads[(li, name)] = p.grad
    return grads
