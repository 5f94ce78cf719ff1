"""Sliding-window likelihood maps.

Every window of a placement is classified and the result is written at the
window's center pixel. Pixels whose window would leave the placement get NaN
("no likelihood"). With stride > 1 only every stride-th window is evaluated and
the gaps are filled from the nearest evaluated center.

Instead of running the network on each window, the convolution/pooling stack is
evaluated once over the whole placement with dilated kernels (the network's
total stride is 4), and the first fully connected layer gathers the dilated
21x21 feature windows. This is exact whenever the clipped last window of the
ceil-mode average pool never reaches the classifier, which holds for N=100,
k=5; other geometries fall back to per-window evaluation.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from . import kernels
from .network import softmax_normalize

_CHUNK = 4096


def dense_exact(network):
    """True when fully convolutional evaluation reproduces per-window outputs."""
    c1 = network.shapes[1][1]
    p1 = network.shapes[3][1]
    p2 = network.shapes[6][1]
    k = network.kernel_size
    clipped = (c1 - 3) % 2 == 1
    if not clipped:
        return True
    last_used = 2 * (p2 - 1) + 2 + (k - 1)
    return last_used < p1 - 1


def window_offsets(side, patch_size, stride):
    """Top-left offsets of evaluated windows along one axis."""
    last = side - patch_size
    if last < 0:
        return np.zeros(0, dtype=np.int64)
    return np.arange(0, last + 1, stride, dtype=np.int64)


def _fc_head(network, features):
    x = features
    for layer in network.layers[7:]:
        x = x @ layer.weight.values.T.astype(x.dtype, copy=False) + layer.bias.values
    return x


def _dense_features(network, rgbd):
    conv1, _, _, conv2 = network.layers[:4]
    dt = network.dtype
    x = np.ascontiguousarray(rgbd.transpose(2, 0, 1), dtype=dt)
    a1 = kernels.conv_dilated(x, conv1.weight.values.astype(dt), conv1.bias.values.astype(dt), 1)
    np.maximum(a1, 0, out=a1)
    p1 = kernels.pool_dilated(a1, 3, 1, False)
    a2 = kernels.conv_dilated(p1, conv2.weight.values.astype(dt), conv2.bias.values.astype(dt), 2)
    np.maximum(a2, 0, out=a2)
    return kernels.pool_dilated(a2, 3, 2, True)


def _logits_at(network, rgbd, ys, xs):
    """Logits for windows with top-left corners (ys[i], xs[i])."""
    n_out = network.layers[-1].out_features
    out = np.empty((len(ys), n_out), dtype=np.float64)
    if dense_exact(network):
        feat = _dense_features(network, rgbd)
        side = network.shapes[6][1]
        for s in range(0, len(ys), _CHUNK):
            rows = kernels.gather_windows(
                feat, ys[s : s + _CHUNK].astype(np.int64), xs[s : s + _CHUNK].astype(np.int64), side, 4
            )
            out[s : s + _CHUNK] = _fc_head(network, rows)
        return out
    n = network.patch_size
    win = sliding_window_view(rgbd, (n, n), axis=(0, 1))  # (H', W', 4, n, n)
    for s in range(0, len(ys), 256):
        batch = np.ascontiguousarray(win[ys[s : s + 256], xs[s : s + 256]])
        out[s : s + 256] = network.forward(batch)
    return out


def infer_raster(network, rgbd, stride=1):
    """(H, W, 6) normalized likelihoods for one RGBD array; NaN marks no value."""
    rgbd = np.asarray(rgbd)
    h, w = rgbd.shape[:2]
    n = network.patch_size
    half = n // 2
    oy = window_offsets(h, n, stride)
    ox = window_offsets(w, n, stride)
    out = np.full((h, w, 6), np.nan, dtype=np.float64)
    if len(oy) == 0 or len(ox) == 0:
        return out
    gy, gx = np.meshgrid(oy, ox, indexing="ij")
    logits = _logits_at(network, rgbd, gy.ravel(), gx.ravel())
    lam = softmax_normalize(logits).reshape(len(oy), len(ox), 6)

    # every center pixel maps to the nearest evaluated center (ties go up)
    rows = np.arange(half, h - n + half + 1)
    cols = np.arange(half, w - n + half + 1)
    jy = np.clip(np.floor((rows - half) / stride + 0.5).astype(np.int64), 0, len(oy) - 1)
    jx = np.clip(np.floor((cols - half) / stride + 0.5).astype(np.int64), 0, len(ox) - 1)
    out[rows[0] : rows[-1] + 1, cols[0] : cols[-1] + 1] = lam[jy][:, jx]
    return out


def infer_dense(network, composite, stride=1):
    """Per-scale likelihood grids for every placement of a composite."""
    grids = []
    for scale in range(len(composite.placements)):
        grids.append(infer_raster(network, composite.crop(scale).rgbd, stride))
    return grids
