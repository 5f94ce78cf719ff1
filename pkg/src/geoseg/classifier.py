"""Cross-scale likelihood fusion and the one-vs-all linear SVM on top of it."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numba as nb
import numpy as np

from .errors import DegenerateDataError, FormatError
from .raster import NUM_CLASSES, UNKNOWN

LHM_MAGIC = b"GSEGLHM1"


@dataclass(frozen=True, eq=False)
class LikelihoodMap:
    """(H, W, 6) fused likelihoods; NaN rows mark pixels without a value."""

    values: np.ndarray

    @property
    def height(self):
        return self.values.shape[0]

    @property
    def width(self):
        return self.values.shape[1]

    @property
    def valid(self):
        return ~np.isnan(self.values[..., 0])


def _bilinear_axis(n_src, n_dst):
    """Lower index, upper index and upper weight per destination sample."""
    pos = (np.arange(n_dst) + 0.5) * (n_src / n_dst) - 0.5
    pos = np.clip(pos, 0.0, n_src - 1)
    lo = np.floor(pos).astype(np.int64)
    hi = np.minimum(lo + 1, n_src - 1)
    return lo, hi, pos - lo


def upscale_bilinear(grid, height, width):
    """Bilinear resize of an (h, w, C) grid with NaN holes.

    A destination pixel is valid only if every source sample with non-zero
    weight is valid.
    """
    grid = np.asarray(grid, dtype=np.float64)
    invalid = np.isnan(grid[..., 0]).astype(np.float64)
    filled = np.nan_to_num(grid, nan=0.0)
    y0, y1, wy = _bilinear_axis(grid.shape[0], height)
    x0, x1, wx = _bilinear_axis(grid.shape[1], width)
    wy = wy[:, None]
    wx = wx[None, :]

    def interp(a):
        if a.ndim == 3:
            wy3, wx3 = wy[..., None], wx[..., None]
        else:
            wy3, wx3 = wy, wx
        top = a[y0][:, x0] * (1 - wx3) + a[y0][:, x1] * wx3
        bot = a[y1][:, x0] * (1 - wx3) + a[y1][:, x1] * wx3
        return top * (1 - wy3) + bot * wy3

    out = interp(filled)
    bad = interp(invalid) > 1e-12
    out[bad] = np.nan
    return out


def fuse_scales(grids, width, height):
    """Average per-scale likelihood grids at the original resolution.

    Each grid is upscaled bilinearly; a pixel's fused tuple is the mean over the
    scales that supply a value there, renormalized to sum to one.
    """
    if len(grids) == 0:
        raise ValueError("fuse_scales needs at least one scale")
    total = np.zeros((height, width, NUM_CLASSES), dtype=np.float64)
    count = np.zeros((height, width), dtype=np.int64)
    for g in grids:
        g = np.asarray(g, dtype=np.float64)
        up = g if g.shape[:2] == (height, width) else upscale_bilinear(g, height, width)
        ok = ~np.isnan(up[..., 0])
        total[ok] += up[ok]
        count += ok
    out = np.full((height, width, NUM_CLASSES), np.nan)
    has = count > 0
    mean = total[has] / count[has][:, None]
    out[has] = mean / mean.sum(axis=1, keepdims=True)
    return LikelihoodMap(out)


def save_likelihood_map(lhm, path, config_hash=""):
    """Binary: magic, width, height, channels, tag, validity bitmap, float64 grid."""
    tag = config_hash.encode()
    valid = lhm.valid
    with open(path, "wb") as f:
        f.write(LHM_MAGIC)
        f.write(struct.pack("<IIII", lhm.width, lhm.height, lhm.values.shape[2], len(tag)))
        f.write(tag)
        f.write(np.packbits(valid.ravel()).tobytes())
        f.write(np.nan_to_num(lhm.values, nan=0.0).astype("<f8").tobytes())


def load_likelihood_map(path):
    data = Path(path).read_bytes()
    if data[:8] != LHM_MAGIC:
        raise FormatError(f"{path}: not a likelihood map")
    w, h, c, tag_len = struct.unpack_from("<IIII", data, 8)
    pos = 24 + tag_len
    nbits = (w * h + 7) // 8
    valid = np.unpackbits(np.frombuffer(data, np.uint8, nbits, pos))[: w * h].astype(bool)
    pos += nbits
    values = np.frombuffer(data, "<f8", w * h * c, pos).reshape(h, w, c).astype(np.float64)
    values[~valid.reshape(h, w)] = np.nan
    return LikelihoodMap(values)


@dataclass
class SvmModel:
    """One linear scorer per class: scores = W @ x + b."""

    W: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        self.W = np.asarray(self.W, dtype=np.float64)
        self.b = np.asarray(self.b, dtype=np.float64)
        if not (np.isfinite(self.W).all() and np.isfinite(self.b).all()):
            raise ValueError("SVM parameters must be finite")

    def scores(self, x):
        return np.asarray(x, dtype=np.float64) @ self.W.T + self.b


@nb.njit(cache=True)
def _pegasos(x, y, order, rate, reg, n_classes):
    n, d = x.shape
    w = np.zeros((n_classes, d))
    b = np.zeros(n_classes)
    t = 0
    for epoch in range(order.shape[0]):
        for s in range(n):
            i = order[epoch, s]
            eta = rate / (1.0 + reg * rate * t)
            shrink = 1.0 - eta * reg
            for c in range(n_classes):
                target = 1.0 if y[i] == c else -1.0
                margin = b[c]
                for k in range(d):
                    margin += w[c, k] * x[i, k]
                margin *= target
                for k in range(d):
                    w[c, k] *= shrink
                if margin < 1.0:
                    for k in range(d):
                        w[c, k] += eta * target * x[i, k]
                    b[c] += eta * target
            t += 1
    return w, b


def train_svm(features, labels, epochs=50, rate=0.1, regularization=1e-4, seed=0):
    """Six hinge-loss classifiers by stochastic subgradient descent.

    The step size decays as rate / (1 + regularization * rate * t); the bias is
    not regularized.
    """
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if len(np.unique(y)) < 2:
        raise DegenerateDataError("SVM training needs at least two distinct labels")
    rng = np.random.default_rng(seed)
    order = np.stack([rng.permutation(len(y)) for _ in range(epochs)]) if epochs else np.zeros(
        (0, len(y)), dtype=np.int64
    )
    w, b = _pegasos(x, y, order, float(rate), float(regularization), NUM_CLASSES)
    return SvmModel(w, b)


def predict_label(model, lhm):
    """Argmax of the six scores per valued pixel (ties -> lowest index); else unknown."""
    values = lhm.values if isinstance(lhm, LikelihoodMap) else np.asarray(lhm)
    valid = ~np.isnan(values[..., 0])
    out = np.full(values.shape[:2], UNKNOWN, dtype=np.uint8)
    if valid.any():
        out[valid] = np.argmax(model.scores(values[valid]), axis=1)
    return out


def sample_pixels(lhms, label_grids, count, seed=0):
    """Uniform sample of (fused tuple, reference label) pairs over valued pixels."""
    feats, labs = [], []
    for lhm, lab in zip(lhms, label_grids):
        ok = lhm.valid
        feats.append(lhm.values[ok])
        labs.append(np.asarray(lab)[ok])
    x = np.concatenate(feats)
    y = np.concatenate(labs).astype(np.int64)
    if count is not None and count < len(y):
        idx = np.sort(np.random.default_rng(seed).choice(len(y), size=count, replace=False))
        x, y = x[idx], y[idx]
    return x, y


def save_svm(model, path, config_hash=""):
    lines = [f"# geoseg svm {config_hash}".rstrip()]
    for c in range(NUM_CLASSES):
        row = list(model.W[c]) + [model.b[c]]
        lines.append(" ".join(repr(float(v)) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def load_svm(path):
    rows = []
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        rows.append([float(v) for v in line.split()])
    arr = np.array(rows)
    if arr.shape != (NUM_CLASSES, NUM_CLASSES + 1):
        raise FormatError(f"{path}: expected 6 rows of 7 numbers, got shape {arr.shape}")
    return SvmModel(arr[:, :NUM_CLASSES], arr[:, NUM_CLASSES])
