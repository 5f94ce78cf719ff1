"""Multi-scale composites and training patch sampling.

A composite packs five copies of a raster, each 16% smaller than the previous
one, onto one canvas: scale 0 at the origin and scales 1..4 left to right in a
strip below it. Placement rectangles are metadata; nothing is inferred from the
pixels.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import RasterSizeError
from .kvfile import read_kv
from .raster import Raster, load_raster, save_raster, sidecar_path

NUM_SCALES = 5
SCALE_STEP_PERCENT = 16


def scaled_side(side, scale):
    """round_half_up(side * (1 - 0.16 * scale)) in exact integer arithmetic."""
    num = side * (100 - SCALE_STEP_PERCENT * scale)
    return (2 * num + 100) // 200


@dataclass(frozen=True)
class Placement:
    scale: int
    x: int
    y: int
    width: int
    height: int

    def contains(self, x, y, width, height):
        return (
            x >= self.x
            and y >= self.y
            and x + width <= self.x + self.width
            and y + height <= self.y + self.height
        )

    def overlaps(self, other):
        return not (
            self.x + self.width <= other.x
            or other.x + other.width <= self.x
            or self.y + self.height <= other.y
            or other.y + other.height <= self.y
        )

    def valid_positions(self, patch_size):
        nx = self.width - patch_size + 1
        ny = self.height - patch_size + 1
        return max(nx, 0) * max(ny, 0)


@dataclass(frozen=True, eq=False)
class Composite:
    canvas: Raster
    placements: tuple[Placement, ...]
    source_width: int
    source_height: int

    def crop(self, scale):
        """Return the raster stored at ``scale`` as views into the canvas."""
        p = self.placements[scale]
        sl = (slice(p.y, p.y + p.height), slice(p.x, p.x + p.width))
        labels = None if self.canvas.labels is None else self.canvas.labels[sl]
        return Raster(
            self.canvas.depth[sl], self.canvas.color[sl], labels, self.canvas.depth_range
        )


def area_weights(n_src, n_dst):
    """(n_dst, n_src) matrix of exact box-filter weights; rows sum to 1."""
    ratio = n_src / n_dst
    edges = np.arange(n_dst + 1) * ratio
    lo, hi = edges[:-1, None], edges[1:, None]
    src = np.arange(n_src)[None, :]
    overlap = np.clip(np.minimum(hi, src + 1) - np.maximum(lo, src), 0.0, None)
    return overlap / ratio


def resize_area(image, height, width):
    """Area-averaging resize of an (H, W) or (H, W, C) array."""
    img = np.asarray(image, dtype=np.float64)
    wy = area_weights(img.shape[0], height)
    wx = area_weights(img.shape[1], width)
    out = np.tensordot(wy, img, axes=(1, 0))
    out = np.moveaxis(np.tensordot(wx, out, axes=(1, 1)), 0, 1)
    return out


def resize_nearest(grid, height, width):
    grid = np.asarray(grid)
    ys = ((np.arange(height) + 0.5) * grid.shape[0] / height).astype(np.int64)
    xs = ((np.arange(width) + 0.5) * grid.shape[1] / width).astype(np.int64)
    return grid[np.minimum(ys, grid.shape[0] - 1)[:, None], np.minimum(xs, grid.shape[1] - 1)]


def composite_layout(width, height):
    """Placements and canvas size for a width x height source."""
    sizes = [(scaled_side(width, i), scaled_side(height, i)) for i in range(NUM_SCALES)]
    placements = [Placement(0, 0, 0, sizes[0][0], sizes[0][1])]
    x = 0
    for i in range(1, NUM_SCALES):
        w, h = sizes[i]
        placements.append(Placement(i, x, sizes[0][1], w, h))
        x += w
    canvas_w = max(sizes[0][0], x)
    canvas_h = sizes[0][1] + max(h for _, h in sizes[1:])
    return tuple(placements), canvas_w, canvas_h


def build_composite(raster, patch_size=100):
    """Pack five rescaled copies of ``raster`` onto one canvas."""
    small_w = scaled_side(raster.width, NUM_SCALES - 1)
    small_h = scaled_side(raster.height, NUM_SCALES - 1)
    if min(small_w, small_h) < 2 * patch_size:
        raise RasterSizeError(
            f"{raster.width}x{raster.height} raster shrinks to {small_w}x{small_h} at the "
            f"smallest scale; need at least {2 * patch_size} px per side for patch size {patch_size}"
        )
    placements, cw, ch = composite_layout(raster.width, raster.height)
    depth = np.zeros((ch, cw), dtype=np.float32)
    color = np.zeros((ch, cw, 3), dtype=np.float32)
    labels = None if raster.labels is None else np.zeros((ch, cw), dtype=np.uint8)
    for p in placements:
        sl = (slice(p.y, p.y + p.height), slice(p.x, p.x + p.width))
        if p.scale == 0:
            depth[sl] = raster.depth
            color[sl] = raster.color
            if labels is not None:
                labels[sl] = raster.labels
            continue
        depth[sl] = np.clip(resize_area(raster.depth, p.height, p.width), 0.0, 1.0)
        color[sl] = np.clip(resize_area(raster.color, p.height, p.width), 0.0, 1.0)
        if labels is not None:
            labels[sl] = resize_nearest(raster.labels, p.height, p.width)
    canvas = Raster(depth, color, labels, raster.depth_range)
    return Composite(canvas, placements, raster.width, raster.height)


def save_composite(composite, depth_path, color_path, label_path=None, text=None):
    meta = {
        "source_width": composite.source_width,
        "source_height": composite.source_height,
    }
    for p in composite.placements:
        meta[f"placement_{p.scale}"] = f"{p.x} {p.y} {p.width} {p.height}"
    canvas = Raster(
        composite.canvas.depth,
        composite.canvas.color,
        composite.canvas.labels,
        composite.canvas.depth_range,
        meta,
    )
    save_raster(canvas, depth_path, color_path, label_path, text)


def load_composite(depth_path, color_path, label_path=None):
    meta = read_kv(sidecar_path(depth_path))
    canvas = load_raster(depth_path, color_path, label_path)
    placements = []
    for i in range(NUM_SCALES):
        x, y, w, h = (int(v) for v in meta[f"placement_{i}"].split())
        placements.append(Placement(i, x, y, w, h))
    bare = Raster(canvas.depth, canvas.color, canvas.labels, canvas.depth_range)
    return Composite(
        bare, tuple(placements), int(meta["source_width"]), int(meta["source_height"])
    )


@dataclass(frozen=True, eq=False)
class Patch:
    """One N x N x 4 (R, G, B, D) training window; ``pixels`` is a canvas view."""

    pixels: np.ndarray
    label: int
    scale: int
    x: int
    y: int
    source: int = 0

    @property
    def size(self):
        return self.pixels.shape[0]


class PatchSet(Sequence):
    """Lazily materialized list of patches drawn from one or more composites.

    Patches are stored as (composite, x, y) records; pixels are only gathered
    when a batch is requested.
    """

    def __init__(self, composites, patch_size, source, xs, ys, scales, labels):
        self.composites = tuple(composites)
        self.patch_size = int(patch_size)
        self.source = np.asarray(source, dtype=np.int32)
        self.xs = np.asarray(xs, dtype=np.int32)
        self.ys = np.asarray(ys, dtype=np.int32)
        self.scales = np.asarray(scales, dtype=np.int8)
        self.labels = np.asarray(labels, dtype=np.uint8)

    def __len__(self):
        return len(self.labels)

    def __getitem__(self, i):
        if isinstance(i, slice):
            idx = np.arange(len(self))[i]
            return self.subset(idx)
        i = range(len(self))[i]
        n = self.patch_size
        c = self.composites[self.source[i]]
        x, y = int(self.xs[i]), int(self.ys[i])
        return Patch(
            c.canvas.rgbd[y : y + n, x : x + n],
            int(self.labels[i]),
            int(self.scales[i]),
            x,
            y,
            int(self.source[i]),
        )

    def subset(self, idx):
        return PatchSet(
            self.composites,
            self.patch_size,
            self.source[idx],
            self.xs[idx],
            self.ys[idx],
            self.scales[idx],
            self.labels[idx],
        )

    def batch(self, idx, dtype=np.float32):
        """Gather patches ``idx`` into a (B, 4, N, N) array."""
        n = self.patch_size
        idx = np.asarray(idx)
        out = np.empty((len(idx), 4, n, n), dtype=dtype)
        for j, i in enumerate(idx):
            rgbd = self.composites[self.source[i]].canvas.rgbd
            x, y = self.xs[i], self.ys[i]
            out[j] = rgbd[y : y + n, x : x + n].transpose(2, 0, 1)
        return out


def sample_patches(composites, count, patch_size=100, seed=0):
    """Draw ``count`` labeled windows uniformly over all valid positions.

    ``composites`` may be one composite or a sequence of them; each is weighted by
    its number of valid window positions. Candidates are drawn uniformly over the
    canvas and rejected unless the whole window lies inside one placement.
    """
    if isinstance(composites, Composite):
        composites = [composites]
    composites = list(composites)
    n = int(patch_size)
    for c in composites:
        if c.canvas.labels is None:
            raise ValueError("patch sampling needs a labeled composite")
        if min(min(p.width, p.height) for p in c.placements) < n:
            raise RasterSizeError(f"patch size {n} exceeds the smallest placement")
    valid = np.array(
        [sum(p.valid_positions(n) for p in c.placements) for c in composites], dtype=np.float64
    )
    weights = valid / valid.sum()
    rng = np.random.default_rng(seed)

    # per-composite placement boxes: (x0, y0, x1, y1) with x1/y1 = last valid top-left
    boxes = [
        np.array([(p.x, p.y, p.x + p.width - n, p.y + p.height - n) for p in c.placements])
        for c in composites
    ]
    src_parts, x_parts, y_parts, s_parts = [], [], [], []
    remaining = int(count)
    while remaining > 0:
        draw = max(2 * remaining, 64)
        src = rng.choice(len(composites), size=draw, p=weights)
        u = rng.random(draw)
        v = rng.random(draw)
        xs = np.empty(draw, dtype=np.int64)
        ys = np.empty(draw, dtype=np.int64)
        scale = np.full(draw, -1, dtype=np.int64)
        for ci, c in enumerate(composites):
            sel = src == ci
            xs[sel] = (u[sel] * (c.canvas.width - n + 1)).astype(np.int64)
            ys[sel] = (v[sel] * (c.canvas.height - n + 1)).astype(np.int64)
            b = boxes[ci]
            inside = (
                (xs[sel, None] >= b[:, 0])
                & (ys[sel, None] >= b[:, 1])
                & (xs[sel, None] <= b[:, 2])
                & (ys[sel, None] <= b[:, 3])
            )
            hit = inside.any(axis=1)
            scale[np.flatnonzero(sel)[hit]] = inside[hit].argmax(axis=1)
        keep = np.flatnonzero(scale >= 0)[:remaining]
        src_parts.append(src[keep])
        x_parts.append(xs[keep])
        y_parts.append(ys[keep])
        s_parts.append(scale[keep])
        remaining -= len(keep)

    src = np.concatenate(src_parts)
    xs = np.concatenate(x_parts)
    ys = np.concatenate(y_parts)
    scales = np.concatenate(s_parts)
    labels = np.empty(len(src), dtype=np.uint8)
    half = n // 2
    for ci, c in enumerate(composites):
        sel = src == ci
        labels[sel] = c.canvas.labels[ys[sel] + half, xs[sel] + half]
    return PatchSet(composites, n, src, xs, ys, scales, labels)
