"""Aligned depth / color / label rasters and their PNG encoding.

Depth is stored as 16-bit grayscale, color and labels as 8-bit RGB. Labels are
encoded through a fixed palette, one color per class. A ``.meta`` sidecar next to
the depth file keeps the elevation range used to normalize depth so that
heights can be recovered later.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
from PIL import Image, PngImagePlugin

from .errors import AlignmentError, PaletteError
from .kvfile import read_kv, write_kv

BUILDING, TREE, ROAD, ARTIFICIAL_GROUND, NATURAL_GROUND, CAR = range(6)
UNKNOWN = 6
NUM_CLASSES = 6

CLASS_NAMES = (
    "building",
    "tree",
    "road",
    "artificial_ground",
    "natural_ground",
    "car",
    "unknown",
)

PALETTE = np.array(
    [
        (0, 0, 255),  # building
        (0, 255, 0),  # tree
        (255, 255, 255),  # road
        (255, 0, 0),  # artificial ground
        (0, 255, 255),  # natural ground
        (255, 255, 0),  # car
        (0, 0, 0),  # unknown
    ],
    dtype=np.uint8,
)

GROUND_CLASSES = (ROAD, ARTIFICIAL_GROUND, NATURAL_GROUND)

_PALETTE_KEYS = (
    PALETTE[:, 0].astype(np.int64) << 16 | PALETTE[:, 1].astype(np.int64) << 8 | PALETTE[:, 2]
)


def class_color(index):
    return tuple(int(c) for c in PALETTE[index])


def class_index(color):
    key = (int(color[0]) << 16) | (int(color[1]) << 8) | int(color[2])
    hits = np.flatnonzero(_PALETTE_KEYS == key)
    if hits.size == 0:
        raise KeyError(f"color {tuple(color)} is not in the palette")
    return int(hits[0])


def encode_labels(labels):
    """Map an (H, W) grid of class indices 0..6 to an (H, W, 3) uint8 image."""
    labels = np.asarray(labels)
    if labels.size and (labels.min() < 0 or labels.max() > UNKNOWN):
        raise ValueError("label indices must lie in 0..6")
    return PALETTE[labels]


def decode_labels(rgb, allow_unknown=False):
    """Inverse of :func:`encode_labels`; raises PaletteError on foreign colors."""
    rgb = np.asarray(rgb, dtype=np.int64)
    keys = rgb[..., 0] << 16 | rgb[..., 1] << 8 | rgb[..., 2]
    allowed = _PALETTE_KEYS if allow_unknown else _PALETTE_KEYS[:NUM_CLASSES]
    order = np.argsort(allowed)
    sorted_keys = allowed[order]
    pos = np.clip(np.searchsorted(sorted_keys, keys), 0, len(sorted_keys) - 1)
    ok = sorted_keys[pos] == keys
    if not ok.all():
        y, x = np.argwhere(~ok)[0]
        raise PaletteError(rgb[y, x], x, y)
    return order[pos].astype(np.uint8)


def _readonly(a):
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Raster:
    """Immutable triplet of aligned grids.

    ``depth`` is (H, W) in [0, 1], ``color`` is (H, W, 3) in [0, 1] and
    ``labels`` is an optional (H, W) grid of class indices 0..5.
    ``depth_range`` is the (min, max) elevation that maps to depth 0 and 1.
    """

    depth: np.ndarray
    color: np.ndarray
    labels: np.ndarray | None = None
    depth_range: tuple[float, float] = (0.0, 1.0)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        depth = np.ascontiguousarray(self.depth, dtype=np.float32)
        color = np.ascontiguousarray(self.color, dtype=np.float32)
        if depth.ndim != 2:
            raise AlignmentError(f"depth must be 2-D, got shape {depth.shape}")
        if color.shape != depth.shape + (3,):
            raise AlignmentError(f"color shape {color.shape} does not match depth {depth.shape}")
        if depth.size and (depth.min() < 0 or depth.max() > 1 or not np.isfinite(depth).all()):
            raise ValueError("depth values must lie in [0, 1]")
        if color.size and (color.min() < 0 or color.max() > 1 or not np.isfinite(color).all()):
            raise ValueError("color channels must lie in [0, 1]")
        object.__setattr__(self, "depth", _readonly(depth))
        object.__setattr__(self, "color", _readonly(color))
        if self.labels is not None:
            labels = np.ascontiguousarray(self.labels, dtype=np.uint8)
            if labels.shape != depth.shape:
                raise AlignmentError(
                    f"label shape {labels.shape} does not match depth {depth.shape}"
                )
            if labels.size and labels.max() >= NUM_CLASSES:
                raise ValueError("raster labels must lie in 0..5")
            object.__setattr__(self, "labels", _readonly(labels))
        lo, hi = self.depth_range
        object.__setattr__(self, "depth_range", (float(lo), float(hi)))

    @property
    def height(self):
        return self.depth.shape[0]

    @property
    def width(self):
        return self.depth.shape[1]

    @cached_property
    def rgbd(self):
        """(H, W, 4) float32 array with channels R, G, B, D."""
        out = np.empty((self.height, self.width, 4), dtype=np.float32)
        out[..., :3] = self.color
        out[..., 3] = self.depth
        return _readonly(out)

    def elevation(self, depth=None):
        """Convert normalized depth back to the original elevation units."""
        lo, hi = self.depth_range
        d = self.depth if depth is None else np.asarray(depth)
        return lo + d.astype(np.float64) * (hi - lo)


def normalize_depth(values):
    """Min-max normalize to [0, 1]; returns (normalized, (min, max))."""
    values = np.asarray(values, dtype=np.float64)
    lo, hi = float(values.min()), float(values.max())
    if hi > lo:
        out = (values - lo) / (hi - lo)
    else:
        out = np.zeros_like(values)
    return out.astype(np.float32), (lo, hi)


def sidecar_path(depth_path):
    return Path(depth_path).with_suffix(".meta")


def _png_info(text):
    if not text:
        return None
    info = PngImagePlugin.PngInfo()
    for k, v in text.items():
        info.add_text(str(k), str(v))
    return info


def save_png(path, array, text=None):
    """Write an 8-bit RGB/L or 16-bit grayscale array as PNG."""
    array = np.asarray(array)
    if array.dtype != np.uint16:
        array = array.astype(np.uint8)
    img = Image.fromarray(array)
    img.save(path, format="PNG", pnginfo=_png_info(text))


def read_png(path):
    with Image.open(path) as img:
        img.load()
        if img.mode in ("I;16", "I;16B", "I;16L", "I"):
            return np.asarray(img, dtype=np.uint16) if img.mode != "I" else np.asarray(img)
        if img.mode in ("L", "RGB"):
            return np.asarray(img)
        return np.asarray(img.convert("RGB"))


def save_label_grid(path, labels, text=None):
    save_png(path, encode_labels(labels), text)


def load_label_grid(path, allow_unknown=True):
    return decode_labels(read_png(path), allow_unknown=allow_unknown)


def save_raster(raster, depth_path, color_path, label_path=None, text=None):
    """Write depth (16-bit), color (8-bit RGB), optional labels and the sidecar."""
    depth16 = np.round(raster.depth.astype(np.float64) * 65535.0).astype(np.uint16)
    save_png(depth_path, depth16, text)
    color8 = np.round(raster.color.astype(np.float64) * 255.0).astype(np.uint8)
    save_png(color_path, color8, text)
    if label_path is not None:
        if raster.labels is None:
            raise ValueError("raster has no labels to save")
        save_label_grid(label_path, raster.labels, text)
    meta = {
        "width": raster.width,
        "height": raster.height,
        "depth_min": repr(raster.depth_range[0]),
        "depth_max": repr(raster.depth_range[1]),
    }
    meta.update({k: v for k, v in raster.meta.items() if k not in meta})
    header = [f"{k}: {v}" for k, v in (text or {}).items()]
    write_kv(sidecar_path(depth_path), meta, header=header)


def load_raster(depth_path, color_path, label_path=None):
    """Read a raster triplet.

    Without a sidecar the depth image is min-max normalized and its raw range is
    recorded; with a sidecar the stored values are taken as already normalized.
    """
    depth_raw = read_png(depth_path)
    if depth_raw.ndim != 2:
        depth_raw = depth_raw[..., 0]
    color_raw = read_png(color_path)
    if color_raw.ndim == 2:
        color_raw = np.repeat(color_raw[..., None], 3, axis=2)
    if color_raw.shape[:2] != depth_raw.shape:
        raise AlignmentError(
            f"color {color_raw.shape[1]}x{color_raw.shape[0]} does not match "
            f"depth {depth_raw.shape[1]}x{depth_raw.shape[0]}"
        )
    labels = None
    if label_path is not None:
        label_rgb = read_png(label_path)
        if label_rgb.shape[:2] != depth_raw.shape:
            raise AlignmentError(
                f"labels {label_rgb.shape[1]}x{label_rgb.shape[0]} do not match "
                f"depth {depth_raw.shape[1]}x{depth_raw.shape[0]}"
            )
        labels = decode_labels(label_rgb)

    scale = 255.0 if depth_raw.dtype == np.uint8 else 65535.0
    meta_file = sidecar_path(depth_path)
    meta = {}
    if meta_file.exists():
        meta = read_kv(meta_file)
        depth = (depth_raw.astype(np.float64) / scale).astype(np.float32)
        depth_range = (float(meta.pop("depth_min")), float(meta.pop("depth_max")))
        meta.pop("width", None)
        meta.pop("height", None)
    else:
        depth, depth_range = normalize_depth(depth_raw)
    color = (color_raw.astype(np.float64) / 255.0).astype(np.float32)
    return Raster(depth, color, labels, depth_range, meta)
