"""Seeded synthetic urban scenes: depth, color and exact labels.

Objects are painted in a fixed order (natural ground, roads, artificial
ground, buildings, trees, cars), so later objects overwrite earlier labels.
Buildings and artificial ground share gray tones; only depth separates them.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields

import numpy as np

from .errors import SpecError
from .kvfile import read_kv, write_kv
from .raster import (
    ARTIFICIAL_GROUND,
    BUILDING,
    CAR,
    NATURAL_GROUND,
    NUM_CLASSES,
    ROAD,
    TREE,
    Raster,
    normalize_depth,
)

MIN_CLASS_SHARE = 0.01
MAX_ATTEMPTS = 20

BASE_COLORS = {
    NATURAL_GROUND: (95, 125, 60),
    TREE: (45, 100, 40),
    ROAD: (90, 90, 95),
    ARTIFICIAL_GROUND: (160, 155, 150),
    BUILDING: (160, 155, 150),
}
CAR_COLORS = ((200, 30, 30), (30, 40, 190), (225, 225, 225), (25, 25, 25), (205, 195, 40))


@dataclass(frozen=True)
class SceneSpec:
    """Scene layout parameters; sizes in pixels, heights in meters."""

    width: int = 600
    height: int = 600
    seed: int = 0
    buildings: int = 10
    building_size: tuple = (40, 110)
    building_height: tuple = (6.0, 18.0)
    roads: int = 3
    road_width: tuple = (14, 24)
    artificial_patches: int = 6
    artificial_size: tuple = (30, 100)
    trees: int = 40
    tree_radius: tuple = (5, 14)
    tree_height: tuple = (4.0, 10.0)
    cars: int = 50
    car_size: tuple = (8, 16)
    car_height: float = 1.5
    ground_tilt: float = 0.5
    depth_noise: float = 0.1
    color_jitter: float = 8.0
    require_all_classes: bool = True

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise SpecError(f"canvas must be positive, got {self.width}x{self.height}")
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                if len(v) != 2 or v[0] > v[1] or v[0] < 0:
                    raise SpecError(f"{f.name}: expected 'min max' with 0 <= min <= max, got {v}")
            elif isinstance(v, (int, float)) and not isinstance(v, bool) and v < 0:
                raise SpecError(f"{f.name}: must be >= 0, got {v}")
        if self.car_size[0] < 1 or self.road_width[0] < 1:
            raise SpecError("car_size and road_width must be at least 1 pixel")


def _parse_field(f, text):
    default = f.default
    parts = text.split()
    if isinstance(default, bool):
        return text.lower() in ("1", "true", "yes", "on")
    if isinstance(default, tuple):
        kind = type(default[0])
        return tuple(kind(p) for p in parts)
    return type(default)(text)


def spec_from_dict(items):
    known = {f.name: f for f in fields(SceneSpec)}
    kwargs = {}
    for key, text in items.items():
        if key not in known:
            raise SpecError(f"unknown scene key {key!r}")
        try:
            kwargs[key] = _parse_field(known[key], str(text))
        except ValueError as exc:
            raise SpecError(f"{key}: cannot parse {text!r}") from exc
    return SceneSpec(**kwargs)


def load_spec(path):
    return spec_from_dict(read_kv(path))


def save_spec(spec, path):
    items = {}
    for k, v in asdict(spec).items():
        items[k] = " ".join(str(x) for x in v) if isinstance(v, tuple) else str(v)
    write_kv(path, items)


def _randint(rng, lo_hi):
    return int(rng.integers(lo_hi[0], lo_hi[1] + 1))


def _paint(spec, rng):
    h, w = spec.height, spec.width
    labels = np.full((h, w), NATURAL_GROUND, dtype=np.uint8)
    yy, xx = np.mgrid[0:h, 0:w]
    ty, tx = rng.uniform(-1, 1, 2) * spec.ground_tilt
    ground = ty * yy / max(h - 1, 1) + tx * xx / max(w - 1, 1)
    noise = spec.depth_noise
    elev = ground + rng.uniform(-noise, noise, (h, w)) * 0.3
    color = np.empty((h, w, 3))
    color[:] = BASE_COLORS[NATURAL_GROUND]

    for _ in range(spec.roads):
        rw = _randint(rng, spec.road_width)
        if rng.random() < 0.5:
            y0 = int(rng.integers(0, max(1, h - rw)))
            sl = (slice(y0, y0 + rw), slice(0, w))
        else:
            x0 = int(rng.integers(0, max(1, w - rw)))
            sl = (slice(0, h), slice(x0, x0 + rw))
        labels[sl] = ROAD
        color[sl] = BASE_COLORS[ROAD]

    for _ in range(spec.artificial_patches):
        ph, pw = _randint(rng, spec.artificial_size), _randint(rng, spec.artificial_size)
        y0 = int(rng.integers(0, max(1, h - ph)))
        x0 = int(rng.integers(0, max(1, w - pw)))
        sl = (slice(y0, y0 + ph), slice(x0, x0 + pw))
        labels[sl] = ARTIFICIAL_GROUND
        color[sl] = np.add(BASE_COLORS[ARTIFICIAL_GROUND], rng.normal(0, 10, 3))

    roofs = []
    for _ in range(spec.buildings):
        for _try in range(50):
            bh, bw = _randint(rng, spec.building_size), _randint(rng, spec.building_size)
            y0 = int(rng.integers(0, max(1, h - bh)))
            x0 = int(rng.integers(0, max(1, w - bw)))
            sl = (slice(y0, y0 + bh), slice(x0, x0 + bw))
            if not np.any(labels[sl] == ROAD) and not np.any(labels[sl] == BUILDING):
                break
        height = rng.uniform(*spec.building_height)
        labels[sl] = BUILDING
        elev[sl] = ground[sl] + height + rng.uniform(-noise, noise, labels[sl].shape)
        color[sl] = np.add(BASE_COLORS[BUILDING], rng.normal(0, 10, 3))
        roofs.append((y0, x0, bh, bw, height))

    for _ in range(spec.trees):
        r = _randint(rng, spec.tree_radius)
        for _try in range(50):
            cy, cx = int(rng.integers(0, h)), int(rng.integers(0, w))
            if labels[cy, cx] != BUILDING:
                break
        d2 = (yy - cy) ** 2 + (xx - cx) ** 2
        disk = d2 <= r * r
        crown = rng.uniform(*spec.tree_height)
        profile = 0.6 + 0.4 * np.sqrt(np.clip(1 - d2[disk] / max(r * r, 1), 0, 1))
        canopy = ground[disk] + crown * profile + rng.uniform(-0.5, 0.5, disk.sum())
        labels[disk] = TREE
        elev[disk] = np.maximum(elev[disk], canopy)
        color[disk] = BASE_COLORS[TREE]

    cl, cw = spec.car_size
    for _ in range(spec.cars):
        for _try in range(100):
            ch, cw_ = (cl, cw) if rng.random() < 0.5 else (cw, cl)
            y0 = int(rng.integers(0, max(1, h - ch)))
            x0 = int(rng.integers(0, max(1, w - cw_)))
            sl = (slice(y0, y0 + ch), slice(x0, x0 + cw_))
            if np.all(labels[sl] == ROAD):
                labels[sl] = CAR
                elev[sl] = ground[sl] + spec.car_height
                color[sl] = CAR_COLORS[int(rng.integers(len(CAR_COLORS)))]
                break

    color = color + rng.normal(0, spec.color_jitter, color.shape)
    color = np.clip(np.round(color), 0, 255) / 255.0
    return elev, color, labels, ground, roofs


def class_shares(labels):
    return np.bincount(np.asarray(labels).ravel(), minlength=NUM_CLASSES)[:NUM_CLASSES] / labels.size


def generate(spec):
    """Render a scene; if a class covers < 1% of pixels, retry with a derived seed."""
    return generate_with_truth(spec)[0]


def generate_with_truth(spec):
    """Render a scene and also return the ground plane and building boxes.

    Boxes are (y0, x0, height, width, extrusion height) in painting order.
    """
    for attempt in range(MAX_ATTEMPTS):
        rng = np.random.default_rng(np.random.SeedSequence([spec.seed, attempt]))
        elev, color, labels, ground, roofs = _paint(spec, rng)
        if not spec.require_all_classes or class_shares(labels).min() >= MIN_CLASS_SHARE:
            break
    else:
        raise SpecError(f"no scene with every class >= 1% after {MAX_ATTEMPTS} attempts")
    depth, depth_range = normalize_depth(elev)
    raster = Raster(
        depth, color.astype(np.float32), labels, depth_range, {"seed": spec.seed, "attempt": attempt}
    )
    return raster, ground, roofs
