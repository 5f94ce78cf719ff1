"""Pipeline configuration: an INI-style key/value file with validated fields."""

from __future__ import annotations

import configparser
import hashlib
from dataclasses import dataclass
from pathlib import Path

from ..cnn import dimension_chain
from ..errors import ConfigError, ShapeError, SpecError
from ..mrf import EnergyParams
from ..synth import SceneSpec, spec_from_dict

# section -> key -> (type, default)
SCHEMA = {
    "paths": {
        "data_dir": (str, "data"),
        "run_dir": (str, "run"),
    },
    "data": {
        "train": (list, ""),
        "test": (list, ""),
    },
    "synth": {
        "count": (int, 10),
        "train_count": (int, 8),
        "seed": (int, 0),
        "width": (int, 600),
        "height": (int, 600),
    },
    "model": {
        "patch_size": (int, 100),
        "kernel_size": (int, 5),
    },
    "train": {
        "epochs": (int, 30),
        "learning_rate": (float, 0.01),
        "batch_size": (int, 64),
        "samples": (int, 50000),
        "seed": (int, 0),
    },
    "infer": {
        "stride": (int, 1),
    },
    "svm": {
        "epochs": (int, 50),
        "rate": (float, 0.1),
        "regularization": (float, 1e-4),
        "samples": (int, 20000),
        "seed": (int, 0),
    },
    "mrf": {
        "match_cost": (float, 0.0),
        "mismatch_cost": (float, 10.0),
        "unknown_cost": (float, 15.0),
        "discontinuity_cost": (float, 20.0),
        "connectivity": (int, 4),
        "max_sweeps": (int, 5),
    },
    "reconstruct": {
        "min_area": (int, 25),
        "epsilon": (float, 2.0),
        "ground_step": (int, 4),
    },
    "sweep": {
        "patch_sizes": (list, "34 70 100"),
        "kernel_sizes": (list, "5 7 9 11 13 15 17"),
        "epochs": (int, 2),
        "samples": (int, 2000),
        "test_samples": (int, 1000),
    },
}

# extra scene keys allowed in [synth], forwarded to SceneSpec
_SCENE_KEYS = {f for f in SceneSpec.__dataclass_fields__} - {"width", "height", "seed"}

_POSITIVE = {
    "synth.count",
    "synth.width",
    "synth.height",
    "train.epochs",
    "train.batch_size",
    "train.samples",
    "infer.stride",
    "svm.samples",
    "mrf.max_sweeps",
    "reconstruct.ground_step",
    "reconstruct.min_area",
    "sweep.epochs",
    "sweep.samples",
    "sweep.test_samples",
}
_NON_NEGATIVE = {
    "synth.train_count",
    "synth.seed",
    "train.learning_rate",
    "train.seed",
    "svm.epochs",
    "svm.rate",
    "svm.regularization",
    "svm.seed",
    "mrf.match_cost",
    "mrf.mismatch_cost",
    "mrf.unknown_cost",
    "mrf.discontinuity_cost",
    "reconstruct.epsilon",
}


@dataclass(frozen=True)
class PipelineConfig:
    values: dict  # section -> key -> parsed value
    scene_extra: dict  # raw extra [synth] keys
    base_dir: Path

    def __getitem__(self, section):
        return self.values[section]

    @property
    def data_dir(self):
        return (self.base_dir / self.values["paths"]["data_dir"]).resolve()

    @property
    def run_dir(self):
        return (self.base_dir / self.values["paths"]["run_dir"]).resolve()

    @property
    def patch_size(self):
        return self.values["model"]["patch_size"]

    @property
    def kernel_size(self):
        return self.values["model"]["kernel_size"]

    @property
    def train_scenes(self):
        names = self.values["data"]["train"]
        if names:
            return list(names)
        s = self.values["synth"]
        return [scene_name(i) for i in range(min(s["train_count"], s["count"]))]

    @property
    def test_scenes(self):
        names = self.values["data"]["test"]
        if names:
            return list(names)
        s = self.values["synth"]
        return [scene_name(i) for i in range(min(s["train_count"], s["count"]), s["count"])]

    @property
    def scenes(self):
        return self.train_scenes + self.test_scenes

    def energy_params(self):
        m = self.values["mrf"]
        return EnergyParams(
            m["match_cost"], m["mismatch_cost"], m["unknown_cost"], m["discontinuity_cost"], m["connectivity"]
        )

    def scene_spec(self, index):
        s = self.values["synth"]
        items = dict(self.scene_extra)
        items.update(width=s["width"], height=s["height"], seed=s["seed"] * 1000 + index)
        return spec_from_dict({k: str(v) for k, v in items.items()})

    def canonical_text(self):
        lines = []
        for section in sorted(self.values):
            for key in sorted(self.values[section]):
                v = self.values[section][key]
                if isinstance(v, list):
                    v = " ".join(str(x) for x in v)
                lines.append(f"{section}.{key}={v}")
        for key in sorted(self.scene_extra):
            lines.append(f"synth.{key}={self.scene_extra[key]}")
        return "\n".join(lines)

    @property
    def hash(self):
        """Short digest of every setting except output locations."""
        text = "\n".join(
            line for line in self.canonical_text().splitlines() if not line.startswith("paths.")
        )
        return hashlib.sha256(text.encode()).hexdigest()[:16]

    def with_overrides(self, **overrides):
        """Copy with ``section.key`` overrides, e.g. ``{"train.seed": 3}``; revalidated."""
        raw = {s: {k: _unparse(v) for k, v in kv.items()} for s, kv in self.values.items()}
        raw.setdefault("synth", {}).update(self.scene_extra)
        for dotted, value in overrides.items():
            section, key = dotted.split(".", 1)
            raw.setdefault(section, {})[key] = _unparse(value)
        return _build(raw, self.base_dir)


def scene_name(i):
    return f"scene_{i:02d}"


def _unparse(v):
    if isinstance(v, list):
        return " ".join(str(x) for x in v)
    return str(v)


def _parse(kind, field, text):
    try:
        if kind is int:
            return int(text)
        if kind is float:
            return float(text)
        if kind is list:
            items = text.replace(",", " ").split()
            return items
        return text
    except ValueError:
        raise ConfigError(field, f"cannot parse {text!r} as {kind.__name__}") from None


def _build(raw, base_dir):
    values = {}
    extra = {}
    for section, keys in raw.items():
        if section not in SCHEMA:
            raise ConfigError(section, "unknown section")
        for key in keys:
            if key not in SCHEMA[section] and not (section == "synth" and key in _SCENE_KEYS):
                raise ConfigError(f"{section}.{key}", "unknown key")
    for section, keys in SCHEMA.items():
        values[section] = {}
        for key, (kind, default) in keys.items():
            text = raw.get(section, {}).get(key, default)
            values[section][key] = _parse(kind, f"{section}.{key}", str(text))
    for key in _SCENE_KEYS:
        if key in raw.get("synth", {}):
            extra[key] = raw["synth"][key]
    _validate(values, extra)
    return PipelineConfig(values, extra, Path(base_dir))


def _validate(values, extra):
    for dotted in _POSITIVE:
        s, k = dotted.split(".")
        if values[s][k] <= 0:
            raise ConfigError(dotted, f"must be > 0, got {values[s][k]}")
    for dotted in _NON_NEGATIVE:
        s, k = dotted.split(".")
        if values[s][k] < 0:
            raise ConfigError(dotted, f"must be >= 0, got {values[s][k]}")
    if values["mrf"]["connectivity"] not in (4, 8):
        raise ConfigError("mrf.connectivity", "must be 4 or 8")
    n, k = values["model"]["patch_size"], values["model"]["kernel_size"]
    if k % 2 != 1 or k < 1:
        raise ConfigError("model.kernel_size", f"must be a positive odd integer, got {k}")
    try:
        dimension_chain(n, k)
    except ShapeError as exc:
        raise ConfigError("model.patch_size", f"N={n}, k={k} gives no valid network: {exc}") from None
    if values["synth"]["train_count"] > values["synth"]["count"]:
        raise ConfigError("synth.train_count", "cannot exceed synth.count")
    for key in ("patch_sizes", "kernel_sizes"):
        try:
            values["sweep"][key] = [int(v) for v in values["sweep"][key]]
        except ValueError:
            raise ConfigError(f"sweep.{key}", "expected integers") from None
    try:
        spec_from_dict(
            {**{k: str(v) for k, v in extra.items()}, "width": str(values["synth"]["width"]),
             "height": str(values["synth"]["height"])}
        )
    except SpecError as exc:
        raise ConfigError("synth", str(exc)) from None


def parse_config(text, base_dir="."):
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError("config", str(exc)) from None
    raw = {s: dict(cp.items(s)) for s in cp.sections()}
    return _build(raw, base_dir)


def load_config(path):
    path = Path(path)
    if not path.exists():
        raise ConfigError("config", f"file not found: {path}")
    return parse_config(path.read_text(), path.parent)


def default_config(base_dir="."):
    return _build({}, base_dir)


def write_config(config, path):
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    for section, keys in config.values.items():
        cp[section] = {k: _unparse(v) for k, v in keys.items()}
    for k, v in config.scene_extra.items():
        cp["synth"][k] = str(v)
    with open(path, "w") as f:
        cp.write(f)
