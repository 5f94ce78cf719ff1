"""Patch size x kernel size study at a reduced training budget."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..cnn import Network, is_feasible, train
from ..composite import sample_patches
from ..raster import CLASS_NAMES, NUM_CLASSES
from .stages import _dir, _header, _load_composite, _record

log = logging.getLogger(__name__)


@dataclass
class SweepCell:
    patch_size: int
    kernel_size: int
    feasible: bool
    overall: float | None = None
    per_class: np.ndarray | None = None


def evaluate_cell(train_comps, test_comps, n, k, epochs, samples, test_samples, seed=0, lr=0.01):
    """Train one (N, k) network on sampled patches; return per-class and overall patch accuracy."""
    if not is_feasible(n, k):
        return SweepCell(n, k, False)
    patches = sample_patches(train_comps, samples, n, seed=seed)
    net = Network(n, k, seed=seed)
    train(net, patches, epochs, learning_rate=lr, seed=seed)
    test = sample_patches(test_comps, test_samples, n, seed=seed + 1)
    pred = np.concatenate(
        [
            net.forward(test.batch(np.arange(s, min(s + 256, len(test))))).argmax(axis=1)
            for s in range(0, len(test), 256)
        ]
    )
    truth = np.asarray(test.labels, dtype=np.int64)
    per_class = np.array(
        [
            np.mean(pred[truth == c] == c) if np.any(truth == c) else np.nan
            for c in range(NUM_CLASSES)
        ]
    )
    return SweepCell(n, k, True, float(np.mean(pred == truth)), per_class)


def feasibility_grid(patch_sizes, kernel_sizes):
    return {(n, k): is_feasible(n, k) for n in patch_sizes for k in kernel_sizes}


def format_grid(cells, patch_sizes, kernel_sizes):
    """Rows = patch sizes, columns = kernel sizes; infeasible cells shown as '--'."""
    by_key = {(c.patch_size, c.kernel_size): c for c in cells}
    head = "N \\ k " + "".join(f"{k:>8}" for k in kernel_sizes)
    lines = [head]
    for n in patch_sizes:
        row = f"{n:<6}"
        for k in kernel_sizes:
            c = by_key[(n, k)]
            row += f"{'--':>8}" if not c.feasible else f"{100 * c.overall:>8.2f}"
        lines.append(row)
    return "\n".join(lines) + "\n"


def write_csv(cells, path, header=None):
    lines = [f"# {h}" for h in (header or [])]
    lines.append("patch_size,kernel_size,feasible,overall," + ",".join(CLASS_NAMES[:NUM_CLASSES]))
    for c in cells:
        if c.feasible:
            vals = ",".join("" if np.isnan(v) else f"{100 * v:.2f}" for v in c.per_class)
            lines.append(f"{c.patch_size},{c.kernel_size},1,{100 * c.overall:.2f},{vals}")
        else:
            lines.append(f"{c.patch_size},{c.kernel_size},0,," + "," * (NUM_CLASSES - 1))
    Path(path).write_text("\n".join(lines) + "\n")


def run_sweep(cfg, patch_sizes=None, kernel_sizes=None):
    s = cfg["sweep"]
    patch_sizes = list(patch_sizes or s["patch_sizes"])
    kernel_sizes = list(kernel_sizes or s["kernel_sizes"])
    train_comps = [_load_composite(cfg, n, "sweep") for n in cfg.train_scenes]
    test_comps = [_load_composite(cfg, n, "sweep") for n in cfg.test_scenes]
    seed = cfg["train"]["seed"]
    cells = []
    for n in patch_sizes:
        for k in kernel_sizes:
            cell = evaluate_cell(
                train_comps, test_comps, n, k, s["epochs"], s["samples"], s["test_samples"],
                seed, cfg["train"]["learning_rate"],
            )
            log.info("sweep N=%d k=%d feasible=%s acc=%s", n, k, cell.feasible, cell.overall)
            cells.append(cell)
    d = _dir(cfg, "sweep")
    write_csv(cells, d / "sweep.csv", _header(cfg))
    (d / "sweep.txt").write_text(f"# config_hash: {cfg.hash}\n" + format_grid(cells, patch_sizes, kernel_sizes))
    _record(cfg, "sweep", [d / "sweep.csv", d / "sweep.txt"])
    return cells
