"""Confusion matrices, per-class precision / recall / F1 and disagreement images."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ShapeError
from .raster import CLASS_NAMES, NUM_CLASSES, UNKNOWN


@dataclass(frozen=True, eq=False)
class ConfusionMatrix:
    """6x6 counts; row = reference class, column = predicted class."""

    counts: np.ndarray

    @property
    def total(self):
        return int(self.counts.sum())

    def __add__(self, other):
        return ConfusionMatrix(self.counts + other.counts)


@dataclass(frozen=True)
class ClassScores:
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    accuracy: float


def _check(reference, predicted):
    reference = np.asarray(reference)
    predicted = np.asarray(predicted)
    if reference.shape != predicted.shape:
        raise ShapeError(f"grids differ: {reference.shape} vs {predicted.shape}")
    return reference, predicted


def confusion(reference, predicted, mask=None):
    """Counts over pixels where ``mask`` holds and neither grid is unknown."""
    reference, predicted = _check(reference, predicted)
    keep = (reference < NUM_CLASSES) & (predicted < NUM_CLASSES)
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != reference.shape:
            raise ShapeError(f"mask {mask.shape} does not match grid {reference.shape}")
        keep &= mask
    r = reference[keep].astype(np.int64)
    p = predicted[keep].astype(np.int64)
    counts = np.bincount(r * NUM_CLASSES + p, minlength=NUM_CLASSES**2)
    return ConfusionMatrix(counts.reshape(NUM_CLASSES, NUM_CLASSES))


def _ratio(num, den):
    num = np.asarray(num, dtype=np.float64)
    den = np.asarray(den, dtype=np.float64)
    return np.divide(num, den, out=np.zeros_like(num), where=den > 0)


def scores(cm):
    """Per-class P = tp/(tp+fp), R = tp/(tp+fn), F1 = 2PR/(P+R); 0/0 counts as 0."""
    c = cm.counts.astype(np.float64) if isinstance(cm, ConfusionMatrix) else np.asarray(cm, float)
    tp = np.diag(c)
    precision = _ratio(tp, c.sum(axis=0))
    recall = _ratio(tp, c.sum(axis=1))
    f1 = _ratio(2 * precision * recall, precision + recall)
    accuracy = float(_ratio(tp.sum(), c.sum()))
    return ClassScores(precision, recall, f1, accuracy)


def f1_score(precision, recall):
    return float(_ratio(2 * precision * recall, precision + recall))


def diff_image(reference, predicted):
    """Green where labels agree, red where they differ, black where either is unknown."""
    reference, predicted = _check(reference, predicted)
    out = np.zeros(reference.shape + (3,), dtype=np.uint8)
    known = (reference != UNKNOWN) & (predicted != UNKNOWN)
    same = reference == predicted
    out[known & same] = (0, 255, 0)
    out[known & ~same] = (255, 0, 0)
    return out


def _pct(x):
    return f"{100 * x:.2f}"


def report_rows(cm):
    """(name, precision %, recall %, F1 %) per class plus an overall accuracy row."""
    s = scores(cm)
    rows = [
        (CLASS_NAMES[i], _pct(s.precision[i]), _pct(s.recall[i]), _pct(s.f1[i]))
        for i in range(NUM_CLASSES)
    ]
    return rows, _pct(s.accuracy)


def report_csv(cm, path, header=None):
    """Per-class scores in percent, the overall accuracy, then the raw matrix."""
    rows, acc = report_rows(cm)
    lines = [f"# {h}" for h in (header or [])]
    lines.append("class,precision,recall,f1")
    lines += [",".join(r) for r in rows]
    lines.append(f"accuracy,{acc},,")
    lines.append("")
    lines.append("reference\\predicted," + ",".join(CLASS_NAMES[:NUM_CLASSES]))
    for i in range(NUM_CLASSES):
        lines.append(CLASS_NAMES[i] + "," + ",".join(str(int(v)) for v in cm.counts[i]))
    Path(path).write_text("\n".join(lines) + "\n")


def report_text(cm):
    """Aligned table: one row per class with Prec./Corr., Rec./Compl., F1 and Acc."""
    rows, acc = report_rows(cm)
    head = ("class", "Prec./Corr.", "Rec./Compl.", "F1")
    width = max(len(r[0]) for r in rows + [head])
    lines = [f"{head[0]:<{width}}  {head[1]:>11}  {head[2]:>11}  {head[3]:>7}"]
    for name, p, r, f in rows:
        lines.append(f"{name:<{width}}  {p:>11}  {r:>11}  {f:>7}")
    lines.append(f"{'Acc.':<{width}}  {acc:>11}")
    return "\n".join(lines) + "\n"
