"""Alpha-expansion over the 7-label grid energy, plus an exhaustive oracle."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import ShapeError
from ..raster import NUM_CLASSES, UNKNOWN
from .energy import NUM_LABELS, EnergyParams, energy, neighbor_pairs
from .maxflow import SINK, FlowGraph

log = logging.getLogger(__name__)

BRUTE_FORCE_MAX_PIXELS = 8


@dataclass
class ExpansionResult:
    labels: np.ndarray
    energies: list = field(default_factory=list)
    trace: list = field(default_factory=list)  # (sweep, alpha, energy) after each move


def _expansion_graph(observed, current, alpha, params, pairs):
    """Binary problem: x_p = 0 keeps the current label, x_p = 1 switches to alpha."""
    obs = observed.ravel()
    cur = current.ravel()
    n = cur.size
    u = params.unary_table()
    e0 = u[obs, cur].copy()  # cost if kept
    e1 = u[obs, np.full(n, alpha)]  # cost if switched
    p, q = pairs
    vc = params.discontinuity_cost
    a = np.where(cur[p] != cur[q], vc, 0.0)  # (keep, keep)
    b = np.where(cur[p] != alpha, vc, 0.0)  # (keep, alpha)
    c = np.where(cur[q] != alpha, vc, 0.0)  # (alpha, keep)
    # E = A + (C - A) x_p + (D - C) x_q + (B + C - A - D) (1 - x_p) x_q with D = 0
    lin_p = c - a
    lin_q = -c
    w = b + c - a
    coef1 = e1 - e0 + np.bincount(p, lin_p, n) + np.bincount(q, lin_q, n)
    cap_source = np.maximum(coef1, 0.0)  # paid when x = 1 (sink side)
    cap_sink = np.maximum(-coef1, 0.0)  # paid when x = 0 (source side)
    keep = w > 0
    return FlowGraph.from_arrays(
        n, cap_source, cap_sink, p[keep], q[keep], w[keep], np.zeros(int(keep.sum()))
    )


def alpha_expansion(observed, params=EnergyParams(), max_sweeps=5):
    """Refine ``observed`` by expansion moves over alpha = 0..5.

    Starts from the observed labeling; a move is kept only if it lowers the
    energy. Stops after a sweep without change or after ``max_sweeps`` sweeps.
    """
    observed = np.asarray(observed)
    if observed.ndim != 2:
        raise ShapeError(f"label grid must be 2-D, got {observed.shape}")
    if observed.size and (observed.min() < 0 or observed.max() > UNKNOWN):
        raise ValueError("labels must lie in 0..6")
    observed = observed.astype(np.int64)
    current = observed.copy()
    pairs = neighbor_pairs(*observed.shape, params.connectivity)
    e = energy(observed, current, params)
    result = ExpansionResult(current, [e], [(0, -1, e)])
    for sweep in range(1, max_sweeps + 1):
        changed = False
        for alpha in range(NUM_CLASSES):
            g = _expansion_graph(observed, current, alpha, params, pairs)
            g.maxflow()
            switch = g.segment().reshape(current.shape) == SINK
            if switch.any():
                proposal = np.where(switch, alpha, current)
                e_new = energy(observed, proposal, params)
                if e_new < e:
                    current = proposal
                    e = e_new
                    changed = True
            result.energies.append(e)
            result.trace.append((sweep, alpha, e))
        log.info("sweep %d energy %.1f", sweep, e)
        if not changed:
            break
    result.labels = current.astype(np.uint8)
    return result


def brute_force_map(observed, params=EnergyParams()):
    """Global minimizer over all 7^n labelings; ties go to the lexicographically smallest."""
    observed = np.asarray(observed).astype(np.int64)
    n = observed.size
    if n > BRUTE_FORCE_MAX_PIXELS:
        raise ShapeError(f"brute force limited to {BRUTE_FORCE_MAX_PIXELS} pixels, got {n}")
    u = params.unary_table()
    p, q = neighbor_pairs(*observed.shape, params.connectivity)
    obs = observed.ravel()
    total = NUM_LABELS**n
    best_e = np.inf
    best_code = 0
    chunk = NUM_LABELS**6
    weights = NUM_LABELS ** np.arange(n - 1, -1, -1, dtype=np.int64)
    for start in range(0, total, chunk):
        codes = np.arange(start, min(total, start + chunk), dtype=np.int64)
        labs = (codes[:, None] // weights) % NUM_LABELS  # first pixel most significant
        e = u[obs, labs].sum(axis=1)
        if len(p):
            e = e + (labs[:, p] != labs[:, q]).sum(axis=1) * params.discontinuity_cost
        k = int(np.argmin(e))
        if e[k] < best_e:
            best_e = float(e[k])
            best_code = int(codes[k])
    labels = (best_code // weights) % NUM_LABELS
    return labels.reshape(observed.shape).astype(np.uint8), best_e


def write_trace_csv(path, trace, header=None):
    lines = [f"# {h}" for h in (header or [])]
    lines.append("sweep,alpha,energy")
    lines += [f"{s},{a},{e:.6g}" for s, a, e in trace]
    Path(path).write_text("\n".join(lines) + "\n")
