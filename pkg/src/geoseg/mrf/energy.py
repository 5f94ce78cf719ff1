"""Unary and Potts pairwise costs over 7 labels (6 classes plus unknown)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ShapeError
from ..raster import UNKNOWN

NUM_LABELS = UNKNOWN + 1


@dataclass(frozen=True)
class EnergyParams:
    match_cost: float = 0.0
    mismatch_cost: float = 10.0
    unknown_cost: float = 15.0
    discontinuity_cost: float = 20.0
    connectivity: int = 4

    def __post_init__(self):
        for name in ("match_cost", "mismatch_cost", "unknown_cost", "discontinuity_cost"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.connectivity not in (4, 8):
            raise ValueError("connectivity must be 4 or 8")

    def unary_table(self):
        """U[observed, proposal]; a proposal of unknown always costs ``unknown_cost``."""
        u = np.full((NUM_LABELS, NUM_LABELS), self.mismatch_cost, dtype=np.float64)
        np.fill_diagonal(u, self.match_cost)
        u[:, UNKNOWN] = self.unknown_cost
        return u

    def pairwise(self, a, b):
        return np.where(np.asarray(a) == np.asarray(b), 0.0, self.discontinuity_cost)


def neighbor_pairs(height, width, connectivity=4):
    """Flat index arrays (p, q) of every unordered neighbor pair, p < q."""
    idx = np.arange(height * width).reshape(height, width)
    ps = [idx[:, :-1].ravel(), idx[:-1, :].ravel()]
    qs = [idx[:, 1:].ravel(), idx[1:, :].ravel()]
    if connectivity == 8:
        ps += [idx[:-1, :-1].ravel(), idx[:-1, 1:].ravel()]
        qs += [idx[1:, 1:].ravel(), idx[1:, :-1].ravel()]
    return np.concatenate(ps), np.concatenate(qs)


def energy(observed, proposal, params=EnergyParams()):
    """Unary cost of ``proposal`` against ``observed`` plus Potts cost on ``proposal``."""
    observed = np.asarray(observed)
    proposal = np.asarray(proposal)
    if observed.shape != proposal.shape or observed.ndim != 2:
        raise ShapeError(f"label grids differ: {observed.shape} vs {proposal.shape}")
    unary = params.unary_table()[observed, proposal].sum()
    p, q = neighbor_pairs(*observed.shape, params.connectivity)
    flat = proposal.ravel()
    pair = np.count_nonzero(flat[p] != flat[q]) * params.discontinuity_cost
    return float(unary + pair)
