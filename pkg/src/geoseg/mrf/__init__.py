"""MAP refinement of label grids with a Potts MRF solved by alpha-expansion."""

from .energy import NUM_LABELS, EnergyParams, energy, neighbor_pairs
from .expansion import (
    BRUTE_FORCE_MAX_PIXELS,
    ExpansionResult,
    alpha_expansion,
    brute_force_map,
    write_trace_csv,
)
from .maxflow import SINK, SOURCE, FlowGraph, max_flow

__all__ = [
    "BRUTE_FORCE_MAX_PIXELS",
    "EnergyParams",
    "ExpansionResult",
    "FlowGraph",
    "NUM_LABELS",
    "SINK",
    "SOURCE",
    "alpha_expansion",
    "brute_force_map",
    "energy",
    "max_flow",
    "neighbor_pairs",
    "write_trace_csv",
]
