"""Building prisms, generic car/tree primitives and a ground mesh from refined labels."""

from .mesh import (
    BuildingFootprint,
    Mesh,
    box,
    building_footprints,
    export_obj,
    extrude,
    ground_level,
    ground_mesh,
    is_closed_manifold,
    place_generics,
    reconstruct_scene,
    roof_height,
    tree_primitive,
)
from .polygon import (
    Component,
    douglas_peucker,
    ear_clip,
    extract_components,
    is_simple,
    remove_collinear,
    signed_area,
    simplify,
    trace_boundary,
    trace_raw,
)

__all__ = [
    "BuildingFootprint",
    "Component",
    "Mesh",
    "box",
    "building_footprints",
    "douglas_peucker",
    "ear_clip",
    "export_obj",
    "extract_components",
    "extrude",
    "ground_level",
    "ground_mesh",
    "is_closed_manifold",
    "is_simple",
    "place_generics",
    "reconstruct_scene",
    "remove_collinear",
    "roof_height",
    "signed_area",
    "simplify",
    "trace_boundary",
    "trace_raw",
    "tree_primitive",
]
