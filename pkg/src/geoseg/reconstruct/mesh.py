"""Triangle meshes: building prisms, car and tree primitives, ground mesh, OBJ output.

Vertices are (x, y, z) with x the column, y the row and z the elevation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import GeometryError
from ..raster import BUILDING, CAR, GROUND_CLASSES, TREE
from .polygon import Component, ear_clip, extract_components, signed_area, trace_boundary


@dataclass(eq=False)
class Mesh:
    name: str
    vertices: np.ndarray
    faces: np.ndarray
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.faces = np.asarray(self.faces, dtype=np.int64).reshape(-1, 3)
        if self.faces.size and (self.faces.min() < 0 or self.faces.max() >= len(self.vertices)):
            raise GeometryError(f"{self.name}: face index out of range")


@dataclass(frozen=True, eq=False)
class BuildingFootprint:
    id: int
    polygon: np.ndarray
    roof_height: float
    area: int


def is_closed_manifold(mesh):
    """Every edge is used by exactly two faces with opposite directions."""
    f = mesh.faces
    if len(f) == 0:
        return False
    directed = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
    if np.any(directed[:, 0] == directed[:, 1]):
        return False
    uniq, counts = np.unique(directed, axis=0, return_counts=True)
    if np.any(counts != 1):
        return False
    rev = {tuple(e) for e in uniq}
    return all((b, a) in rev for a, b in uniq)


def ground_level(labels, elevation, percentile=5.0):
    """Low percentile of the elevation over non-building pixels."""
    values = np.asarray(elevation)[np.asarray(labels) != BUILDING]
    if values.size == 0:
        values = np.asarray(elevation).ravel()
    return float(np.percentile(values, percentile))


def roof_height(component, elevation):
    return float(np.median(np.asarray(elevation)[component.mask]))


def extrude(polygon, roof, ground, name="building"):
    """Closed prism: triangulated roof at ``roof``, floor at ``ground``, vertical walls."""
    poly = np.asarray(polygon, dtype=np.float64)
    if len(poly) < 3:
        raise GeometryError(f"polygon needs at least 3 vertices, got {len(poly)}")
    if not roof > ground:
        raise GeometryError(f"roof height {roof} must exceed ground level {ground}")
    if signed_area(poly) < 0:
        poly = poly[::-1]
    n = len(poly)
    tris = ear_clip(poly)
    verts = np.vstack(
        [np.column_stack([poly, np.full(n, roof)]), np.column_stack([poly, np.full(n, ground)])]
    )
    faces = [tris, tris[:, ::-1] + n]
    i = np.arange(n)
    j = (i + 1) % n
    faces.append(np.column_stack([i + n, j + n, j]))
    faces.append(np.column_stack([i + n, j, i]))
    return Mesh(name, verts, np.vstack(faces), {"roof": roof, "ground": ground})


def box(x0, y0, x1, y1, z0, z1, name):
    poly = np.array([(x0, y0), (x1, y0), (x1, y1), (x0, y1)], dtype=np.float64)
    return extrude(poly, z1, z0, name)


def _sphere(center, radius_xy, radius_z, segments=8, rings=6):
    cx, cy, cz = center
    verts = [(cx, cy, cz + radius_z)]
    for r in range(1, rings):
        theta = np.pi * r / rings
        for s in range(segments):
            phi = 2 * np.pi * s / segments
            verts.append(
                (
                    cx + radius_xy * np.sin(theta) * np.cos(phi),
                    cy + radius_xy * np.sin(theta) * np.sin(phi),
                    cz + radius_z * np.cos(theta),
                )
            )
    verts.append((cx, cy, cz - radius_z))
    bottom = len(verts) - 1
    faces = []

    def ring(r, s):
        return 1 + (r - 1) * segments + s % segments

    for s in range(segments):
        faces.append((0, ring(1, s), ring(1, s + 1)))
    for r in range(1, rings - 1):
        for s in range(segments):
            a, b = ring(r, s), ring(r, s + 1)
            c, d = ring(r + 1, s), ring(r + 1, s + 1)
            faces.append((a, c, d))
            faces.append((a, d, b))
    for s in range(segments):
        faces.append((bottom, ring(rings - 1, s + 1), ring(rings - 1, s)))
    return np.array(verts), np.array(faces)


def _cone(base_center, radius, apex_z, segments=8):
    cx, cy, cz = base_center
    verts = [(cx, cy, apex_z), (cx, cy, cz)]
    for s in range(segments):
        phi = 2 * np.pi * s / segments
        verts.append((cx + radius * np.cos(phi), cy + radius * np.sin(phi), cz))
    faces = []
    for s in range(segments):
        a, b = 2 + s, 2 + (s + 1) % segments
        faces.append((0, a, b))
        faces.append((1, b, a))
    return np.array(verts), np.array(faces)


def tree_primitive(component, elevation, ground, name):
    """Trunk cone plus ellipsoid canopy with the component's equivalent-disk radius."""
    cx, cy = component.centroid
    radius = float(np.sqrt(component.area / np.pi))
    top = float(np.max(np.asarray(elevation)[component.mask]))
    top = max(top, ground + 1.0)
    z0 = ground + 0.4 * (top - ground)
    cz = 0.5 * (z0 + top)
    rz = 0.5 * (top - z0)
    sv, sf = _sphere((cx, cy, cz), radius, rz)
    cv, cf = _cone((cx, cy, ground), max(0.5, 0.15 * radius), cz)
    verts = np.vstack([sv, cv])
    faces = np.vstack([sf, cf + len(sv)])
    return Mesh(name, verts, faces, {"center": (cx, cy), "canopy_radius": radius, "top": top})


def place_generics(labels, elevation, cls, ground, min_area=1):
    """One primitive per component: a bounding box for cars, a tree model for trees."""
    if cls not in (CAR, TREE):
        raise ValueError("place_generics handles cars and trees only")
    meshes = []
    for comp in extract_components(labels, cls, min_area):
        if cls == CAR:
            y0, x0, y1, x1 = comp.bbox
            top = max(float(np.median(np.asarray(elevation)[comp.mask])), ground + 0.5)
            m = box(x0, y0, x1, y1, ground, top, f"car_{comp.id}")
            m.params.update({"bbox": (y0, x0, y1, x1)})
        else:
            m = tree_primitive(comp, elevation, ground, f"tree_{comp.id}")
        meshes.append(m)
    return meshes


def ground_mesh(labels, elevation, step=1, classes=GROUND_CLASSES):
    """Two triangles per grid cell whose four corners are all ground pixels."""
    labels = np.asarray(labels)
    elevation = np.asarray(elevation, dtype=np.float64)
    rows = np.arange(0, labels.shape[0], step)
    cols = np.arange(0, labels.shape[1], step)
    sub = np.isin(labels[np.ix_(rows, cols)], classes)
    z = elevation[np.ix_(rows, cols)]
    cell = sub[:-1, :-1] & sub[1:, :-1] & sub[:-1, 1:] & sub[1:, 1:]
    used = np.zeros_like(sub)
    used[:-1, :-1] |= cell
    used[1:, :-1] |= cell
    used[:-1, 1:] |= cell
    used[1:, 1:] |= cell
    index = np.full(sub.shape, -1, dtype=np.int64)
    index[used] = np.arange(int(used.sum()))
    gy, gx = np.meshgrid(rows, cols, indexing="ij")
    verts = np.column_stack([gx[used], gy[used], z[used]]).astype(np.float64)
    r, c = np.nonzero(cell)
    a = index[r, c]
    b = index[r, c + 1]
    d = index[r + 1, c]
    e = index[r + 1, c + 1]
    faces = np.column_stack([a, b, e, a, e, d]).reshape(-1, 3)
    return Mesh("ground", verts, faces)


def building_footprints(labels, elevation, min_area=25, epsilon=2.0):
    out = []
    for comp in extract_components(labels, BUILDING, min_area):
        poly = trace_boundary(comp, epsilon)
        out.append(BuildingFootprint(comp.id, poly, roof_height(comp, elevation), comp.area))
    return out


def reconstruct_scene(labels, elevation, min_area=25, epsilon=2.0, ground_step=4):
    """All mesh groups for a refined label grid: buildings, cars, trees, ground."""
    ground = ground_level(labels, elevation)
    meshes = []
    footprints = building_footprints(labels, elevation, min_area, epsilon)
    for fp in footprints:
        if fp.roof_height <= ground:
            continue
        meshes.append(extrude(fp.polygon, fp.roof_height, ground, f"building_{fp.id}"))
    meshes += place_generics(labels, elevation, CAR, ground)
    meshes += place_generics(labels, elevation, TREE, ground)
    g = ground_mesh(labels, elevation, ground_step)
    if len(g.faces):
        meshes.append(g)
    return meshes, footprints


def export_obj(meshes, path, header=None):
    """Wavefront OBJ, one group per mesh, 1-based indices, fixed number formatting."""
    lines = ["# geoseg reconstruction"]
    lines += [f"# {h}" for h in (header or [])]
    offset = 1
    for m in meshes:
        lines.append(f"g {m.name}")
        lines += [f"v {x:.6f} {y:.6f} {z:.6f}" for x, y, z in m.vertices]
        lines += [f"f {a + offset} {b + offset} {c + offset}" for a, b, c in m.faces]
        offset += len(m.vertices)
    Path(path).write_text("\n".join(lines) + "\n")

