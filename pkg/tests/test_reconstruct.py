import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from geoseg.errors import GeometryError
from geoseg.raster import BUILDING, CAR, NATURAL_GROUND, ROAD, TREE
from geoseg.reconstruct import (
    Component,
    box,
    building_footprints,
    ear_clip,
    export_obj,
    extract_components,
    extrude,
    ground_level,
    ground_mesh,
    is_closed_manifold,
    is_simple,
    place_generics,
    reconstruct_scene,
    roof_height,
    signed_area,
    simplify,
    trace_boundary,
    trace_raw,
)


def _grid(h, w, fill=NATURAL_GROUND):
    return np.full((h, w), fill, dtype=np.uint8)


# --- components ---


def test_single_rectangle_component():
    lab = _grid(20, 30)
    lab[3:11, 5:17] = BUILDING
    (c,) = extract_components(lab, BUILDING, min_area=1)
    assert c.area == 8 * 12
    assert c.bbox == (3, 5, 11, 17)


def test_diagonal_touch_is_two_components():
    lab = _grid(10, 10)
    lab[2:4, 2:4] = BUILDING
    lab[4:6, 4:6] = BUILDING
    assert len(extract_components(lab, BUILDING, min_area=1)) == 2


def test_speck_dropped():
    lab = _grid(10, 10)
    lab[1, 1:4] = BUILDING
    assert extract_components(lab, BUILDING, min_area=10) == []


# --- boundary tracing ---


def _comp(mask):
    mask = np.asarray(mask, dtype=bool)
    return Component(1, mask, int(mask.sum()))


def test_rectangle_traces_to_four_corners():
    mask = np.zeros((20, 30), bool)
    mask[3:11, 5:17] = True
    poly = trace_boundary(_comp(mask), 2.0)
    assert len(poly) == 4
    assert {tuple(p) for p in poly} == {(5, 3), (17, 3), (17, 11), (5, 11)}
    assert signed_area(poly) == pytest.approx(96)


def test_thin_l_shape_six_vertices():
    mask = np.zeros((12, 12), bool)
    mask[2:10, 3] = True
    mask[9, 3:9] = True
    poly = trace_boundary(_comp(mask), 0.0)
    assert len(poly) == 6
    assert signed_area(poly) == pytest.approx(mask.sum())


def test_zero_epsilon_is_raw_trace():
    r = np.random.default_rng(0)
    mask = np.zeros((30, 30), bool)
    mask[5:25, 5:25] = r.random((20, 20)) < 0.9
    mask = np.asarray(mask)
    from scipy import ndimage

    lab, _ = ndimage.label(mask)
    biggest = lab == np.argmax(np.bincount(lab.ravel())[1:]) + 1
    assert np.array_equal(trace_boundary(_comp(biggest), 0.0), trace_raw(biggest))


def _blob(seed):
    from scipy import ndimage

    r = np.random.default_rng(seed)
    mask = ndimage.binary_opening(r.random((40, 40)) < 0.6, iterations=1)
    mask[[0, -1]] = False
    mask[:, [0, -1]] = False
    lab, n = ndimage.label(mask, structure=[[0, 1, 0], [1, 1, 1], [0, 1, 0]])
    if n == 0:
        mask = np.zeros((40, 40), bool)
        mask[10:20, 10:20] = True
        return mask
    return lab == np.argmax(np.bincount(lab.ravel())[1:]) + 1


def _dist_to_polygon(pts, poly):
    a = poly
    b = np.roll(poly, -1, axis=0)
    best = np.full(len(pts), np.inf)
    for p, q in zip(a, b):
        ab = q - p
        t = np.clip(((pts - p) @ ab) / max(ab @ ab, 1e-12), 0, 1)
        d = np.hypot(*(pts - (p + t[:, None] * ab)).T)
        best = np.minimum(best, d)
    return best


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from([0.5, 1.0, 2.0, 4.0]))
def test_simplified_simple_and_close(seed, eps):
    mask = _blob(seed)
    raw = trace_raw(mask)
    assert is_simple(raw)
    poly = simplify(raw, eps)
    assert is_simple(poly) and signed_area(poly) > 0
    raw_set = {tuple(p) for p in raw}
    assert all(tuple(p) in raw_set for p in poly)
    assert _dist_to_polygon(raw, poly).max() <= eps + 1e-9


def test_ear_clip_area():
    poly = np.array([(0, 0), (4, 0), (4, 1), (1, 1), (1, 3), (0, 3)], float)
    tris = ear_clip(poly)
    assert tris.shape == (4, 3)
    total = sum(abs(signed_area(poly[t])) for t in tris)
    assert total == pytest.approx(signed_area(poly))


# --- extrusion ---


def test_square_prism_box():
    sq = np.array([(0, 0), (2, 0), (2, 2), (0, 2)], float)
    m = extrude(sq, 0.5, 0.0)
    assert len(m.vertices) == 8
    assert len(m.faces) == 12
    assert is_closed_manifold(m)


def test_degenerate_prisms_rejected():
    sq = np.array([(0, 0), (2, 0), (2, 2), (0, 2)], float)
    with pytest.raises(GeometryError):
        extrude(sq, 1.0, 1.0)
    with pytest.raises(GeometryError):
        extrude(sq[:2], 1.0, 0.0)


def test_roof_is_median_under_salt_noise():
    r = np.random.default_rng(1)
    mask = np.zeros((30, 30), bool)
    mask[5:25, 5:25] = True
    elev = np.full((30, 30), 12.0)
    salt = mask & (r.random((30, 30)) < 0.10)
    elev[salt] = 80.0
    h = roof_height(_comp(mask), elev)
    assert h == pytest.approx(12.0)
    assert np.mean(elev[mask]) > 14.0


def test_roof_robust_to_49_percent_outliers():
    mask = np.ones((10, 10), bool)
    elev = np.full((10, 10), 7.0)
    elev.ravel()[:49] = 1000.0
    assert roof_height(_comp(mask), elev) == 7.0


def test_ground_level_percentile():
    lab = _grid(10, 10)
    lab[:5] = BUILDING
    elev = np.tile(np.arange(10.0), (10, 1))
    elev[:5] = 50
    assert ground_level(lab, elev) == pytest.approx(np.percentile(elev[5:], 5))


# --- generic objects ---


def test_tree_radius_within_ten_percent():
    yy, xx = np.mgrid[0:60, 0:60]
    lab = _grid(60, 60)
    r = 12
    lab[(yy - 30) ** 2 + (xx - 25) ** 2 <= r * r] = TREE
    elev = np.where(lab == TREE, 8.0, 0.0)
    (m,) = place_generics(lab, elev, TREE, 0.0)
    assert abs(m.params["canopy_radius"] - r) / r < 0.1
    assert m.params["center"] == pytest.approx((25.5, 30.5))  # pixel centers
    assert is_closed_manifold(m)


def test_no_cars_empty_group():
    assert place_generics(_grid(10, 10), np.zeros((10, 10)), CAR, 0.0) == []


def test_two_car_boxes():
    lab = _grid(30, 30, ROAD)
    lab[2:6, 3:11] = CAR
    lab[20:28, 15:19] = CAR
    elev = np.where(lab == CAR, 1.5, 0.0)
    cars = place_generics(lab, elev, CAR, 0.0)
    assert len(cars) == 2
    assert cars[0].params["bbox"] == (2, 3, 6, 11)
    assert all(is_closed_manifold(c) and len(c.faces) == 12 for c in cars)


# --- ground mesh ---


def test_ground_mesh_counts_and_flatness():
    lab = _grid(13, 17)
    elev = np.full((13, 17), 3.5)
    g = ground_mesh(lab, elev)
    assert len(g.faces) == 2 * 16 * 12
    assert np.all(g.vertices[:, 2] == 3.5)


def test_ground_mesh_decimation():
    lab = _grid(201, 201)
    full = ground_mesh(lab, np.zeros((201, 201)), step=1)
    dec = ground_mesh(lab, np.zeros((201, 201)), step=4)
    assert len(dec.faces) == 2 * 50 * 50
    assert len(full.faces) / len(dec.faces) == pytest.approx(16.0)


def test_ground_mesh_skips_buildings():
    lab = _grid(10, 10)
    lab[3:6, 3:6] = BUILDING
    g = ground_mesh(lab, np.zeros((10, 10)))
    assert 0 < len(g.faces) < 2 * 81


# --- OBJ export ---


def test_obj_single_box(tmp_path):
    export_obj([box(0, 0, 2, 3, 0, 1, "b")], tmp_path / "b.obj")
    lines = (tmp_path / "b.obj").read_text().splitlines()
    assert sum(line.startswith("v ") for line in lines) == 8
    assert sum(line.startswith("f ") for line in lines) == 12
    idx = [int(t) for line in lines if line.startswith("f ") for t in line.split()[1:]]
    assert min(idx) == 1 and max(idx) == 8


def test_obj_empty(tmp_path):
    export_obj([], tmp_path / "e.obj")
    assert (tmp_path / "e.obj").read_text().startswith("#")


def _scene():
    lab = _grid(80, 80)
    lab[:, 60:70] = ROAD
    lab[10:30, 10:40] = BUILDING
    lab[40:70, 15:30] = BUILDING
    lab[45:60, 30:45] = BUILDING
    lab[5:12, 62:66] = CAR
    yy, xx = np.mgrid[0:80, 0:80]
    lab[(yy - 70) ** 2 + (xx - 50) ** 2 <= 25] = TREE
    elev = np.zeros((80, 80))
    elev[lab == BUILDING] = 10.0
    elev[lab == TREE] = 6.0
    elev[lab == CAR] = 1.5
    return lab, elev


def test_scene_reexport_byte_identical(tmp_path):
    lab, elev = _scene()
    meshes, _ = reconstruct_scene(lab, elev)
    export_obj(meshes, tmp_path / "a.obj", ["config_hash: x"])
    meshes2, _ = reconstruct_scene(lab, elev)
    export_obj(meshes2, tmp_path / "b.obj", ["config_hash: x"])
    assert (tmp_path / "a.obj").read_bytes() == (tmp_path / "b.obj").read_bytes()


def test_scene_prisms_closed():
    lab, elev = _scene()
    meshes, fps = reconstruct_scene(lab, elev)
    buildings = [m for m in meshes if m.name.startswith("building_")]
    assert len(buildings) == len(fps) == 2
    assert all(is_closed_manifold(m) for m in buildings)
    assert all(fp.roof_height == 10.0 for fp in fps)


def test_footprints_are_simple():
    lab, elev = _scene()
    for fp in building_footprints(lab, elev):
        assert is_simple(fp.polygon) and signed_area(fp.polygon) > 0
