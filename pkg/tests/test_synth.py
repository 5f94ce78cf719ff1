import numpy as np
import pytest

from geoseg.errors import SpecError
from geoseg.raster import BUILDING, NATURAL_GROUND
from geoseg.synth import (
    SceneSpec,
    class_shares,
    generate,
    generate_with_truth,
    load_spec,
    save_spec,
    spec_from_dict,
)


def _one_building(seed=0):
    return SceneSpec(
        width=120, height=100, seed=seed, buildings=1, roads=0, artificial_patches=0,
        trees=0, cars=0, ground_tilt=0.0, require_all_classes=False,
    )


def test_single_building_on_flat_ground():
    raster, ground, roofs = generate_with_truth(_one_building())
    (y0, x0, bh, bw, _), = roofs
    expect = np.full((100, 120), NATURAL_GROUND)
    expect[y0 : y0 + bh, x0 : x0 + bw] = BUILDING
    assert np.array_equal(raster.labels, expect)
    b = raster.labels == BUILDING
    assert raster.depth[b].min() > raster.depth[~b].max()


def test_deterministic():
    spec = SceneSpec(width=200, height=200, seed=11, buildings=3, trees=5, cars=5)
    a, b = generate(spec), generate(spec)
    assert a.depth.tobytes() == b.depth.tobytes()
    assert a.color.tobytes() == b.color.tobytes()
    assert np.array_equal(a.labels, b.labels)
    assert not np.array_equal(generate(SceneSpec(width=200, height=200, seed=12)).labels, a.labels)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_default_scene_has_all_classes(seed):
    raster = generate(SceneSpec(seed=seed))
    assert (raster.width, raster.height) == (600, 600)
    assert class_shares(raster.labels).min() >= 0.01


@pytest.mark.parametrize("seed", [0, 3])
def test_building_height_above_ground(seed):
    spec = SceneSpec(width=300, height=300, seed=seed, buildings=6, require_all_classes=False)
    raster, ground, roofs = generate_with_truth(spec)
    elev = raster.elevation()
    height = np.full(ground.shape, np.nan)
    for y0, x0, bh, bw, h in roofs:
        height[y0 : y0 + bh, x0 : x0 + bw] = h
    b = raster.labels == BUILDING
    resid = elev[b] - ground[b] - height[b]
    assert np.abs(resid).max() <= spec.depth_noise + 1e-3


def test_values_in_unit_range():
    r = generate(SceneSpec(width=200, height=200, seed=4, require_all_classes=False))
    assert 0 <= r.depth.min() and r.depth.max() <= 1
    assert 0 <= r.color.min() and r.color.max() <= 1


def test_degenerate_spec():
    with pytest.raises(SpecError):
        SceneSpec(width=0)
    with pytest.raises(SpecError):
        SceneSpec(building_size=(50, 10))
    with pytest.raises(SpecError):
        spec_from_dict({"colour": "1"})
    with pytest.raises(SpecError):
        spec_from_dict({"buildings": "many"})


def test_spec_file_roundtrip(tmp_path):
    spec = SceneSpec(width=321, seed=9, building_size=(20, 30), require_all_classes=False)
    save_spec(spec, tmp_path / "s.txt")
    assert load_spec(tmp_path / "s.txt") == spec
