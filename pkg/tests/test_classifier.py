import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from geoseg.classifier import (
    LikelihoodMap,
    SvmModel,
    fuse_scales,
    load_likelihood_map,
    load_svm,
    predict_label,
    sample_pixels,
    save_likelihood_map,
    save_svm,
    train_svm,
    upscale_bilinear,
)
from geoseg.errors import DegenerateDataError, FormatError
from geoseg.raster import UNKNOWN


def _simplex_grid(rng, h, w):
    g = rng.random((h, w, 6)) + 0.01
    return g / g.sum(axis=2, keepdims=True)


def test_identical_scales_fuse_to_same():
    lam = np.array([0.5, 0.1, 0.1, 0.1, 0.1, 0.1])
    grids = [np.broadcast_to(lam, (s, s, 6)).copy() for s in (20, 17, 14, 11, 8)]
    fused = fuse_scales(grids, 20, 20)
    assert np.allclose(fused.values, lam)


def test_partial_scales_mean_of_three():
    a = np.array([0.6, 0.2, 0.05, 0.05, 0.05, 0.05])
    b = np.array([0.1, 0.6, 0.1, 0.1, 0.05, 0.05])
    c = np.array([0.2, 0.2, 0.2, 0.2, 0.1, 0.1])
    grids = [np.broadcast_to(v, (10, 10, 6)).copy() for v in (a, b, c)]
    grids += [np.full((10, 10, 6), np.nan), np.full((10, 10, 6), np.nan)]
    fused = fuse_scales(grids, 10, 10)
    assert np.allclose(fused.values[4, 4], (a + b + c) / 3)


def test_single_scale_equals_upscaled(rng):
    g = _simplex_grid(rng, 7, 9)
    fused = fuse_scales([g], 21, 18)
    up = upscale_bilinear(g, 18, 21)
    assert np.allclose(fused.values, up)


def test_unvalued_everywhere_is_no_value():
    fused = fuse_scales([np.full((5, 5, 6), np.nan)], 5, 5)
    assert not fused.valid.any()


def test_upscale_hole_propagates_to_neighbors():
    g = np.full((4, 4, 6), 1 / 6)
    g[1, 1] = np.nan
    up = upscale_bilinear(g, 8, 8)
    invalid = np.isnan(up[..., 0])
    assert invalid[2:4, 2:4].all()
    assert not invalid[6:, 6:].any()


def test_upscale_identity_size(rng):
    g = _simplex_grid(rng, 6, 5)
    assert np.allclose(upscale_bilinear(g, 6, 5), g)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 5))
def test_fused_on_simplex_and_idempotent(seed, copies):
    rng = np.random.default_rng(seed)
    g = _simplex_grid(rng, 9, 9)
    g[rng.random((9, 9)) < 0.2] = np.nan
    fused = fuse_scales([g] * copies, 9, 9)
    v = fused.values[fused.valid]
    assert np.abs(v.sum(axis=1) - 1).max() < 1e-6
    assert np.allclose(fused.values, g, equal_nan=True)


def test_likelihood_map_file_roundtrip(tmp_path, rng):
    g = _simplex_grid(rng, 5, 7)
    g[0, :] = np.nan
    save_likelihood_map(LikelihoodMap(g), tmp_path / "m.bin", "h")
    back = load_likelihood_map(tmp_path / "m.bin")
    assert np.array_equal(back.values, g, equal_nan=True)
    (tmp_path / "x.bin").write_bytes(b"garbage!")
    with pytest.raises(FormatError):
        load_likelihood_map(tmp_path / "x.bin")


def test_identity_model_argmax():
    model = SvmModel(np.eye(6), np.zeros(6))
    lhm = np.array([[[0.9, 0.02, 0.02, 0.02, 0.02, 0.02]]])
    assert predict_label(model, lhm)[0, 0] == 0


def test_tie_goes_to_lower_index():
    model = SvmModel(np.eye(6), np.zeros(6))
    lhm = np.array([[[0.1, 0.1, 0.4, 0.0, 0.4, 0.0]]])
    assert predict_label(model, lhm)[0, 0] == 2


def test_unvalued_pixel_unknown():
    model = SvmModel(np.eye(6), np.zeros(6))
    lhm = np.full((2, 2, 6), 1 / 6)
    lhm[0, 1] = np.nan
    out = predict_label(model, LikelihoodMap(lhm))
    assert out[0, 1] == UNKNOWN and out[0, 0] == 0


@settings(max_examples=50)
@given(st.integers(0, 10_000), st.floats(-100, 100))
def test_predict_invariant_to_common_score_shift(seed, c):
    rng = np.random.default_rng(seed)
    W = rng.normal(size=(6, 6))
    b = rng.normal(size=6)
    lhm = _simplex_grid(rng, 4, 4)
    base = predict_label(SvmModel(W, b), lhm)
    shifted = predict_label(SvmModel(W, b + c), lhm)
    scores = lhm.reshape(-1, 6) @ W.T + b
    top2 = np.sort(scores, axis=1)[:, -2:]
    clear = (top2[:, 1] - top2[:, 0] > 1e-9).reshape(4, 4)
    assert np.array_equal(base[clear], shifted[clear])


def _clusters(rng, per_class=60):
    x, y = [], []
    for c in range(6):
        v = np.full(6, 0.04)
        v[c] = 0.8
        pts = v + rng.normal(scale=0.02, size=(per_class, 6))
        pts = np.clip(pts, 1e-3, None)
        x.append(pts / pts.sum(axis=1, keepdims=True))
        y.append(np.full(per_class, c))
    return np.concatenate(x), np.concatenate(y)


def test_svm_separable_clusters(rng):
    x, y = _clusters(rng)
    model = train_svm(x, y, epochs=50, rate=0.1, regularization=1e-4, seed=0)
    pred = predict_label(model, x[None])[0]
    assert np.mean(pred == y) == 1.0


def test_svm_one_hot():
    x = np.eye(6)
    y = np.arange(6)
    model = train_svm(np.repeat(x, 10, axis=0), np.repeat(y, 10), epochs=50)
    assert np.array_equal(predict_label(model, x[None])[0], y)


def test_svm_deterministic(rng):
    x, y = _clusters(rng)
    a = train_svm(x, y, seed=3)
    b = train_svm(x, y, seed=3)
    assert np.array_equal(a.W, b.W) and np.array_equal(a.b, b.b)


def test_svm_single_class_rejected():
    with pytest.raises(DegenerateDataError):
        train_svm(np.eye(6), np.zeros(6, dtype=int))


def test_svm_file_roundtrip(tmp_path, rng):
    x, y = _clusters(rng)
    model = train_svm(x, y, epochs=5)
    save_svm(model, tmp_path / "svm.txt", "abc")
    back = load_svm(tmp_path / "svm.txt")
    assert np.array_equal(back.W, model.W) and np.array_equal(back.b, model.b)
    (tmp_path / "bad.txt").write_text("1 2 3\n")
    with pytest.raises(FormatError):
        load_svm(tmp_path / "bad.txt")


def test_sample_pixels_only_valued(rng):
    g = _simplex_grid(rng, 10, 10)
    g[:3] = np.nan
    labels = rng.integers(0, 6, (10, 10))
    x, y = sample_pixels([LikelihoodMap(g)], [labels], None)
    assert len(y) == 70 and not np.isnan(x).any()
    xs, ys = sample_pixels([LikelihoodMap(g)], [labels], 20, seed=1)
    assert len(ys) == 20
