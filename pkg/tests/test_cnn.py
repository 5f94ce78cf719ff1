from decimal import Decimal, getcontext

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from geoseg.cnn import (
    Conv2D,
    Dense,
    Network,
    Pool2D,
    ReLU,
    Tensor,
    backward,
    conv_forward,
    cross_entropy,
    dense_exact,
    dimension_chain,
    forward,
    infer_raster,
    is_feasible,
    load_weights,
    pool_forward,
    relu,
    save_weights,
    softmax_normalize,
    train,
)
from geoseg.cnn.dense import window_offsets
from geoseg.composite import Patch
from geoseg.errors import FormatError, ShapeError, StateError, TrainingError

# --- layers ---


def test_conv_shapes():
    rng = np.random.default_rng(0)
    c1 = Conv2D(4, 6, 5, rng)
    assert conv_forward(rng.random((4, 100, 100)), c1).shape == (6, 96, 96)
    c2 = Conv2D(6, 12, 5, rng)
    assert conv_forward(rng.random((6, 48, 48)), c2).shape == (12, 44, 44)


def test_conv_channel_mismatch():
    with pytest.raises(ShapeError):
        conv_forward(np.zeros((3, 10, 10), np.float32), Conv2D(4, 6, 5, np.random.default_rng(0)))


def test_conv_delta_kernel_is_center_crop(rng):
    layer = Conv2D(3, 3, 5)
    w = np.zeros((3, 3, 5, 5), np.float32)
    for c in range(3):
        w[c, c, 2, 2] = 1.0
    layer.weight = Tensor(w)
    x = rng.random((3, 17, 13)).astype(np.float32)
    assert np.array_equal(conv_forward(x, layer), x[:, 2:-2, 2:-2])


def test_conv_matches_direct_correlation(rng):
    layer = Conv2D(2, 3, 3, rng, np.float64)
    layer.bias = Tensor(rng.normal(size=3))
    x = rng.random((2, 7, 8))
    out = conv_forward(x, layer)
    w = layer.weight.values
    ref = np.zeros((3, 5, 6))
    for o in range(3):
        for i in range(5):
            for j in range(6):
                ref[o, i, j] = np.sum(w[o] * x[:, i : i + 3, j : j + 3]) + layer.bias.values[o]
    assert np.allclose(out, ref, atol=1e-10)


def test_pool_sizes():
    avg = Pool2D("avg", ceil_mode=True)
    mx = Pool2D("max", ceil_mode=False)
    assert pool_forward(np.zeros((6, 96, 96), np.float32), avg).shape == (6, 48, 48)
    assert pool_forward(np.zeros((12, 44, 44), np.float32), mx).shape == (12, 21, 21)


@pytest.mark.parametrize("mode,ceil", [("avg", True), ("max", False)])
def test_pool_constant(mode, ceil):
    out = pool_forward(np.full((2, 15, 15), 0.7, np.float32), Pool2D(mode, ceil))
    assert np.allclose(out, 0.7)


def test_avg_pool_clipped_window_averages_inside_only():
    x = np.arange(16, dtype=np.float64).reshape(1, 4, 4)
    out = pool_forward(x, Pool2D("avg", True))
    assert out.shape == (1, 2, 2)
    assert out[0, 1, 1] == pytest.approx(np.mean(x[0, 2:4, 2:4]))


def test_max_pool_values(rng):
    x = rng.random((1, 7, 7))
    out = pool_forward(x, Pool2D("max", False))
    assert out[0, 1, 2] == x[0, 2:5, 4:7].max()


def test_relu_examples():
    assert np.array_equal(relu(np.array([-1.0, 0.0, 2.0])), [0, 0, 2])
    assert (relu(-np.ones(5)) == 0).all()
    x = np.array([0.0, 1.5, 3.0])
    assert np.array_equal(relu(x), x)


@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=40))
def test_relu_idempotent(values):
    x = np.array(values)
    assert np.array_equal(relu(relu(x)), relu(x))


def test_tensor_grad_shape_checked():
    with pytest.raises(ShapeError):
        Tensor(np.zeros((2, 3)), np.zeros(3))
    t = Tensor(np.zeros((2, 3)))
    t.zero_grad()
    assert t.grad.shape == t.shape and t.size == 6


def test_backward_before_forward():
    with pytest.raises(StateError):
        ReLU().backward(np.zeros(3))
    with pytest.raises(StateError):
        Network(34, 7).backward(np.zeros((1, 6)))


# --- network ---


def test_dimension_chain_100_5():
    shapes = dimension_chain(100, 5)
    assert [s[1] if len(s) == 3 else s[0] for s in shapes[1:]] == [
        96, 96, 48, 44, 44, 21, 5292, 120, 80, 6,
    ]
    assert shapes[6] == (12, 21, 21)


def test_forward_trace_100_5(rng):
    net = Network(100, 5, seed=0)
    trace = []
    net.forward(rng.random((1, 4, 100, 100)), trace)
    sides = [t for t in trace if len(t) == 3]
    assert [(t[0], t[1]) for t in sides] == [(6, 96), (6, 96), (6, 48), (12, 44), (12, 44), (12, 21)]
    assert [t for t in trace if len(t) == 1] == [(5292,), (120,), (80,), (6,)]


def test_feasibility():
    assert is_feasible(100, 5) and is_feasible(34, 7)
    assert not is_feasible(34, 15) and not is_feasible(34, 17)
    assert not is_feasible(100, 4)


def test_zero_network_outputs_zero():
    net = Network(34, 7, zero=True)
    phi = forward(net, np.random.default_rng(0).random((34, 34, 4)))
    assert np.array_equal(phi, np.zeros(6))


def test_forward_shape_error():
    with pytest.raises(ShapeError):
        forward(Network(34, 7), np.zeros((30, 30, 4)))


def test_forward_deterministic(rng):
    patch = rng.random((34, 34, 4))
    a = forward(Network(34, 7, seed=5), patch)
    b = forward(Network(34, 7, seed=5), patch)
    assert a.tobytes() == b.tobytes()
    assert np.all(np.isfinite(a))


# --- softmax ---


def test_softmax_uniform():
    assert np.allclose(softmax_normalize(np.zeros(6)), np.full(6, 1 / 6), atol=1e-15)


def test_softmax_oracle():
    getcontext().prec = 50
    e = Decimal(1).exp()
    big = float(e / (e + 5))
    small = float(1 / (e + 5))
    lam = softmax_normalize([1, 0, 0, 0, 0, 0])
    assert lam[0] == pytest.approx(big, abs=1e-15)
    assert np.allclose(lam[1:], small, atol=1e-15)


@settings(max_examples=200)
@given(
    st.lists(st.floats(-500, 500), min_size=6, max_size=6),
    st.floats(-1000, 1000),
)
def test_softmax_shift_invariant(phi, c):
    a = softmax_normalize(phi)
    b = softmax_normalize(np.array(phi) + c)
    assert np.allclose(a, b, atol=1e-9)


def test_softmax_simplex_bulk(rng):
    phi = rng.uniform(-500, 500, (100_000, 6))
    phi[::7] = np.array([500, -500, 0, 500, -500, 1])
    lam = softmax_normalize(phi)
    assert (lam >= 0).all() and (lam <= 1).all()
    assert np.abs(lam.sum(axis=1) - 1).max() < 1e-9


# --- gradients ---


def _small_net(seed=0):
    net = Network(16, 3, seed=seed, dtype=np.float64)
    r = np.random.default_rng(seed + 100)
    for layer in net.param_layers():
        layer.bias.values = r.normal(scale=0.1, size=layer.bias.shape)
    return net


def _loss(net, x, y):
    return cross_entropy(net.forward(x), y)[0]


def test_gradient_check_every_layer():
    net = _small_net()
    r = np.random.default_rng(1)
    x = r.random((3, 4, 16, 16))
    y = np.array([0, 3, 5])
    net.loss_and_grad(x, y)
    h = 1e-5
    for li, layer in enumerate(net.layers):
        for name, p in zip(("weight", "bias"), layer.params()):
            flat = p.values.reshape(-1)
            idx = r.choice(flat.size, size=min(flat.size, 25), replace=False)
            analytic = p.grad.reshape(-1)[idx]
            numeric = np.empty(len(idx))
            for j, i in enumerate(idx):
                old = flat[i]
                flat[i] = old + h
                up = _loss(net, x, y)
                flat[i] = old - h
                down = _loss(net, x, y)
                flat[i] = old
                numeric[j] = (up - down) / (2 * h)
            denom = max(np.linalg.norm(analytic), np.linalg.norm(numeric), 1e-12)
            rel = np.linalg.norm(analytic - numeric) / denom
            assert rel < 1e-4, (li, name, rel)


def test_gradient_input_check_pool_and_relu():
    r = np.random.default_rng(2)
    for layer in (Pool2D("avg", True), Pool2D("max", False), ReLU()):
        x = r.normal(size=(2, 3, 9, 9))
        g = r.normal(size=layer.forward(x).shape)
        dx = layer.backward(g)
        idx = r.choice(x.size, 30, replace=False)
        h = 1e-5
        num = []
        for i in idx:
            xp = x.copy().reshape(-1)
            xm = xp.copy()
            xp[i] += h
            xm[i] -= h
            num.append(
                (np.sum(layer.forward(xp.reshape(x.shape)) * g)
                 - np.sum(layer.forward(xm.reshape(x.shape)) * g)) / (2 * h)
            )
        num = np.array(num)
        ana = dx.reshape(-1)[idx]
        assert np.linalg.norm(ana - num) / max(np.linalg.norm(num), 1e-12) < 1e-4


def test_one_hot_prediction_gives_zero_final_grads():
    net = Network(16, 3, seed=0, dtype=np.float64)
    last = net.layers[-1]
    last.weight.values[:] = 0
    last.bias.values = np.array([1000.0, 0, 0, 0, 0, 0])
    grads = backward(net, np.random.default_rng(0).random((16, 16, 4)), 0)
    assert not grads[(9, "weight")].any() and not grads[(9, "bias")].any()


def test_doubling_loss_doubles_gradients():
    patch = np.random.default_rng(3).random((16, 16, 4))
    g1 = {k: v.copy() for k, v in backward(_small_net(), patch, 2).items()}
    g2 = backward(_small_net(), patch, 2, loss_scale=2.0)
    for k in g1:
        assert np.allclose(g2[k], 2 * g1[k], rtol=1e-12, atol=1e-15)


# --- training ---


def _separable(n=200, size=16, seed=0):
    r = np.random.default_rng(seed)
    out = []
    for i in range(n):
        label = i % 2
        px = r.random((size, size, 4)) * 0.3
        px[..., 3] += 0.6 if label else 0.0
        out.append(Patch(px, label, 0, 0, 0))
    return out


def test_train_separable():
    net = Network(16, 3, seed=0)
    res = train(net, _separable(), epochs=20, learning_rate=0.05, batch_size=16, seed=0)
    assert len(res.losses) == 20
    assert res.losses[-1] < res.losses[0]
    x = np.stack([p.pixels.transpose(2, 0, 1) for p in _separable(seed=1)])
    y = np.array([p.label for p in _separable(seed=1)])
    assert np.mean(net.forward(x).argmax(axis=1) == y) >= 0.99


def test_zero_learning_rate_constant_loss():
    res = train(Network(16, 3, seed=0), _separable(64), epochs=3, learning_rate=0.0)
    assert res.losses[0] == pytest.approx(res.losses[1]) == pytest.approx(res.losses[2])


def test_training_deterministic():
    a = train(Network(16, 3, seed=1), _separable(64), epochs=3, learning_rate=0.05, seed=9)
    b = train(Network(16, 3, seed=1), _separable(64), epochs=3, learning_rate=0.05, seed=9)
    assert a.losses == b.losses


def test_training_divergence_raises():
    with pytest.raises(TrainingError) as err:
        train(Network(16, 3, seed=0), _separable(64), epochs=5, learning_rate=1e30)
    assert err.value.last_good_epoch < err.value.epoch


def test_train_rejects_empty():
    with pytest.raises(ValueError):
        train(Network(16, 3), [], epochs=1)


def test_checkpoint_roundtrip(tmp_path, rng):
    net = Network(34, 7, seed=3)
    save_weights(net, tmp_path / "w.bin", "hash")
    back = load_weights(tmp_path / "w.bin")
    x = rng.random((2, 4, 34, 34))
    assert np.array_equal(net.forward(x), back.forward(x))
    (tmp_path / "bad.bin").write_bytes(b"nope")
    with pytest.raises(FormatError):
        load_weights(tmp_path / "bad.bin")


# --- dense inference ---


def test_window_offsets():
    assert len(window_offsets(600, 100, 1)) == 501
    assert len(window_offsets(600, 100, 4)) == int(np.ceil(501 / 4))
    assert len(window_offsets(50, 100, 1)) == 0


@pytest.mark.parametrize("n,k", [(34, 7), (34, 5)])
def test_dense_matches_per_window(n, k, rng):
    net = Network(n, k, seed=2)
    rgbd = rng.random((n + 9, n + 6, 4)).astype(np.float32)
    out = infer_raster(net, rgbd, stride=1)
    half = n // 2
    for y, x in [(0, 0), (9, 6), (4, 3), (7, 1)]:
        expect = softmax_normalize(net.forward(rgbd[y : y + n, x : x + n].transpose(2, 0, 1)[None]))[0]
        assert np.allclose(out[y + half, x + half], expect, atol=1e-5)


def test_dense_exact_cells():
    assert dense_exact(Network(34, 7, zero=True))
    assert dense_exact(Network(100, 5, zero=True))
    assert not dense_exact(Network(34, 5, zero=True))


def test_dense_margin_is_nan(rng):
    net = Network(34, 7, seed=0)
    out = infer_raster(net, rng.random((60, 50, 4)).astype(np.float32))
    valid = ~np.isnan(out[..., 0])
    assert valid.sum() == (60 - 33) * (50 - 33)
    assert not valid[:17].any() and not valid[:, :17].any()
    assert valid[17, 17] and valid[17 + 26, 17 + 16]
    assert not valid[17 + 27].any()
    assert np.allclose(out[valid].sum(axis=1), 1.0)


def test_dense_stride_fill(rng):
    net = Network(34, 7, seed=0)
    rgbd = rng.random((50, 50, 4)).astype(np.float32)
    full = infer_raster(net, rgbd, 1)
    strided = infer_raster(net, rgbd, 4)
    assert np.array_equal(np.isnan(full), np.isnan(strided))
    offsets = window_offsets(50, 34, 4)
    for oy in offsets:
        for ox in offsets:
            assert np.allclose(strided[oy + 17, ox + 17], full[oy + 17, ox + 17], atol=1e-6)
    # center offset 5 lies nearest to evaluated offset 4
    assert np.allclose(strided[17 + 5, 17 + 5], full[17 + 4, 17 + 4], atol=1e-6)
