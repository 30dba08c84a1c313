import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pifield.field import (FieldNet, MlpSpec, FULL_WIDTHS, ShapeMismatch, embed, exact_mean,
                           forward, fuse_forward, surface_spec, texture_spec)

# 1 hidden layer, weights below, input (0.3, -0.2):
#   pre = (0.3 + 0.2 + 0.1, 0.15 - 0.4 - 0.3) = (0.6, -0.55) -> h = (0.6, -0.0055)
#   out = sigmoid(1.5 * 0.6 + 2 * 0.0055 + 0.05) = sigmoid(0.961)
HAND_VALUE = 0.7233219771050532


def hand_net():
    net = FieldNet(MlpSpec(2, (2,), 1, "sigmoid"))
    net.weights[0][...] = [[1.0, -1.0], [0.5, 2.0]]
    net.biases[0][...] = [0.1, -0.3]
    net.weights[1][...] = [[1.5, -2.0]]
    net.biases[1][...] = [0.05]
    return net


def test_hand_forward():
    out = forward(hand_net(), np.array([0.3]), -0.2)
    assert out[0, 0] == pytest.approx(HAND_VALUE, abs=1e-15)


def test_zero_nets():
    s = FieldNet(surface_spec(12)).zero_()
    assert np.all(forward(s, np.ones((4, 12)), np.zeros(4)) == 0.5)
    t = FieldNet(texture_spec(8, 12)).zero_()
    assert np.all(forward(t, np.ones((4, 20)), np.zeros(4)) == 0.5)


def test_shape_mismatch():
    net = FieldNet(surface_spec(12))
    with pytest.raises(ShapeMismatch):
        net.forward(np.zeros((3, 11)), np.zeros(3))


def test_spec_validation():
    with pytest.raises(ValueError):
        MlpSpec(3, (4, 4), skip_layers={0})
    with pytest.raises(ValueError):
        MlpSpec(3, (4, 0))
    with pytest.raises(ValueError):
        MlpSpec(3, (4, 4), embed_layer=2)


def test_full_preset_shapes():
    spec = surface_spec(256, "paper")
    shapes = spec.layer_shapes()
    assert [s[0] for s in shapes] == [1024, 512, 256, 128, 1]
    assert shapes[0][1] == 257
    assert shapes[1][1] == 1024 + 257  # skip connection concatenates the raw input
    assert texture_spec(256, 256, "paper").input_dim == 513


def test_full_preset_embedding_length():
    net = FieldNet(surface_spec(16, "paper", embed_layer=3))
    assert embed(net, np.zeros((2, 16)), np.zeros(2)).shape == (2, FULL_WIDTHS[3])


def test_embed_last_hidden_matches_forward():
    spec = surface_spec(5, embed_layer=3)
    net = FieldNet(spec, seed=2)
    f = np.random.default_rng(0).normal(size=(6, 5))
    z = np.linspace(-1, 1, 6)
    phi = net.embed(f, z)
    assert np.array_equal(phi, net.embed(f, z))
    manual = net._head(phi, None)
    assert np.array_equal(manual, net.forward(f, z))


def test_output_range():
    rng = np.random.default_rng(1)
    s = FieldNet(surface_spec(6), seed=1)
    t = FieldNet(texture_spec(4, 6), seed=1)
    for scale in (1.0, 100.0):
        a = s.forward(scale * rng.normal(size=(50, 6)), rng.normal(size=50))
        b = t.forward(scale * rng.normal(size=(50, 10)), rng.normal(size=50))
        assert np.all((a >= 0) & (a <= 1)) and np.all((b >= 0) & (b <= 1))
    # modest inputs stay strictly inside
    a = s.forward(rng.normal(size=(50, 6)), rng.normal(size=50))
    assert np.all((a > 0) & (a < 1))


# --- gradients ----------------------------------------------------------------------

def _loss(net, feats, zs, w, fused):
    out = net.fuse_forward(feats, zs) if fused else net.forward(feats[0], zs[0])
    return float((out * w).sum())


def _fd_check(net, feats, zs, fused, tol=1e-4, h=1e-6):
    rng = np.random.default_rng(9)
    cache = []
    out = net.fuse_forward(feats, zs, cache) if fused else net.forward(feats[0], zs[0], cache)
    w = rng.normal(size=out.shape)
    if fused:
        grads, g_in = net.fuse_backward(cache, out, w)
    else:
        grads, g_in = net.backward(cache, out, w)
        g_in = g_in[None]
    worst = 0.0
    for p, g in zip(net.params, grads):
        for idx in np.ndindex(p.shape):
            old = p[idx]
            p[idx] = old + h
            up = _loss(net, feats, zs, w, fused)
            p[idx] = old - h
            dn = _loss(net, feats, zs, w, fused)
            p[idx] = old
            fd = (up - dn) / (2 * h)
            worst = max(worst, abs(fd - g[idx]) / max(1e-3, abs(fd), abs(g[idx])))
    for v in range(len(feats)):
        for idx in np.ndindex(feats[v].shape):
            old = feats[v][idx]
            feats[v][idx] = old + h
            up = _loss(net, feats, zs, w, fused)
            feats[v][idx] = old - h
            dn = _loss(net, feats, zs, w, fused)
            feats[v][idx] = old
            fd = (up - dn) / (2 * h)
            g = g_in[v][idx[0], idx[1]]
            worst = max(worst, abs(fd - g) / max(1e-3, abs(fd), abs(g)))
    assert worst < tol


ARCHS = [
    ("surface-skips", lambda: MlpSpec(4, (6, 5, 4), 1, "sigmoid", embed_layer=1)),
    ("surface-noskip", lambda: MlpSpec(4, (6, 5, 4), 1, "sigmoid", skip_layers=set(), embed_layer=1)),
    ("texture-skips", lambda: MlpSpec(4, (5, 5, 3), 3, "tanh01", embed_layer=0)),
    ("texture-unsplit", lambda: MlpSpec(4, (5, 4), 3, "tanh01")),
]


@pytest.mark.parametrize("name, make", ARCHS)
def test_gradients_single_view(name, make):
    spec = make()
    net = FieldNet(spec, seed=3)
    rng = np.random.default_rng(4)
    _fd_check(net, [rng.normal(size=(5, 3))], [rng.normal(size=5)], fused=False)


@pytest.mark.parametrize("name, make", [a for a in ARCHS if a[0] != "texture-unsplit"])
def test_gradients_multi_view(name, make):
    net = FieldNet(make(), seed=5)
    rng = np.random.default_rng(6)
    feats = [rng.normal(size=(4, 3)) for _ in range(3)]
    zs = [rng.normal(size=4) for _ in range(3)]
    _fd_check(net, feats, zs, fused=True)


def test_zero_upstream_gives_zero_gradients():
    net = FieldNet(surface_spec(3), seed=0)
    cache = []
    out = net.forward(np.ones((2, 3)), np.zeros(2), cache)
    grads, g_in = net.backward(cache, out, np.zeros_like(out))
    assert all(np.all(g == 0) for g in grads) and np.all(g_in == 0)


def test_linear_net_outer_product():
    # slope-1 "leaky" activations and a linear head: out = W1 (W0 v + b0) + b1
    spec = MlpSpec(3, (4,), 1, "linear", leaky_slope=1.0)
    net = FieldNet(spec, seed=7)
    rng = np.random.default_rng(8)
    v = rng.normal(size=(5, 3))
    u = rng.normal(size=(5, 1))
    cache = []
    out = net.forward(v[:, :2], v[:, 2], cache)
    grads, g_in = net.backward(cache, out, u)
    h = v @ net.weights[0].T + net.biases[0]
    assert np.allclose(grads[2], u.T @ h)
    assert np.allclose(grads[0], (u @ net.weights[1]).T @ v)
    assert np.allclose(g_in, u @ net.weights[1] @ net.weights[0])


# --- multi-view ------------------------------------------------------------------

@pytest.fixture(scope="module")
def fused_net():
    return FieldNet(surface_spec(7, embed_layer=2), seed=11)


def test_fuse_errors():
    net = FieldNet(surface_spec(3, embed_layer=None))
    with pytest.raises(ValueError):
        net.fuse_forward([np.zeros((1, 3))], [np.zeros(1)])
    with pytest.raises(ValueError):
        embed(net, np.zeros((1, 3)), np.zeros(1))
    with pytest.raises(ValueError):
        fuse_forward(FieldNet(surface_spec(3)), [])


@pytest.mark.parametrize("n", [1, 2, 3, 5])
def test_identical_views_equal_single(fused_net, n):
    rng = np.random.default_rng(n)
    f = rng.normal(size=(9, 7))
    z = rng.normal(size=9)
    single = fused_net.forward(f, z)
    assert np.array_equal(fuse_forward(fused_net, [(f, z)] * n), single)


@pytest.mark.parametrize("n", [1, 2, 3, 5])
def test_permutation_invariance(fused_net, n):
    rng = np.random.default_rng(10 + n)
    views = [(rng.normal(size=(6, 7)), rng.normal(size=6)) for _ in range(n)]
    ref = fuse_forward(fused_net, views)
    for perm in itertools.permutations(range(n)):
        assert np.array_equal(fuse_forward(fused_net, [views[i] for i in perm]), ref)


def test_perturbing_one_view_changes_output(fused_net):
    rng = np.random.default_rng(12)
    views = [(rng.normal(size=(3, 7)), rng.normal(size=3)) for _ in range(3)]
    ref = fuse_forward(fused_net, views)
    for k in range(3):
        moved = [(f + (0.5 if i == k else 0.0), z) for i, (f, z) in enumerate(views)]
        assert not np.array_equal(fuse_forward(fused_net, moved), ref)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=6))
def test_exact_mean_properties(vals):
    a = np.array(vals)[:, None]
    m = exact_mean(a)
    assert np.array_equal(exact_mean(a[::-1]), m)
    assert a.min() - 1e-9 <= m[0] <= a.max() + 1e-9
    assert np.array_equal(exact_mean(np.repeat(a[:1], len(vals), axis=0)), a[0])


def test_serialization_round_trip():
    net = FieldNet(texture_spec(4, 5, embed_layer=2), seed=3)
    back = FieldNet.from_header(net.header(), net.flat_params())
    assert back.checksum() == net.checksum()
    with pytest.raises(ShapeMismatch):
        FieldNet.from_header(net.header(), net.flat_params()[:-1])
