import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bnnstream import oracle
from bnnstream.bitcore import unpack
from bnnstream.compiler import (
    BatchNormParams,
    TrainedLayer,
    accumulator_bits,
    compile_layer,
    compile_network,
    deinterleave_channels,
    derive_fixed_threshold,
    derive_threshold,
    interleave_channels,
    pack_filter_matrix,
    random_trained_network,
)
from bnnstream.errors import CompileError, DimensionError
from bnnstream.topology import cnv, conv, fc, lfc, maxpool, sfc


def _agrees(theta, y):
    tp, flip = derive_threshold(theta, y)
    c = np.arange(y + 1)
    ref = oracle.sign(oracle.batchnorm(2.0 * c - y, *theta)) > 0
    got = ((y - c) if flip else c) >= tp
    return np.array_equal(ref, got), tp, flip


def test_identity_threshold():
    assert derive_threshold((1.0, 0.0, 1.0, 0.0), 8) == (4, False)


def test_worked_threshold():
    ok, tp, flip = _agrees((0.5, 3.0, 2.0, -1.0), 16)
    assert ok and (tp, flip) == (10, False)


def test_negative_slope_flips():
    ok, tp, flip = _agrees((-1.0, 0.0, 1.0, 0.0), 8)
    assert ok and flip


def test_degenerate_batchnorm_names_neuron():
    bn = BatchNormParams([1.0, 0.0], [0.0, 0.0], [1.0, 1.0], [0.0, 0.0])
    layer = TrainedLayer(fc(4, 2), np.ones((2, 4)), bn)
    with pytest.raises(CompileError, match="neuron 1"):
        compile_layer(layer, index=3)


def test_threshold_saturation():
    # zero crossing far below -Y: always fires; far above: never fires
    assert derive_threshold((1.0, -100.0, 1.0, 0.0), 8) == (0, False)
    assert derive_threshold((1.0, 100.0, 1.0, 0.0), 8) == (9, False)


@given(
    st.floats(0.01, 10) | st.floats(-10, -0.01),
    st.floats(-80, 80),
    st.floats(0.01, 10),
    st.floats(-20, 20),
    st.integers(1, 64),
)
def test_threshold_theorem_property(gamma, mu, inv_std, beta, y):
    ok, tp, _ = _agrees((gamma, mu, inv_std, beta), y)
    assert ok
    assert 0 <= tp <= y + 1
    # tau_plus fits in T bits
    assert tp < (1 << accumulator_bits(y))


def test_threshold_boundary_exact():
    # zero crossing exactly on an integer popcount: the tie fires
    y = 10
    for c0 in range(y + 1):
        theta = (2.0, 2.0 * c0 - y, 1.0, 0.0)
        ok, tp, _ = _agrees(theta, y)
        assert ok and tp == c0


@given(st.floats(-5, 5), st.floats(-300, 300), st.floats(0.01, 4), st.floats(-3, 3))
def test_fixed_threshold_property(gamma, mu, inv_std, beta):
    if gamma == 0:
        return
    theta = (gamma, mu, inv_std, beta)
    t, flip = derive_fixed_threshold(theta, -200, 200)
    a = np.arange(-200, 201)
    ref = oracle.sign(oracle.batchnorm(a.astype(float), *theta)) > 0
    got = ((-a) if flip else a) >= t
    assert np.array_equal(ref, got)


def test_accumulator_bits():
    assert accumulator_bits(256) == 9
    assert accumulator_bits(784) == 11
    assert accumulator_bits(1) == 2


def test_bias_absorbed():
    rng = np.random.default_rng(0)
    w = rng.choice([-1, 1], (6, 10))
    bn = BatchNormParams(rng.uniform(-2, 2, 6), rng.normal(0, 2, 6), rng.uniform(0.5, 2, 6), rng.normal(0, 1, 6))
    bias = rng.normal(0, 2, 6)
    layer = TrainedLayer(fc(10, 6), w, bn, bias)
    compiled = compile_layer(layer)
    rl = oracle.real_layer(layer)
    for _ in range(50):
        x = rng.choice([-1, 1], 10)
        ref = oracle.fc_forward(rl, x) > 0
        got = []
        for n in range(6):
            c = int(np.sum(compiled.weights.to_bipolar()[n] == x))
            got.append(c >= compiled.thresholds[n])
        assert np.array_equal(ref, got)


def test_interleave_examples():
    planes = np.array([[[1, 0]], [[0, 1]]], dtype=bool)  # C=2, 1x2
    frame = interleave_channels(planes)
    assert frame.data.to_bits().tolist() == [True, False, False, True]
    single = np.array([[[1, 0, 1], [0, 0, 1]]], dtype=bool)
    assert interleave_channels(single).data.to_bits().tolist() == single.reshape(-1).tolist()


def test_interleave_roundtrip():
    rng = np.random.default_rng(1)
    x = rng.integers(0, 2, (3, 4, 4)).astype(bool)
    assert np.array_equal(deinterleave_channels(interleave_channels(x)), x)


def test_filter_matrix_examples():
    assert pack_filter_matrix(np.array([[[[1]]], [[[-1]]]])).to_bipolar().tolist() == [[1], [-1]]
    m = pack_filter_matrix(np.array([[[[1, -1], [-1, 1]]]]))
    assert m.to_bits().tolist() == [[True, False, False, True]]


def test_filter_matrix_order_matches_oracle():
    rng = np.random.default_rng(2)
    w = rng.choice([-1, 1], (4, 2, 3, 3))
    img = rng.choice([-1, 1], (2, 5, 5))  # planar
    ref = oracle.conv_preactivation(oracle.RealLayer(w), img)
    m = pack_filter_matrix(w).to_bipolar()
    hwc = img.transpose(1, 2, 0)
    for r in range(3):
        for c in range(3):
            col = hwc[r:r + 3, c:c + 3, :].reshape(-1)
            assert np.array_equal(m @ col, ref[:, r, c])


def test_identity_fc_compiles_to_half_fanin():
    layer = TrainedLayer(fc(16, 4), np.ones((4, 16)), BatchNormParams.identity(4))
    assert compile_layer(layer).thresholds.tolist() == [8] * 4


def test_compile_network_shapes():
    trained = random_trained_network(cnv(), 0)
    net = compile_network(trained, "cnv", cnv())
    assert len(net) == 11
    first = net.layers[0]
    assert not first.binary_input and first.thresholds.dtype == np.int32
    assert net.layers[-1].thresholds is None
    assert net.layers[1].thresholds.dtype == np.uint32


def test_compile_rejects_mismatched_weights():
    with pytest.raises(DimensionError):
        TrainedLayer(fc(4, 2), np.ones((2, 5)))
    with pytest.raises(ValueError):
        TrainedLayer(fc(4, 2), np.zeros((2, 4)))


def test_nonthresholded_layer_cannot_have_batchnorm():
    layer = TrainedLayer(fc(4, 2, thresholded=False), np.ones((2, 4)), BatchNormParams.identity(2))
    with pytest.raises(CompileError):
        compile_layer(layer)


def test_flip_recorded_and_applied():
    bn = BatchNormParams([-1.0, 1.0], [0.0, 0.0], [1.0, 1.0], [0.0, 0.0])
    w = np.array([[1, 1, -1, -1], [1, -1, 1, -1]])
    c = compile_layer(TrainedLayer(fc(4, 2), w, bn))
    assert c.flips.tolist() == [True, False]
    assert c.weights.to_bipolar().tolist() == [[-1, -1, 1, 1], [1, -1, 1, -1]]


def test_pool_after_flipped_conv_uses_and():
    topo_layers = [conv(1, 2, 4), maxpool(2, 2)]
    bn = BatchNormParams([-1.0, 1.0], [0.0, 0.0], [1.0, 1.0], [0.0, 0.0])
    trained = [TrainedLayer(topo_layers[0], np.ones((2, 1, 3, 3)), bn), TrainedLayer(topo_layers[1])]
    net = compile_network(trained)
    assert net.layers[1].and_channels.tolist() == [True, False]


def test_random_network_deterministic():
    a = compile_network(random_trained_network(sfc(), 5), "sfc")
    b = compile_network(random_trained_network(sfc(), 5), "sfc")
    c = compile_network(random_trained_network(sfc(), 6), "sfc")
    assert a == b and a != c


def test_builtin_dimensions():
    assert [l.fanin for l in sfc().mvtu_layers] == [784, 256, 256, 256]
    assert [l.fanin for l in lfc().mvtu_layers] == [784, 1024, 1024, 1024]
    fm = [l.matrix_fold for l in cnv().mvtu_layers]
    assert fm == [900, 784, 144, 100, 9, 1, 1, 1, 1]
    assert math.prod(cnv().input_shape) == 32 * 32 * 3
