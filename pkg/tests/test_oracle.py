import numpy as np
import pytest

from bnnstream import oracle
from bnnstream.compiler import BatchNormParams
from bnnstream.errors import DimensionError


def test_zero_weights_sign_of_zero():
    layer = oracle.RealLayer(np.zeros((3, 4)), np.zeros(3), BatchNormParams.identity(3))
    assert oracle.fc_forward(layer, np.ones(4)).tolist() == [1, 1, 1]


def test_single_neuron_tie():
    layer = oracle.RealLayer(np.array([[1.0, -1.0]]))
    assert oracle.fc_preactivation(layer, [1, 1]).tolist() == [0.0]
    assert oracle.fc_forward(layer, [1, 1]).tolist() == [1]


def test_length_mismatch():
    with pytest.raises(DimensionError):
        oracle.fc_preactivation(oracle.RealLayer(np.ones((2, 3))), np.ones(4))


def test_preactivation_parity():
    rng = np.random.default_rng(0)
    for y in (7, 8, 33):
        w = rng.choice([-1, 1], (5, y))
        pre = oracle.fc_preactivation(oracle.RealLayer(w), rng.choice([-1, 1], y))
        assert np.all(pre == np.round(pre))
        assert np.all((pre.astype(int) - y) % 2 == 0)


def test_deterministic():
    rng = np.random.default_rng(1)
    w = rng.normal(size=(8, 50))
    x = rng.normal(size=50)
    layer = oracle.RealLayer(w, rng.normal(size=8))
    a = oracle.fc_preactivation(layer, x)
    b = oracle.fc_preactivation(layer, x)
    assert a.tobytes() == b.tobytes()


def test_conv_matches_naive():
    rng = np.random.default_rng(2)
    w = rng.choice([-1, 1], (3, 2, 3, 3)).astype(float)
    img = rng.choice([-1, 1], (2, 6, 6)).astype(float)
    out = oracle.conv_preactivation(oracle.RealLayer(w), img)
    assert out.shape == (3, 4, 4)
    for n in range(3):
        for r in range(4):
            for c in range(4):
                assert out[n, r, c] == np.sum(w[n] * img[:, r:r + 3, c:c + 3])


def test_conv_padding_value():
    w = np.ones((1, 1, 3, 3))
    img = np.full((1, 2, 2), -1.0)
    plus = oracle.conv_preactivation(oracle.RealLayer(w, pad=1, pad_value=1), img)
    minus = oracle.conv_preactivation(oracle.RealLayer(w, pad=1, pad_value=-1), img)
    assert plus[0, 0, 0] == 5 - 4 and minus[0, 0, 0] == -9


def test_pool_examples():
    tile = np.array([[[3, 1], [2, 0]]])
    assert oracle.maxpool_int(tile, 2).tolist() == [[[3]]]
    assert oracle.minpool_int(tile, 2).tolist() == [[[0]]]
    assert oracle.avgpool_int(tile, 2).tolist() == [[[1.5]]]
    assert oracle.upper_median_pool(tile, 2).tolist() == [[[2]]]
    const = np.full((2, 4, 4), 7)
    assert np.all(oracle.maxpool_int(const, 2) == 7)


def test_pool_divisibility():
    with pytest.raises(DimensionError):
        oracle.maxpool_int(np.zeros((1, 5, 4)), 2)
