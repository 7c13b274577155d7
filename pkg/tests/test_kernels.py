import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bnnstream import oracle
from bnnstream.bitcore import BipolarBitVector, FixedPointTensor, InterleavedFrame, pack, unpack
from bnnstream.compiler import (
    BatchNormParams,
    TrainedLayer,
    compile_layer,
    compile_network,
    random_trained_network,
)
from bnnstream.errors import AccumulatorOverflowError, DimensionError
from bnnstream.folding import divisors, fold_of
from bnnstream.kernels import (
    MVTUConfig,
    PoolSpec,
    and_pool,
    conv_layer_execute,
    lower,
    majority_pool,
    mvtu_execute,
    mvtu_execute_fixedpoint_input,
    mvtu_execute_nonthresholded,
    or_pool,
    run_network,
    sliding_window,
)
from bnnstream.topology import conv, fc
from bnnstream.verify import check_lowering, check_pooling, random_batchnorm


def _fc_layer(rows, cols, seed=0):
    rng = np.random.default_rng(seed)
    w = rng.choice([-1, 1], (rows, cols))
    bn = random_batchnorm(rng, rows, cols)
    return TrainedLayer(fc(cols, rows), w, bn)


def _frame(bits):
    return InterleavedFrame.from_array(np.asarray(bits, dtype=bool))


def test_small_folded_instance_cycles():
    layer = compile_layer(_fc_layer(6, 4))
    _, cycles = mvtu_execute(layer, pack([1, -1, 1, 1]), MVTUConfig(3, 2))
    assert cycles == 4


def test_fully_parallel_one_cycle():
    layer = compile_layer(_fc_layer(8, 16, 1))
    v = BipolarBitVector.from_bits(np.arange(16) % 3 == 0)
    out1, c1 = mvtu_execute(layer, v, MVTUConfig.fully_parallel(layer))
    out2, c2 = mvtu_execute(layer, v, MVTUConfig(1, 1))
    assert c1 == 1 and c2 == 128 and out1 == out2


def test_256_layer_configs_match_oracle():
    trained = _fc_layer(256, 256, 2)
    layer = compile_layer(trained)
    rng = np.random.default_rng(3)
    x = rng.choice([-1, 1], 256)
    ref = oracle.fc_forward(oracle.real_layer(trained), x)
    outs = {mvtu_execute(layer, pack(x), MVTUConfig(p, s))[0] for p, s in [(1, 1), (16, 64), (256, 256)]}
    assert len(outs) == 1
    assert unpack(outs.pop()).tolist() == ref.tolist()


@settings(max_examples=30, deadline=None)
@given(st.sampled_from([12, 18, 20, 30]), st.sampled_from([8, 12, 70, 130]), st.integers(0, 1000))
def test_fold_invariance_property(rows, cols, seed):
    layer = compile_layer(_fc_layer(rows, cols, seed))
    v = BipolarBitVector.from_bits(np.random.default_rng(seed).integers(0, 2, cols).astype(bool))
    ref, _ = mvtu_execute(layer, v)
    for p in divisors(rows):
        for s in divisors(cols):
            out, cycles = mvtu_execute(layer, v, MVTUConfig(p, s))
            assert out == ref
            assert cycles == fold_of(rows, p, s, cols=cols)


def test_illegal_fold_rejected():
    layer = compile_layer(_fc_layer(6, 4))
    with pytest.raises(DimensionError):
        mvtu_execute(layer, pack([1] * 4), MVTUConfig(4, 2))
    with pytest.raises(DimensionError):
        mvtu_execute(layer, pack([1] * 5))


def test_accumulator_overflow_is_loud():
    layer = compile_layer(_fc_layer(4, 64))
    with pytest.raises(AccumulatorOverflowError):
        mvtu_execute(layer, BipolarBitVector.ones(64), MVTUConfig(1, 1, acc_bits=3))


def test_nonthresholded_examples():
    w = np.ones((1, 16))
    layer = compile_layer(TrainedLayer(fc(16, 1, thresholded=False), w))
    out, _ = mvtu_execute_nonthresholded(layer, BipolarBitVector.ones(16))
    assert out.values.tolist() == [16]
    out, _ = mvtu_execute_nonthresholded(layer, BipolarBitVector.zeros(16))
    assert out.values.tolist() == [-16]
    assert out.bits >= 16


def test_nonthresholded_random_matches_oracle():
    rng = np.random.default_rng(4)
    trained = TrainedLayer(fc(100, 10, thresholded=False), rng.choice([-1, 1], (10, 100)))
    layer = compile_layer(trained)
    x = rng.choice([-1, 1], 100)
    out, cycles = mvtu_execute_nonthresholded(layer, pack(x), MVTUConfig(5, 20))
    assert out.values.tolist() == oracle.fc_preactivation(oracle.real_layer(trained), x).tolist()
    assert cycles == 2 * 5


def _fixed_layer(tau):
    spec = fc(4, 1, input_bits=8, input_signed=True)
    bn = BatchNormParams([1.0], [float(tau)], [1.0], [0.0])
    return compile_layer(TrainedLayer(spec, np.ones((1, 4)), bn))


def test_fixedpoint_examples():
    x = FixedPointTensor(np.ones(4, dtype=int), 8)
    assert mvtu_execute_fixedpoint_input(_fixed_layer(3), x)[0].to_bits().tolist() == [True]
    assert mvtu_execute_fixedpoint_input(_fixed_layer(5), x)[0].to_bits().tolist() == [False]


def test_fixedpoint_random_matches_oracle():
    rng = np.random.default_rng(5)
    spec = fc(48, 12, input_bits=8)
    trained = TrainedLayer(spec, rng.choice([-1, 1], (12, 48)), random_batchnorm(rng, 12, 48 * 128))
    layer = compile_layer(trained)
    for _ in range(20):
        x = rng.integers(0, 256, 48)
        out, _ = mvtu_execute_fixedpoint_input(layer, FixedPointTensor(x, 8, signed=False), MVTUConfig(4, 6))
        ref = oracle.fc_forward(oracle.real_layer(trained), x)
        assert unpack(out).tolist() == ref.tolist()


def test_fixedpoint_input_range_checked():
    with pytest.raises(AccumulatorOverflowError):
        mvtu_execute_fixedpoint_input(_fixed_layer(0), FixedPointTensor(np.full(4, 300), 12))


def test_sliding_window_1x1_is_pixels():
    rng = np.random.default_rng(6)
    arr = rng.integers(0, 2, (3, 3, 2)).astype(bool)
    cols = sliding_window(_frame(arr), 1)
    assert [c.to_bits().tolist() for c in cols] == [arr[r, c].tolist() for r in range(3) for c in range(3)]


def test_sliding_window_3x3_on_4x4():
    img = np.arange(16).reshape(4, 4, 1) % 3 == 0
    cols = sliding_window(_frame(img), 3)
    assert len(cols) == 4 and all(len(c) == 9 for c in cols)
    assert cols[3].to_bits().tolist() == img[1:4, 1:4, 0].reshape(-1).tolist()


def test_sliding_window_padding():
    img = np.zeros((2, 2, 1), dtype=bool)
    plus = sliding_window(_frame(img), 3, "+1")
    minus = sliding_window(_frame(img), 3, "-1")
    assert len(plus) == 4
    assert sum(plus[0].to_bits()) == 5 and sum(minus[0].to_bits()) == 0
    with pytest.raises(DimensionError):
        sliding_window(_frame(img), 3)
    with pytest.raises(ValueError):
        sliding_window(_frame(img), 3, "0")


def test_lower_shapes():
    cols = lower(np.zeros((32, 32, 3), dtype=bool), 3)
    assert cols.shape == (900, 27)


def test_conv_1x1_passthrough():
    w = np.full((1, 3, 1, 1), -1)
    w[0, 1, 0, 0] = 1
    bn = BatchNormParams([1.0], [2.0], [1.0], [0.0])  # fires iff a >= 2
    layer = compile_layer(TrainedLayer(conv(3, 1, 4, kernel=1), w, bn))
    rng = np.random.default_rng(7)
    arr = rng.integers(0, 2, (4, 4, 3)).astype(bool)
    # the other channels (fixed at -1, weight -1) add +2, so a = 2 +/- 1
    arr[:, :, 0] = arr[:, :, 2] = False
    out, cycles = conv_layer_execute(layer, _frame(arr))
    assert np.array_equal(out.to_array()[:, :, 0], arr[:, :, 1])
    assert cycles == 16


def test_conv_cycles_fm_fn_fs():
    trained = TrainedLayer(conv(3, 8, 6), np.ones((8, 3, 3, 3)), BatchNormParams.identity(8))
    layer = compile_layer(trained)
    _, cycles = conv_layer_execute(layer, _frame(np.zeros((6, 6, 3))), MVTUConfig(2, 9))
    assert cycles == 16 * 4 * 3


def test_conv_matches_oracle():
    rng = np.random.default_rng(8)
    spec = conv(3, 5, 8, pad=1)
    trained = TrainedLayer(spec, rng.choice([-1, 1], (5, 3, 3, 3)), random_batchnorm(rng, 5, 27), pad_value=-1)
    layer = compile_layer(trained)
    arr = rng.integers(0, 2, (8, 8, 3)).astype(bool)
    out, _ = conv_layer_execute(layer, _frame(arr), MVTUConfig(5, 3))
    ref = oracle.conv_forward(oracle.real_layer(trained), np.where(arr, 1, -1).transpose(2, 0, 1))
    assert np.array_equal(np.where(out.to_array(), 1, -1).transpose(2, 0, 1), ref)


def test_pool_examples():
    f = _frame(np.array([[[0], [0]], [[1], [0]]]))
    assert or_pool(f).to_array().tolist() == [[[True]]]
    assert or_pool(_frame(np.zeros((4, 4, 2)))).to_array().sum() == 0
    assert and_pool(_frame(np.array([[[1], [1]], [[1], [0]]]))).to_array().tolist() == [[[False]]]
    assert majority_pool(_frame(np.array([[[1], [1]], [[0], [0]]]))).to_array().tolist() == [[[True]]]
    assert majority_pool(_frame(np.array([[[1], [0]], [[0], [0]]]))).to_array().tolist() == [[[False]]]


def test_pool_divisibility():
    with pytest.raises(DimensionError):
        or_pool(_frame(np.zeros((3, 4, 1))))
    with pytest.raises(DimensionError):
        PoolSpec(2, 4, 5, 1)


def test_majority_is_not_integer_average():
    # documented counterexample: one large pre-activation drags the mean over tau
    pre = np.array([[[0, 0], [0, 100]]])
    tau = 10
    bits = pre >= tau
    maj = majority_pool(_frame(bits.transpose(1, 2, 0))).to_array()[0, 0, 0]
    assert not maj and oracle.avgpool_int(pre, 2)[0, 0, 0] >= tau


def test_pooling_equivalences_small():
    assert check_pooling(seed=3, random_trials=20).passed


def test_lowering_equivalence_small():
    assert check_lowering(instances=30, seed=9).passed


def test_run_network_cycles_and_configs():
    from bnnstream.topology import sfc

    net = compile_network(random_trained_network(sfc(), 0), "sfc")
    x = BipolarBitVector.ones(784)
    run = run_network(net, x)
    assert run.cycles == [1, 1, 1, 1]
    cfgs = [MVTUConfig(16, 49), MVTUConfig(16, 16), MVTUConfig(16, 16), MVTUConfig(10, 16)]
    run2 = run_network(net, x, cfgs)
    assert run2.cycles == [16 * 16, 16 * 16, 16 * 16, 16]
    assert run2.result == run.result
    with pytest.raises(DimensionError):
        run_network(net, x, cfgs[:2])
