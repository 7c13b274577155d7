import pytest

from bnnstream.errors import DimensionError, InfeasibleTargetError
from bnnstream.folding import (
    FoldingConfig,
    LayerFold,
    ThroughputTarget,
    choose_fold,
    divisors,
    fold_of,
    legal_folds,
    rate_balance_report,
    solve_folding,
)
from bnnstream.topology import cnv, conv, fc_network, sfc


def test_fold_examples():
    assert fold_of(6, 3, 2, cols=4) == 4
    assert fold_of(6, 6, 4, cols=4) == 1
    assert fold_of(conv(3, 64, 32), 64, 27) == 900


def test_fold_rejects_non_divisors():
    with pytest.raises(DimensionError):
        fold_of(6, 4, 2, cols=4)
    with pytest.raises(DimensionError):
        LayerFold(6, 4, 3, 3)


def test_fold_is_multiplicative():
    for p in divisors(96):
        for s in divisors(64):
            f = LayerFold(96, 64, p, s, matrix_fold=7)
            assert f.total_fold == 7 * (96 // p) * (64 // s)
            if 96 % (2 * p) == 0:
                assert LayerFold(96, 64, 2 * p, s).neuron_fold * 2 == f.neuron_fold


def test_divisors():
    assert divisors(12) == [1, 2, 3, 4, 6, 12]
    assert divisors(1) == [1]


def test_rate_balancing_256():
    topo = fc_network(256, [], 256)
    cfg = solve_folding(topo, ThroughputTarget(9000, 200e6))
    assert cfg.folds == [16384]
    assert int(cfg.achieved_fps(200e6)) == 12207
    assert 1.25 <= cfg.achieved_fps(200e6) / 9000 <= 1.40


def test_one_frame_per_cycle_is_fully_parallel():
    topo = fc_network(64, [], 32)
    cfg = solve_folding(topo, ThroughputTarget(200e6, 200e6))
    assert (cfg.layers[0].pe, cfg.layers[0].simd) == (32, 64)


def test_sfc_fix_fps():
    cfg = solve_folding(sfc(), ThroughputTarget(9000, 200e6))
    assert cfg.folds[1:] == [16384, 16384, 2560]
    # layer 0 gets the largest legal fold under the budget; the max II matches the reference config
    assert cfg.folds[0] <= 16384
    assert cfg.max_ii == max([12544, 16384, 16384, 2560])
    assert round(cfg.achieved_fps(200e6)) == round(200e6 / 16384)


def test_achieved_meets_target():
    for fps in (1000, 9000, 50_000, 1e6, 1e7):
        cfg = solve_folding(sfc(), ThroughputTarget(fps, 200e6))
        assert cfg.achieved_fps(200e6) >= fps


def test_infeasible_reports_max_fps():
    with pytest.raises(InfeasibleTargetError) as e:
        solve_folding(cnv(), ThroughputTarget(1e6, 200e6))
    assert e.value.max_fps == pytest.approx(200e6 / 900)


def test_cap_relaxes_other_layers():
    cfg = solve_folding(cnv(), ThroughputTarget(24000, 200e6, caps={0: 9132}))
    assert cfg.bottleneck_bound
    assert cfg.max_ii == 9132
    assert all(f <= 9132 for f in cfg.folds)
    assert cfg.achieved_fps(200e6) == pytest.approx(200e6 / 9132)


def test_cap_index_validated():
    with pytest.raises(DimensionError):
        solve_folding(sfc(), ThroughputTarget(9000, caps={7: 100}))


def test_choose_fold_prefers_wide_simd():
    fold = choose_fold(256, 256, 16384)
    assert fold.total_fold == 16384 and fold.simd == 4 and fold.pe == 1
    opts = legal_folds(6, 4)
    assert opts[4] == (3, 2)


def test_balance_report_examples():
    assert [r.ratio for r in rate_balance_report([5, 5, 5])] == [1.0, 1.0, 1.0]
    assert [r.ratio for r in rate_balance_report([13, 16, 16, 16])] == [0.8125, 1, 1, 1]
    rows = rate_balance_report([8100, 7056, 5184, 7200, 5184, 4608, 8192, 8192, 1280])
    assert max(r.fold for r in rows) == 8192
    assert [r.flagged for r in rows][-1]


def test_config_roundtrip():
    cfg = FoldingConfig.for_topology(sfc(), [(16, 49), (16, 16), (16, 16), (10, 16)], {1: 300})
    assert FoldingConfig.from_dict(cfg.to_dict()) == cfg
    assert cfg.folds == [256, 256, 256, 16]
    assert cfg.initiation_intervals == [256, 300, 256, 16]
    with pytest.raises(DimensionError):
        FoldingConfig.for_topology(sfc(), [(1, 1)])
