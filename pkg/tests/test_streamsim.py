import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bnnstream.errors import DimensionError
from bnnstream.streamsim import (
    PipelineModel,
    Stage,
    analytic_latency,
    analytic_latency_cycles,
    analytic_throughput,
    token_simulate,
)
from bnnstream.verify import TABLE2_FOLDS, check_table3, table3_values

CLK = 200e6


def test_single_stage():
    m = PipelineModel.from_iis([100])
    assert analytic_throughput(m, CLK) == 2e6
    rep = token_simulate(m, CLK, 50)
    assert rep.fps == pytest.approx(2e6)
    assert rep.latency_cycles == 100


def test_bottleneck_and_busy():
    m = PipelineModel.from_iis([10, 20])
    assert analytic_throughput(m, 200e6) == 10e6
    rep = token_simulate(m, 200e6, 400)
    assert rep.fps == pytest.approx(10e6, rel=1e-9)
    assert rep.busy[1] == pytest.approx(1.0)
    assert rep.busy[0] == pytest.approx(0.5, abs=0.01)
    assert rep.blocked_stalls[0] > 0


def test_uniform_iis_fully_busy():
    rep = token_simulate(PipelineModel.from_iis([7] * 5), CLK, 200)
    assert all(b == pytest.approx(1.0) for b in rep.busy)
    assert sum(rep.blocked_stalls) == 0
    assert rep.latency_cycles == 35


def test_table3_sfc_fix():
    m = PipelineModel.from_iis(TABLE2_FOLDS["sfc-fix"])
    assert int(analytic_throughput(m, CLK)) == 12207
    assert analytic_latency_cycles(m) == 47872
    assert analytic_latency(m, CLK) * 1e6 == pytest.approx(239.36)


def test_table3_check_passes():
    assert check_table3().passed
    vals = table3_values()
    assert vals["cnv-max"]["latency_us"] == pytest.approx(274.98)
    assert vals["lfc-fix"]["latency_us"] == pytest.approx(281.6)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(1, 500), min_size=1, max_size=9))
def test_simulation_matches_analytic(iis):
    m = PipelineModel.from_iis(iis)
    rep = token_simulate(m, CLK, 200)
    assert abs(rep.fps - analytic_throughput(m, CLK)) / analytic_throughput(m, CLK) < 0.01
    assert rep.latency_cycles == analytic_latency_cycles(m)


def test_latency_with_depths():
    m = PipelineModel.from_iis([10, 5], depths=[30, 5])
    rep = token_simulate(m, CLK, 100)
    assert rep.latency_cycles == 35
    assert rep.fps == pytest.approx(CLK / 10, rel=0.01)


def test_larger_fifos_never_slower():
    rng = np.random.default_rng(0)
    for _ in range(20):
        iis = rng.integers(1, 50, 5).tolist()
        depths = [ii * int(rng.integers(1, 4)) for ii in iis]
        last = 0.0
        for cap in (1, 2, 4, 8):
            m = PipelineModel.from_iis(iis, depths=depths, fifo_capacity=[cap] * 4)
            fps = token_simulate(m, CLK, 200).fps
            assert fps >= last * (1 - 1e-12)
            last = fps


def test_invalid_models():
    with pytest.raises(DimensionError):
        PipelineModel.from_iis([5, 5], fifo_capacity=[0])
    with pytest.raises(DimensionError):
        PipelineModel.from_iis([5, 5, 5], fifo_capacity=[1])
    with pytest.raises(DimensionError):
        PipelineModel(())
    with pytest.raises(DimensionError):
        Stage("x", 0)
    with pytest.raises(ValueError):
        token_simulate(PipelineModel.from_iis([1]), CLK, 0)


def test_cnv_window_override():
    m = PipelineModel.from_iis(TABLE2_FOLDS["cnv-max"], overrides={0: 9132})
    rep = token_simulate(m, CLK, 200)
    assert abs(rep.fps - 21_900) / 21_900 < 0.01
    # override changes II but not the first-frame latency
    assert rep.latency_cycles == sum(TABLE2_FOLDS["cnv-max"])


def test_report_formats():
    rep = token_simulate(PipelineModel.from_iis([3, 6]), CLK, 20)
    kv = dict(line.split("=", 1) for line in rep.to_kv().splitlines())
    assert kv["frames"] == "20" and kv["latency_cycles"] == "9"
    assert {"stage0.busy", "stage1.blocked", "stage1.starved"} <= kv.keys()
    assert "throughput" in rep.to_text()
    assert "exit_times" not in rep.as_dict()


def test_deterministic():
    m = PipelineModel.from_iis([13, 16, 16, 16])
    a = token_simulate(m, CLK, 100)
    b = token_simulate(m, CLK, 100)
    assert a == b
