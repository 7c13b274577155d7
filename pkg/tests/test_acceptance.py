"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run ``pytest tests/test_acceptance.py -v`` to see the lines even without ``-s``.
"""

import time

import pytest

from bnnstream import verify
from bnnstream.cli import main


@pytest.fixture
def report(capsys):
    def emit(number: int, title: str, passed: bool, detail: str, seconds: float):
        with capsys.disabled():
            status = "PASS" if passed else "FAIL"
            print(f"\n{status} criterion {number:2d} {title}: {detail} [{seconds:.2f}s]")
        assert passed, detail

    return emit


def _combine(results):
    passed = all(r.passed for r in results)
    detail = "; ".join(f"{r.name}: {r.trials} trials, {r.mismatches} mismatches"
                       + (f" ({r.detail})" if r.detail else "") for r in results)
    return passed, detail, sum(r.seconds for r in results)


def test_criterion_01_threshold_theorem(report):
    r = verify.check_threshold_theorem(n=1000, seed=0, y_range=(4, 64))
    report(1, "threshold theorem", r.passed and r.mismatches == 0 and r.seconds < 5.0,
           f"{r.trials} parameter sets, {r.mismatches} mismatches, limit 5 s", r.seconds)


def test_criterion_02_xnor_popcount(report):
    ok, detail, secs = _combine([verify.check_xnor_exhaustive(12), verify.check_xnor_random(100_000, 1024)])
    report(2, "xnor-popcount dot product", ok, detail, secs)


def test_criterion_03_pooling(report):
    r = verify.check_pooling(seed=0, random_trials=200)
    report(3, "pooling equivalence", r.passed and r.mismatches == 0,
           f"{r.trials} cases, {r.mismatches} mismatches", r.seconds)


def test_criterion_04_lowering(report):
    r = verify.check_lowering(instances=200)
    report(4, "lowering equivalence", r.passed and r.trials == 200,
           f"{r.trials} instances, {r.mismatches} mismatches", r.seconds)


def test_criterion_05_fold_invariance(report):
    r = verify.check_fold_invariance(sizes=(96, 256))
    report(5, "fold invariance", r.passed, f"{r.trials} configurations, {r.mismatches} mismatches; {r.detail}",
           r.seconds)


def test_criterion_06_end_to_end(report):
    results = [verify.check_end_to_end("sfc", inputs=100, seed=0), verify.check_end_to_end("cnv", inputs=100, seed=0)]
    ok, detail, secs = _combine(results)
    report(6, "end-to-end equivalence", ok and secs < 60.0, detail + ", limit 60 s", secs)


def test_criterion_07_table1(report):
    r = verify.check_table1()
    report(7, "table 1 params and ops", r.passed, f"{r.trials - r.mismatches}/{r.trials} values exact", r.seconds)


def test_criterion_08_table2(report):
    r = verify.check_table2()
    report(8, "table 2 arithmetic intensity", r.passed, r.detail, r.seconds)


def test_criterion_09_table3(report):
    r = verify.check_table3()
    vals = verify.table3_values()
    shown = ", ".join(f"{name} {qty} {vals[name][qty]:.6g}" for name, qty, _, _ in verify.TABLE3)
    report(9, "table 3 timing", r.passed, shown + (f"; off: {r.detail}" if r.detail else ""), r.seconds)


def test_criterion_10_roofline(report):
    r = verify.check_roofline()
    report(10, "roofline", r.passed, r.detail, r.seconds)


def test_criterion_11_rate_balancing(report, capsys):
    t0 = time.perf_counter()
    code = main(["fold", "--topology", "fc:256,256", "--fps", "9000", "--clock", "200", "--format", "kv"])
    kv = dict(line.split("=", 1) for line in capsys.readouterr().out.splitlines() if "=" in line)
    fold = int(kv.get("layer0.fold", -1))
    achieved = float(kv.get("achieved_fps", 0))
    ratio = achieved / 9000
    ok = code == 0 and fold == 16384 and int(achieved) == 12207 and 1.25 <= ratio <= 1.40
    report(11, "rate balancing", ok, f"F={fold}, {achieved:.0f} FPS, x{ratio:.3f} over target",
           time.perf_counter() - t0)


def test_criterion_12_simulator(report):
    r = verify.check_pipeline_sim(vectors=50, frames=200)
    report(12, "simulator consistency", r.passed, r.detail, r.seconds)


def test_criterion_13_serialization(report):
    ok, detail, secs = _combine([verify.check_model_roundtrip(n=100), verify.check_model_corruption()])
    report(13, "serialization", ok, detail, secs)
