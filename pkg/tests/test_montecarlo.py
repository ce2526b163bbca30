import math

import numpy as np
import polars as pl
import pytest

from pinball.enhancement import load_pattern
from pinball.errors import FitError, InvalidArgumentError
from pinball.montecarlo import (
    CORE_RADIUS,
    ESTIMATE_SCHEMA,
    compare_enhanced,
    compare_frame,
    estimate_event,
    estimate_series,
    estimates_frame,
    event_extent,
    fit_decay,
    fit_frame,
    verification_frame,
    verify_theorem,
    wilson_interval,
    write_csv,
)
from pinball.settings import configure


@pytest.fixture(scope="module")
def pattern():
    return load_pattern("default", validate=False)


def test_event_extent(pattern):
    assert event_extent("E", 5) == 6
    assert event_extent("A", 5) == 6
    assert event_extent("Aprime", 5) == 11
    assert event_extent("Acirc4", 5) == 11
    assert event_extent("Aprime", 5, pattern) == 11 + 7
    with pytest.raises(InvalidArgumentError):
        event_extent("B", 5)
    with pytest.raises(InvalidArgumentError):
        event_extent("Acirc", 1)


def test_wilson_interval():
    lo, hi = wilson_interval(0, 10)
    assert lo == 0.0 and 0 < hi < 0.35
    lo, hi = wilson_interval(10, 10)
    assert hi == 1.0 and 0.65 < lo < 1.0
    lo, hi = wilson_interval(30, 100)
    assert lo < 0.3 < hi
    with pytest.raises(InvalidArgumentError):
        wilson_interval(1, 0)


def test_wilson_coverage():
    rng = np.random.default_rng(2024)
    q, N = 0.3, 200
    hits = rng.binomial(N, q, size=1000)
    covered = 0
    for k in hits:
        lo, hi = wilson_interval(int(k), N)
        covered += lo <= q <= hi
    assert 0.93 <= covered / 1000 <= 0.97


def test_estimate_trivial_cases():
    r = estimate_event("Aprime", 0.0, 8, 10, seed=1)
    assert r.estimate == 0.0 and r.hits == 0 and r.trials == 10
    assert r.ci_lo == 0.0
    assert r.walltime_ms is None
    r = estimate_event("Aprime", 1.0, 8, 10, seed=1)
    assert r.estimate == 1.0


def test_estimate_closure_event():
    # p = 1 の軌道は半径 2 の四角形
    assert estimate_event("E", 1.0, 2, 5, seed=3).estimate == 1.0
    assert estimate_event("E", 1.0, 1, 5, seed=3).estimate == 0.0


def test_estimate_argument_checks(pattern):
    with pytest.raises(InvalidArgumentError):
        estimate_event("A", 1.2, 4, 10, seed=1)
    with pytest.raises(InvalidArgumentError):
        estimate_event("A", 0.5, 4, 0, seed=1)
    with pytest.raises(InvalidArgumentError):
        estimate_event("A", 0.5, 4, 10, seed=1, enhanced=True)
    with pytest.raises(InvalidArgumentError):
        estimate_event("A", 0.5, 4, 10, seed=-1)
    with pytest.raises(InvalidArgumentError):
        compare_enhanced(0.5, 4, 10, seed=1 << 64, pattern=pattern)


def test_enhanced_label(pattern):
    r = estimate_event("Aprime", 0.5, 4, 8, seed=2, enhanced=True, pattern=pattern)
    assert r.event == "Aprime:enhanced"


def test_results_independent_of_workers(tmp_path):
    configure(["montecarlo.chunk_size=3"])
    one = estimate_series("A", [0.4, 0.6], [4], 20, seed=9, workers=1)
    two = estimate_series("A", [0.4, 0.6], [4], 20, seed=9, workers=2)
    a = write_csv(estimates_frame(one), tmp_path / "one.csv").read_bytes()
    b = write_csv(estimates_frame(two), tmp_path / "two.csv").read_bytes()
    assert a == b


def test_coupled_sweep_is_monotone():
    reports = estimate_series("Aprime", [0.3, 0.5, 0.7], [4], 40, seed=5)
    hits = [r.hits for r in reports]
    assert hits == sorted(hits)


def test_closure_series_is_monotone_with_positive_rate():
    # サンプル i の一様乱数は範囲によらないので、n を増やすと命中は減らない
    reports = estimate_series("E", [0.6], [2, 3, 4, 5], 200, seed=11)
    hits = [r.hits for r in reports]
    assert hits == sorted(hits)
    assert hits[0] < hits[-1] < 200
    fit = fit_decay([(r.n, r) for r in reports])
    assert not fit.degenerate
    assert fit.c_hat > 0


def test_compare_enhanced(pattern):
    r = compare_enhanced(0.5, 4, 20, seed=1, pattern=pattern)
    assert r.implication_violations == 0
    assert r.gap >= 0
    assert r.gap_lo <= r.gap <= r.gap_hi
    assert r.both + r.plain_only + r.enhanced_only + r.neither == 20
    assert r.enhanced.hits >= r.plain.hits
    frame = compare_frame([r])
    assert frame.columns[:4] == ["p", "n", "N", "plain_hits"]


def test_verify_extremes(pattern):
    for p in (0.0, 1.0):
        records, summary = verify_theorem(p, 6, 3, seed=4, pattern=pattern, core_radius=5)
        assert summary.all_ok
        assert summary.detour_radius == 3
        assert summary.extent == 2 * 6 + 2 * 3 + 3 + 2
        assert [r.sample for r in records] == [0, 1, 2]
        assert summary.circuits == (3 if p == 1.0 else 0)
        assert summary.conditional_pass_rate == 1.0


def test_verify_supercritical_replay(pattern):
    records, summary = verify_theorem(0.7, 12, 40, seed=5, pattern=pattern, core_radius=5)
    assert summary.circuits > 0
    assert summary.conditional_pass_rate == 1.0
    assert summary.hybrid_violations == 0
    assert summary.all_ok
    for r in records:
        if r.circuit:
            assert r.closed and r.contained and r.hybrid_contained


def test_verify_requires_n_above_core(pattern):
    assert CORE_RADIUS == 100
    with pytest.raises(InvalidArgumentError):
        verify_theorem(0.5, 50, 2, seed=1, pattern=pattern)
    with pytest.raises(InvalidArgumentError):
        verify_theorem(0.5, CORE_RADIUS, 2, seed=1, pattern=pattern)


def test_verification_frame(pattern):
    records, _ = verify_theorem(1.0, 6, 2, seed=4, pattern=pattern, core_radius=5)
    frame = verification_frame(records)
    assert frame.columns == ["sample", "circuit", "closed", "contained", "hybrid_contained", "pass"]
    assert frame["pass"].to_list() == [True, True]


@pytest.mark.slow
def test_verify_default_core(pattern):
    for p in (0.0, 1.0):
        _, summary = verify_theorem(p, 101, 3, seed=4, pattern=pattern)
        assert summary.all_ok


@pytest.mark.slow
def test_verify_proof_replay(pattern):
    _, summary = verify_theorem(0.5, 128, 50, seed=3, pattern=pattern, workers=4)
    assert summary.conditional_pass_rate == 1.0
    assert summary.all_ok


@pytest.mark.slow
def test_reference_rectangle_crossing():
    r = estimate_event("Aprime", 0.6, 32, 10_000, seed=1, workers=4)
    assert r.estimate >= 0.99


@pytest.mark.slow
def test_reference_enhanced_comparison(pattern):
    r = compare_enhanced(0.5, 64, 10_000, seed=1, pattern=pattern, workers=4)
    assert r.implication_violations == 0
    assert r.enhanced.estimate >= r.plain.estimate


@pytest.mark.slow
def test_reference_closure_series():
    reports = estimate_series("E", [0.6], [8, 16, 32, 64], 10_000, seed=1, workers=4)
    estimates = [r.estimate for r in reports]
    assert estimates == sorted(estimates)
    assert fit_decay([(r.n, r) for r in reports]).c_hat > 0


def test_fit_decay_exact():
    series = [(n, 1 - math.exp(-0.2 * n)) for n in (8, 16, 32)]
    fit = fit_decay(series)
    assert fit.c_hat == pytest.approx(0.2, abs=1e-9)
    assert fit.r2 == pytest.approx(1.0)
    assert fit.points_used == 3
    assert not fit.degenerate


def test_fit_decay_needs_points():
    with pytest.raises(FitError):
        fit_decay([(8, 0.5), (16, 0.7)])


def test_fit_decay_degenerate():
    fit = fit_decay([(8, 0.5), (16, 1.0), (32, 1.0)])
    assert fit.degenerate
    assert math.isnan(fit.c_hat)
    assert fit.dropped == (16, 32)


def test_fit_frame():
    fit = fit_decay([(n, 1 - math.exp(-0.1 * n)) for n in (4, 8, 12)])
    frame = fit_frame(fit)
    assert frame.columns == ["c_hat", "intercept", "r2", "points_used"]


def test_estimate_csv(tmp_path):
    r = estimate_event("Aprime", 0.0, 8, 10, seed=1)
    path = write_csv(estimates_frame([r]), tmp_path / "out" / "est.csv")
    lines = path.read_text().splitlines()
    assert lines[0] == ",".join(ESTIMATE_SCHEMA)
    assert lines[1].endswith(",")
    frame = pl.read_csv(path)
    assert frame["estimate"][0] == 0.0
    assert frame["N"][0] == 10
