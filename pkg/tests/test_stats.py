import math
import random

import numpy as np
import pytest
from scipy import stats as scipy_stats

from foretune.errors import (
    DegenerateTestError,
    EmptySampleError,
    InsufficientSampleError,
    InvalidPValueError,
    ManifestMismatchError,
    UnalignedSamplesError,
)
from foretune.stats import (
    BUCKET_HIGH,
    BUCKET_LOW,
    ForecastRecord,
    bh_adjust,
    brier,
    build_report,
    descriptive,
    load_forecasts,
    save_forecasts,
    summary_from_moments,
    t_test,
    write_report,
)

import oracles


def records_from(pairs, tag="m"):
    return [
        ForecastRecord(question_id=f"q{i}", probability=p, outcome=o, model_tag=tag)
        for i, (p, o) in enumerate(pairs)
    ]


# descriptive statistics ----------------------------------------------------


def test_descriptive_matches_numpy():
    rng = random.Random(7)
    xs = [rng.uniform(0, 1) for _ in range(40)]
    mean, sd, sem, (lo, hi) = descriptive(xs)
    assert mean == pytest.approx(np.mean(xs), abs=1e-12)
    assert sd == pytest.approx(np.std(xs, ddof=1), abs=1e-12)
    assert sem == pytest.approx(np.std(xs, ddof=1) / math.sqrt(40), abs=1e-12)
    assert lo == pytest.approx(mean - 1.96 * sem, abs=1e-12)
    assert hi == pytest.approx(mean + 1.96 * sem, abs=1e-12)


def test_descriptive_needs_two_values():
    with pytest.raises(InsufficientSampleError):
        descriptive([0.5])


def test_summary_from_moments():
    sem, (lo, hi) = summary_from_moments(0.2, 0.19, 2300)
    assert sem == pytest.approx(0.19 / math.sqrt(2300), abs=1e-15)
    assert lo == pytest.approx(0.2 - 1.96 * sem, abs=1e-15)
    assert hi == pytest.approx(0.2 + 1.96 * sem, abs=1e-15)


# Brier scoring --------------------------------------------------------------


def test_uniform_ignorance_is_exactly_a_quarter():
    summary = brier(records_from([(0.5, 0), (0.5, 1), (0.5, 1), (0.5, 0)]))
    assert summary.mean == 0.25


def test_brier_hand_example():
    summary = brier(records_from([(0.8, 1), (0.3, 0), (0.9, 0)]))
    expected = (0.2**2 + 0.3**2 + 0.9**2) / 3
    assert summary.mean == pytest.approx(expected, abs=1e-15)


def test_bucket_fractions_are_strict():
    # 0.25 squared error is neither above 0.5 nor below 0.05
    summary = brier(
        records_from([(0.5, 0), (0.0, 1), (0.9, 1), (1.0, 1), (0.5, 1)])
    )
    assert BUCKET_HIGH == 0.5 and BUCKET_LOW == 0.05
    assert summary.frac_above_half == pytest.approx(1 / 5)
    assert summary.frac_below_0_05 == pytest.approx(2 / 5)


def test_brier_empty_raises():
    with pytest.raises(EmptySampleError):
        brier([])


def test_forecast_record_validation():
    with pytest.raises(ValueError):
        ForecastRecord("q", 1.5, 1, "m")
    with pytest.raises(ValueError):
        ForecastRecord("q", 0.5, 2, "m")


# t-tests ---------------------------------------------------------------------


def test_welch_matches_scipy():
    rng = random.Random(11)
    for _ in range(25):
        a = [rng.gauss(0.2, 0.08) for _ in range(rng.randint(5, 60))]
        b = [rng.gauss(0.23, 0.12) for _ in range(rng.randint(5, 60))]
        t, p = t_test(a, b)
        ref = scipy_stats.ttest_ind(a, b, equal_var=False)
        assert t == pytest.approx(ref.statistic, abs=1e-10)
        assert p == pytest.approx(ref.pvalue, abs=1e-10)


def test_pooled_matches_scipy():
    rng = random.Random(13)
    a = [rng.gauss(0, 1) for _ in range(12)]
    b = [rng.gauss(0.4, 1) for _ in range(17)]
    t, p = t_test(a, b, equal_var=True)
    ref = scipy_stats.ttest_ind(a, b, equal_var=True)
    assert t == pytest.approx(ref.statistic, abs=1e-12)
    assert p == pytest.approx(ref.pvalue, abs=1e-12)


def test_welch_against_independent_oracle():
    rng = random.Random(17)
    for _ in range(20):
        a = [rng.gauss(0.2, 0.05) for _ in range(rng.randint(4, 40))]
        b = [rng.gauss(0.21, 0.09) for _ in range(rng.randint(4, 40))]
        t, p = t_test(a, b)
        t_ref, _, p_ref = oracles.welch_from_samples(a, b)
        assert abs(t - t_ref) < 1e-9
        assert abs(p - p_ref) < 1e-9


def test_t_test_swapping_samples_negates_t():
    a = [0.1, 0.2, 0.3, 0.15]
    b = [0.3, 0.4, 0.35]
    t_ab, p_ab = t_test(a, b)
    t_ba, p_ba = t_test(b, a)
    assert t_ab == pytest.approx(-t_ba, abs=1e-15)
    assert p_ab == pytest.approx(p_ba, abs=1e-15)


def test_t_test_degenerate_identical_constants():
    with pytest.raises(DegenerateTestError):
        t_test([0.3, 0.3, 0.3], [0.3, 0.3])


def test_t_test_zero_variance_different_means():
    # binary-exact constants so the sample variances are exactly zero
    t, p = t_test([0.5, 0.5, 0.5], [0.25, 0.25, 0.25])
    assert math.isinf(t) and t > 0
    assert p == 0.0


def test_t_test_sample_size_floor():
    with pytest.raises(InsufficientSampleError):
        t_test([0.1], [0.2, 0.3])


# Benjamini-Hochberg ----------------------------------------------------------


def bh_reference(ps):
    # independent brute-force restatement of the step-up rule
    m = len(ps)
    out = []
    for i, p in enumerate(ps):
        rank_i = sorted(ps).index(p) + 1
        candidates = []
        for q in ps:
            rank_q = sorted(ps).index(q) + 1
            if rank_q >= rank_i:
                candidates.append(min(1.0, m / rank_q * q))
        out.append(min(candidates))
    return out


def test_bh_adjust_worked_example():
    ps = [0.01, 0.04, 0.03, 0.005]
    got = bh_adjust(ps)
    assert got == pytest.approx([0.02, 0.04, 0.04, 0.02], abs=1e-12)


def test_bh_adjust_matches_brute_force():
    rng = random.Random(3)
    for _ in range(50):
        ps = [round(rng.random(), 3) for _ in range(rng.randint(1, 12))]
        assert bh_adjust(ps) == pytest.approx(bh_reference(ps), abs=1e-12)


def test_bh_adjust_preserves_input_order():
    ps = [0.9, 0.001, 0.5]
    got = bh_adjust(ps)
    assert got[1] < got[2] < got[0]


def test_bh_adjust_caps_at_one():
    assert max(bh_adjust([0.99, 0.98, 0.97])) <= 1.0


def test_bh_adjust_rejects_bad_p():
    with pytest.raises(InvalidPValueError):
        bh_adjust([0.5, 1.2])
    with pytest.raises(InvalidPValueError):
        bh_adjust([float("nan")])


def test_bh_adjust_never_decreases_p():
    rng = random.Random(5)
    ps = [rng.random() for _ in range(9)]
    for raw, adj in zip(ps, bh_adjust(ps)):
        assert adj >= raw - 1e-15


# persistence and reports ------------------------------------------------------


def test_save_load_forecasts_round_trip(tmp_path):
    records = records_from([(0.8, 1), (0.2, 0)], tag="alpha")
    path = tmp_path / "forecasts.jsonl"
    save_forecasts(records, path, split="test")
    assert load_forecasts(path) == records


def test_load_forecasts_verifies_manifest(tmp_path):
    records = records_from([(0.8, 1)], tag="alpha")
    path = tmp_path / "forecasts.jsonl"
    save_forecasts(records, path)
    path.write_text(path.read_text().replace("0.8", "0.9"), encoding="utf-8")
    with pytest.raises(ManifestMismatchError):
        load_forecasts(path)


def test_build_report_requires_aligned_question_sets():
    a = records_from([(0.5, 1), (0.6, 0)], tag="a")
    b = records_from([(0.5, 1)], tag="b")
    with pytest.raises(UnalignedSamplesError):
        build_report({"a": a, "b": b})


def test_build_report_pairwise_count_and_adjustment():
    base = [(0.8, 1), (0.3, 0), (0.6, 1), (0.2, 0)]
    models = {
        "a": records_from(base, tag="a"),
        "b": records_from([(p * 0.9, o) for p, o in base], tag="b"),
        "c": records_from([(min(1.0, p * 1.1), o) for p, o in base], tag="c"),
    }
    report = build_report(models)
    assert len(report.pairwise) == 3
    raw = [pw.p_value for pw in report.pairwise]
    assert [pw.p_adjusted for pw in report.pairwise] == pytest.approx(
        bh_adjust(raw), abs=1e-15
    )


def test_write_report_outputs(tmp_path):
    models = {
        "a": records_from([(0.8, 1), (0.3, 0), (0.55, 1)], tag="a"),
        "b": records_from([(0.7, 1), (0.4, 0), (0.5, 1)], tag="b"),
    }
    write_report(models, tmp_path / "eval")
    names = sorted(p.name for p in (tmp_path / "eval").iterdir())
    assert "report.jsonl" in names
    assert "report.txt" in names
    assert "scores_a.csv" in names and "scores_b.csv" in names
    text = (tmp_path / "eval" / "report.txt").read_text()
    assert "a vs b" in text
