"""Forecast scoring and evaluation statistics.

Scores probabilistic forecasts against binary outcomes with the mean squared
error (Brier) rule, summarizes per-model accuracy, runs pairwise Welch t-tests
over per-question scores, applies the Benjamini-Hochberg step-up correction
across the family of comparisons, and writes a deterministic evaluation
report with plot-ready per-question score files.

Conventions, fixed here and relied on by the report format:
  - sample SD uses the n-1 denominator; sem = sd / sqrt(n)
  - 95% CI uses the normal 1.96 multiplier (indistinguishable from the
    t critical value at the sample sizes this pipeline produces)
  - accuracy buckets use strict inequalities: a squared error is "very
    inaccurate" when > 0.5 and "very accurate" when < 0.05
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .errors import (
    DegenerateTestError,
    EmptySampleError,
    InsufficientSampleError,
    InvalidPValueError,
    UnalignedSamplesError,
)
from .special import student_t_two_sided_p
from .storage import (
    atomic_write_text,
    dumps_canonical,
    read_jsonl,
    verify_manifest,
    write_jsonl,
    write_manifest,
)

CI_MULTIPLIER = 1.96
BUCKET_HIGH = 0.5
BUCKET_LOW = 0.05


@dataclass(frozen=True)
class ForecastRecord:
    question_id: str
    probability: float
    outcome: int
    model_tag: str

    def __post_init__(self):
        if not 0.0 <= self.probability <= 1.0:
            raise ValueError(f"probability {self.probability} outside [0, 1]")
        if self.outcome not in (0, 1):
            raise ValueError(f"outcome {self.outcome!r} is not binary")

    def squared_error(self) -> float:
        return (self.probability - self.outcome) ** 2


@dataclass(frozen=True)
class BrierSummary:
    n: int
    mean: float
    sd: float
    sem: float
    ci95: tuple[float, float]
    frac_above_half: float
    frac_below_0_05: float
    scores: tuple[float, ...] = field(repr=False)  # per-question squared errors

    def to_record(self) -> dict:
        return {
            "n": self.n,
            "mean": self.mean,
            "sd": self.sd,
            "sem": self.sem,
            "ci95": list(self.ci95),
            "frac_above_half": self.frac_above_half,
            "frac_below_0_05": self.frac_below_0_05,
        }


@dataclass(frozen=True)
class PairwiseTest:
    model_a: str
    model_b: str
    t_statistic: float
    p_value: float
    p_adjusted: float


def descriptive(scores: Sequence[float]) -> tuple[float, float, float, tuple[float, float]]:
    """(mean, sample sd, sem, 95% CI) of a sample; requires n >= 2."""
    n = len(scores)
    if n < 2:
        raise InsufficientSampleError(f"need at least 2 values, got {n}")
    mean = math.fsum(scores) / n
    var = math.fsum((s - mean) ** 2 for s in scores) / (n - 1)
    sd = math.sqrt(var)
    sem = sd / math.sqrt(n)
    half = CI_MULTIPLIER * sem
    return mean, sd, sem, (mean - half, mean + half)


def summary_from_moments(
    mean: float, sd: float, n: int
) -> tuple[float, tuple[float, float]]:
    """(sem, ci95) recomputed from already-published (mean, sd, n)."""
    if n < 2:
        raise InsufficientSampleError(f"need n >= 2, got {n}")
    sem = sd / math.sqrt(n)
    half = CI_MULTIPLIER * sem
    return sem, (mean - half, mean + half)


def brier(records: Sequence[ForecastRecord]) -> BrierSummary:
    """Mean squared error of forecasts against outcomes, with descriptive
    statistics and the two accuracy-bucket fractions."""
    if not records:
        raise EmptySampleError("no forecast records to score")
    scores = tuple(r.squared_error() for r in records)
    n = len(scores)
    mean = math.fsum(scores) / n
    if n >= 2:
        _, sd, sem, ci = descriptive(scores)
    else:
        sd, sem, ci = 0.0, 0.0, (mean, mean)
    above = sum(1 for s in scores if s > BUCKET_HIGH) / n
    below = sum(1 for s in scores if s < BUCKET_LOW) / n
    return BrierSummary(
        n=n, mean=mean, sd=sd, sem=sem, ci95=ci,
        frac_above_half=above, frac_below_0_05=below, scores=scores,
    )


def t_test(a: Sequence[float], b: Sequence[float], equal_var: bool = False) -> tuple[float, float]:
    """Independent two-sample t-test, two-sided.

    Welch's form (unpooled variances, Welch-Satterthwaite degrees of freedom)
    by default; ``equal_var=True`` switches to the pooled-variance form for
    sensitivity checks.
    """
    na, nb = len(a), len(b)
    if na < 2 or nb < 2:
        raise InsufficientSampleError("each sample needs n >= 2")
    ma = math.fsum(a) / na
    mb = math.fsum(b) / nb
    va = math.fsum((x - ma) ** 2 for x in a) / (na - 1)
    vb = math.fsum((x - mb) ** 2 for x in b) / (nb - 1)
    if equal_var:
        pooled = ((na - 1) * va + (nb - 1) * vb) / (na + nb - 2)
        se = math.sqrt(pooled * (1.0 / na + 1.0 / nb))
        df = float(na + nb - 2)
    else:
        se = math.sqrt(va / na + vb / nb)
        if va > 0.0 or vb > 0.0:
            df = (va / na + vb / nb) ** 2 / (
                (va / na) ** 2 / (na - 1) + (vb / nb) ** 2 / (nb - 1)
            )
        else:
            df = float(na + nb - 2)
    diff = ma - mb
    if se == 0.0:
        if diff == 0.0:
            raise DegenerateTestError("zero variance in both samples with equal means")
        return math.copysign(math.inf, diff), 0.0
    t = diff / se
    return t, student_t_two_sided_p(t, df)


def bh_adjust(p_values: Sequence[float]) -> list[float]:
    """Benjamini-Hochberg step-up adjustment.

    Sorts ascending, takes adjusted_(i) = min over j >= i of (m/j) * p_(j)
    capped at 1, and returns the adjusted values in the original input order.
    """
    for p in p_values:
        if not 0.0 <= p <= 1.0 or math.isnan(p):
            raise InvalidPValueError(f"p-value {p!r} outside [0, 1]")
    m = len(p_values)
    order = sorted(range(m), key=lambda i: p_values[i])
    adjusted = [0.0] * m
    running = 1.0
    for rank in range(m, 0, -1):
        i = order[rank - 1]
        running = min(running, m / rank * p_values[i])
        adjusted[i] = running
    return adjusted


def save_forecasts(records: Sequence[ForecastRecord], path: str | Path, **params) -> dict:
    rows = [
        {
            "question_id": r.question_id,
            "probability": r.probability,
            "outcome": r.outcome,
            "model_tag": r.model_tag,
        }
        for r in sorted(records, key=lambda r: r.question_id)
    ]
    count = write_jsonl(path, rows)
    return write_manifest(path, count=count, **params)


def load_forecasts(path: str | Path, verify: bool = True) -> list[ForecastRecord]:
    if verify:
        verify_manifest(path)
    return [
        ForecastRecord(
            question_id=r["question_id"],
            probability=r["probability"],
            outcome=r["outcome"],
            model_tag=r["model_tag"],
        )
        for r in read_jsonl(path)
    ]


@dataclass(frozen=True)
class EvalReport:
    summaries: dict[str, BrierSummary]
    pairwise: list[PairwiseTest]


def build_report(models: Mapping[str, Sequence[ForecastRecord]]) -> EvalReport:
    """Per-model Brier summaries plus all pairwise Welch tests with
    BH-adjusted p-values.  Pairwise tests require every tag to cover the
    same question ids; single-model reports skip the pairwise section."""
    if not models:
        raise EmptySampleError("no model tags to report on")
    tags = sorted(models)
    id_sets = {tag: frozenset(r.question_id for r in models[tag]) for tag in tags}
    reference_tag = tags[0]
    for tag in tags[1:]:
        if id_sets[tag] != id_sets[reference_tag]:
            raise UnalignedSamplesError(
                f"question sets differ between {reference_tag!r} and {tag!r}"
            )
    summaries = {tag: brier(models[tag]) for tag in tags}
    pairwise: list[PairwiseTest] = []
    pairs = list(combinations(tags, 2))
    if pairs:
        raw = []
        stats = []
        for a, b in pairs:
            t, p = t_test(summaries[a].scores, summaries[b].scores)
            stats.append((a, b, t))
            raw.append(p)
        adjusted = bh_adjust(raw)
        for (a, b, t), p, padj in zip(stats, raw, adjusted):
            pairwise.append(PairwiseTest(a, b, t, p, padj))
    return EvalReport(summaries=summaries, pairwise=pairwise)


def _format_summary_table(report: EvalReport) -> str:
    lines = [
        "model          n      mean     sd       sem      ci95                >0.5     <0.05",
    ]
    for tag in sorted(report.summaries):
        s = report.summaries[tag]
        lines.append(
            f"{tag:<14s} {s.n:<6d} {s.mean:<8.4f} {s.sd:<8.4f} {s.sem:<8.5f} "
            f"[{s.ci95[0]:.4f}, {s.ci95[1]:.4f}]  {s.frac_above_half:<8.4f} {s.frac_below_0_05:.4f}"
        )
    if report.pairwise:
        lines.append("")
        lines.append("pairwise (Welch two-sided, BH-adjusted)")
        for pw in report.pairwise:
            lines.append(
                f"{pw.model_a} vs {pw.model_b}: t={pw.t_statistic:.4f} "
                f"p={pw.p_value:.6g} adj={pw.p_adjusted:.6g}"
            )
    return "\n".join(lines) + "\n"


def write_report(
    models: Mapping[str, Sequence[ForecastRecord]], out_dir: str | Path
) -> EvalReport:
    """Build the report and write it to ``out_dir``:

    - report.jsonl: one summary line per model tag, one line per pairwise test
    - report.txt:   human-readable summary
    - scores_<tag>.csv: per-question squared errors for external plotting
    """
    report = build_report(models)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    lines = []
    for tag in sorted(report.summaries):
        rec = {"type": "summary", "model_tag": tag}
        rec.update(report.summaries[tag].to_record())
        lines.append(dumps_canonical(rec))
    for pw in report.pairwise:
        lines.append(
            dumps_canonical(
                {
                    "type": "pairwise",
                    "model_a": pw.model_a,
                    "model_b": pw.model_b,
                    "t_statistic": pw.t_statistic,
                    "p_value": pw.p_value,
                    "p_adjusted": pw.p_adjusted,
                }
            )
        )
    report_path = out_dir / "report.jsonl"
    atomic_write_text(report_path, "".join(line + "\n" for line in lines))
    write_manifest(report_path, count=len(lines))
    atomic_write_text(out_dir / "report.txt", _format_summary_table(report))

    for tag, records in sorted(models.items()):
        rows = ["question_id,probability,outcome,squared_error"]
        for r in sorted(records, key=lambda r: r.question_id):
            rows.append(f"{r.question_id},{r.probability!r},{r.outcome},{r.squared_error()!r}")
        atomic_write_text(out_dir / f"scores_{tag}.csv", "\n".join(rows) + "\n")
    return report
