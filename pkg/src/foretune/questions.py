"""Resolved-question ingestion, validation, partitioning, and storage.

Raw question records arrive as JSONL (or CSV via the adapter), are validated
into :class:`Question` values, deduplicated on ``question_id``, partitioned
into train/test windows by resolution date, and persisted as canonical JSONL
with a sidecar manifest so downstream stages can verify what they read.
"""

from __future__ import annotations

import csv
import datetime as dt
from dataclasses import dataclass, asdict
from pathlib import Path
from typing import Iterable, Iterator

from .errors import SchemaError
from .storage import read_jsonl, write_jsonl, write_manifest, verify_manifest

REQUIRED_FIELDS = (
    "question_id",
    "title",
    "background",
    "resolution_criteria",
    "resolution_date",
    "outcome",
)

# Default partition windows, inclusive on both ends.
TRAIN_WINDOW = (dt.date(2024, 7, 1), dt.date(2024, 12, 15))
TEST_WINDOW = (dt.date(2024, 12, 25), dt.date(2025, 1, 23))


@dataclass(frozen=True)
class Question:
    question_id: str
    title: str
    background: str
    resolution_criteria: str
    resolution_date: dt.date
    outcome: int
    source: str = ""

    def to_record(self) -> dict:
        rec = asdict(self)
        rec["resolution_date"] = self.resolution_date.isoformat()
        return rec


@dataclass(frozen=True)
class RejectedRecord:
    index: int
    reason: str
    record: dict


@dataclass(frozen=True)
class IngestResult:
    questions: list[Question]
    rejected: list[RejectedRecord]


def _parse_date(value) -> dt.date:
    if isinstance(value, dt.date):
        return value
    return dt.date.fromisoformat(str(value))


def validate_record(record: dict) -> Question:
    """Validate one raw record; raises SchemaError naming the first problem."""
    for name in REQUIRED_FIELDS:
        if name not in record or record[name] in (None, ""):
            raise SchemaError(f"missing field {name!r}")
    try:
        date = _parse_date(record["resolution_date"])
    except (TypeError, ValueError):
        raise SchemaError(
            f"resolution_date {record['resolution_date']!r} is not an ISO date"
        ) from None
    outcome = record["outcome"]
    if isinstance(outcome, bool) or outcome not in (0, 1):
        raise SchemaError(f"outcome {outcome!r} is not 0 or 1")
    return Question(
        question_id=str(record["question_id"]),
        title=str(record["title"]),
        background=str(record["background"]),
        resolution_criteria=str(record["resolution_criteria"]),
        resolution_date=date,
        outcome=int(outcome),
        source=str(record.get("source", "")),
    )


def ingest(records: Iterable[dict]) -> IngestResult:
    """Validate and deduplicate raw records.

    Invalid records and duplicate question_ids are collected with reasons
    rather than aborting the run; the first occurrence of an id wins.
    """
    questions: list[Question] = []
    rejected: list[RejectedRecord] = []
    seen: set[str] = set()
    for index, record in enumerate(records):
        try:
            q = validate_record(record)
        except SchemaError as exc:
            rejected.append(RejectedRecord(index=index, reason=str(exc), record=record))
            continue
        if q.question_id in seen:
            rejected.append(
                RejectedRecord(
                    index=index,
                    reason=f"duplicate question_id {q.question_id!r}",
                    record=record,
                )
            )
            continue
        seen.add(q.question_id)
        questions.append(q)
    return IngestResult(questions=questions, rejected=rejected)


def partition(
    questions: Iterable[Question],
    train_window: tuple[dt.date, dt.date] = TRAIN_WINDOW,
    test_window: tuple[dt.date, dt.date] = TEST_WINDOW,
) -> tuple[list[Question], list[Question], list[Question]]:
    """Split questions into (train, test, unassigned) by resolution date.

    Windows are inclusive on both ends and must not overlap.
    """
    if train_window[0] > train_window[1] or test_window[0] > test_window[1]:
        raise ValueError("window start must not be after window end")
    if train_window[0] <= test_window[1] and test_window[0] <= train_window[1]:
        raise ValueError("train and test windows overlap")
    train: list[Question] = []
    test: list[Question] = []
    unassigned: list[Question] = []
    for q in questions:
        if train_window[0] <= q.resolution_date <= train_window[1]:
            train.append(q)
        elif test_window[0] <= q.resolution_date <= test_window[1]:
            test.append(q)
        else:
            unassigned.append(q)
    return train, test, unassigned


def save_questions(path: str | Path, questions: Iterable[Question], **params) -> int:
    """Write questions as canonical JSONL sorted by question_id, plus a
    sidecar manifest.  Returns the record count."""
    records = [q.to_record() for q in sorted(questions, key=lambda q: q.question_id)]
    count = write_jsonl(path, records)
    write_manifest(path, count=count, **params)
    return count


def load_questions(path: str | Path, verify: bool = True) -> list[Question]:
    if verify:
        verify_manifest(path)
    out = []
    for record in read_jsonl(path):
        out.append(validate_record(record))
    return out


def read_csv_records(path: str | Path) -> Iterator[dict]:
    """Adapter for CSV exports: yields raw dicts with outcome coerced to int
    where possible, so they flow through the same ingest() validation."""
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            record = dict(row)
            raw = record.get("outcome", "")
            try:
                record["outcome"] = int(str(raw).strip())
            except ValueError:
                pass  # leave as-is, ingest() will reject with a reason
            yield record
