"""Outcome-driven re-ranking of trace pairs into preference datasets.

Each kept question contributes exactly two traces; the one whose forecast
lies closer to the resolved outcome under r(p, o) = |p - o| becomes the
chosen completion.  The randomized-label control keeps the same prompts and
completions but orients each pair by a seeded fair coin flip instead, so any
training signal surviving the control cannot come from outcome information.
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

from .errors import EmptyDatasetError, SchemaError, TiePairError
from .parsing import canonical_probability
from .questions import Question
from .selfplay import ReasoningTrace
from .storage import read_jsonl, verify_manifest, write_jsonl, write_manifest

log = logging.getLogger(__name__)

LABEL_TRUE = "true_outcome"
LABEL_RANDOMIZED = "randomized"


@dataclass(frozen=True)
class PreferencePair:
    question_id: str
    chosen: ReasoningTrace
    rejected: ReasoningTrace
    outcome: int
    r_chosen: float
    r_rejected: float
    label_mode: str


@dataclass(frozen=True)
class DpoExample:
    prompt: str
    chosen_completion: str
    rejected_completion: str
    metadata: dict

    def to_record(self) -> dict:
        return {
            "prompt": self.prompt,
            "chosen": self.chosen_completion,
            "rejected": self.rejected_completion,
            "metadata": self.metadata,
        }


def rank_pair(p1: float, p2: float, o: int) -> tuple[int, int]:
    """(chosen_index, rejected_index) into (p1, p2) by proximity to o.

    A tie means upstream filtering failed: with o binary, |p1-o| = |p2-o|
    and p1 != p2 cannot happen, so equal distances imply equal forecasts.
    """
    if o not in (0, 1):
        raise ValueError(f"outcome {o!r} is not binary")
    r1 = abs(p1 - o)
    r2 = abs(p2 - o)
    if r1 == r2:
        raise TiePairError(f"tied forecasts {p1} and {p2} against outcome {o}")
    return (0, 1) if r1 < r2 else (1, 0)


def control_flip(seed: int, question_id: str) -> bool:
    """Fair, order-independent coin flip for the randomized-label control.

    Keyed off the question id so the orientation of one pair never depends
    on how many other questions were processed before it.
    """
    digest = hashlib.blake2b(
        f"{seed}:{question_id}".encode("utf-8"), digest_size=8
    ).digest()
    return bool(digest[0] & 1)


def build_pairs(
    traces: Mapping[str, Sequence[ReasoningTrace]],
    questions: Sequence[Question],
    label_mode: str = LABEL_TRUE,
    seed: int = 0,
) -> list[PreferencePair]:
    """One preference pair per question with exactly two stored traces.

    Questions with a missing outcome or a trace count other than two are
    skipped with a warning.  Tied pairs (equal canonical probabilities)
    raise: the selfplay stage is responsible for never storing them.
    """
    if label_mode not in (LABEL_TRUE, LABEL_RANDOMIZED):
        raise ValueError(f"unknown label_mode {label_mode!r}")
    outcomes = {q.question_id: q.outcome for q in questions}
    pairs: list[PreferencePair] = []
    for question_id in sorted(traces):
        ts = traces[question_id]
        if len(ts) != 2:
            log.warning("%s: expected 2 traces, found %d; skipped", question_id, len(ts))
            continue
        if question_id not in outcomes:
            log.warning("%s: no resolved outcome; skipped", question_id)
            continue
        o = outcomes[question_id]
        p1 = canonical_probability(ts[0].probability)
        p2 = canonical_probability(ts[1].probability)
        if p1 == p2:
            raise TiePairError(
                f"{question_id}: identical forecasts {p1} reached the reranker"
            )
        chosen_i, rejected_i = rank_pair(p1, p2, o)
        if label_mode == LABEL_RANDOMIZED and control_flip(seed, question_id):
            chosen_i, rejected_i = rejected_i, chosen_i
        pairs.append(
            PreferencePair(
                question_id=question_id,
                chosen=ts[chosen_i],
                rejected=ts[rejected_i],
                outcome=o,
                r_chosen=abs(ts[chosen_i].probability - o),
                r_rejected=abs(ts[rejected_i].probability - o),
                label_mode=label_mode,
            )
        )
    return pairs


def save_pairs(pairs: Sequence[PreferencePair], path: str | Path, seed: int = 0) -> dict:
    """Persist ranked pairs (full traces embedded) for the emit stage."""
    if not pairs:
        raise EmptyDatasetError("no preference pairs to save")
    records = []
    for p in sorted(pairs, key=lambda p: p.question_id):
        records.append(
            {
                "question_id": p.question_id,
                "outcome": p.outcome,
                "label_mode": p.label_mode,
                "r_chosen": p.r_chosen,
                "r_rejected": p.r_rejected,
                "chosen": p.chosen.to_record(),
                "rejected": p.rejected.to_record(),
            }
        )
    count = write_jsonl(path, records)
    return write_manifest(path, count=count, label_mode=pairs[0].label_mode, seed=seed)


def _trace_from_record(record: dict) -> ReasoningTrace:
    return ReasoningTrace(
        question_id=record["question_id"],
        raw_text=record["raw_text"],
        probability=record["probability"],
        attempt_index=record["attempt_index"],
        style=record.get("style", "scratchpad"),
    )


def load_pairs(path: str | Path, verify: bool = True) -> list[PreferencePair]:
    if verify:
        verify_manifest(path)
    pairs = []
    for record in read_jsonl(path):
        pairs.append(
            PreferencePair(
                question_id=record["question_id"],
                chosen=_trace_from_record(record["chosen"]),
                rejected=_trace_from_record(record["rejected"]),
                outcome=record["outcome"],
                r_chosen=record["r_chosen"],
                r_rejected=record["r_rejected"],
                label_mode=record["label_mode"],
            )
        )
    return pairs


def emit_dataset(
    pairs: Sequence[PreferencePair],
    prompts: Mapping[str, str],
    path: str | Path,
    seed: int = 0,
) -> dict:
    """Write the preference dataset consumed by the DPO trainers.

    Line-delimited records ordered by question_id, each with the exact
    prompt rendered at generation time; sidecar manifest records the count,
    label mode, seed, and content hash.  Returns the manifest.
    """
    if not pairs:
        raise EmptyDatasetError("no preference pairs to emit")
    label_modes = {p.label_mode for p in pairs}
    if len(label_modes) != 1:
        raise ValueError(f"mixed label modes in one dataset: {sorted(label_modes)}")
    records = []
    for pair in sorted(pairs, key=lambda p: p.question_id):
        if pair.question_id not in prompts:
            raise SchemaError(f"no stored prompt for question {pair.question_id!r}")
        example = DpoExample(
            prompt=prompts[pair.question_id],
            chosen_completion=pair.chosen.raw_text,
            rejected_completion=pair.rejected.raw_text,
            metadata={
                "question_id": pair.question_id,
                "label_mode": pair.label_mode,
                "r_chosen": pair.r_chosen,
                "r_rejected": pair.r_rejected,
            },
        )
        records.append(example.to_record())
    count = write_jsonl(path, records)
    return write_manifest(
        path, count=count, label_mode=label_modes.pop(), seed=seed
    )


def load_dataset(path: str | Path, verify: bool = True) -> list[DpoExample]:
    """Read a preference dataset, verifying its manifest by default and
    naming the first malformed line on schema errors."""
    if verify:
        verify_manifest(path)
    examples: list[DpoExample] = []
    for i, record in enumerate(read_jsonl(path), start=1):
        for field in ("prompt", "chosen", "rejected", "metadata"):
            if field not in record:
                raise SchemaError(f"line {i}: missing field {field!r}")
        if not isinstance(record["metadata"], dict):
            raise SchemaError(f"line {i}: metadata is not an object")
        examples.append(
            DpoExample(
                prompt=record["prompt"],
                chosen_completion=record["chosen"],
                rejected_completion=record["rejected"],
                metadata=record["metadata"],
            )
        )
    if not examples:
        raise EmptyDatasetError(f"{path} contains no examples")
    return examples
