"""Self-play trace generation.

For each training question the base model is prompted (scratchpad style for
plain chat models, zero-shot persona style for models that emit think tags)
and sampled at temperature 1 until two parsed forecasts differ.  The budget
is five generations per question: one initial plus up to four re-runs.  A
question whose later parses all equal the first is dropped; a question with
no parse at all, or whose endpoint fails outright, is marked
generation_failed.  Kept questions store exactly two traces.

Two forecasts count as identical when their canonical 6-decimal roundings
are equal, the same rule the reranker uses to filter ties.
"""

from __future__ import annotations

import datetime as dt
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

from .endpoints import ChatEndpoint, chat_request
from .errors import EndpointError, NoForecastFoundError, OutOfRangeForecastError
from .news import NewsArticle, format_context
from .parsing import canonical_probability, parse
from .questions import Question
from .storage import read_jsonl, write_jsonl, write_manifest

log = logging.getLogger(__name__)

TEMPERATURE = 1.0
MAX_GENERATIONS = 5  # 1 initial + up to 4 re-runs

STYLE_SCRATCHPAD = "scratchpad"
STYLE_ZERO_SHOT_THINK = "zero_shot_think"

STATUS_PAIR = "pair"
STATUS_DROPPED = "dropped"
STATUS_FAILED = "generation_failed"

_SCRATCHPAD_INSTRUCTIONS = """Instructions:
1. Given the above question, rephrase and expand it to help you do better answering. Maintain all information in the original question.
{ Insert rephrased and expanded question. }
2. Using your knowledge of the world and topic, as well as the information provided, provide a few reasons why the answer might be no. Rate the strength of each reason.
{ Insert your thoughts }
3. Using your knowledge of the world and topic, as well as the information provided, provide a few reasons why the answer might be yes. Rate the strength of each reason.
{ Insert your thoughts }
4. Aggregate your considerations. Think like a superforecaster (e.g. Nate Silver).
{ Insert your aggregated considerations }
5. Output an initial probability (prediction) given steps 1-4.
{ Insert initial probability. }
6. Evaluate whether your calculated probability is excessively confident or not confident enough. Also, consider anything else that might affect the forecast that you did not before consider (e.g. base rate of the event).
{ Insert your thoughts }
7. Output your final prediction (a number between 0 and 1) with an asterisk at the beginning and end of the decimal.
{ Insert your answer }"""

_ZERO_SHOT_PERSONA = (
    "You are an expert superforecaster, familiar with Structured Analytic "
    "Techniques as well as Superforecasting by Philip Tetlock and related work. "
    "Predict the probability that the following question will be resolved as "
    "true/yes. You MUST give a probability estimate between 0 and 1 UNDER ALL "
    "CIRCUMSTANCES."
)

_ZERO_SHOT_FINAL = (
    "Output your final prediction (a number between 0 and 1) with an asterisk "
    "at the beginning and end of the decimal (Ex: *<probability>*)."
)


@dataclass(frozen=True)
class PromptBundle:
    title: str
    background: str
    resolution_criteria: str
    today_date: dt.date
    close_date: dt.date
    news: str
    style: str

    def __post_init__(self):
        if self.style not in (STYLE_SCRATCHPAD, STYLE_ZERO_SHOT_THINK):
            raise ValueError(f"unknown prompt style {self.style!r}")
        if self.today_date > self.close_date:
            raise ValueError("today_date must not postdate close_date")


@dataclass(frozen=True)
class ReasoningTrace:
    question_id: str
    raw_text: str
    probability: float
    attempt_index: int
    style: str

    def to_record(self) -> dict:
        return {
            "question_id": self.question_id,
            "attempt_index": self.attempt_index,
            "raw_text": self.raw_text,
            "probability": self.probability,
            "style": self.style,
        }


@dataclass(frozen=True)
class PairResult:
    question_id: str
    status: str
    traces: tuple[ReasoningTrace, ...]
    attempts: int
    prompt: str


def style_for_model(model: str) -> str:
    """Default prompt style by model name: zero-shot persona for models that
    emit think tags, scratchpad otherwise."""
    lowered = model.lower()
    if "r1" in lowered or "think" in lowered or "reason" in lowered:
        return STYLE_ZERO_SHOT_THINK
    return STYLE_SCRATCHPAD


def build_bundle(
    question: Question,
    articles: Sequence[NewsArticle],
    style: str,
) -> PromptBundle:
    """Bundle a question for prompting, pinned to the day before resolution
    so the rendered 'today' never sees resolution-day information."""
    close = question.resolution_date
    return PromptBundle(
        title=question.title,
        background=question.background,
        resolution_criteria=question.resolution_criteria,
        today_date=close - dt.timedelta(days=1),
        close_date=close,
        news=format_context(articles),
        style=style,
    )


def render_prompt(bundle: PromptBundle) -> str:
    body = (
        f"Question: {bundle.title}\n\n"
        f"Question Background: {bundle.background}\n\n"
        f"Resolution Criteria: {bundle.resolution_criteria}\n\n"
        f"Today's Date: {bundle.today_date.isoformat()}\n"
        f"Question Close Date: {bundle.close_date.isoformat()}\n\n"
        f"News Summaries:\n{bundle.news}"
    )
    if bundle.style == STYLE_SCRATCHPAD:
        return f"{body}\n\n{_SCRATCHPAD_INSTRUCTIONS}"
    return f"{_ZERO_SHOT_PERSONA}\n\n{body}\n\n{_ZERO_SHOT_FINAL}"


def generate_pair(
    question: Question,
    bundle: PromptBundle,
    endpoint: ChatEndpoint,
    model: str,
    max_raw_chars: int | None = None,
) -> PairResult:
    """Sample until two parsed forecasts differ, within the 5-generation
    budget.  Parse failures consume budget; the first success fixes t1 and
    the first later parse with a different canonical probability fixes t2."""
    prompt = render_prompt(bundle)
    request = chat_request(
        model=model,
        messages=[{"role": "user", "content": prompt}],
        temperature=TEMPERATURE,
        question_id=question.question_id,
    )
    first: ReasoningTrace | None = None
    attempts = 0
    for attempt in range(MAX_GENERATIONS):
        attempts = attempt + 1
        try:
            raw = endpoint.complete(request)
        except EndpointError as exc:
            log.warning("endpoint failure on %s: %s", question.question_id, exc)
            return PairResult(question.question_id, STATUS_FAILED, (), attempts, prompt)
        if max_raw_chars is not None and len(raw) > max_raw_chars:
            raw = raw[:max_raw_chars]
        try:
            parsed = parse(raw)
        except (NoForecastFoundError, OutOfRangeForecastError):
            continue
        trace = ReasoningTrace(
            question_id=question.question_id,
            raw_text=raw,
            probability=parsed.probability,
            attempt_index=attempt,
            style=bundle.style,
        )
        if first is None:
            first = trace
        elif canonical_probability(trace.probability) != canonical_probability(
            first.probability
        ):
            return PairResult(
                question.question_id, STATUS_PAIR, (first, trace), attempts, prompt
            )
    if first is None:
        return PairResult(question.question_id, STATUS_FAILED, (), attempts, prompt)
    return PairResult(question.question_id, STATUS_DROPPED, (), attempts, prompt)


def skips_path(traces_path: str | Path) -> Path:
    p = Path(traces_path)
    return p.with_name(p.stem + ".skips.jsonl")


def prompts_path(traces_path: str | Path) -> Path:
    p = Path(traces_path)
    return p.with_name(p.stem + ".prompts.jsonl")


def run_selfplay(
    questions: Sequence[Question],
    news: Mapping[str, Sequence[NewsArticle]],
    endpoint: ChatEndpoint,
    model: str,
    traces_path: str | Path,
    style: str | None = None,
    concurrency: int = 8,
    max_raw_chars: int | None = None,
) -> dict:
    """Generate pairs for every question not already processed.

    Writes three artifacts next to traces_path: the trace store (two lines
    per kept question), a skip log recording dropped / failed questions, and
    the rendered prompt per kept question (the reranker re-attaches it to
    preference pairs).  All three are rewritten sorted, with manifests, so a
    finished run is byte-stable across resumes.  Returns status counts.
    """
    traces_path = Path(traces_path)
    chosen_style = style if style is not None else style_for_model(model)

    kept: dict[str, list[dict]] = {}
    prompts: dict[str, str] = {}
    skips: dict[str, str] = {}
    if traces_path.exists():
        for record in read_jsonl(traces_path):
            kept.setdefault(record["question_id"], []).append(record)
        for record in read_jsonl(prompts_path(traces_path)):
            prompts[record["question_id"]] = record["prompt"]
    if skips_path(traces_path).exists():
        for record in read_jsonl(skips_path(traces_path)):
            skips[record["question_id"]] = record["status"]

    done = set(kept) | set(skips)
    pending = [q for q in questions if q.question_id not in done]

    def task(q: Question) -> PairResult:
        bundle = build_bundle(q, news.get(q.question_id, []), chosen_style)
        return generate_pair(q, bundle, endpoint, model, max_raw_chars=max_raw_chars)

    if pending:
        with ThreadPoolExecutor(max_workers=max(1, concurrency)) as pool:
            for result in pool.map(task, pending):
                if result.status == STATUS_PAIR:
                    kept[result.question_id] = [t.to_record() for t in result.traces]
                    prompts[result.question_id] = result.prompt
                else:
                    log.warning("%s: %s", result.question_id, result.status)
                    skips[result.question_id] = result.status

    trace_records = [rec for qid in sorted(kept) for rec in kept[qid]]
    counts = {
        "kept": len(kept),
        "dropped": sum(1 for s in skips.values() if s == STATUS_DROPPED),
        "generation_failed": sum(1 for s in skips.values() if s == STATUS_FAILED),
    }
    write_jsonl(traces_path, trace_records)
    write_manifest(traces_path, count=len(trace_records), model=model,
                   style=chosen_style, **counts)
    write_jsonl(
        prompts_path(traces_path),
        [{"question_id": qid, "prompt": prompts[qid]} for qid in sorted(prompts)],
    )
    write_manifest(prompts_path(traces_path), count=len(prompts))
    write_jsonl(
        skips_path(traces_path),
        [{"question_id": qid, "status": skips[qid]} for qid in sorted(skips)],
    )
    write_manifest(skips_path(traces_path), count=len(skips))
    return counts


def load_traces(path: str | Path) -> dict[str, list[ReasoningTrace]]:
    out: dict[str, list[ReasoningTrace]] = {}
    for record in read_jsonl(path):
        out.setdefault(record["question_id"], []).append(
            ReasoningTrace(
                question_id=record["question_id"],
                raw_text=record["raw_text"],
                probability=record["probability"],
                attempt_index=record["attempt_index"],
                style=record.get("style", STYLE_SCRATCHPAD),
            )
        )
    return out
