"""Synthetic fixture corpus: questions, scripted forecasters, transcripts.

The bundled corpus lets the whole pipeline run offline.  Questions carry a
latent signal: background texts and news summaries embed marker vocabulary
correlated with the resolved outcome, so a policy reading hashed prompt
features has something real to learn, while the scripted forecaster
produces noisy-but-informative probabilities around the outcome.

Transcripts are not synthesized directly.  make_corpus runs the actual
fetch-news and selfplay stages in record mode against the deterministic
simulator endpoints below, which guarantees the recorded request hashes are
exactly the ones replay will ask for.

The simulated behaviors exercise every pipeline path: most questions yield
a differing second forecast quickly, some need several re-runs, a few
return the same number five times (dropped), a few never produce a
parseable forecast (generation_failed), and a few have no news coverage.
"""

from __future__ import annotations

import datetime as dt
import random
import tempfile
import threading
from dataclasses import dataclass
from pathlib import Path

from .endpoints import TranscriptStore, request_hash
from .news import fetch_news, load_news
from .parsing import canonical_probability
from .questions import (
    TEST_WINDOW,
    TRAIN_WINDOW,
    Question,
    ingest,
    partition,
)
from .selfplay import run_selfplay
from .storage import write_jsonl

CORPUS_SEED = 20240701
CORPUS_MODEL = "sim-forecaster-14b"
CORPUS_STYLE = "scratchpad"

N_TRAIN = 180
N_TEST = 20
N_CONSTANT = 6  # all five generations identical -> dropped
N_UNPARSABLE = 2  # no forecast ever parsed -> generation_failed
N_NO_NEWS = 3  # train questions with zero retrieved articles

POSITIVE_MARKERS = (
    "confirmed", "surging", "imminent", "breakthrough",
    "accelerating", "ratified", "finalized", "unanimous",
)
NEGATIVE_MARKERS = (
    "stalled", "collapsed", "shelved", "vetoed",
    "postponed", "faltering", "deadlock", "withdrawn",
)
TOPIC_TERMS = (
    "tariffs", "launch", "merger", "ceasefire", "election", "vaccine",
    "satellite", "pipeline", "treaty", "strike", "budget", "referendum",
    "drought", "espionage", "semiconductor", "litigation",
)
TITLE_SUBJECTS = (
    "the coalition government", "the central bank", "the port authority",
    "the regional assembly", "the spaceflight consortium", "the mining union",
    "the rail operator", "the securities regulator", "the health ministry",
    "the grid operator", "the fisheries council", "the antitrust panel",
)
TITLE_EVENTS = (
    "approve the revised charter", "complete the orbital test",
    "reach a wage settlement", "certify the new reactor",
    "pass the spending package", "ratify the border accord",
    "list the subsidiary publicly", "restore full service",
    "issue the export license", "publish the audit findings",
    "adopt the emissions rule", "settle the patent dispute",
)


@dataclass(frozen=True)
class QuestionScript:
    """Deterministic behavior of the simulated forecaster for one question."""

    question_id: str
    outcome: int
    behavior: str  # normal | constant | unparsable
    probabilities: tuple[float, ...]  # value returned by generation k
    markers: tuple[str, ...]
    terms: tuple[str, ...]
    articles: tuple[dict, ...]
    decoy: bool  # include an intermediate starred number before the final one


def _grid(p: float) -> float:
    # Simulated forecaster reports on a 0.05 grid, clipped away from 0 and 1.
    return round(min(0.95, max(0.05, round(p / 0.05) * 0.05)), 2)


def _probability_track(rng: random.Random, outcome: int, behavior: str) -> tuple[float, ...]:
    base = 0.70 if outcome == 1 else 0.30
    if behavior == "constant":
        value = _grid(base + rng.uniform(-0.1, 0.1))
        return (value,) * 5
    track = []
    for _ in range(5):
        track.append(_grid(base + rng.uniform(-0.18, 0.18)))
    # A kept question must produce a differing second parse within budget;
    # force attempt 1 to differ from attempt 0 for most, leave a few that
    # repeat once or twice first to exercise the retry loop.
    stall = rng.random() < 0.15
    if stall:
        track[1] = track[0]
        track[2] = track[0]
        if canonical_probability(track[3]) == canonical_probability(track[0]):
            track[3] = _grid(track[0] + (0.1 if track[0] < 0.5 else -0.1))
    elif canonical_probability(track[1]) == canonical_probability(track[0]):
        track[1] = _grid(track[0] + (0.05 if track[0] < 0.5 else -0.05))
    return tuple(track)


def _make_articles(
    rng: random.Random,
    question_id: str,
    title: str,
    resolution_date: dt.date,
    markers: tuple[str, ...],
    terms: tuple[str, ...],
) -> tuple[dict, ...]:
    articles = []
    for j in range(3):
        day = resolution_date - dt.timedelta(days=rng.randint(2, 6))
        articles.append(
            {
                "title": f"{terms[j % len(terms)].capitalize()} briefing: {title}",
                "url": f"https://news.example/{question_id}/{j}",
                "published_date": day.isoformat(),
                "summary": (
                    f"Officials described the process as {markers[j % len(markers)]}, "
                    f"repeatedly {markers[j % len(markers)]} in recent remarks, while "
                    f"analysts called the {terms[(j + 1) % len(terms)]} file "
                    f"{markers[(j + 1) % len(markers)]} and the wider docket "
                    f"{markers[(j + 2) % len(markers)]}."
                ),
            }
        )
    return tuple(articles)


def build_scripts(seed: int = CORPUS_SEED) -> tuple[list[dict], dict[str, QuestionScript]]:
    """(raw question records including invalid ones, scripts by question id)."""
    rng = random.Random(seed)
    records: list[dict] = []
    scripts: dict[str, QuestionScript] = {}

    behaviors = ["normal"] * (N_TRAIN - N_CONSTANT - N_UNPARSABLE)
    behaviors += ["constant"] * N_CONSTANT + ["unparsable"] * N_UNPARSABLE
    rng.shuffle(behaviors)
    no_news_ids = {f"q{k:04d}" for k in rng.sample(range(N_TRAIN), N_NO_NEWS)}

    def one_question(index: int, split: str, behavior: str) -> None:
        question_id = f"q{index:04d}"
        outcome = rng.randint(0, 1)
        window = TRAIN_WINDOW if split == "train" else TEST_WINDOW
        span = (window[1] - window[0]).days
        resolution_date = window[0] + dt.timedelta(days=rng.randint(0, span))
        pool = POSITIVE_MARKERS if outcome == 1 else NEGATIVE_MARKERS
        markers = tuple(rng.sample(pool, 3))
        terms = tuple(rng.sample(TOPIC_TERMS, 3))
        subject = rng.choice(TITLE_SUBJECTS)
        event = rng.choice(TITLE_EVENTS)
        title = f"Will {subject} {event} by {resolution_date.isoformat()}?"
        background = (
            f"Briefings describe the effort as {markers[0]} and {markers[1]}, with "
            f"the committee review likewise {markers[0]}. Recent reporting on the "
            f"{terms[0]} dispute calls the outlook {markers[2]}, and desk notes "
            f"tracking {terms[1]} and {terms[2]} repeat that the file looks "
            f"{markers[1]}, even {markers[2]}, to most observers."
        )
        criteria = (
            "Resolves yes if the event occurs and is publicly verifiable on or "
            "before the resolution date; resolves no otherwise."
        )
        records.append(
            {
                "question_id": question_id,
                "title": title,
                "background": background,
                "resolution_criteria": criteria,
                "resolution_date": resolution_date.isoformat(),
                "outcome": outcome,
                "source": "synthetic",
            }
        )
        articles = (
            ()
            if question_id in no_news_ids
            else _make_articles(rng, question_id, title, resolution_date, markers, terms)
        )
        scripts[question_id] = QuestionScript(
            question_id=question_id,
            outcome=outcome,
            behavior=behavior,
            probabilities=_probability_track(rng, outcome, behavior),
            markers=markers,
            terms=terms,
            articles=articles,
            decoy=rng.random() < 0.5,
        )

    for i in range(N_TRAIN):
        one_question(i, "train", behaviors[i])
    for i in range(N_TEST):
        one_question(N_TRAIN + i, "test", "normal")

    # Three malformed records the ingest stage must reject with reasons.
    records.append(
        {
            "question_id": "bad0000",
            "title": "Will the malformed record be accepted?",
            "resolution_criteria": "n/a",
            "resolution_date": "2024-08-01",
            "outcome": 0,
        }
    )
    records.append(
        {
            "question_id": "bad0001",
            "title": "Will the outcome be ternary?",
            "background": "A record with an outcome outside the binary domain.",
            "resolution_criteria": "n/a",
            "resolution_date": "2024-08-02",
            "outcome": 2,
        }
    )
    records.append(
        {
            "question_id": "bad0002",
            "title": "Will the date parse?",
            "background": "A record with a malformed resolution date.",
            "resolution_criteria": "n/a",
            "resolution_date": "2024-13-45",
            "outcome": 1,
        }
    )
    return records, scripts


def _response_text(script: QuestionScript, generation_index: int) -> str:
    if script.behavior == "unparsable":
        return (
            f"Reflection {generation_index + 1}: the evidence on the "
            f"{script.terms[0]} question remains mixed, perhaps around 40% or so, "
            "but I cannot commit to a final number."
        )
    p = script.probabilities[min(generation_index, len(script.probabilities) - 1)]
    lines = [
        f"1. Restating the question: outcome hinges on the {script.terms[0]} process.",
        f"2. Reasons no: some observers call the effort {script.markers[-1]} only in part.",
        f"3. Reasons yes: briefings describe it as {script.markers[0]}.",
        "4. Aggregating the considerations above.",
    ]
    if script.decoy:
        lines.append("5. Initial probability: *0.5*")
    else:
        lines.append("5. Initial probability noted.")
    lines.append(
        f"6. Adjusting for the base rate of {script.terms[1]} outcomes "
        f"(pass {generation_index + 1})."
    )
    lines.append(f"7. Final answer: *{p:.2f}*")
    return "\n".join(lines)


class SimChatEndpoint:
    """Deterministic stand-in forecaster.

    Responses depend only on the question script and on how many times the
    identical request has been seen, so record-mode runs are reproducible
    regardless of thread interleaving.
    """

    def __init__(self, scripts: dict[str, QuestionScript]):
        self._scripts = scripts
        self._counts: dict[str, int] = {}
        self._lock = threading.Lock()

    def complete(self, request: dict) -> str:
        key = request_hash(request)
        with self._lock:
            k = self._counts.get(key, 0)
            self._counts[key] = k + 1
        return _response_text(self._scripts[request["question_id"]], k)


class SimNewsEndpoint:
    """Returns each question's scripted articles for its title query and
    nothing for the keyword variant; pure function of the request."""

    def __init__(self, scripts: dict[str, QuestionScript]):
        self._scripts = scripts

    def search(self, request: dict) -> list[dict]:
        script = self._scripts.get(request["question_id"])
        if script is None or not request["query"].startswith("Will "):
            return []
        return [dict(a) for a in script.articles]


PIPELINE_TOML = """\
[paths]
work_dir = "work"
raw_questions = "questions_raw.jsonl"

[partition]
train_start = {train_start}
train_end = {train_end}
test_start = {test_start}
test_end = {test_end}

[chat]
model = "{model}"
style = "{style}"

[news]
lookback_days = 14
max_queries = 2
max_results = 5

[transcripts]
mode = "replay"
dir = "transcripts"

[run]
seed = 0
label_mode = "true_outcome"
concurrency = 8

[dpo]
beta = 0.5
learning_rate = 4.0
epochs = 16
batch_size = 2
grad_accumulation = 4
feature_dim = 128
validation_fraction = 0.1
plateau_tolerance = 0.005
optimizer = "sgd"
seed = 0
"""


def make_corpus(out_dir: str | Path, seed: int = CORPUS_SEED) -> dict:
    """Write questions_raw.jsonl, pipeline.toml, and recorded transcripts.

    Returns the selfplay status counts from the recording run.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    records, scripts = build_scripts(seed)
    write_jsonl(out / "questions_raw.jsonl", records)
    (out / "pipeline.toml").write_text(
        PIPELINE_TOML.format(
            train_start=TRAIN_WINDOW[0].isoformat(),
            train_end=TRAIN_WINDOW[1].isoformat(),
            test_start=TEST_WINDOW[0].isoformat(),
            test_end=TEST_WINDOW[1].isoformat(),
            model=CORPUS_MODEL,
            style=CORPUS_STYLE,
        ),
        encoding="utf-8",
    )

    result = ingest(records)
    train, test, _ = partition(result.questions)
    store = TranscriptStore(
        out / "transcripts",
        mode="record",
        chat=SimChatEndpoint(scripts),
        news=SimNewsEndpoint(scripts),
    )
    with tempfile.TemporaryDirectory() as tmp:
        tmp_path = Path(tmp)
        fetch_news(train + test, store, tmp_path / "news.jsonl")
        news_map = load_news(tmp_path / "news.jsonl")
        counts = run_selfplay(
            train,
            news_map,
            store,
            model=CORPUS_MODEL,
            traces_path=tmp_path / "traces.jsonl",
            style=CORPUS_STYLE,
        )
    return counts
