"""News retrieval for resolved questions.

Builds deterministic date-bounded queries per question, fetches articles
through a :class:`~foretune.endpoints.NewsEndpoint` (usually a transcript
store) with bounded concurrency, and persists one JSONL record per question.
The retrieval window always ends the day before resolution so the model
never sees resolution-day coverage.

Reruns are resumable: question ids already present in the output artifact
are skipped and the merged file is rewritten in sorted order, so a completed
fetch is byte-identical no matter how many runs it took.
"""

from __future__ import annotations

import datetime as dt
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .endpoints import NewsEndpoint, news_request
from .questions import Question
from .storage import read_jsonl, write_jsonl, write_manifest
from .text import STOPWORDS

DEFAULT_LOOKBACK_DAYS = 14
DEFAULT_MAX_QUERIES = 2
DEFAULT_MAX_RESULTS = 5
DEFAULT_CONCURRENCY = 8


@dataclass(frozen=True)
class NewsArticle:
    title: str
    url: str
    published_date: str
    summary: str

    def to_record(self) -> dict:
        return {
            "title": self.title,
            "url": self.url,
            "published_date": self.published_date,
            "summary": self.summary,
        }


def retrieval_window(
    question: Question, lookback_days: int = DEFAULT_LOOKBACK_DAYS
) -> tuple[dt.date, dt.date]:
    """Inclusive (start, end) search dates; end is resolution_date - 1 day."""
    if lookback_days < 1:
        raise ValueError("lookback_days must be >= 1")
    end = question.resolution_date - dt.timedelta(days=1)
    start = end - dt.timedelta(days=lookback_days - 1)
    return start, end


def build_queries(question: Question, max_queries: int = DEFAULT_MAX_QUERIES) -> list[str]:
    """Title first, then a stopword-stripped keyword variant when it differs.

    Deterministic and deduplicated, capped at max_queries.
    """
    if max_queries < 1:
        raise ValueError("max_queries must be >= 1")
    queries = [question.title.strip()]
    keywords = [
        w for w in question.title.split() if w.strip(".,?!\"'").lower() not in STOPWORDS
    ]
    trimmed = " ".join(keywords).strip()
    if trimmed and trimmed != queries[0]:
        queries.append(trimmed)
    return queries[:max_queries]


def _fetch_one(
    question: Question,
    endpoint: NewsEndpoint,
    lookback_days: int,
    max_queries: int,
    max_results: int,
) -> list[NewsArticle]:
    start, end = retrieval_window(question, lookback_days)
    seen: set[str] = set()
    articles: list[NewsArticle] = []
    for query in build_queries(question, max_queries):
        request = news_request(
            query=query,
            start_date=start.isoformat(),
            end_date=end.isoformat(),
            max_results=max_results,
            question_id=question.question_id,
        )
        for item in endpoint.search(request):
            url = str(item.get("url", ""))
            if not url or url in seen:
                continue
            seen.add(url)
            articles.append(
                NewsArticle(
                    title=str(item.get("title", "")),
                    url=url,
                    published_date=str(item.get("published_date", "")),
                    summary=str(item.get("summary", "")),
                )
            )
    articles.sort(key=lambda a: (a.published_date, a.url))
    return articles[:max_results]


def fetch_news(
    questions: Sequence[Question],
    endpoint: NewsEndpoint,
    out_path: str | Path,
    lookback_days: int = DEFAULT_LOOKBACK_DAYS,
    max_queries: int = DEFAULT_MAX_QUERIES,
    max_results: int = DEFAULT_MAX_RESULTS,
    concurrency: int = DEFAULT_CONCURRENCY,
) -> int:
    """Fetch articles for every question not already in out_path.

    Returns the number of newly fetched questions.  The output file is
    rewritten sorted by question_id with a refreshed manifest.
    """
    out_path = Path(out_path)
    existing: dict[str, dict] = {}
    if out_path.exists():
        for record in read_jsonl(out_path):
            existing[record["question_id"]] = record
    pending = [q for q in questions if q.question_id not in existing]

    if pending:
        with ThreadPoolExecutor(max_workers=max(1, concurrency)) as pool:
            futures = [
                pool.submit(
                    _fetch_one, q, endpoint, lookback_days, max_queries, max_results
                )
                for q in pending
            ]
            for q, future in zip(pending, futures):
                articles = future.result()
                existing[q.question_id] = {
                    "question_id": q.question_id,
                    "articles": [a.to_record() for a in articles],
                }

    records = [existing[qid] for qid in sorted(existing)]
    count = write_jsonl(out_path, records)
    write_manifest(out_path, count=count, lookback_days=lookback_days)
    return len(pending)


def load_news(path: str | Path) -> dict[str, list[NewsArticle]]:
    out: dict[str, list[NewsArticle]] = {}
    for record in read_jsonl(path):
        out[record["question_id"]] = [
            NewsArticle(
                title=a["title"],
                url=a["url"],
                published_date=a["published_date"],
                summary=a["summary"],
            )
            for a in record.get("articles", [])
        ]
    return out


def format_context(articles: Sequence[NewsArticle]) -> str:
    """Render retrieved articles as a numbered block for prompt assembly."""
    if not articles:
        return "No news available."
    blocks = []
    for i, a in enumerate(articles, start=1):
        blocks.append(f"[{i}] {a.title} ({a.published_date})\n{a.summary}")
    return "\n\n".join(blocks)
