"""Model and news endpoints plus record/replay transcripts.

Every network interaction goes through a request dict built by one of the
pure builders below, so the exact same bytes are hashed whether the request
is being recorded against a live endpoint or replayed from committed
transcripts.  Replay is the default for tests and the bundled corpus; live
HTTP is only used when an API key environment variable is configured.

Transcript layout: one JSON file per question id under the transcript root,
mapping request hash -> ordered list of responses.  A list, not a single
value: sampling at temperature 1 means the identical request can legitimately
return different completions, and replay must hand them back in recorded
order.  Cursors are per store instance and thread-safe.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
import time
from pathlib import Path
from typing import Callable, Protocol, Sequence

import requests

from .errors import ConfigurationError, EndpointError, TranscriptMissError
from .storage import atomic_write_text, dumps_canonical

RETRYABLE_STATUS = frozenset({429, 500, 502, 503, 504})


def chat_request(
    model: str,
    messages: Sequence[dict],
    temperature: float,
    question_id: str,
) -> dict:
    return {
        "kind": "chat",
        "model": model,
        "messages": [dict(m) for m in messages],
        "temperature": temperature,
        "question_id": question_id,
    }


def news_request(
    query: str,
    start_date: str,
    end_date: str,
    max_results: int,
    question_id: str,
) -> dict:
    return {
        "kind": "news",
        "query": query,
        "start_date": start_date,
        "end_date": end_date,
        "max_results": max_results,
        "question_id": question_id,
    }


def request_hash(request: dict) -> str:
    return hashlib.sha256(dumps_canonical(request).encode("utf-8")).hexdigest()


class ChatEndpoint(Protocol):
    def complete(self, request: dict) -> str: ...


class NewsEndpoint(Protocol):
    def search(self, request: dict) -> list[dict]: ...


def require_env(name: str) -> str:
    value = os.environ.get(name, "")
    if not value:
        raise ConfigurationError(f"environment variable {name} is not set")
    return value


class _HttpBase:
    def __init__(
        self,
        base_url: str,
        api_key_env: str,
        timeout: float = 30.0,
        max_attempts: int = 3,
        backoff: float = 0.5,
        sleep: Callable[[float], None] | None = None,
        session: requests.Session | None = None,
    ):
        self.base_url = base_url.rstrip("/")
        self.api_key = require_env(api_key_env)
        self.timeout = timeout
        self.max_attempts = max_attempts
        self.backoff = backoff
        self._sleep = sleep if sleep is not None else time.sleep
        self._session = session if session is not None else requests.Session()

    def _post(self, path: str, payload: dict) -> dict:
        url = f"{self.base_url}{path}"
        headers = {"Authorization": f"Bearer {self.api_key}"}
        last_error = "no attempt made"
        for attempt in range(self.max_attempts):
            try:
                resp = self._session.post(
                    url, json=payload, headers=headers, timeout=self.timeout
                )
            except requests.RequestException as exc:
                last_error = f"{type(exc).__name__}: {exc}"
            else:
                if resp.status_code == 200:
                    try:
                        return resp.json()
                    except ValueError:
                        raise EndpointError(f"non-JSON response from {url}") from None
                if resp.status_code not in RETRYABLE_STATUS:
                    raise EndpointError(f"{url} returned status {resp.status_code}")
                last_error = f"status {resp.status_code}"
            if attempt + 1 < self.max_attempts:
                self._sleep(self.backoff * (2**attempt))
        raise EndpointError(
            f"{url} failed after {self.max_attempts} attempts ({last_error})"
        )


class HttpChatEndpoint(_HttpBase):
    """OpenAI-style chat completions endpoint."""

    def complete(self, request: dict) -> str:
        payload = {
            "model": request["model"],
            "messages": request["messages"],
            "temperature": request["temperature"],
        }
        body = self._post("/chat/completions", payload)
        try:
            return body["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError):
            raise EndpointError("chat response missing choices[0].message.content") from None


class HttpNewsEndpoint(_HttpBase):
    """Date-bounded news search endpoint."""

    def search(self, request: dict) -> list[dict]:
        payload = {
            "query": request["query"],
            "start_date": request["start_date"],
            "end_date": request["end_date"],
            "max_results": request["max_results"],
        }
        body = self._post("/search", payload)
        results = body.get("results")
        if not isinstance(results, list):
            raise EndpointError("news response missing results list")
        return results


def _dumps_pretty(obj) -> str:
    return json.dumps(obj, ensure_ascii=False, sort_keys=True, indent=2) + "\n"


class TranscriptStore:
    """Record/replay cache for chat and news requests.

    In ``replay`` mode (the default) every request must hit a recorded
    response; a miss or an exhausted response list raises
    :class:`TranscriptMissError` naming the question and hash.  In ``record``
    mode requests are forwarded to the wrapped live endpoints and the
    responses appended to the per-question transcript file as they arrive.
    """

    def __init__(
        self,
        root: str | Path,
        mode: str = "replay",
        chat: ChatEndpoint | None = None,
        news: NewsEndpoint | None = None,
    ):
        if mode not in ("replay", "record"):
            raise ConfigurationError(f"transcript mode {mode!r} is not replay or record")
        if mode == "record" and chat is None and news is None:
            raise ConfigurationError("record mode needs at least one live endpoint")
        self.root = Path(root)
        self.mode = mode
        self._chat = chat
        self._news = news
        self._lock = threading.Lock()
        self._files: dict[str, dict] = {}
        self._cursors: dict[tuple[str, str], int] = {}
        if mode == "record":
            self.root.mkdir(parents=True, exist_ok=True)

    def _path(self, question_id: str) -> Path:
        return self.root / f"{question_id}.json"

    def _load(self, question_id: str) -> dict:
        if question_id not in self._files:
            path = self._path(question_id)
            if path.exists():
                self._files[question_id] = json.loads(path.read_text(encoding="utf-8"))
            else:
                self._files[question_id] = {"question_id": question_id, "responses": {}}
        return self._files[question_id]

    def _flush(self, question_id: str) -> None:
        atomic_write_text(self._path(question_id), _dumps_pretty(self._files[question_id]))

    def _replay(self, request: dict):
        question_id = request["question_id"]
        key = request_hash(request)
        with self._lock:
            data = self._load(question_id)
            responses = data["responses"].get(key)
            cursor_key = (question_id, key)
            cursor = self._cursors.get(cursor_key, 0)
            if responses is None:
                raise TranscriptMissError(
                    f"no transcript for question {question_id!r} hash {key[:12]}"
                )
            if cursor >= len(responses):
                raise TranscriptMissError(
                    f"transcript exhausted for question {question_id!r} hash {key[:12]} "
                    f"(recorded {len(responses)}, requested {cursor + 1})"
                )
            self._cursors[cursor_key] = cursor + 1
            return responses[cursor]

    def _record(self, request: dict, live: Callable[[dict], object]):
        response = live(request)
        question_id = request["question_id"]
        key = request_hash(request)
        with self._lock:
            data = self._load(question_id)
            data["responses"].setdefault(key, []).append(response)
            self._flush(question_id)
        return response

    def complete(self, request: dict) -> str:
        if self.mode == "replay":
            return self._replay(request)
        if self._chat is None:
            raise ConfigurationError("record mode has no chat endpoint")
        return self._record(request, self._chat.complete)

    def search(self, request: dict) -> list[dict]:
        if self.mode == "replay":
            return self._replay(request)
        if self._news is None:
            raise ConfigurationError("record mode has no news endpoint")
        return self._record(request, self._news.search)
