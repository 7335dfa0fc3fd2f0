"""Shared tokenization for query building and feature hashing."""

from __future__ import annotations

import re

STOPWORDS = frozenset(
    "a an and are as at be by for from in is it of on or that the to will with".split()
)

_TOKEN_RE = re.compile(r"[a-z0-9']+")


def tokens(text: str, drop_stopwords: bool = True) -> list[str]:
    """Lowercased alphanumeric tokens, stopword-filtered by default."""
    out = _TOKEN_RE.findall(text.lower())
    if drop_stopwords:
        return [t for t in out if t not in STOPWORDS]
    return out
