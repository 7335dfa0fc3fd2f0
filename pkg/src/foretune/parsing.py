"""Extraction of the final probabilistic forecast from free-form model text.

The expected output format is a decimal between 0 and 1 wrapped in asterisks,
e.g. ``*0.42*``.  Models frequently bold the token (``**0.42**``), so runs of
asterisks count as a single delimiter.  When several delimited decimals occur
the last one wins: prompts ask for an initial estimate in a middle step and
the final prediction at the end, and reasoning models may emit starred
numbers inside think tags as well.

Percent forms (``*42%*``) do not match and are never converted; a silent
percent-to-decimal conversion risks 100x errors.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .errors import NoForecastFoundError, OutOfRangeForecastError

# A number token between asterisk delimiters: 0, 1, 0.x..., 1.0, .x...
_STRICT_RE = re.compile(r"\*+(\d+(?:\.\d+)?|\.\d+)\*+")
# Lenient extras: whitespace tolerated inside the delimiters.
_LENIENT_RE = re.compile(r"\*+\s*(\d+(?:\.\d+)?|\.\d+)\s*\*+")
# Lenient fallback: a bare trailing decimal at the very end of the text.
_BARE_TAIL_RE = re.compile(r"(\d+(?:\.\d+)?|\.\d+)\s*[.!]?\s*$")


@dataclass(frozen=True)
class ParsedForecast:
    probability: float
    span: tuple[int, int]  # offsets of the full delimited token in the source


def parse(text: str, strict: bool = True) -> ParsedForecast:
    """Extract the last in-range asterisk-delimited decimal from ``text``.

    Scans right to left: out-of-range matches (e.g. ``*1.3*``) are skipped and
    the search continues leftward.  Raises NoForecastFoundError when nothing
    matches the grammar at all, OutOfRangeForecastError when matches exist but
    every one is outside [0, 1].

    ``strict=False`` additionally tolerates whitespace inside the delimiters
    and, as a last resort, a bare decimal ending the text.
    """
    pattern = _STRICT_RE if strict else _LENIENT_RE
    matches = list(pattern.finditer(text))
    saw_match = bool(matches)
    for m in reversed(matches):
        value = float(m.group(1))
        if 0.0 <= value <= 1.0:
            return ParsedForecast(probability=value, span=m.span())
    if not strict:
        tail = _BARE_TAIL_RE.search(text)
        if tail is not None:
            value = float(tail.group(1))
            if 0.0 <= value <= 1.0:
                return ParsedForecast(probability=value, span=tail.span(1))
            saw_match = True
    if saw_match:
        raise OutOfRangeForecastError("every delimited decimal was outside [0, 1]")
    raise NoForecastFoundError("no asterisk-delimited decimal found")


def render_probability(p: float, decimals: int = 6) -> str:
    """Format a probability as the shortest decimal with at most ``decimals``
    fractional digits; the inverse of ``parse`` for such values."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"probability {p!r} outside [0, 1]")
    text = f"{p:.{decimals}f}".rstrip("0").rstrip(".")
    return text or "0"


def canonical_probability(p: float) -> float:
    """Round to 6 decimal places: the single equality rule used when deciding
    whether two forecasts are identical (trace pairing and tie filtering)."""
    return round(p, 6)
