"""Token counting used by budgets and statistics.

Two counters ship: an exact whitespace counter (evaluation statistics) and a
chars-per-token heuristic (offline budget enforcement when the endpoint
reports no usage). Both are pluggable wherever a counter is accepted.
"""

from __future__ import annotations

import math

DEFAULT_CHARS_PER_TOKEN = 4.0


def count_whitespace_tokens(text: str) -> int:
    """Number of whitespace-separated tokens."""
    return len(text.split())


def estimate_tokens(text: str, chars_per_token: float = DEFAULT_CHARS_PER_TOKEN) -> int:
    """Heuristic token estimate from character length, rounded up."""
    if chars_per_token <= 0:
        raise ValueError("chars_per_token must be positive")
    if not text:
        return 0
    return math.ceil(len(text) / chars_per_token)


def make_estimator(chars_per_token: float = DEFAULT_CHARS_PER_TOKEN):
    """Bind a chars-per-token ratio into a one-argument counter."""
    def counter(text: str) -> int:
        return estimate_tokens(text, chars_per_token)
    return counter
