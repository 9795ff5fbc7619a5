"""Tokenization shared by fuzzy matching, mock rankers and label mapping."""
from __future__ import annotations

import re

_TOKEN = re.compile(r"[a-z0-9]+(?:-[a-z0-9]+)*")

STOPWORDS = frozenset(
    """a an the and or of to in on at by for with from into onto is are was were be been
    it its this that these those there their as which who whom what where when while
    can may also its it's than then so such very just one some any all each
    between relation spatial semantic m""".split()
)


def canonical(text: str) -> str:
    """Lowercase and collapse whitespace."""
    return " ".join(text.lower().split())


def tokens(text: str) -> list[str]:
    return _TOKEN.findall(text.lower())


def content_tokens(text: str) -> set[str]:
    return {t for t in tokens(text) if t not in STOPWORDS}


def jaccard(a: set, b: set) -> float:
    if not a and not b:
        return 0.0
    return len(a & b) / len(a | b)
