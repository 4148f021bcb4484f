"""Name normalization and tokenization shared by every module."""

from __future__ import annotations

import re
import unicodedata

_WS = re.compile(r"\s+")
_TOKEN = re.compile(r"\w+", re.UNICODE)

STOPWORDS = frozenset(
    """a an and are as at be by for from has have in is it its of on or that the
    this to was were which who whom whose with""".split()
)


def normalize(text: str) -> str:
    """NFC + case-fold + whitespace collapse."""
    text = unicodedata.normalize("NFC", text).casefold()
    return _WS.sub(" ", text).strip()


def tokens(text: str, *, drop_stopwords: bool = True) -> list[str]:
    toks = _TOKEN.findall(normalize(text))
    if drop_stopwords:
        toks = [t for t in toks if t not in STOPWORDS]
    return toks


def token_set(text: str, *, drop_stopwords: bool = True) -> frozenset[str]:
    return frozenset(tokens(text, drop_stopwords=drop_stopwords))


def contains(haystack: str, needle: str) -> bool:
    """Normalized substring test used for PRM coverage and leakage checks."""
    n = normalize(needle)
    return bool(n) and n in normalize(haystack)


def jaccard(a: str, b: str) -> float:
    sa, sb = token_set(a, drop_stopwords=False), token_set(b, drop_stopwords=False)
    if not sa and not sb:
        return 0.0
    return len(sa & sb) / len(sa | sb)
