"""Deterministic text primitives: tokenization, n-grams, sentence splitting.

These are the substrate for every lexical metric and for the sentence arrays
fed to the citation and extraction pipelines. Everything here is pure and
rule-based; no external NLP models.
"""

from __future__ import annotations

import unicodedata
from collections import Counter
from functools import lru_cache
from importlib import resources


def _is_punct(ch: str) -> bool:
    return unicodedata.category(ch).startswith("P")


def normalize_whitespace(text: str) -> str:
    """Collapse Unicode whitespace runs to single spaces and strip the ends."""
    return " ".join(text.split())


def tokenize(text: str) -> list[str]:
    """Lowercase, split on Unicode whitespace, strip edge punctuation.

    Punctuation inside a token is kept ("a--b" stays one token); tokens that
    are nothing but punctuation are dropped. Empty text gives an empty list.
    """
    out: list[str] = []
    for raw in text.lower().split():
        start, end = 0, len(raw)
        while start < end and _is_punct(raw[start]):
            start += 1
        while end > start and _is_punct(raw[end - 1]):
            end -= 1
        if end > start:
            out.append(raw[start:end])
    return out


def ngrams(tokens: list[str], n: int) -> Counter:
    """Multiset of all contiguous n-grams (as tuples) over ``tokens``.

    Count equals max(0, len(tokens) - n + 1). Rejects n < 1.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


@lru_cache(maxsize=1)
def abbreviation_guards() -> frozenset[str]:
    """Lowercased abbreviation list shipped as a plain-text resource."""
    path = resources.files("reason_sum") / "resources" / "abbreviations.txt"
    guards = set()
    for line in path.read_text(encoding="utf-8").splitlines():
        line = line.strip().lower()
        if line and not line.startswith("#"):
            guards.add(line)
    return frozenset(guards)


_TERMINATORS = ".!?"
# Opening quotes/brackets are transparent when checking for a capital start.
_TRANSPARENT = "\"'‘“([«"


def _boundary_after(text: str, i: int) -> bool:
    """True if the terminator run ending at index ``i`` closes a sentence."""
    j = i + 1
    if j >= len(text):
        return True
    if text[j] != " ":  # normalized text: all whitespace is single spaces
        return False
    j += 1
    while j < len(text) and text[j] in _TRANSPARENT:
        j += 1
    return j < len(text) and text[j].isupper()


def _guarded(text: str, i: int) -> bool:
    """True if the period at ``i`` ends a token on the abbreviation list."""
    start = i
    while start > 0 and text[start - 1] != " ":
        start -= 1
    return text[start : i + 1].lower() in abbreviation_guards()


def split_sentences(text: str) -> list[str]:
    """Rule-based sentence split over the whitespace-normalized text.

    Splits after a run of ``. ! ?`` when followed by a space plus a capital
    (or end of text), unless the period ends a known abbreviation. Joining
    the result with single spaces reproduces the normalized input exactly,
    and indices are stable across runs. Whitespace-only text gives [];
    text without terminal punctuation comes back as a single sentence.
    """
    norm = normalize_whitespace(text)
    if not norm:
        return []
    sentences: list[str] = []
    start = 0
    i = 0
    n = len(norm)
    while i < n:
        if norm[i] in _TERMINATORS:
            # consume the whole terminator run ("?!", "...", ...)
            while i + 1 < n and norm[i + 1] in _TERMINATORS:
                i += 1
            if _boundary_after(norm, i) and not (norm[i] == "." and _guarded(norm, i)):
                sentences.append(norm[start : i + 1])
                start = i + 2  # skip the single separating space
                i = start
                continue
        i += 1
    if start < n:
        sentences.append(norm[start:])
    return sentences
