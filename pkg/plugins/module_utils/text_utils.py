"""
Tokenizing and stemming shared by the extractor, matcher and alias merging.
"""

import re

_TOKEN_RE = re.compile(r"[a-z0-9]+")
_DOUBLE_KEEP = {"ll", "ss", "zz", "ff"}


def tokenize(text: str) -> list[str]:
    """Lowercase alphanumeric tokens."""
    return _TOKEN_RE.findall(text.lower())


def stem(word: str) -> str:
    """Suffix stripping (-ing, -ed, -s) plus trailing-e and double-consonant folding.

    "milling", "milled", "mills" and "mill" share a stem, as do "boring" and "bore".
    """
    w = word.lower()
    for suffix in ("ing", "ed", "es", "s"):
        if w.endswith(suffix) and len(w) - len(suffix) >= 3:
            w = w[: -len(suffix)]
            break
    if len(w) > 3 and w.endswith("e"):
        w = w[:-1]
    if len(w) > 3 and w[-1] == w[-2] and w[-2:] not in _DOUBLE_KEEP and w[-1] not in "aeiou":
        w = w[:-1]
    return w


def stem_tokens(text: str) -> list[str]:
    return [stem(tok) for tok in tokenize(text)]


def jaccard(a: set[str] | frozenset[str], b: set[str] | frozenset[str]) -> float:
    """Token-set Jaccard similarity; two empty sets are dissimilar."""
    if not a and not b:
        return 0.0
    return len(a & b) / len(a | b)


def name_similarity(a: str, b: str) -> float:
    """Jaccard over stemmed tokens of two names."""
    return jaccard(set(stem_tokens(a)), set(stem_tokens(b)))


def slug(text: str) -> str:
    """Lowercase, dash-joined identifier."""
    return "-".join(tokenize(text))


def field_words(field_name: str) -> str:
    """'feed_rate' -> 'feed rate'."""
    return field_name.replace("_", " ").strip()
