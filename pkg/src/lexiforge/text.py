"""Low-level text helpers: accent folding and the punctuation-aware tokenizer."""

from __future__ import annotations

import re
import unicodedata

_WS = re.compile(r"\S+")


def is_punct(ch: str) -> bool:
    cat = unicodedata.category(ch)
    return cat[0] in "PS"


def fold(text: str) -> str:
    """Lowercase and strip combining marks (NFKD based)."""
    text = unicodedata.normalize("NFKD", text.lower())
    return "".join(c for c in text if not unicodedata.combining(c))


def tokenize(text: str) -> tuple[list[str], list[tuple[int, int]]]:
    """Split on whitespace, then peel leading/trailing punctuation into tokens.

    Internal punctuation (hyphens, apostrophes, ``&``) stays inside the token.
    Returns the tokens and their ``(start, end)`` character offsets in ``text``.
    """
    tokens: list[str] = []
    offsets: list[tuple[int, int]] = []
    for m in _WS.finditer(text):
        start, end = m.span()
        chunk = m.group()
        lead = 0
        while lead < len(chunk) and is_punct(chunk[lead]):
            lead += 1
        if lead == len(chunk):
            for i in range(len(chunk)):
                tokens.append(chunk[i])
                offsets.append((start + i, start + i + 1))
            continue
        trail = len(chunk)
        while trail > lead and is_punct(chunk[trail - 1]):
            trail -= 1
        for i in range(lead):
            tokens.append(chunk[i])
            offsets.append((start + i, start + i + 1))
        tokens.append(chunk[lead:trail])
        offsets.append((start + lead, start + trail))
        for i in range(trail, len(chunk)):
            tokens.append(chunk[i])
            offsets.append((start + i, start + i + 1))
    return tokens, offsets


def collapse_ws(text: str) -> str:
    return " ".join(text.split())
