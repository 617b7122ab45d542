"""Label inventory and token vocabulary."""

from __future__ import annotations

from collections import Counter
from typing import Iterable, Sequence

from ..lexicon import CATEGORY_CODES, MACRO

PAD, UNK = 0, 1


class LabelSet:
    """O first, then I- and B- labels for the six categories and the macro class."""

    def __init__(self, labels: Sequence[str] | None = None):
        if labels is None:
            cats = list(CATEGORY_CODES) + [MACRO]
            labels = ["O"] + [f"I-{c}" for c in cats] + [f"B-{c}" for c in cats]
        if labels[0] != "O" or len(set(labels)) != len(labels):
            raise ValueError("label set must start with O and contain no duplicates")
        self.labels = list(labels)
        self.index = {lab: i for i, lab in enumerate(self.labels)}

    def __len__(self):
        return len(self.labels)

    def encode(self, seq: Sequence[str]) -> list[int]:
        try:
            return [self.index[lab] for lab in seq]
        except KeyError as exc:
            raise ValueError(f"unknown label {exc.args[0]!r}") from None

    def decode(self, ids: Iterable[int]) -> list[str]:
        return [self.labels[i] for i in ids]


class Vocab:
    def __init__(self, words: Sequence[str] = (), min_freq: int = 3):
        self.min_freq = min_freq
        self.itos = ["<pad>", "<unk>"] + list(words)
        self.stoi = {w: i for i, w in enumerate(self.itos)}

    @staticmethod
    def key(token: str) -> str:
        return token.lower()

    @classmethod
    def build(cls, sentences: Iterable[Sequence[str]], min_freq: int = 3) -> "Vocab":
        counts = Counter(cls.key(t) for s in sentences for t in s)
        words = sorted(w for w, c in counts.items() if c >= min_freq)
        return cls(words, min_freq)

    def __len__(self):
        return len(self.itos)

    def encode(self, tokens: Sequence[str]) -> list[int]:
        return [self.stoi.get(self.key(t), UNK) for t in tokens]
