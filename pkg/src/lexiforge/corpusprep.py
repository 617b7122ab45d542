"""Embedding store, cosine gate, context blocks and the four train/test split schemes."""

from __future__ import annotations

import json
import logging
import math
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .annotate import AnnotatedSentence, Sentence, TermSpan, to_bio
from .errors import EmbeddingFormatError, SplitError
from .lexicon import Lexicon, normalize_term

log = logging.getLogger(__name__)


@dataclass
class EmbeddingStore:
    dim: int
    vectors: dict[str, np.ndarray]
    unk_policy: str = "skip"
    duplicates: int = 0

    def __contains__(self, word):
        return word in self.vectors

    def __getitem__(self, word):
        return self.vectors[word]

    def __len__(self):
        return len(self.vectors)


def parse_embeddings(lines: Iterable[str], unk_policy="skip") -> EmbeddingStore:
    it = iter(lines)
    try:
        header = next(it).split()
    except StopIteration:
        raise EmbeddingFormatError(1, "empty file") from None
    if len(header) != 2:
        raise EmbeddingFormatError(1, "header must be 'vocab_size dim'")
    dim = int(header[1])
    if dim <= 0:
        raise EmbeddingFormatError(1, "dim must be positive")
    vectors: dict[str, np.ndarray] = {}
    dups = 0
    for row, line in enumerate(it, start=2):
        parts = line.rstrip("\n").split()
        if not parts:
            continue
        if len(parts) != dim + 1:
            raise EmbeddingFormatError(row, f"expected {dim} components, got {len(parts) - 1}")
        try:
            vec = np.array([float(x) for x in parts[1:]], dtype=np.float64)
        except ValueError:
            raise EmbeddingFormatError(row, "non-numeric component") from None
        if not np.all(np.isfinite(vec)):
            raise EmbeddingFormatError(row, "non-finite component")
        if parts[0] in vectors:
            dups += 1
        vectors[parts[0]] = vec
    if dups:
        log.warning("%d duplicate embedding rows; last occurrence kept", dups)
    return EmbeddingStore(dim, vectors, unk_policy, dups)


def load_embeddings(path, unk_policy="skip") -> EmbeddingStore:
    with open(path, encoding="utf-8") as fh:
        return parse_embeddings(fh, unk_policy)


def phrase_vector(tokens: Sequence[str], store: EmbeddingStore) -> np.ndarray:
    """Mean vector of in-vocabulary normalized tokens (zero vector when none are known)."""
    acc = np.zeros(store.dim)
    n = 0
    for tok in tokens:
        key = normalize_term(tok)
        vec = store.vectors.get(key)
        if vec is None:
            vec = store.vectors.get(tok)
        if vec is None:
            if store.unk_policy == "zero":
                n += 1
            continue
        acc += vec
        n += 1
    return acc / n if n else acc


def cosine(u, v) -> float:
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise ValueError(f"length mismatch: {u.shape} vs {v.shape}")
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        return 0.0
    return float(np.dot(u, v) / (nu * nv))


# ---------------------------------------------------------------------------
# blocks

@dataclass
class ContextBlock:
    block_id: str
    sentences: list[AnnotatedSentence]
    center_index: int
    term: str
    category: str
    source: str = "web"
    similarity: float | None = None

    @property
    def doc_id(self):
        return self.sentences[self.center_index].sentence.doc_id

    def tokens(self) -> list[str]:
        return [t for a in self.sentences for t in a.sentence.tokens]

    def sequence(self) -> tuple[list[str], list[str], list[int]]:
        """Concatenated tokens, IOB1 labels computed per sentence, and sentence start offsets."""
        tokens, labels, starts = [], [], []
        for a in self.sentences:
            starts.append(len(tokens))
            tokens.extend(a.sentence.tokens)
            labels.extend(to_bio(a.sentence, a.spans))
        return tokens, labels, starts

    def to_dict(self):
        return {
            "block_id": self.block_id,
            "source": self.source,
            "term": self.term,
            "category": self.category,
            "center_index": self.center_index,
            "similarity": self.similarity,
            "sentences": [a.to_dict() for a in self.sentences],
        }

    @classmethod
    def from_dict(cls, d):
        return cls(d["block_id"], [AnnotatedSentence.from_dict(s) for s in d["sentences"]], d["center_index"],
                   d["term"], d["category"], d.get("source", "web"), d.get("similarity"))


def build_blocks(doc: Sequence[AnnotatedSentence], width: int = 2) -> list[ContextBlock]:
    """One block per (term-bearing sentence, distinct term) with up to ``width`` neighbours per side."""
    blocks = []
    for i, ann in enumerate(doc):
        seen = []
        for sp in ann.spans:
            if sp.canonical not in seen:
                seen.append(sp.canonical)
                lo, hi = max(0, i - width), min(len(doc), i + width + 1)
                sent = ann.sentence
                block_id = f"{sent.doc_id}:{sent.index:05d}:{sp.canonical}"
                blocks.append(ContextBlock(block_id, list(doc[lo:hi]), i - lo, sp.canonical, sp.category, ann.source))
    return blocks


def block_similarity(block: ContextBlock, store: EmbeddingStore) -> float:
    return cosine(phrase_vector(block.term.split(" "), store), phrase_vector(block.tokens(), store))


def filter_blocks(blocks: Iterable[ContextBlock], store: EmbeddingStore, threshold: float = 0.5) -> list[ContextBlock]:
    """Record the term/block cosine on every block and keep those at or above ``threshold``."""
    kept = []
    for b in blocks:
        b.similarity = block_similarity(b, store)
        if b.similarity >= threshold:
            kept.append(b)
    return kept


def write_blocks(blocks: Iterable[ContextBlock], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for b in blocks:
            fh.write(json.dumps(b.to_dict(), ensure_ascii=False) + "\n")


def read_blocks(path) -> list[ContextBlock]:
    with open(path, encoding="utf-8") as fh:
        return [ContextBlock.from_dict(json.loads(line)) for line in fh if line.strip()]


# ---------------------------------------------------------------------------
# split schemes

@dataclass(frozen=True)
class SplitScheme:
    id: int
    web_train_frac: float
    pdf_train_frac: float
    keyword_train_frac: float
    per_source_keywords: bool = False
    seed: int = 0

    @classmethod
    def get(cls, scheme_id: int, seed: int = 0) -> "SplitScheme":
        try:
            web, pdf, kw, per_source = _SCHEMES[int(scheme_id)]
        except KeyError:
            raise SplitError(f"unknown split scheme {scheme_id!r}; expected 1..4") from None
        return cls(int(scheme_id), web, pdf, kw, per_source, seed)


# web train share, pdf train share, keyword share, separate keyword sets per source
_SCHEMES = {
    1: (1.0, 0.0, 1.0, False),
    2: (1.0, 0.0, 0.8, False),
    3: (0.75, 0.25, 0.7, False),
    4: (0.5, 0.5, 0.5, True),
}


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def _keyword_partition(terms: Iterable[str], frac: float, rng: random.Random) -> set[str]:
    pool = sorted(set(terms))
    rng.shuffle(pool)
    return set(pool[:_round_half_up(frac * len(pool))])


def split_dataset(web: Sequence[ContextBlock], pdf: Sequence[ContextBlock], scheme: SplitScheme,
                  lexicon: Lexicon | None = None) -> tuple[list[ContextBlock], list[ContextBlock]]:
    """Keyword-first split: pick train keywords, then draw train blocks per source among eligible ones.

    Returns ``(train, test)`` sorted by block id; every input block lands in exactly one side.
    """
    if not web or not pdf:
        raise SplitError("insufficient_blocks: scheme needs both web and pdf blocks")
    web = sorted(web, key=lambda b: b.block_id)
    pdf = sorted(pdf, key=lambda b: b.block_id)
    rng = random.Random(scheme.seed)

    def pool(blocks):
        terms = {b.term for b in blocks}
        if lexicon is not None:
            terms &= {t.canonical for t in lexicon}
        return terms

    if scheme.per_source_keywords:
        kw_web = _keyword_partition(pool(web), scheme.keyword_train_frac, rng)
        kw_pdf = _keyword_partition(pool(pdf), scheme.keyword_train_frac, rng)
    else:
        kw_web = kw_pdf = _keyword_partition(pool(web) | pool(pdf), scheme.keyword_train_frac, rng)

    train_ids = set()
    for blocks, frac, kws in ((web, scheme.web_train_frac, kw_web), (pdf, scheme.pdf_train_frac, kw_pdf)):
        eligible = [b for b in blocks if b.term in kws]
        rng.shuffle(eligible)
        n = min(_round_half_up(frac * len(blocks)), len(eligible))
        train_ids.update(b.block_id for b in eligible[:n])
    everything = sorted(web + pdf, key=lambda b: b.block_id)
    train = [b for b in everything if b.block_id in train_ids]
    test = [b for b in everything if b.block_id not in train_ids]
    return train, test
