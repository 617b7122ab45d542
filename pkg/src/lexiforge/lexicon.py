"""Gold lexicon: categories, term normalization, loading/merging and C-value scoring."""

from __future__ import annotations

import csv
import hashlib
import io
import math
import re
import unicodedata
from collections import Counter
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping

from sklearn.base import BaseEstimator

from .errors import LexiconError
from .text import fold, tokenize


@dataclass(frozen=True)
class Category:
    code: str
    label: str
    display: str


CATEGORIES: dict[str, Category] = {
    c.code: c
    for c in (
        Category("sus", "durabilité", "Sustainability"),
        Category("dig", "transformation numérique", "Digital transformation"),
        Category("mag", "gestion du changement", "Change management"),
        Category("inn", "activités d'innovation", "Innovation activities"),
        Category("bus", "modèles d'entreprise", "Business models"),
        Category("cor", "responsabilité sociale des entreprises", "Corporate social responsibility"),
    )
}
CATEGORY_CODES = tuple(CATEGORIES)
MACRO = "mac"
MACRO_DISPLAY = "macro-term"

DEFAULT_SEED_KEYWORDS = ("innovation", "recherche", "development", "strategy", "design")


def check_category(code: str) -> str:
    code = code.strip().lower()
    if code not in CATEGORIES:
        raise LexiconError("bad_category", f"unknown category code {code!r}")
    return code


# ---------------------------------------------------------------------------
# normalization

class LemmaTable(Mapping[str, str]):
    """Exact token -> lemma substitutions, chains resolved so lookup is idempotent."""

    def __init__(self, pairs: Mapping[str, str] | Iterable[tuple[str, str]] = ()):
        raw = dict(pairs.items() if isinstance(pairs, Mapping) else pairs)
        table = {}
        for k, v in raw.items():
            k, v = _fold_surface(k), _fold_surface(v)
            if not k or not v or " " in k or " " in v:
                raise ValueError(f"lemma entries must be single tokens: {k!r} -> {v!r}")
            if k != v:
                table[k] = v
        resolved = {}
        for k in table:
            seen = {k}
            v = table[k]
            while v in table:
                if v in seen:
                    raise ValueError(f"cyclic lemma chain through {v!r}")
                seen.add(v)
                v = table[v]
            resolved[k] = v
        self._table = resolved

    def __getitem__(self, key):
        return self._table[key]

    def __iter__(self):
        return iter(self._table)

    def __len__(self):
        return len(self._table)

    @classmethod
    def read(cls, path) -> "LemmaTable":
        with open(path, encoding="utf-8") as fh:
            return cls.parse(fh.read())

    @classmethod
    def parse(cls, text: str) -> "LemmaTable":
        pairs = []
        for line in text.splitlines():
            if not line.strip() or line.startswith("#"):
                continue
            token, lemma = line.rstrip("\n").split("\t")[:2]
            pairs.append((token, lemma))
        return cls(pairs)

    @classmethod
    def bundled(cls) -> "LemmaTable":
        return cls.parse(resources.files("lexiforge").joinpath("data/lemmas.tsv").read_text("utf-8"))


_SPACE_BEFORE = re.compile(r"\s+([,.;:!?)\]}])")
_SPACE_AFTER = re.compile(r"([(\[{])\s+")


def _fold_surface(text: str) -> str:
    text = unicodedata.normalize("NFKC", text)
    text = unicodedata.normalize("NFC", fold(text))
    text = _SPACE_BEFORE.sub(r"\1", text)
    text = _SPACE_AFTER.sub(r"\1", text)
    return " ".join(text.split())


def normalize_term(surface: str, lemmas: Mapping[str, str] | None = None) -> str:
    """Canonical form of a term surface string.

    NFKC, lowercase, accent fold, whitespace tidy-up around punctuation and
    between words, then optional per-token lemma substitution.  Idempotent.
    """
    out = surface
    for _ in range(8):
        prev = out
        out = _fold_surface(out)
        if lemmas:
            out = " ".join(lemmas.get(tok, tok) for tok in out.split(" "))
        if out == prev:
            break
    return out


# ---------------------------------------------------------------------------
# lexicon

@dataclass(frozen=True)
class Term:
    surface: str
    canonical: str
    category: str
    token_count: int

    @classmethod
    def make(cls, surface, category, canonical=None, lemmas=None):
        category = check_category(category)
        canonical = normalize_term(canonical if canonical else surface, lemmas)
        if not canonical:
            raise LexiconError("empty_term", f"surface {surface!r} normalizes to nothing")
        return cls(surface.strip(), canonical, category, len(canonical.split(" ")))

    @property
    def tokens(self) -> tuple[str, ...]:
        return tuple(self.canonical.split(" "))


@dataclass(frozen=True)
class Lexicon:
    terms: tuple[Term, ...] = ()
    version: str = ""
    _index: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        index = {}
        for t in self.terms:
            if t.canonical in index:
                raise LexiconError("duplicate_conflict", f"canonical {t.canonical!r} appears twice")
            index[t.canonical] = t
        object.__setattr__(self, "terms", tuple(sorted(self.terms, key=lambda t: t.canonical)))
        object.__setattr__(self, "_index", index)
        if not self.version:
            object.__setattr__(self, "version", _digest_terms(self.terms))

    def __len__(self):
        return len(self.terms)

    def __contains__(self, canonical):
        return canonical in self._index

    def __iter__(self):
        return iter(self.terms)

    def get(self, canonical: str) -> Term | None:
        return self._index.get(canonical)

    def by_category(self, code: str) -> list[Term]:
        return [t for t in self.terms if t.category == code]

    def to_tsv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# version: {self.version}\n")
        buf.write("surface\tcategory\tcanonical\n")
        for t in self.terms:
            buf.write(f"{t.surface}\t{t.category}\t{t.canonical}\n")
        return buf.getvalue()


def _digest_terms(terms) -> str:
    h = hashlib.sha256()
    for t in sorted(terms, key=lambda t: t.canonical):
        h.update(f"{t.canonical}\t{t.category}\n".encode())
    return h.hexdigest()[:12]


def parse_lexicon(text: str, lemmas: Mapping[str, str] | None = None) -> Lexicon:
    lines = [(n, line) for n, line in enumerate(text.splitlines(), 1) if line.strip() and not line.startswith("#")]
    if not lines:
        return Lexicon()
    header = [h.strip().lower() for h in lines[0][1].split("\t")]
    if header[:2] != ["surface", "category"]:
        raise LexiconError("bad_header", f"expected 'surface<TAB>category', got {lines[0][1]!r}", row=lines[0][0])
    has_canonical = len(header) > 2 and header[2] == "canonical"
    found: dict[str, Term] = {}
    for row, line in lines[1:]:
        cols = line.rstrip("\n").split("\t")
        if len(cols) < 2:
            raise LexiconError("bad_row", f"expected at least 2 columns in {line!r}", row=row)
        try:
            category = check_category(cols[1])
        except LexiconError:
            raise LexiconError("bad_category", f"unknown category {cols[1]!r}", row=row) from None
        canonical = cols[2] if has_canonical and len(cols) > 2 and cols[2].strip() else None
        term = Term.make(cols[0], category, canonical, lemmas)
        prev = found.get(term.canonical)
        if prev is not None:
            if prev.category != term.category:
                raise LexiconError(
                    "duplicate_conflict",
                    f"{term.canonical!r} listed as {prev.category} and {term.category}",
                    row=row,
                )
            continue
        found[term.canonical] = term
    return Lexicon(tuple(found.values()))


def load_lexicon(path, lemmas: Mapping[str, str] | None = None) -> Lexicon:
    return parse_lexicon(Path(path).read_text(encoding="utf-8"), lemmas)


def merge_accepted(lexicon: Lexicon, accepted, lemmas: Mapping[str, str] | None = None) -> Lexicon:
    """Return a new lexicon version with the accepted ``(ngram, category)`` pairs added.

    Already present terms are no-ops.  A category clash aborts the whole merge.
    """
    terms = {t.canonical: t for t in lexicon.terms}
    log = [lexicon.version]
    for ngram, category in accepted:
        surface = ngram if isinstance(ngram, str) else " ".join(ngram)
        term = Term.make(surface, category, lemmas=lemmas)
        prev = terms.get(term.canonical)
        if prev is not None:
            if prev.category != term.category:
                raise LexiconError(
                    "duplicate_conflict",
                    f"{term.canonical!r} already listed as {prev.category}, not {term.category}",
                )
            continue
        terms[term.canonical] = term
        log.append(f"{term.canonical}\t{term.category}")
    version = hashlib.sha256("\n".join(log + [str(len(accepted))]).encode()).hexdigest()[:12]
    return Lexicon(tuple(terms.values()), version=version)


# ---------------------------------------------------------------------------
# C-value candidate scoring

def load_stopwords(path=None) -> frozenset[str]:
    if path is None:
        text = resources.files("lexiforge").joinpath("data/stopwords_en.txt").read_text("utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    return frozenset(fold(w.strip()) for w in text.splitlines() if w.strip() and not w.startswith("#"))


@dataclass(frozen=True)
class CandidateScore:
    ngram: tuple[str, ...]
    frequency: int
    nested_in: tuple[tuple[str, ...], ...]
    cvalue: float

    @property
    def text(self) -> str:
        return " ".join(self.ngram)


def content_runs(text: str, stopwords: frozenset[str]) -> list[list[str]]:
    """Maximal runs of folded content tokens; stopwords and punctuation break runs."""
    runs, cur = [], []
    for tok in tokenize(text)[0]:
        t = normalize_term(tok)
        if t and any(c.isalpha() for c in t) and t not in stopwords:
            cur.append(t)
        elif cur:
            runs.append(cur)
            cur = []
    if cur:
        runs.append(cur)
    return runs


def cvalue_candidates(documents: Iterable, max_n: int = 4, min_freq: int = 2, stopwords=None) -> list[CandidateScore]:
    """Rank multi-word candidates by C-value.

    ``documents`` are strings or objects with a ``text`` attribute.  Candidates
    are the 2..max_n grams inside stopword-delimited content runs that occur at
    least ``min_freq`` times.  For a candidate nested in longer candidates T_a,
    the mean frequency of T_a is subtracted before weighting by log2(length).
    """
    if not 2 <= max_n <= 6:
        raise ValueError("max_n must lie in [2, 6]")
    if min_freq < 1:
        raise ValueError("min_freq must be >= 1")
    stopwords = load_stopwords() if stopwords is None else stopwords
    counts: Counter = Counter()
    for doc in documents:
        text = doc if isinstance(doc, str) else doc.text
        for run in content_runs(text, stopwords):
            for n in range(2, min(max_n, len(run)) + 1):
                for i in range(len(run) - n + 1):
                    counts[tuple(run[i:i + n])] += 1
    cands = {g: f for g, f in counts.items() if f >= min_freq}
    containers: dict[tuple, set] = {g: set() for g in cands}
    for b in cands:
        for n in range(2, len(b)):
            for i in range(len(b) - n + 1):
                sub = b[i:i + n]
                if sub in containers:
                    containers[sub].add(b)
    out = []
    for a, f in cands.items():
        nested = containers[a]
        if nested:
            value = math.log2(len(a)) * (f - sum(cands[b] for b in nested) / len(nested))
        else:
            value = math.log2(len(a)) * f
        out.append(CandidateScore(a, f, tuple(sorted(nested)), max(value, 0.0)))
    out.sort(key=lambda c: (-c.cvalue, -c.frequency, c.text))
    return out


def format_candidates(cands: Iterable[CandidateScore]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, delimiter="\t", lineterminator="\n")
    w.writerow(["ngram", "frequency", "cvalue"])
    for c in cands:
        w.writerow([c.text, c.frequency, f"{c.cvalue:.6f}"])
    return buf.getvalue()


class CValueExtractor(BaseEstimator):
    """Estimator wrapper: ``fit`` on documents, read ``candidates_``."""

    def __init__(self, max_n=4, min_freq=2):
        self.max_n = max_n
        self.min_freq = min_freq

    def fit(self, X, y=None):
        self.candidates_ = cvalue_candidates(X, self.max_n, self.min_freq)
        return self

    def transform(self, X):
        """Score each document independently; returns one ranking per document."""
        return [cvalue_candidates([doc], self.max_n, 1) for doc in X]
