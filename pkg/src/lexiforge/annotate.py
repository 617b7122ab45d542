"""Sentence splitting, gold-term matching, the phrase/mot annotation format and BIO labels."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from importlib import resources
from typing import Iterable, Mapping, Sequence

from .errors import AnnotationParseError
from .lexicon import CATEGORIES, MACRO, MACRO_DISPLAY, Lexicon, normalize_term
from .text import tokenize


@dataclass(frozen=True)
class Sentence:
    doc_id: str
    index: int
    text: str
    tokens: tuple[str, ...]
    char_offsets: tuple[tuple[int, int], ...]
    start: int = 0  # offset of ``text`` in the source document

    @classmethod
    def from_text(cls, text, doc_id="", index=0, start=0):
        tokens, offsets = tokenize(text)
        return cls(doc_id, index, text, tuple(tokens), tuple(offsets), start)

    def __len__(self):
        return len(self.tokens)

    def to_dict(self):
        return {
            "doc_id": self.doc_id,
            "index": self.index,
            "start": self.start,
            "text": self.text,
            "tokens": list(self.tokens),
            "char_offsets": [list(o) for o in self.char_offsets],
        }

    @classmethod
    def from_dict(cls, d):
        return cls(d["doc_id"], d["index"], d["text"], tuple(d["tokens"]),
                   tuple(tuple(o) for o in d["char_offsets"]), d.get("start", 0))


@dataclass(frozen=True)
class TermSpan:
    start: int
    end: int
    category: str
    canonical: str
    is_macro: bool = False
    constituents: tuple[str, ...] = field(default=())

    def key(self):
        return (self.start, self.end, self.category)

    def to_dict(self):
        d = {"start": self.start, "end": self.end, "category": self.category, "canonical": self.canonical,
             "is_macro": self.is_macro}
        if self.constituents:
            d["constituents"] = list(self.constituents)
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(d["start"], d["end"], d["category"], d["canonical"], d.get("is_macro", False),
                   tuple(d.get("constituents", ())))


# ---------------------------------------------------------------------------
# segmentation

def load_abbreviations() -> frozenset[str]:
    text = resources.files("lexiforge").joinpath("data/abbreviations.txt").read_text("utf-8")
    return frozenset(w.strip().lower() for w in text.splitlines() if w.strip() and not w.startswith("#"))


_ABBREVIATIONS = None
_BOUNDARY = re.compile(r"[.!?]+(?=\s+[\"'(\[]?[A-Z0-9À-Þ])")


def split_sentences(text: str, doc_id: str = "", abbreviations: Iterable[str] | None = None,
                    first_index: int = 0) -> list[Sentence]:
    """Rule-based segmentation; offsets of every sentence point back into ``text``."""
    global _ABBREVIATIONS
    if abbreviations is None:
        if _ABBREVIATIONS is None:
            _ABBREVIATIONS = load_abbreviations()
        abbrevs = _ABBREVIATIONS
    else:
        abbrevs = frozenset(a.lower() for a in abbreviations)
    cuts = []
    for m in _BOUNDARY.finditer(text):
        ws = text.rfind(" ", 0, m.start())
        ws = max(ws, text.rfind("\n", 0, m.start()), text.rfind("\t", 0, m.start()))
        word = text[ws + 1:m.end()].lower()
        if m.group() == "." and word in abbrevs:
            continue
        cuts.append(m.end())
    cuts.append(len(text))
    out, prev = [], 0
    for cut in cuts:
        chunk = text[prev:cut]
        stripped = chunk.strip()
        if stripped:
            lead = len(chunk) - len(chunk.lstrip())
            begin = prev + lead
            out.append(Sentence.from_text(stripped, doc_id, first_index + len(out), begin))
        prev = cut
    return out


# ---------------------------------------------------------------------------
# term matching

class TermMatcher:
    """Index of lexicon terms by first token for fast longest-match scans."""

    def __init__(self, lexicon: Lexicon, lemmas: Mapping[str, str] | None = None):
        self.lexicon = lexicon
        self.lemmas = lemmas
        self._by_first: dict[str, list[tuple[tuple[str, ...], object]]] = {}
        for term in lexicon:
            self._by_first.setdefault(term.tokens[0], []).append((term.tokens, term))
        for entries in self._by_first.values():
            entries.sort(key=lambda e: -len(e[0]))

    def normalized(self, tokens: Sequence[str]) -> list[str]:
        return [normalize_term(t, self.lemmas) for t in tokens]

    def raw_matches(self, tokens: Sequence[str]):
        norm = self.normalized(tokens)
        found = []
        for i, tok in enumerate(norm):
            for toks, term in self._by_first.get(tok, ()):
                n = len(toks)
                if tuple(norm[i:i + n]) == toks:
                    found.append((i, i + n, term))
        return found

    def match(self, sentence: Sentence) -> list[TermSpan]:
        return match_terms(sentence, self.lexicon, matcher=self)


def match_terms(sentence: Sentence, lexicon: Lexicon, lemmas=None, matcher: TermMatcher | None = None) -> list[TermSpan]:
    """Longest-match lexicon spans; partially overlapping matches fuse into one macro span."""
    matcher = matcher or TermMatcher(lexicon, lemmas)
    found = matcher.raw_matches(sentence.tokens)
    # drop matches strictly covered by a longer one
    kept = [m for m in found
            if not any(o is not m and o[0] <= m[0] and m[1] <= o[1] and (o[1] - o[0]) > (m[1] - m[0])
                       for o in found)]
    kept = sorted(set((s, e, t.canonical, t.category) for s, e, t in kept))
    spans: list[TermSpan] = []
    group: list[tuple] = []
    group_end = -1
    for m in kept + [None]:
        if m is not None and group and m[0] < group_end:
            group.append(m)
            group_end = max(group_end, m[1])
            continue
        if group:
            if len(group) == 1:
                s, e, canon, cat = group[0]
                spans.append(TermSpan(s, e, cat, canon))
            else:
                s = group[0][0]
                names = tuple(g[2] for g in group)
                canon = " ".join(matcher.normalized(sentence.tokens[s:group_end]))
                spans.append(TermSpan(s, group_end, MACRO, canon, True, names))
        if m is not None:
            group = [m]
            group_end = m[1]
    return spans


# ---------------------------------------------------------------------------
# annotation format

def category_display(code: str) -> str:
    return MACRO_DISPLAY if code == MACRO else CATEGORIES[code].display


def _category_from_display(label: str) -> str | None:
    if label in (MACRO_DISPLAY, MACRO):
        return MACRO
    for c in CATEGORIES.values():
        if label in (c.display, c.label, c.code):
            return c.code
    return None


def escape_attr(value: str) -> str:
    return value.replace("&", "&amp;").replace("<", "&lt;").replace("'", "&apos;")


def escape_text(value: str) -> str:
    return value.replace("&", "&amp;").replace("<", "&lt;")


_ENTITIES = {"&amp;": "&", "&lt;": "<", "&apos;": "'", "&gt;": ">", "&quot;": '"', "&#59;": ";"}
_ENTITY = re.compile(r"&(amp|lt|apos|gt|quot|#59);")


def unescape(value: str) -> str:
    return _ENTITY.sub(lambda m: _ENTITIES[m.group()], value)


_VALUE_ESCAPES = {"&": "&amp;", "<": "&lt;", "'": "&apos;", ";": "&#59;"}
_VALUE_SPECIAL = re.compile("[&<';]")
# "; " separates values unless its ";" closes an entity such as "&amp;"
_VALUE_SEP = re.compile(r"(?<!&amp)(?<!&lt)(?<!&apos)(?<!&gt)(?<!&quot)(?<!&#59); ")


def join_values(values: Sequence[str]) -> str:
    # a literal ";" inside a value would be read back as a separator
    return "; ".join(_VALUE_SPECIAL.sub(lambda m: _VALUE_ESCAPES[m.group()], v) for v in values)


def split_values(raw: str) -> list[str]:
    return [unescape(v) for v in _VALUE_SEP.split(raw)]


def _span_values(span: TermSpan) -> tuple[str, ...]:
    return span.constituents if span.is_macro and span.constituents else (span.canonical,)


def emit_annotation(sentence: Sentence, spans: Sequence[TermSpan]) -> str:
    """Render one sentence as a ``<phrase>`` element with ``<mot>`` term markup."""
    text = sentence.text
    if not spans:
        return f"<phrase>{escape_text(text)}</phrase>"
    spans = sorted(spans, key=lambda s: s.start)
    values = [v for sp in spans for v in _span_values(sp)]
    head = (f"<phrase category='{escape_attr(category_display(spans[0].category))}' "
            f"values='{join_values(values)}'>")
    parts = [head]
    pos = 0
    for sp in spans:
        a = sentence.char_offsets[sp.start][0]
        b = sentence.char_offsets[sp.end - 1][1]
        parts.append(escape_text(text[pos:a]))
        if sp.is_macro:
            parts.append(f"<mot category='{MACRO_DISPLAY}' values='{join_values(_span_values(sp))}'>")
        else:
            parts.append(f"<mot category='{escape_attr(category_display(sp.category))}'>")
        parts.append(escape_text(text[a:b]))
        parts.append("</mot>")
        pos = b
    parts.append(escape_text(text[pos:]))
    parts.append("</phrase>")
    return "".join(parts)


_TAG = re.compile(r"<(/?)(phrase|mot)((?:\s+[a-z]+='[^']*')*)\s*>")
_ATTR = re.compile(r"([a-z]+)='([^']*)'")


def parse_annotation(annotated: str, doc_id: str = "", index: int = 0, lemmas=None) -> tuple[Sentence, list[TermSpan]]:
    """Inverse of :func:`emit_annotation`."""
    s = annotated.strip("\n")
    m = _TAG.match(s)
    if not m or m.group(1) or m.group(2) != "phrase":
        raise AnnotationParseError("missing_phrase", 0, "expected <phrase> at start")
    phrase_attrs = dict(_ATTR.findall(m.group(3)))
    pos = m.end()
    text_parts: list[str] = []
    length = 0
    mots: list[tuple[int, int, str, tuple[str, ...] | None]] = []
    open_mot = None
    closed = False
    while pos < len(s):
        lt = s.find("<", pos)
        if lt == -1:
            raise AnnotationParseError("unbalanced", len(s), "missing </phrase>")
        chunk = unescape(s[pos:lt])
        text_parts.append(chunk)
        length += len(chunk)
        tm = _TAG.match(s, lt)
        if tm is None:
            raise AnnotationParseError("bad_tag", lt)
        closing, name, attrs = tm.group(1), tm.group(2), dict(_ATTR.findall(tm.group(3)))
        if name == "phrase":
            if not closing:
                raise AnnotationParseError("nested_phrase", lt)
            if open_mot is not None:
                raise AnnotationParseError("unbalanced", lt, "<mot> not closed")
            closed = True
            pos = tm.end()
            break
        if not closing:
            if open_mot is not None:
                raise AnnotationParseError("nested_mot", lt)
            label = unescape(attrs.get("category", ""))
            code = _category_from_display(label)
            if code is None:
                raise AnnotationParseError("unknown_category", lt, label)
            vals = tuple(split_values(attrs["values"])) if "values" in attrs else None
            open_mot = (length, code, vals)
        else:
            if open_mot is None:
                raise AnnotationParseError("unbalanced", lt, "stray </mot>")
            mots.append((open_mot[0], length, open_mot[1], open_mot[2]))
            open_mot = None
        pos = tm.end()
    if not closed:
        raise AnnotationParseError("unbalanced", len(s), "missing </phrase>")
    if s[pos:].strip():
        raise AnnotationParseError("trailing_content", pos)
    text = "".join(text_parts)
    sentence = Sentence.from_text(text, doc_id, index)
    if "category" in phrase_attrs and _category_from_display(unescape(phrase_attrs["category"])) is None:
        raise AnnotationParseError("unknown_category", 0, phrase_attrs["category"])
    phrase_values = split_values(phrase_attrs["values"]) if phrase_attrs.get("values") else []
    starts = {o[0]: i for i, o in enumerate(sentence.char_offsets)}
    ends = {o[1]: i + 1 for i, o in enumerate(sentence.char_offsets)}
    spans = []
    vi = 0
    for a, b, code, vals in mots:
        if a not in starts or b not in ends:
            raise AnnotationParseError("misaligned_mot", a, "term markup does not sit on token boundaries")
        ts, te = starts[a], ends[b]
        if code == MACRO:
            cons = vals or ()
            canon = " ".join(normalize_term(t, lemmas) for t in sentence.tokens[ts:te])
            spans.append(TermSpan(ts, te, MACRO, canon, True, cons))
            vi += len(cons)
        else:
            if vi < len(phrase_values):
                canon = phrase_values[vi]
            else:
                canon = " ".join(normalize_term(t, lemmas) for t in sentence.tokens[ts:te])
            spans.append(TermSpan(ts, te, code, canon))
            vi += 1
    return sentence, spans


# ---------------------------------------------------------------------------
# BIO

def _check_spans(n_tokens: int, spans: Sequence[TermSpan]) -> list[TermSpan]:
    spans = sorted(spans, key=lambda s: s.start)
    prev_end = 0
    for sp in spans:
        if not 0 <= sp.start < sp.end <= n_tokens:
            raise ValueError(f"span {sp.start}:{sp.end} out of range for {n_tokens} tokens")
        if sp.start < prev_end:
            raise ValueError(f"overlapping spans at token {sp.start}; coalesce first")
        prev_end = sp.end
    return spans


def to_bio(sentence: Sentence | Sequence[str], spans: Sequence[TermSpan]) -> list[str]:
    """IOB1 labels: ``I-cat`` inside spans, ``B-cat`` only right after a same-category span."""
    n = len(sentence.tokens) if isinstance(sentence, Sentence) else len(sentence)
    labels = ["O"] * n
    prev_end, prev_cat = -1, None
    for sp in _check_spans(n, spans):
        for i in range(sp.start, sp.end):
            labels[i] = f"I-{sp.category}"
        if sp.start == prev_end and sp.category == prev_cat:
            labels[sp.start] = f"B-{sp.category}"
        prev_end, prev_cat = sp.end, sp.category
    return labels


def split_label(label: str) -> tuple[str, str | None]:
    if label == "O":
        return "O", None
    tag, _, cat = label.partition("-")
    return tag, cat


def bio_spans(labels: Sequence[str]) -> list[tuple[int, int, str]]:
    """``(start, end, category)`` triples under IOB1 decoding (B- always opens)."""
    out = []
    start, cat = None, None
    for i, label in enumerate(labels):
        tag, c = split_label(label)
        if tag == "O":
            if start is not None:
                out.append((start, i, cat))
            start, cat = None, None
        elif tag == "B" or c != cat or start is None:
            if start is not None:
                out.append((start, i, cat))
            start, cat = i, c
    if start is not None:
        out.append((start, len(labels), cat))
    return out


def from_bio(sentence: Sentence | Sequence[str], labels: Sequence[str], lemmas=None) -> list[TermSpan]:
    tokens = sentence.tokens if isinstance(sentence, Sentence) else sentence
    if len(tokens) != len(labels):
        raise ValueError("labels and tokens differ in length")
    spans = []
    for s, e, cat in bio_spans(labels):
        canon = " ".join(normalize_term(t, lemmas) for t in tokens[s:e])
        spans.append(TermSpan(s, e, cat, canon, cat == MACRO))
    return spans


# ---------------------------------------------------------------------------
# corpus files

def write_conll(sequences: Iterable[tuple[Sequence[str], Sequence[str]]], fh, *extra_columns) -> None:
    """``token<TAB>label[<TAB>extra…]`` rows, blank line between sentences."""
    extras = list(zip(*extra_columns)) if extra_columns else None
    for n, (tokens, labels) in enumerate(sequences):
        cols = [tokens, labels] + ([list(c) for c in extras[n]] if extras else [])
        for row in zip(*cols):
            fh.write("\t".join(row) + "\n")
        fh.write("\n")


def read_conll(fh) -> list[list[list[str]]]:
    """Sentences as lists of column lists: ``[[tokens], [labels], ...]``."""
    sentences, rows = [], []
    for line in fh:
        line = line.rstrip("\n")
        if not line.strip():
            if rows:
                sentences.append([list(c) for c in zip(*rows)])
                rows = []
            continue
        rows.append(line.split("\t"))
    if rows:
        sentences.append([list(c) for c in zip(*rows)])
    return sentences


@dataclass
class AnnotatedSentence:
    sentence: Sentence
    spans: list[TermSpan]
    source: str = "web"

    @property
    def labels(self) -> list[str]:
        return to_bio(self.sentence, self.spans)

    def to_dict(self):
        d = self.sentence.to_dict()
        d["source"] = self.source
        d["spans"] = [s.to_dict() for s in self.spans]
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(Sentence.from_dict(d), [TermSpan.from_dict(s) for s in d["spans"]], d.get("source", "web"))


def annotate_document(text: str, doc_id: str, matcher: TermMatcher, source: str = "web",
                      first_index: int = 0) -> list[AnnotatedSentence]:
    return [AnnotatedSentence(s, matcher.match(s), source)
            for s in split_sentences(text, doc_id, first_index=first_index)]
