"""Manifest-driven ingestion of local HTML / plain-text snapshots.

URL filtering, tag-scoped keyword extraction and a two-step language check
(declared ``lang`` attribute, then an offline character-trigram classifier).
"""

from __future__ import annotations

import codecs
import hashlib
import json
import logging
import math
import re
from collections import Counter, defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from html.parser import HTMLParser
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence
from urllib.parse import urlsplit

from .errors import EncodingError, LexiforgeError
from .lexicon import DEFAULT_SEED_KEYWORDS
from .text import collapse_ws, fold, tokenize

log = logging.getLogger(__name__)

SECTORS = (
    "Machinerie électrique, électronique industrielle",
    "Chimie, pétrole, caoutchouc et plastique",
    "Services aux entreprises",
    "Fabrication de matériel de transport",
    "Communications",
    "Métaux et produits métalliques",
    "Logiciels informatiques",
    "Commerce de gros",
    "Fabrication de produits alimentaires, tabac",
    "Banque, assurances et services financiers",
    "Biotechnologie et sciences de la vie",
    "Matériel informatique",
    "Exploitation minière et extraction",
    "Services d'utilité publique",
    "Produits en cuir, pierre, argile et verre",
    "Fabrication de meubles",
    "Construction",
    "Médias et diffusion",
    "Fabrication de textiles et de vêtements",
    "Commerce de détail",
    "Transport, fret et stockage",
    "Fabrication diverse",
    "Voyages, personnel et loisirs",
    "Administration publique",
    "Imprimerie et édition",
    "Agriculture, horticulture et élevage",
    "Services immobiliers",
)

STATS_HEADER = ("Langues", "URLs", "Secteurs", "Tokens")


class ManifestError(LexiforgeError):
    pass


@dataclass(frozen=True)
class ManifestEntry:
    doc_id: str
    path: str
    url: str
    company: str
    sector: str
    kind: str = "html"


def parse_manifest(entries: Sequence[dict], base_dir=None) -> list[ManifestEntry]:
    out, seen = [], set()
    for i, e in enumerate(entries):
        try:
            entry = ManifestEntry(str(e["doc_id"]), str(e["path"]), str(e["url"]), str(e.get("company", "")),
                                  str(e.get("sector", "")), str(e.get("kind", "html")))
        except KeyError as exc:
            raise ManifestError(f"entry {i}: missing field {exc.args[0]!r}") from None
        if entry.doc_id in seen:
            raise ManifestError(f"entry {i}: duplicate doc_id {entry.doc_id!r}")
        if entry.kind not in ("html", "text"):
            raise ManifestError(f"entry {i}: kind must be html or text, got {entry.kind!r}")
        if entry.sector not in SECTORS:
            raise ManifestError(f"entry {i}: unknown sector {entry.sector!r}")
        if base_dir is not None and not Path(entry.path).is_absolute():
            entry = ManifestEntry(entry.doc_id, str(Path(base_dir) / entry.path), entry.url, entry.company,
                                  entry.sector, entry.kind)
        seen.add(entry.doc_id)
        out.append(entry)
    return out


def load_manifest(path) -> list[ManifestEntry]:
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    if not isinstance(data, list):
        raise ManifestError("manifest must be a JSON array")
    return parse_manifest(data, base_dir=path.parent)


@dataclass(frozen=True)
class FilterRules:
    seed_keywords: tuple[str, ...] = DEFAULT_SEED_KEYWORDS
    url_excludes: tuple[str, ...] = ()
    allowed_tags: frozenset[str] = frozenset({"p", "title", "h1", "h2"})
    homepage_only: bool = True
    max_depth: int = 1

    def __post_init__(self):
        object.__setattr__(self, "seed_keywords", tuple(self.seed_keywords))
        object.__setattr__(self, "url_excludes", tuple(self.url_excludes))
        object.__setattr__(self, "allowed_tags", frozenset(t.lower() for t in self.allowed_tags))
        if not self.seed_keywords:
            raise ValueError("seed_keywords must not be empty")
        if not self.allowed_tags:
            raise ValueError("allowed_tags must not be empty")

    @property
    def keyword_pattern(self) -> re.Pattern:
        alts = "|".join(re.escape(fold(k)) for k in sorted(self.seed_keywords, key=len, reverse=True))
        return re.compile(rf"(?<!\w)(?:{alts})(?!\w)")


# ---------------------------------------------------------------------------
# URL filter

@dataclass(frozen=True)
class UrlDecision:
    keep: bool
    reason: str | None = None


def filter_url(url: str, rules: FilterRules, check_depth: bool = True) -> UrlDecision:
    try:
        parts = urlsplit(url.strip())
    except ValueError:
        return UrlDecision(False, "malformed")
    if not parts.scheme or not parts.netloc or " " in parts.netloc:
        return UrlDecision(False, "malformed")
    target = (parts.path + ("?" + parts.query if parts.query else "")).lower()
    for needle in rules.url_excludes:
        if needle.lower() in target:
            return UrlDecision(False, f"excluded:{needle}")
    if rules.homepage_only and check_depth:
        depth = len([seg for seg in parts.path.split("/") if seg])
        if depth > rules.max_depth:
            return UrlDecision(False, f"depth:{depth}")
    return UrlDecision(True)


# ---------------------------------------------------------------------------
# decoding and passage extraction

_META_CHARSET = re.compile(rb"<meta[^>]+charset\s*=\s*[\"']?\s*([A-Za-z0-9_\-:.]+)", re.I)
_BOMS = ((codecs.BOM_UTF8, "utf-8-sig"), (codecs.BOM_UTF16_LE, "utf-16"), (codecs.BOM_UTF16_BE, "utf-16"))


def decode_document(data: bytes) -> str:
    """Meta charset first, then a byte-order mark, then strict UTF-8."""
    m = _META_CHARSET.search(data[:4096])
    if m:
        name = m.group(1).decode("ascii", "replace")
        try:
            codecs.lookup(name)
        except LookupError:
            name = None
        if name:
            try:
                text = data.decode(name)
                return text[1:] if text.startswith("﻿") else text
            except UnicodeDecodeError:
                pass
    for bom, enc in _BOMS:
        if data.startswith(bom):
            try:
                return data.decode(enc).lstrip("﻿")
            except UnicodeDecodeError:
                break
    try:
        return data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise EncodingError(f"undecodable document: {exc}") from None


@dataclass(frozen=True)
class Passage:
    doc_id: str
    tag: str
    text: str
    lang: str
    lang_confidence: float
    source_kind: str = "web"


_VOID = {"area", "base", "br", "col", "embed", "hr", "img", "input", "link", "meta", "source", "track", "wbr"}
_BLOCK = {"p", "div", "h1", "h2", "h3", "h4", "h5", "h6", "ul", "ol", "li", "table", "section", "article",
          "header", "footer", "nav", "aside", "form", "blockquote", "pre", "title", "main", "figure"}
_SKIP = {"script", "style", "noscript", "template"}


class _ElementCollector(HTMLParser):
    """Tolerant scan that yields the flattened text of every allowed element."""

    def __init__(self, allowed):
        super().__init__(convert_charrefs=True)
        self.allowed = allowed
        self.stack: list[tuple[str, str | None]] = []
        self.found: list[tuple[str, str, str | None]] = []
        self.capture = None  # (tag, stack depth, lang, parts)
        self.skip_depth = 0

    def _lang(self):
        for _, lang in reversed(self.stack):
            if lang:
                return lang
        return None

    def _flush(self):
        if self.capture is not None:
            tag, _, lang, parts = self.capture
            self.found.append((tag, collapse_ws("".join(parts)), lang))
            self.capture = None

    def handle_starttag(self, tag, attrs):
        tag = tag.lower()
        if tag in _VOID:
            if tag == "br" and self.capture is not None:
                self.capture[3].append(" ")
            return
        if self.capture is not None and self.capture[0] == "p" and tag in _BLOCK:
            self._close_to(self.capture[1])
        lang = dict(attrs).get("lang")
        self.stack.append((tag, lang))
        if tag in _SKIP:
            self.skip_depth += 1
        if tag in self.allowed and self.capture is None:
            self.capture = (tag, len(self.stack) - 1, self._lang(), [])
        elif self.capture is not None and tag in _BLOCK:
            self.capture[3].append(" ")

    def _close_to(self, depth):
        while len(self.stack) > depth:
            tag, _ = self.stack.pop()
            if tag in _SKIP:
                self.skip_depth -= 1
        if self.capture is not None and self.capture[1] >= len(self.stack):
            self._flush()

    def handle_endtag(self, tag):
        tag = tag.lower()
        for i in range(len(self.stack) - 1, -1, -1):
            if self.stack[i][0] == tag:
                self._close_to(i)
                return
        # stray end tag: ignored

    def handle_data(self, data):
        if self.capture is not None and not self.skip_depth:
            self.capture[3].append(data)

    def close(self):
        super().close()
        self._close_to(0)
        self._flush()


def html_elements(html: str, allowed) -> list[tuple[str, str, str | None]]:
    """``(tag, text, declared lang)`` for every allowed element in document order."""
    parser = _ElementCollector(frozenset(allowed))
    parser.feed(html)
    parser.close()
    return parser.found


def has_keyword(text: str, rules: FilterRules) -> bool:
    return rules.keyword_pattern.search(fold(text)) is not None


def extract_passages(doc: bytes | str, rules: FilterRules, doc_id: str = "", identifier=None) -> list[Passage]:
    html = decode_document(doc) if isinstance(doc, bytes) else doc
    identifier = identifier or default_identifier()
    out, seen = [], set()
    for tag, text, lang in html_elements(html, rules.allowed_tags):
        if not text or text in seen or not has_keyword(text, rules):
            continue
        seen.add(text)
        code, conf = identifier.detect(text, lang)
        out.append(Passage(doc_id, tag, text, code, conf, "web"))
    return out


def text_passages(doc: bytes | str, doc_id: str = "", identifier=None) -> list[Passage]:
    """Paragraphs (blank-line separated) of a pre-extracted PDF text file."""
    text = decode_document(doc) if isinstance(doc, bytes) else doc
    identifier = identifier or default_identifier()
    out, seen = [], set()
    for para in re.split(r"\n\s*\n", text):
        para = collapse_ws(para)
        if not para or para in seen:
            continue
        seen.add(para)
        code, conf = identifier.detect(para)
        out.append(Passage(doc_id, "text", para, code, conf, "pdf_text"))
    return out


# ---------------------------------------------------------------------------
# language identification

def _trigrams(text: str) -> Counter:
    grams: Counter = Counter()
    for word in re.findall(r"[^\W\d_]+", text.lower()):
        w = f" {word} "
        for i in range(len(w) - 2):
            grams[w[i:i + 3]] += 1
    return grams


class TrigramLanguageIdentifier:
    """Add-one smoothed character-trigram models; confidence is the posterior under a flat prior."""

    MIN_CHARS = 20
    OVERRIDE_CHARS = 40
    OVERRIDE_CONFIDENCE = 0.95

    def __init__(self, texts: dict[str, str]):
        self.profiles = {lang: _trigrams(t) for lang, t in sorted(texts.items())}
        vocab = set()
        for p in self.profiles.values():
            vocab.update(p)
        self.vocab_size = len(vocab) + 1
        self.totals = {lang: sum(p.values()) for lang, p in self.profiles.items()}

    @classmethod
    def bundled(cls) -> "TrigramLanguageIdentifier":
        base = resources.files("lexiforge").joinpath("data/profiles")
        texts = {}
        for entry in sorted(base.iterdir(), key=lambda e: e.name):
            if entry.name.endswith(".txt"):
                texts[entry.name[:-4]] = entry.read_text("utf-8")
        return cls(texts)

    @property
    def languages(self):
        return list(self.profiles)

    def posteriors(self, text: str) -> dict[str, float] | None:
        grams = _trigrams(text)
        known = sum(c for g, c in grams.items() if any(g in p for p in self.profiles.values()))
        total = sum(grams.values())
        if not total or known / total < 0.1:
            return None
        logp = {}
        for lang, prof in self.profiles.items():
            denom = math.log(self.totals[lang] + self.vocab_size)
            logp[lang] = sum(c * (math.log(prof.get(g, 0) + 1) - denom) for g, c in grams.items())
        top = max(logp.values())
        z = sum(math.exp(v - top) for v in logp.values())
        return {lang: math.exp(v - top) / z for lang, v in logp.items()}

    def classify(self, text: str) -> tuple[str, float]:
        post = self.posteriors(text)
        if post is None:
            return "und", 0.0
        lang = max(sorted(post), key=lambda k: post[k])
        return lang, post[lang]

    def detect(self, text: str, declared: str | None = None) -> tuple[str, float]:
        declared = declared.split("-")[0].split("_")[0].lower() if declared else None
        text = collapse_ws(text)
        if len(text) < self.MIN_CHARS:
            return declared or "und", 0.0
        post = self.posteriors(text)
        if post is None:
            return declared or "und", 0.0
        lang = max(sorted(post), key=lambda k: post[k])
        if declared and declared in post:
            # A declaration stands unless the classifier is sure of something else.
            sure = len(text) >= self.OVERRIDE_CHARS and post[lang] >= self.OVERRIDE_CONFIDENCE
            if lang == declared or not sure:
                return declared, round(post[declared], 6)
        return lang, round(post[lang], 6)


_DEFAULT_IDENTIFIER = None


def default_identifier() -> TrigramLanguageIdentifier:
    global _DEFAULT_IDENTIFIER
    if _DEFAULT_IDENTIFIER is None:
        _DEFAULT_IDENTIFIER = TrigramLanguageIdentifier.bundled()
    return _DEFAULT_IDENTIFIER


def detect_language(text: str, declared: str | None = None) -> tuple[str, float]:
    return default_identifier().detect(text, declared)


# ---------------------------------------------------------------------------
# corpus store

@dataclass
class StoredPassage:
    passage: Passage
    url: str
    company: str
    sector: str

    def to_json(self) -> str:
        p = self.passage
        return json.dumps({
            "doc_id": p.doc_id, "url": self.url, "company": self.company, "sector": self.sector,
            "tag": p.tag, "text": p.text, "lang": p.lang, "lang_confidence": p.lang_confidence,
            "source_kind": p.source_kind,
        }, ensure_ascii=False)

    @classmethod
    def from_json(cls, line: str) -> "StoredPassage":
        d = json.loads(line)
        return cls(Passage(d["doc_id"], d["tag"], d["text"], d["lang"], d["lang_confidence"], d["source_kind"]),
                   d["url"], d["company"], d["sector"])


@dataclass
class CorpusStore:
    passages: list[StoredPassage] = field(default_factory=list)
    skipped: list[tuple[str, str]] = field(default_factory=list)

    def stats(self) -> list[tuple[str, int, int, int]]:
        urls, sectors, tokens = defaultdict(set), defaultdict(set), Counter()
        for sp in self.passages:
            lang = sp.passage.lang
            urls[lang].add(sp.url)
            sectors[lang].add(sp.sector)
            tokens[lang] += len(tokenize(sp.passage.text)[0])
        rows = [(lang, len(urls[lang]), len(sectors[lang]), tokens[lang]) for lang in urls]
        rows.sort(key=lambda r: (-r[1], r[0]))
        return rows

    def stats_tsv(self) -> str:
        lines = ["\t".join(STATS_HEADER)]
        lines += ["\t".join(str(x) for x in row) for row in self.stats()]
        return "\n".join(lines) + "\n"

    def write(self, out_dir) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "passages.jsonl", "w", encoding="utf-8", newline="\n") as fh:
            for sp in self.passages:
                fh.write(sp.to_json() + "\n")
        (out / "stats.tsv").write_text(self.stats_tsv(), encoding="utf-8")
        with open(out / "skipped.tsv", "w", encoding="utf-8", newline="\n") as fh:
            fh.write("doc_id\treason\n")
            for doc_id, reason in self.skipped:
                fh.write(f"{doc_id}\t{reason}\n")

    @classmethod
    def read(cls, out_dir) -> "CorpusStore":
        out = Path(out_dir)
        with open(out / "passages.jsonl", encoding="utf-8") as fh:
            passages = [StoredPassage.from_json(line) for line in fh if line.strip()]
        skipped = []
        sk = out / "skipped.tsv"
        if sk.exists():
            for line in sk.read_text(encoding="utf-8").splitlines()[1:]:
                doc_id, reason = line.split("\t", 1)
                skipped.append((doc_id, reason))
        return cls(passages, skipped)

    def digest(self) -> str:
        h = hashlib.sha256()
        for sp in self.passages:
            h.update(sp.to_json().encode("utf-8") + b"\n")
        h.update(self.stats_tsv().encode("utf-8"))
        return h.hexdigest()

    def documents(self) -> dict[str, list[StoredPassage]]:
        docs: dict[str, list[StoredPassage]] = {}
        for sp in self.passages:
            docs.setdefault(sp.passage.doc_id, []).append(sp)
        return docs


def _ingest_one(entry: ManifestEntry, rules: FilterRules, identifier):
    decision = filter_url(entry.url, rules, check_depth=entry.kind == "html")
    if not decision.keep:
        return [], (entry.doc_id, f"url:{decision.reason}")
    try:
        data = Path(entry.path).read_bytes()
    except OSError as exc:
        return [], (entry.doc_id, f"io_error:{exc.__class__.__name__}")
    try:
        if entry.kind == "html":
            passages = extract_passages(data, rules, entry.doc_id, identifier)
        else:
            passages = text_passages(data, entry.doc_id, identifier)
    except EncodingError:
        return [], (entry.doc_id, "encoding")
    return [StoredPassage(p, entry.url, entry.company, entry.sector) for p in passages], None


def ingest(manifest: Iterable[ManifestEntry], rules: FilterRules | None = None, workers: int = 1) -> CorpusStore:
    """Filter and extract every manifest document; failures are recorded, not raised."""
    rules = rules or FilterRules()
    identifier = default_identifier()
    entries = list(manifest)
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(lambda e: _ingest_one(e, rules, identifier), entries))
    else:
        results = [_ingest_one(e, rules, identifier) for e in entries]
    store = CorpusStore()
    for passages, skipped in results:
        store.passages.extend(passages)
        if skipped:
            store.skipped.append(skipped)
    return store
