"""New-term candidates from tagger output, expert review sessions and acceptance statistics."""

from __future__ import annotations

import json
import os
from collections import Counter
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .annotate import Sentence, bio_spans
from .corpusprep import EmbeddingStore, cosine, phrase_vector
from .errors import StateFileError
from .lexicon import CATEGORY_CODES, DEFAULT_SEED_KEYWORDS, MACRO, Lexicon, normalize_term

VERDICTS = ("accepted", "rejected", "deferred")


@dataclass
class CandidateTerm:
    canonical: str
    category: str
    token_count: int
    occurrences: list[tuple[str, int, int, int]]  # (doc_id, sentence index, start, end)
    similarity: float
    model_id: str = ""
    scheme_id: int = 1
    gate_reference: str = ""

    @property
    def ref(self) -> str:
        return f"{self.model_id}:{self.scheme_id}:{self.canonical}"

    def to_dict(self):
        return {
            "canonical": self.canonical, "category": self.category, "token_count": self.token_count,
            "occurrences": [list(o) for o in self.occurrences], "similarity": round(self.similarity, 10),
            "model_id": self.model_id, "scheme_id": self.scheme_id, "gate_reference": self.gate_reference,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(d["canonical"], d["category"], d["token_count"], [tuple(o) for o in d["occurrences"]],
                   d["similarity"], d.get("model_id", ""), d.get("scheme_id", 1), d.get("gate_reference", ""))


def reference_vector(category: str, lexicon: Lexicon, store: EmbeddingStore,
                     seed_keywords: Sequence[str] = DEFAULT_SEED_KEYWORDS) -> tuple[np.ndarray, str]:
    """Mean vector of the seed keywords plus the gold terms of ``category`` (all terms for macro spans)."""
    terms = list(lexicon) if category == MACRO else lexicon.by_category(category)
    tokens = [t for kw in seed_keywords for t in normalize_term(kw).split(" ")]
    tokens += [t for term in terms for t in term.tokens]
    scope = "all" if category == MACRO else category
    return phrase_vector(tokens, store), f"seed_keywords+lexicon_terms:{scope}"


def collect_candidates(predictions: Sequence[Sequence[str]], sentences: Sequence[Sentence], lexicon: Lexicon,
                       store: EmbeddingStore, threshold: float = 0.5, model_id: str = "", scheme_id: int = 1,
                       seed_keywords: Sequence[str] = DEFAULT_SEED_KEYWORDS, lemmas=None) -> list[CandidateTerm]:
    """Multi-token predicted spans that are new to the lexicon and pass the similarity gate."""
    if len(predictions) != len(sentences):
        raise ValueError("predictions and sentences are not aligned")
    found: dict[str, dict] = {}
    for labels, sent in zip(predictions, sentences):
        if len(labels) != len(sent.tokens):
            raise ValueError(f"sentence {sent.doc_id}:{sent.index}: label/token length mismatch")
        for s, e, cat in bio_spans(labels):
            if e - s < 2:
                continue
            canonical = " ".join(normalize_term(t, lemmas) for t in sent.tokens[s:e])
            if canonical in lexicon:
                continue
            entry = found.setdefault(canonical, {"cats": Counter(), "occ": set()})
            entry["cats"][cat] += 1
            entry["occ"].add((sent.doc_id, sent.index, s, e))
    refs: dict[str, tuple] = {}
    out = []
    for canonical in sorted(found):
        entry = found[canonical]
        cat = min(entry["cats"], key=lambda c: (-entry["cats"][c], c))
        if cat not in refs:
            refs[cat] = reference_vector(cat, lexicon, store, seed_keywords)
        ref_vec, ref_name = refs[cat]
        sim = cosine(phrase_vector(canonical.split(" "), store), ref_vec)
        if sim < threshold:
            continue
        out.append(CandidateTerm(canonical, cat, len(canonical.split(" ")), sorted(entry["occ"]), sim,
                                 model_id, scheme_id, ref_name))
    return out


def write_candidates(cands: Iterable[CandidateTerm], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for c in cands:
            fh.write(json.dumps(c.to_dict(), ensure_ascii=False) + "\n")


def read_candidates(path) -> list[CandidateTerm]:
    with open(path, encoding="utf-8") as fh:
        return [CandidateTerm.from_dict(json.loads(line)) for line in fh if line.strip()]


# ---------------------------------------------------------------------------
# review

@dataclass(frozen=True)
class ReviewDecision:
    candidate: str
    verdict: str
    reviewer: str = "expert"
    note: str = ""
    timestamp: str = ""
    model_id: str = ""
    scheme_id: int = 1
    category: str = ""

    def to_json(self) -> str:
        return json.dumps({
            "candidate": self.candidate, "verdict": self.verdict, "reviewer": self.reviewer, "note": self.note,
            "timestamp": self.timestamp, "model_id": self.model_id, "scheme_id": self.scheme_id,
            "category": self.category,
        }, ensure_ascii=False)

    @classmethod
    def from_dict(cls, d):
        if d.get("verdict") not in VERDICTS:
            raise ValueError(f"bad verdict {d.get('verdict')!r}")
        return cls(str(d["candidate"]), d["verdict"], d.get("reviewer", "expert"), d.get("note", ""),
                   d.get("timestamp", ""), d.get("model_id", ""), int(d.get("scheme_id", 1)), d.get("category", ""))


def read_decisions(path) -> list[ReviewDecision]:
    """Decisions log; any unreadable line makes the whole file unusable."""
    path = Path(path)
    if not path.exists():
        return []
    out = []
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                out.append(ReviewDecision.from_dict(json.loads(line)))
            except (ValueError, KeyError, TypeError) as exc:
                raise StateFileError(f"{path}:{n}: corrupt decision record ({exc})") from None
    return out


def final_verdicts(decisions: Iterable[ReviewDecision]) -> dict[tuple[str, str], ReviewDecision]:
    """Last decision per (candidate, reviewer)."""
    return {(d.candidate, d.reviewer): d for d in decisions}


def _append(path, decision: ReviewDecision) -> None:
    with open(path, "a", encoding="utf-8") as fh:
        fh.write(decision.to_json() + "\n")
        fh.flush()
        os.fsync(fh.fileno())


KEYS = {"a": "accepted", "r": "rejected", "d": "deferred"}


def review_session(candidates: Sequence[CandidateTerm], state_path, replay=None, reviewer: str = "expert",
                   contexts: dict | None = None, input_fn: Callable[[str], str] = input,
                   output: Callable[[str], None] = print, now: Callable[[], str] | None = None) -> list[ReviewDecision]:
    """Walk undecided candidates and persist each verdict immediately.

    With ``replay`` (path or iterable of decision dicts) verdicts come from the
    replay instead of the terminal; candidates absent from the replay stay
    undecided.  Accepted and rejected verdicts are final; deferred candidates
    come back in the next session.  Returns every decision in the state file.
    """
    existing = read_decisions(state_path)
    final = final_verdicts(existing)
    now = now or (lambda: datetime.now(timezone.utc).isoformat(timespec="seconds"))
    scripted = None
    if replay is not None:
        items = read_decisions(replay) if isinstance(replay, (str, Path)) else [ReviewDecision.from_dict(d) for d in replay]
        scripted = {d.candidate: d for d in items}
    todo = [c for c in candidates
            if (c.ref, reviewer) not in final or final[(c.ref, reviewer)].verdict == "deferred"]
    for n, cand in enumerate(todo, 1):
        if scripted is not None:
            src = scripted.get(cand.ref) or scripted.get(cand.canonical)
            if src is None:
                continue
            verdict, note, stamp = src.verdict, src.note, src.timestamp or "replay"
        else:
            output(f"[{n}/{len(todo)}] {cand.canonical}  ({cand.category}, sim={cand.similarity:.3f}, "
                   f"{len(cand.occurrences)} occurrence(s))")
            for line in (contexts or {}).get(cand.ref, [])[:3]:
                output(f"    … {line}")
            key = ""
            while key not in KEYS and key != "q":
                try:
                    key = input_fn("accept [a] / reject [r] / defer [d] / quit [q]: ").strip().lower()[:1]
                except EOFError:
                    key = "q"
            if key == "q":
                break
            verdict, note, stamp = KEYS[key], "", now()
        decision = ReviewDecision(cand.ref, verdict, reviewer, note, stamp, cand.model_id, cand.scheme_id,
                                  cand.category)
        _append(state_path, decision)
        existing.append(decision)
    return existing


def accepted_terms(decisions: Iterable[ReviewDecision], candidates: Sequence[CandidateTerm]) -> list[tuple[str, str]]:
    """``(canonical, category)`` pairs ready for :func:`lexicon.merge_accepted`; macro spans are skipped.

    The same canonical accepted from several models may carry different
    predicted categories; the most frequent one wins, ties going to the earlier
    category code.
    """
    by_ref = {c.ref: c for c in candidates}
    votes: dict[str, Counter] = {}
    for (ref, _), d in final_verdicts(decisions).items():
        c = by_ref.get(ref)
        if d.verdict == "accepted" and c is not None and c.category != MACRO:
            votes.setdefault(c.canonical, Counter())[c.category] += 1
    order = {code: i for i, code in enumerate(CATEGORY_CODES)}
    return [(canonical, min(v, key=lambda cat: (-v[cat], order.get(cat, len(order)))))
            for canonical, v in sorted(votes.items())]


# ---------------------------------------------------------------------------
# statistics

@dataclass(frozen=True)
class AcceptanceRow:
    model_id: str
    scheme_id: int
    count: int
    accepted: int
    rejected: int
    deferred: int

    @property
    def rate(self) -> float:
        judged = self.accepted + self.rejected
        return 100.0 * self.accepted / judged if judged else 0.0


def acceptance_stats(decisions: Iterable[ReviewDecision], candidates: Sequence[CandidateTerm] | None = None
                     ) -> list[AcceptanceRow]:
    """Per (model, scheme): candidates generated, accepted, rejected, deferred and the acceptance rate."""
    final = list(final_verdicts(decisions).values())
    groups: dict[tuple[str, int], Counter] = {}
    totals: Counter = Counter()
    if candidates is not None:
        for c in candidates:
            totals[(c.model_id, c.scheme_id)] += 1
    for d in final:
        groups.setdefault((d.model_id, d.scheme_id), Counter())[d.verdict] += 1
        if candidates is None:
            totals[(d.model_id, d.scheme_id)] += 1
    rows = []
    for key in sorted(set(totals) | set(groups)):
        g = groups.get(key, Counter())
        rows.append(AcceptanceRow(key[0], key[1], totals[key], g["accepted"], g["rejected"], g["deferred"]))
    return rows


def mean_rate(rows: Sequence[AcceptanceRow]) -> float:
    return sum(r.rate for r in rows) / len(rows) if rows else 0.0
