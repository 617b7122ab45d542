"""Token- and entity-level precision/recall/F1 and the report tables."""

from __future__ import annotations

import csv
import io
from collections import Counter
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from typing import Iterable, Sequence

from .annotate import bio_spans, split_label
from .lexicon import MACRO


@dataclass(frozen=True)
class Scores:
    precision: float
    recall: float
    f1: float
    tp: int = 0
    n_pred: int = 0
    n_gold: int = 0

    def __iter__(self):
        return iter((self.precision, self.recall, self.f1))


def f1_score(p: float, r: float) -> float:
    return 2 * p * r / (p + r) if p + r > 0 else 0.0


def prf(tp: int, n_pred: int, n_gold: int) -> Scores:
    p = tp / n_pred if n_pred else 0.0
    r = tp / n_gold if n_gold else 0.0
    return Scores(p, r, f1_score(p, r), tp, n_pred, n_gold)


def _flatten(seqs):
    if seqs and not isinstance(seqs[0], str):
        return [lab for s in seqs for lab in s], [len(s) for s in seqs]
    return list(seqs), [len(seqs)]


def _is_entity(label: str, include_mac: bool) -> bool:
    tag, cat = split_label(label)
    return tag != "O" and (include_mac or cat != MACRO)


def token_metrics(pred, gold, include_mac: bool = True) -> Scores:
    """Micro-averaged over non-O tokens: a hit is a non-O prediction equal to the gold label."""
    p, lp = _flatten(pred)
    g, lg = _flatten(gold)
    if lp != lg:
        raise ValueError("prediction and gold sequences differ in length")
    n_pred = n_gold = tp = 0
    for a, b in zip(p, g):
        pa, gb = _is_entity(a, include_mac), _is_entity(b, include_mac)
        n_pred += pa
        n_gold += gb
        tp += pa and gb and a == b
    return prf(tp, n_pred, n_gold)


def entity_metrics(pred_spans: Iterable, gold_spans: Iterable) -> Scores:
    """Exact-match scoring over multisets of hashable spans, e.g. ``(seq, start, end, category)``."""
    pc, gc = Counter(pred_spans), Counter(gold_spans)
    tp = sum((pc & gc).values())
    return prf(tp, sum(pc.values()), sum(gc.values()))


def label_spans(seqs: Sequence[Sequence[str]], include_mac: bool = True, boundaries=None) -> list[tuple]:
    """Entity spans ``(seq, start, end, category)`` of each label sequence.

    ``boundaries`` optionally gives per-sequence sentence start offsets so that
    spans never run across a sentence break.
    """
    out = []
    for i, labels in enumerate(seqs):
        starts = list(boundaries[i]) if boundaries is not None else [0]
        ends = starts[1:] + [len(labels)]
        for a, b in zip(starts, ends):
            for s, e, cat in bio_spans(labels[a:b]):
                if include_mac or cat != MACRO:
                    out.append((i, s + a, e + a, cat))
    return out


def sequence_entity_metrics(pred, gold, include_mac: bool = True, boundaries=None) -> Scores:
    if [len(s) for s in pred] != [len(s) for s in gold]:
        raise ValueError("prediction and gold sequences differ in length")
    return entity_metrics(label_spans(pred, include_mac, boundaries), label_spans(gold, include_mac, boundaries))


# ---------------------------------------------------------------------------
# reports

SCHEMES = (1, 2, 3, 4)


def fmt(x: float, places: int) -> str:
    """Half-up decimal rounding of the shortest repr, so 66.675 renders as 66.68."""
    q = Decimal(1).scaleb(-places)
    return str(Decimal(repr(float(x))).quantize(q, rounding=ROUND_HALF_UP))


@dataclass(frozen=True)
class MetricCell:
    model_id: str
    scheme_id: int
    precision: float
    recall: float
    f1: float
    level: str = "entity"

    @classmethod
    def from_pr(cls, model_id, scheme_id, precision, recall, level="entity"):
        return cls(model_id, int(scheme_id), precision, recall, f1_score(precision, recall), level)

    @classmethod
    def from_scores(cls, model_id, scheme_id, scores: Scores, level="entity"):
        return cls(model_id, int(scheme_id), scores.precision, scores.recall, scores.f1, level)


def _mean(xs):
    xs = list(xs)
    return sum(xs) / len(xs) if xs else None


def _model_order(cells):
    seen = []
    for c in cells:
        if c.model_id not in seen:
            seen.append(c.model_id)
    return seen


def table3_rows(cells: Sequence[MetricCell], metric: str):
    """``(model, [value per scheme or None], mean)`` rows for one metric."""
    rows = []
    for model in _model_order(cells):
        by_scheme = {c.scheme_id: getattr(c, metric) for c in cells if c.model_id == model}
        vals = [by_scheme.get(s) for s in SCHEMES]
        rows.append((model, vals, _mean(v for v in vals if v is not None)))
    return rows


_T3_BLOCKS = (("precision", "Précision"), ("recall", "Rappel"), ("f1", "F1-Score"))


def render_table3(cells: Sequence[MetricCell]) -> str:
    out = []
    levels = sorted({c.level for c in cells}) or ["entity"]
    for level in levels:
        lc = [c for c in cells if c.level == level]
        out.append(f"### {level} level\n")
        for metric, title in _T3_BLOCKS:
            out.append(f"#### {title}\n")
            out.append("| Modèle | " + " | ".join(f"Jeu de données {s}" for s in SCHEMES) + " | Moyenne |")
            out.append("|---" * (len(SCHEMES) + 2) + "|")
            for model, vals, mean in table3_rows(lc, metric):
                shown = [fmt(v, 4) if v is not None else "-" for v in vals]
                out.append(f"| {model} | " + " | ".join(shown) + f" | {fmt(mean, 4) if mean is not None else '-'} |")
            out.append("")
    return "\n".join(out)


def render_table4(rows) -> str:
    """``rows`` carry model_id, scheme_id, count and rate (percent)."""
    out = ["| Modèle | " + " | ".join(f"Jdd {s} (%)" for s in SCHEMES) + " | % Moyenne |",
           "|---" * (len(SCHEMES) + 2) + "|"]
    for model in _model_order(rows):
        by_scheme = {r.scheme_id: r for r in rows if r.model_id == model}
        shown = [f"{by_scheme[s].count} ({fmt(by_scheme[s].rate, 2)}%)" if s in by_scheme else "-" for s in SCHEMES]
        mean = _mean(r.rate for r in by_scheme.values())
        out.append(f"| {model} | " + " | ".join(shown) + f" | {fmt(mean, 2) + '%' if mean is not None else '-'} |")
    return "\n".join(out) + "\n"


def render_report(cells, layout: str = "table3") -> str:
    if layout == "table3":
        return render_table3(cells)
    if layout == "table4":
        return render_table4(cells)
    raise ValueError(f"unknown layout {layout!r}")


REPORT_FIELDS = ("model_id", "scheme_id", "level", "precision", "recall", "f1")


def report_tsv(cells: Iterable[MetricCell]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, delimiter="\t", lineterminator="\n")
    w.writerow(REPORT_FIELDS)
    for c in cells:
        w.writerow([c.model_id, c.scheme_id, c.level, repr(c.precision), repr(c.recall), repr(c.f1)])
    return buf.getvalue()


def parse_report_tsv(text: str) -> list[MetricCell]:
    rows = list(csv.reader(io.StringIO(text), delimiter="\t"))
    if not rows or tuple(rows[0]) != REPORT_FIELDS:
        raise ValueError("not a metric report")
    return [MetricCell(r[0], int(r[1]), float(r[3]), float(r[4]), float(r[5]), r[2]) for r in rows[1:] if r]


def read_predictions(fh) -> tuple[list[list[str]], list[list[str]], list[list[str]]]:
    """Import a ``token<TAB>gold<TAB>predicted`` CoNLL file produced elsewhere."""
    from .annotate import read_conll

    tokens, gold, pred = [], [], []
    for cols in read_conll(fh):
        if len(cols) < 3:
            raise ValueError("prediction file needs token, gold and predicted columns")
        tokens.append(cols[0])
        gold.append(cols[1])
        pred.append(cols[2])
    return tokens, gold, pred
