"""Generated fixture corpus with a planted lexicon, used by the benchmark and the CLI demo.

Web documents are HTML pages, PDF documents are pre-extracted text files.  A
few documents are off-topic (their blocks fail the cosine gate), a few
paragraphs carry no seed keyword (filtered at ingestion), and a handful of
"emerging" terms absent from the lexicon appear in term-like positions of
PDF documents only, so that under scheme 1 they are never seen in training.
"""

from __future__ import annotations

import json
import random
from pathlib import Path

import numpy as np

from .ingest import SECTORS

PLANTED_TERMS = {
    "sus": ["circular economy", "carbon neutrality", "renewable energy sourcing", "waste reduction",
            "sustainable packaging"],
    "dig": ["digital twin", "virtual reality", "cloud computing platform", "data analytics", "process automation"],
    "mag": ["change management", "agile transformation", "employee upskilling", "organizational learning",
            "leadership coaching"],
    "inn": ["open innovation", "design thinking", "rapid prototyping", "innovation lab", "user research"],
    "bus": ["business model", "subscription pricing", "platform ecosystem", "value proposition", "freemium offer"],
    "cor": ["corporate social responsibility", "fair trade sourcing", "community engagement", "ethical governance",
            "diversity policy"],
}

EMERGING_TERMS = ["impact investing", "digital sobriety", "frugal engineering", "regenerative sourcing"]

COMPANIES = ["Acme", "Borealis", "Cobalt Systems", "Dunmore", "Elara", "Fenwick", "Glenrock", "Halcyon",
             "Ironbridge", "Juniper Works", "Kestrel", "Lumina", "Meridian", "Northwind", "Orion Labs", "Pinecrest"]

CONTEXT_NOUNS = ["customers", "markets", "teams", "partners", "operations", "products", "services", "suppliers",
                 "employees", "investors", "regions", "factories", "projects", "programmes", "portfolio"]
CONTEXT_ADJS = ["global", "regional", "ambitious", "long-term", "strategic", "measurable", "collaborative",
                "scalable", "responsible", "efficient"]
CONTEXT_VERBS = ["expands", "strengthens", "supports", "promotes", "accelerates", "develops", "funds", "pilots",
                 "deploys", "embeds"]
DISTRACTOR_PHRASES = ["the digital archive", "a business unit", "the data center", "a scale model",
                      "the change of address", "an open office", "the user manual", "a cloud of dust",
                      "the value of shares", "the community hall", "a process review", "the waste bin"]
OFFTOPIC_WORDS = ["football", "stadium", "goalkeeper", "recipe", "pasta", "garlic", "referee", "kitchen",
                  "tomato", "league", "dessert", "striker", "oven", "tournament", "sauce"]
KEYWORDS = ["innovation", "recherche", "development", "strategy", "design"]

TERM_TEMPLATES = [
    "{C} {v} {T} across its {a} {n} as part of its {k} plan.",
    "Through {T}, the group {v} {a} {n} and its {k} agenda.",
    "Our {k} roadmap puts {T} at the heart of {a} {n}.",
    "In 2021 {C} {v} {T} with {a} {n}.",
    "The board approved a budget for {T} to serve {a} {n}.",
    "Managers rely on {T} when they work with {n}.",
]
PLAIN_TEMPLATES = [
    "{C} {v} {a} {n} in every region.",
    "The company reported stable revenue from {a} {n}.",
    "Staff moved {D} to the second floor last year.",
    "{C} opened {D} near its headquarters.",
    "Revenue from {n} grew by {num} percent.",
    "Our {k} team met {n} to review {a} goals.",
]
OFFTOPIC_TEMPLATES = [
    "The {o1} praised the {o2} after the {o3}.",
    "Every {o1} needs a good {o2} and fresh {o3}.",
    "Fans watched the {o1} near the {o2} during the {o3}.",
]
FRENCH_PARAGRAPHS = [
    "Notre stratégie d'innovation repose sur la recherche appliquée et sur des partenariats avec les "
    "universités de la région.",
    "La recherche et le design occupent une place centrale dans la culture de l'entreprise depuis sa création.",
]


def all_terms():
    return [(t, c) for c, ts in PLANTED_TERMS.items() for t in ts]


def _fill(template, rng: random.Random, term=None):
    return template.format(
        C=rng.choice(COMPANIES), v=rng.choice(CONTEXT_VERBS), a=rng.choice(CONTEXT_ADJS),
        n=rng.choice(CONTEXT_NOUNS), k=rng.choice(KEYWORDS), T=term or "", D=rng.choice(DISTRACTOR_PHRASES),
        num=rng.randint(2, 40), o1=rng.choice(OFFTOPIC_WORDS), o2=rng.choice(OFFTOPIC_WORDS),
        o3=rng.choice(OFFTOPIC_WORDS))


def _cap(sentence):
    return sentence[0].upper() + sentence[1:]


def _document(rng: random.Random, terms, n_sentences, term_rate, offtopic=False):
    sents = []
    for _ in range(n_sentences):
        if offtopic:
            sents.append(_cap(_fill(rng.choice(OFFTOPIC_TEMPLATES), rng)))
        elif rng.random() < term_rate:
            sents.append(_cap(_fill(rng.choice(TERM_TEMPLATES), rng, rng.choice(terms))))
        else:
            sents.append(_cap(_fill(rng.choice(PLAIN_TEMPLATES), rng)))
    if offtopic:
        pos = rng.randrange(len(sents))
        sents[pos] = _cap(f"The {rng.choice(OFFTOPIC_WORDS)} club discussed {rng.choice(terms)} with the "
                          f"{rng.choice(OFFTOPIC_WORDS)} {rng.choice(KEYWORDS)} staff.")
    return sents


def _embeddings(rng: np.random.Generator, dim=50):
    """Topic-structured vectors: business words share a global direction, each category adds its own."""
    def unit(v):
        return v / np.linalg.norm(v)

    g = unit(rng.normal(size=dim))
    topics = {c: unit(rng.normal(size=dim)) for c in PLANTED_TERMS}
    off = unit(rng.normal(size=dim))
    vecs: dict[str, np.ndarray] = {}

    def put(word, base, noise):
        if word not in vecs:
            vecs[word] = unit(base + noise * rng.normal(size=dim) / np.sqrt(dim))

    for c, ts in PLANTED_TERMS.items():
        for t in ts:
            for w in t.split():
                put(w, 0.7 * g + 0.5 * topics[c], 0.3)
    for t in EMERGING_TERMS:
        for w in t.split():
            put(w, 0.8 * g + 0.3 * topics["sus"], 0.3)
    for w in KEYWORDS:
        put(w, g, 0.2)
    for w in CONTEXT_NOUNS + CONTEXT_ADJS + CONTEXT_VERBS:
        put(w, g, 0.5)
    for phrase in DISTRACTOR_PHRASES:
        for w in phrase.split()[1:]:
            put(w, 0.5 * g, 0.8)
    for w in OFFTOPIC_WORDS + ["club", "staff", "fans", "floor", "revenue", "company", "board", "budget"]:
        put(w, off, 0.4)
    return vecs


def generate(out_dir, n_web=100, n_pdf=100, seed=7, sentences_per_doc=(8, 12), offtopic_rate=0.08):
    """Write manifest.json, docs/, lexicon.tsv, embeddings.txt and config.json under ``out_dir``."""
    out = Path(out_dir)
    (out / "docs").mkdir(parents=True, exist_ok=True)
    rng = random.Random(seed)
    terms = [t for t, _ in all_terms()]
    web_pool = terms
    pdf_pool = terms * 3 + EMERGING_TERMS  # emerging terms only ever occur on the held-out side
    manifest = []
    for i in range(n_web):
        doc_id = f"web{i:03d}"
        company = rng.choice(COMPANIES)
        offtopic = rng.random() < offtopic_rate
        sents = _document(rng, web_pool, rng.randint(*sentences_per_doc), 0.45, offtopic)
        paras, cur = [], []
        for s in sents:
            cur.append(s)
            if len(cur) == 3:
                paras.append(cur)
                cur = []
        if cur:
            paras.append(cur)
        body = [f"<title>{company} {rng.choice(KEYWORDS)} news</title>"]
        for p in paras:
            text = " ".join(p)
            if not any(k in text.lower() for k in KEYWORDS):
                text += f" This is our {rng.choice(KEYWORDS)} focus."
            body.append(f"<p>{text}</p>")
        body.append("<p>Contact us for opening hours.</p>")
        body.append(f"<div>Cookie settings and {rng.choice(KEYWORDS)} legal notice.</div>")
        lang = "en"
        if i % 50 == 49:
            lang = "fr"
            body = [f"<p>{p}</p>" for p in FRENCH_PARAGRAPHS]
        html = (f"<!DOCTYPE html><html lang=\"{lang}\"><head><meta charset=\"utf-8\">"
                + "</head><body>\n" + "\n".join(body) + "\n</body></html>\n")
        path = out / "docs" / f"{doc_id}.html"
        path.write_text(html, encoding="utf-8")
        slug = company.lower().replace(" ", "")
        manifest.append({"doc_id": doc_id, "path": f"docs/{doc_id}.html", "url": f"https://www.{slug}{i}.com/",
                         "company": company, "sector": rng.choice(SECTORS), "kind": "html"})
    for i in range(n_pdf):
        doc_id = f"pdf{i:03d}"
        company = rng.choice(COMPANIES)
        offtopic = rng.random() < offtopic_rate
        sents = _document(rng, pdf_pool, rng.randint(*sentences_per_doc), 0.45, offtopic)
        paras = [" ".join(sents[j:j + 4]) for j in range(0, len(sents), 4)]
        path = out / "docs" / f"{doc_id}.txt"
        path.write_text("\n\n".join(paras) + "\n", encoding="utf-8")
        slug = company.lower().replace(" ", "")
        manifest.append({"doc_id": doc_id, "path": f"docs/{doc_id}.txt",
                         "url": f"https://www.annualreports.example/{slug}/{2017 + i % 5}/report{i}.pdf",
                         "company": company, "sector": rng.choice(SECTORS), "kind": "text"})
    manifest.append({"doc_id": "missing000", "path": "docs/missing.html", "url": "https://www.gone.com/",
                     "company": "Gone", "sector": SECTORS[0], "kind": "html"})
    (out / "manifest.json").write_text(json.dumps(manifest, ensure_ascii=False, indent=1), encoding="utf-8")

    lines = ["surface\tcategory"] + [f"{t}\t{c}" for t, c in all_terms()]
    (out / "lexicon.tsv").write_text("\n".join(lines) + "\n", encoding="utf-8")

    vecs = _embeddings(np.random.default_rng(seed))
    dim = len(next(iter(vecs.values())))
    with open(out / "embeddings.txt", "w", encoding="utf-8") as fh:
        fh.write(f"{len(vecs)} {dim}\n")
        for w in sorted(vecs):
            fh.write(w + " " + " ".join(f"{x:.6f}" for x in vecs[w]) + "\n")

    config = {
        "paths": {"manifest": "manifest.json", "lexicon": "lexicon.tsv", "embeddings": "embeddings.txt",
                  "workdir": "work"},
        "threshold": 0.5,
        "seed": seed,
        "split": {"scheme": 1},
        "train": {"models": ["linear_crf", "cnn_crf"], "max_epochs": 10, "batch_size": 32,
                  "learning_rate": {"linear_crf": 0.05, "cnn": 0.001, "cnn_crf": 0.001}},
    }
    (out / "config.json").write_text(json.dumps(config, indent=2), encoding="utf-8")
    return out
