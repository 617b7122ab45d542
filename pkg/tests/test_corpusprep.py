import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lexiforge import synthetic
from lexiforge.annotate import TermMatcher, annotate_document
from lexiforge.corpusprep import (SplitScheme, block_similarity, build_blocks, cosine, filter_blocks,
                                  load_embeddings, parse_embeddings, phrase_vector, read_blocks, split_dataset,
                                  write_blocks)
from lexiforge.errors import EmbeddingFormatError, SplitError
from lexiforge.lexicon import parse_lexicon

LEXICON = parse_lexicon("surface\tcategory\n" + "".join(f"{t}\t{c}\n" for t, c in synthetic.all_terms()))
MATCHER = TermMatcher(LEXICON)


def make_doc(doc_id, terms, source="web", filler=1):
    sents = []
    for t in terms:
        sents += [f"Filler sentence number {k} about {doc_id}." for k in range(filler)]
        sents.append(f"We expand {t} with partners.")
    return annotate_document(" ".join(sents), doc_id, MATCHER, source)


def corpus(seed=0, n_docs=30):
    rng = random.Random(seed)
    terms = [t for t, _ in synthetic.all_terms()]
    web = [b for i in range(n_docs) for b in build_blocks(make_doc(f"w{i:02d}", rng.sample(terms, 3)))]
    pdf = [b for i in range(n_docs) for b in build_blocks(make_doc(f"p{i:02d}", rng.sample(terms, 3), "pdf"))]
    return web, pdf


class TestEmbeddings:
    def test_load_fixture(self, fixtures):
        store = load_embeddings(fixtures / "embeddings_toy.txt")
        assert (len(store), store.dim) == (50, 4)
        assert "quarterly" in store

    @pytest.mark.parametrize("lines,row", [
        ([], 1),
        (["3"], 1),
        (["1 2", "a 1.0"], 2),
        (["1 2", "a 1.0 x"], 2),
        (["2 2", "a 1 2", "b 1 nan"], 3),
    ])
    def test_format_errors(self, lines, row):
        with pytest.raises(EmbeddingFormatError) as e:
            parse_embeddings(lines)
        assert e.value.row == row

    def test_duplicate_last_wins(self):
        store = parse_embeddings(["2 1", "a 1", "a 3"])
        assert store["a"][0] == 3 and store.duplicates == 1

    def test_phrase_vector_mean_and_oov(self):
        store = parse_embeddings(["2 2", "a 1 0", "b 0 1"])
        assert np.allclose(phrase_vector(["A", "b", "zzz"], store), [0.5, 0.5])
        assert np.allclose(phrase_vector(["zzz"], store), [0, 0])
        zero = parse_embeddings(["2 2", "a 1 0", "b 0 1"], unk_policy="zero")
        assert np.allclose(phrase_vector(["a", "zzz"], zero), [0.5, 0])


class TestCosine:
    def test_values(self):
        assert cosine([1, 0], [0, 1]) == 0.0
        assert cosine([1, 1], [2, 2]) == pytest.approx(1.0)
        assert cosine([1, 0], [-1, 0]) == pytest.approx(-1.0)

    def test_zero_vector(self):
        assert cosine([0, 0], [1, 2]) == 0.0

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            cosine([1, 2], [1, 2, 3])

    @settings(max_examples=200, deadline=None)
    @given(st.lists(st.floats(-10, 10), min_size=3, max_size=3), st.lists(st.floats(-10, 10), min_size=3, max_size=3))
    def test_symmetric_and_bounded(self, u, v):
        c = cosine(u, v)
        assert c == pytest.approx(cosine(v, u))
        assert -1 - 1e-9 <= c <= 1 + 1e-9


class TestBlocks:
    def test_window(self):
        doc = make_doc("d", ["circular economy", "digital twin"], filler=2)
        blocks = build_blocks(doc, width=2)
        assert [b.term for b in blocks] == ["circular economy", "digital twin"]
        first = blocks[0]
        assert first.center_index == 2 and len(first.sentences) == 5
        assert len(blocks[1].sentences) == 3  # last sentence: two neighbours before, none after
        toks, labels, starts = first.sequence()
        assert len(toks) == len(labels) and starts[0] == 0
        assert labels.count("I-sus") == 2

    def test_one_block_per_distinct_term(self):
        doc = annotate_document("The digital twin and the digital twin and virtual reality.", "d", MATCHER)
        assert [b.term for b in build_blocks(doc)] == ["digital twin", "virtual reality"]

    def test_io_roundtrip(self, tmp_path):
        web, _ = corpus()
        write_blocks(web[:5], tmp_path / "b.jsonl")
        again = read_blocks(tmp_path / "b.jsonl")
        assert [b.to_dict() for b in again] == [b.to_dict() for b in web[:5]]


def _brute_similarity(block, path):
    vecs = {}
    for line in open(path, encoding="utf-8").read().splitlines()[1:]:
        w, *xs = line.split()
        vecs[w] = np.array([float(x) for x in xs])

    def mean(words):
        hits = [vecs[w.lower()] for w in words if w.lower() in vecs]
        return np.mean(hits, axis=0) if hits else np.zeros(len(next(iter(vecs.values()))))

    a, b = mean(block.term.split()), mean(block.tokens())
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    return 0.0 if na == 0 or nb == 0 else float(a @ b / (na * nb))


class TestGate:
    def test_matches_brute_force(self, synthetic_dir):
        store = load_embeddings(synthetic_dir / "embeddings.txt")
        web, pdf = corpus(seed=3)
        blocks = web + pdf
        for b in blocks:
            assert block_similarity(b, store) == pytest.approx(_brute_similarity(b, synthetic_dir / "embeddings.txt"),
                                                               abs=1e-12)
        kept = filter_blocks(blocks, store, 0.5)
        assert [b.block_id for b in kept] == [b.block_id for b in blocks if b.similarity >= 0.5]

    def test_monotone_in_threshold(self, synthetic_dir):
        store = load_embeddings(synthetic_dir / "embeddings.txt")
        web, pdf = corpus(seed=4)
        prev = None
        for t in np.linspace(-1, 1, 21):
            ids = {b.block_id for b in filter_blocks(web + pdf, store, t)}
            if prev is not None:
                assert ids <= prev
            prev = ids


class TestSplit:
    @pytest.mark.parametrize("scheme_id", [1, 2, 3, 4])
    def test_partition_and_determinism(self, scheme_id):
        web, pdf = corpus()
        scheme = SplitScheme.get(scheme_id, seed=5)
        train, test = split_dataset(web, pdf, scheme, LEXICON)
        ids = [b.block_id for b in train + test]
        assert len(ids) == len(set(ids)) == len(web) + len(pdf)
        again = split_dataset(list(reversed(web)), pdf, scheme, LEXICON)
        assert [b.block_id for b in again[0]] == [b.block_id for b in train]

    def test_scheme1_is_web_versus_pdf(self):
        web, pdf = corpus()
        train, test = split_dataset(web, pdf, SplitScheme.get(1), LEXICON)
        assert {b.source for b in train} == {"web"} and len(train) == len(web)
        assert {b.source for b in test} == {"pdf"}

    def test_scheme2_holds_out_keywords(self):
        web, pdf = corpus()
        train, test = split_dataset(web, pdf, SplitScheme.get(2, seed=1), LEXICON)
        train_terms = {b.term for b in train}
        all_terms = {b.term for b in web + pdf}
        web_terms = {b.term for b in web}
        k = round(0.8 * len(all_terms))
        assert k - len(all_terms - web_terms) <= len(train_terms) <= k
        assert all(b.source == "web" for b in train)
        ids = {b.block_id for b in train}
        assert all(b.block_id in ids for b in web if b.term in train_terms)

    def test_scheme3_mixes_sources(self):
        web, pdf = corpus(n_docs=60)
        train, _ = split_dataset(web, pdf, SplitScheme.get(3, seed=2), LEXICON)
        n_web = sum(b.source == "web" for b in train)
        n_pdf = sum(b.source == "pdf" for b in train)
        assert 0 < n_pdf <= round(0.25 * len(pdf)) and 0 < n_web <= round(0.75 * len(web))
        assert len({b.term for b in train}) <= round(0.7 * len({b.term for b in web + pdf}))

    def test_scheme4_per_source_keywords(self):
        web, pdf = corpus(n_docs=60)
        train, _ = split_dataset(web, pdf, SplitScheme.get(4, seed=9), LEXICON)
        web_terms = {b.term for b in train if b.source == "web"}
        pdf_terms = {b.term for b in train if b.source == "pdf"}
        assert len(web_terms) <= round(0.5 * len({b.term for b in web}))
        assert len(pdf_terms) <= round(0.5 * len({b.term for b in pdf}))

    def test_errors(self):
        web, pdf = corpus(n_docs=2)
        with pytest.raises(SplitError):
            SplitScheme.get(5)
        with pytest.raises(SplitError):
            split_dataset(web, [], SplitScheme.get(1))
