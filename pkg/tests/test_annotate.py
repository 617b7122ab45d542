import io

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lexiforge.annotate import (Sentence, TermMatcher, TermSpan, annotate_document, bio_spans, emit_annotation,
                                from_bio, match_terms, parse_annotation, read_conll, split_sentences, to_bio,
                                write_conll)
from lexiforge.errors import AnnotationParseError
from lexiforge.lexicon import CATEGORY_CODES, normalize_term
from lexiforge.text import tokenize


def spans_of(text, lexicon):
    s = Sentence.from_text(text)
    return s, match_terms(s, lexicon)


class TestTokenize:
    def test_offsets_point_into_text(self):
        text = "Acme's R&D (2021) grew 5.5%, e.g. in Lyon."
        toks, offs = tokenize(text)
        assert [text[a:b] for a, b in offs] == toks

    def test_punctuation_split(self):
        assert tokenize("design, innovation.")[0] == ["design", ",", "innovation", "."]


class TestSplit:
    def test_abbreviation_kept(self):
        got = [s.text for s in split_sentences("Dr. Smith left. He came back! Then e.g. this happened.")]
        assert got == ["Dr. Smith left.", "He came back!", "Then e.g. this happened."]

    def test_offsets(self):
        text = "First one.  Second one."
        for s in split_sentences(text):
            assert text[s.start:s.start + len(s.text)] == s.text

    def test_lowercase_continuation_not_split(self):
        assert len(split_sentences("It rose 3.5 percent. ok then")) == 1


class TestMatching:
    def test_longest_match_wins(self, small_lexicon):
        s, sp = spans_of("Our innovation technology lab.", small_lexicon)
        assert [(x.start, x.end, x.category) for x in sp] == [(1, 3, "dig")]

    def test_case_insensitive(self, small_lexicon):
        _, sp = spans_of("VIRTUAL Reality is here", small_lexicon)
        assert sp == [TermSpan(0, 2, "dig", "virtual reality")]

    def test_overlap_becomes_macro(self, small_lexicon):
        s, sp = spans_of("Functionality and design solutions matter.", small_lexicon)
        (m,) = sp
        assert (m.start, m.end, m.category, m.is_macro) == (0, 4, "mac", True)
        assert m.constituents == ("functionality and design", "design solutions")
        assert to_bio(s, sp) == ["I-mac"] * 4 + ["O", "O"]

    def test_adjacent_same_category_gets_b(self, small_lexicon):
        s, sp = spans_of("innovation innovation", small_lexicon)
        assert to_bio(s, sp) == ["I-inn", "B-inn"]

    def test_adjacent_different_category_stays_i(self, small_lexicon):
        s, sp = spans_of("virtual reality innovation", small_lexicon)
        assert to_bio(s, sp) == ["I-dig", "I-dig", "I-inn"]

    def test_no_partial_token_match(self, small_lexicon):
        _, sp = spans_of("Innovations abound", small_lexicon)
        assert sp == []

    def test_matcher_object_agrees(self, small_lexicon):
        s = Sentence.from_text("We use virtual reality and innovation technology.")
        assert TermMatcher(small_lexicon).match(s) == match_terms(s, small_lexicon)

    def test_annotate_document(self, small_lexicon):
        doc = annotate_document("We build a business model. Nothing here.", "d1",
                                TermMatcher(small_lexicon), source="pdf")
        assert [a.labels for a in doc] == [["O", "O", "O", "I-bus", "I-bus", "O"], ["O", "O", "O"]]
        assert doc[1].sentence.index == 1 and doc[0].source == "pdf"


class TestAnnotationFormat:
    def test_emit_example(self, small_lexicon):
        s, sp = spans_of("We use virtual reality.", small_lexicon)
        assert emit_annotation(s, sp) == (
            "<phrase category='Digital transformation' values='virtual reality'>We use "
            "<mot category='Digital transformation'>virtual reality</mot>.</phrase>")

    def test_plain_sentence(self):
        s = Sentence.from_text("A & B < C")
        out = emit_annotation(s, [])
        assert out == "<phrase>A &amp; B &lt; C</phrase>"
        assert parse_annotation(out)[0].text == "A & B < C"

    @pytest.mark.parametrize("bad,kind", [
        ("no tags", "missing_phrase"),
        ("<phrase>open", "unbalanced"),
        ("<phrase><mot category='Innovation activities'>x</phrase>", "unbalanced"),
        ("<phrase><mot category='Nope'>x</mot></phrase>", "unknown_category"),
        ("<phrase><mot category='macro-term'><mot category='macro-term'>x</mot></mot></phrase>", "nested_mot"),
        ("<phrase>x</phrase> tail", "trailing_content"),
        ("<phrase>ab<mot category='Innovation activities'>cd</mot></phrase>", "misaligned_mot"),
    ])
    def test_parse_errors(self, bad, kind):
        with pytest.raises(AnnotationParseError) as e:
            parse_annotation(bad)
        assert e.value.kind == kind


CATS = list(CATEGORY_CODES) + ["mac"]
WORDS = ["design", "innovation", "R&D", "l'avenir", "<b>", "growth", "co-op", "2021", "Ökologie", "data"]


@st.composite
def annotated(draw):
    words = draw(st.lists(st.sampled_from(WORDS), min_size=1, max_size=12))
    punct = draw(st.lists(st.sampled_from([" ", " ", ", ", "; "]), min_size=len(words), max_size=len(words)))
    text = "".join(w + p for w, p in zip(words, punct)).rstrip(" ,;") + "."
    s = Sentence.from_text(text)
    n = len(s.tokens)
    cuts = sorted(draw(st.sets(st.integers(0, n), max_size=8)))
    spans = []
    for a, b in zip(cuts, cuts[1:]):
        if draw(st.booleans()) or b - a < 1:
            continue
        cat = draw(st.sampled_from(CATS))
        canon = " ".join(normalize_term(t) for t in s.tokens[a:b])
        if cat == "mac":
            spans.append(TermSpan(a, b, cat, canon, True, (canon + " x", canon + " y")))
        else:
            spans.append(TermSpan(a, b, cat, canon))
    return s, spans


class TestRoundTrips:
    @settings(max_examples=300, deadline=None)
    @given(annotated())
    def test_annotation_roundtrip(self, case):
        s, spans = case
        text = emit_annotation(s, spans)
        s2, spans2 = parse_annotation(text)
        assert s2.text == s.text and s2.tokens == s.tokens
        assert spans2 == spans

    @settings(max_examples=300, deadline=None)
    @given(annotated())
    def test_bio_roundtrip(self, case):
        s, spans = case
        labels = to_bio(s, spans)
        assert [(x.start, x.end, x.category) for x in from_bio(s, labels)] == [sp.key() for sp in spans]
        assert bio_spans(labels) == [sp.key() for sp in spans]

    def test_overlap_rejected(self):
        with pytest.raises(ValueError):
            to_bio(["a", "b", "c"], [TermSpan(0, 2, "inn", "a b"), TermSpan(1, 3, "inn", "b c")])

    def test_conll_roundtrip(self):
        seqs = [(["a", "b"], ["O", "I-inn"]), (["c"], ["I-mac"])]
        buf = io.StringIO()
        write_conll(seqs, buf)
        assert [tuple(x) for x in map(tuple, read_conll(io.StringIO(buf.getvalue())))] == [
            (["a", "b"], ["O", "I-inn"]), (["c"], ["I-mac"])]
