import json
import random

import numpy as np
import pytest

from lexiforge.annotate import Sentence
from lexiforge.corpusprep import load_embeddings, parse_embeddings
from lexiforge.errors import StateFileError
from lexiforge.evaluation import fmt
from lexiforge.extract import (AcceptanceRow, CandidateTerm, ReviewDecision, acceptance_stats, accepted_terms,
                               collect_candidates, mean_rate, read_candidates, read_decisions, reference_vector,
                               review_session, write_candidates)
from lexiforge.lexicon import parse_lexicon

LEX = parse_lexicon("surface\tcategory\nvirtual reality\tdig\ndigital twin\tdig\ncircular economy\tsus\n")
STORE = parse_embeddings([
    "8 2", "innovation 1 0", "recherche 1 0", "development 1 0", "strategy 1 0", "design 1 0",
    "cloud 1 0.2", "platform 0.9 0.1", "football -1 0.1",
])


def sent(text, doc="d", index=0):
    return Sentence.from_text(text, doc, index)


def cand(name, model="m", scheme=1, cat="dig"):
    return CandidateTerm(name, cat, len(name.split()), [("d", 0, 0, 2)], 0.9, model, scheme)


class TestCollect:
    def test_mono_term_dropped(self):
        s = sent("innovation matters")
        assert collect_candidates([["I-inn", "O"]], [s], LEX, STORE) == []

    def test_known_term_dropped(self):
        s = sent("Virtual Reality matters")
        assert collect_candidates([["I-dig", "I-dig", "O"]], [s], LEX, STORE) == []

    def test_new_term_kept_and_merged(self):
        sents = [sent("the cloud platform grows", "a", 0), sent("our Cloud platform", "b", 3)]
        preds = [["O", "I-dig", "I-dig", "O"], ["O", "I-dig", "I-dig"]]
        (c,) = collect_candidates(preds, sents, LEX, STORE, model_id="cnn_crf", scheme_id=2)
        assert c.canonical == "cloud platform" and c.token_count == 2
        assert c.occurrences == [("a", 0, 1, 3), ("b", 3, 1, 3)]
        assert c.ref == "cnn_crf:2:cloud platform"
        assert c.gate_reference == "seed_keywords+lexicon_terms:dig"

    def test_b_label_splits_runs(self):
        s = sent("cloud platform cloud platform")
        got = collect_candidates([["I-dig", "I-dig", "B-dig", "I-dig"]], [s], LEX, STORE)
        assert len(got) == 1 and len(got[0].occurrences) == 2

    def test_gate_drops_off_topic(self):
        s = sent("football football")
        assert collect_candidates([["I-dig", "I-dig"]], [s], LEX, STORE) == []

    def test_misaligned(self):
        with pytest.raises(ValueError):
            collect_candidates([["O"]], [sent("a b")], LEX, STORE)

    def test_gate_matches_recomputation(self, fixtures):
        store = load_embeddings(fixtures / "embeddings_toy.txt")
        words = sorted(store.vectors)
        rng = random.Random(0)
        sents, preds = [], []
        for i in range(60):
            toks = rng.sample(words, 6)
            sents.append(sent(" ".join(toks), "d", i))
            preds.append(["O", "I-inn", "I-inn", "O", "I-dig", "I-dig"])
        got = {c.canonical: c.similarity for c in collect_candidates(preds, sents, LEX, store)}
        expected = {}
        for s in sents:
            for a, b, cat in ((1, 3, "inn"), (4, 6, "dig")):
                name = " ".join(s.tokens[a:b]).lower()
                if name in LEX:
                    continue
                ref_words = ["innovation", "recherche", "development", "strategy", "design"]
                ref_words += [w for t in LEX.by_category(cat) for w in t.canonical.split()]
                ref = np.mean([store[w] for w in ref_words if w in store], axis=0)
                v = np.mean([store[w] for w in name.split()], axis=0)
                sim = float(v @ ref / (np.linalg.norm(v) * np.linalg.norm(ref)))
                if sim >= 0.5:
                    expected[name] = sim
        assert set(got) == set(expected) and 0 < len(got) < 120
        for k in got:
            assert got[k] == pytest.approx(expected[k], abs=1e-12)

    def test_permutation_stable(self, fixtures):
        store = load_embeddings(fixtures / "embeddings_toy.txt")
        words = sorted(store.vectors)
        rng = random.Random(1)
        pairs = []
        for i in range(40):
            s = sent(" ".join(rng.sample(words, 4)), f"d{i}", i)
            pairs.append(([rng.choice(["O", "I-sus"]) for _ in range(4)], s))
        base = collect_candidates([p for p, _ in pairs], [s for _, s in pairs], LEX, store, threshold=0.0)
        rng.shuffle(pairs)
        again = collect_candidates([p for p, _ in pairs], [s for _, s in pairs], LEX, store, threshold=0.0)
        assert [c.to_dict() for c in again] == [c.to_dict() for c in base]
        assert all(c.token_count >= 2 and c.canonical not in LEX for c in base)

    def test_reference_for_macro_uses_all_terms(self):
        _, name = reference_vector("mac", LEX, STORE)
        assert name.endswith(":all")

    def test_io_roundtrip(self, tmp_path):
        cs = [cand("cloud platform"), cand("data lake", cat="mac")]
        write_candidates(cs, tmp_path / "c.jsonl")
        assert [c.to_dict() for c in read_candidates(tmp_path / "c.jsonl")] == [c.to_dict() for c in cs]


class TestReview:
    CANDS = [cand("a b"), cand("c d"), cand("e f"), cand("g h")]

    def test_zero_candidates(self, tmp_path):
        assert review_session([], tmp_path / "s.jsonl", replay=[]) == []
        assert acceptance_stats([]) == []

    def test_replay_two_of_four(self, tmp_path):
        replay = [{"candidate": c.canonical, "verdict": v} for c, v in
                  zip(self.CANDS, ["accepted", "rejected", "accepted", "rejected"])]
        decisions = review_session(self.CANDS, tmp_path / "s.jsonl", replay=replay)
        (row,) = acceptance_stats(decisions, self.CANDS)
        assert (row.count, row.accepted, row.rate) == (4, 2, 50.0)
        again = review_session(self.CANDS, tmp_path / "s2.jsonl", replay=replay)
        assert acceptance_stats(again, self.CANDS) == [row]

    def test_interactive_with_interrupt_and_resume(self, tmp_path):
        state = tmp_path / "s.jsonl"
        keys = iter(["a", "x", "r"])

        def crash_after_two(prompt):
            try:
                return next(keys)
            except StopIteration:
                raise KeyboardInterrupt

        shown = []
        with pytest.raises(KeyboardInterrupt):
            review_session(self.CANDS, state, input_fn=crash_after_two, output=shown.append,
                           contexts={self.CANDS[0].ref: ["one", "two", "three", "four"]})
        assert [d.verdict for d in read_decisions(state)] == ["accepted", "rejected"]
        assert sum(line.startswith("    ") for line in shown) == 3
        keys2 = iter(["d", "a"])
        review_session(self.CANDS, state, input_fn=lambda p: next(keys2), output=lambda s: None)
        final = {d.candidate: d.verdict for d in read_decisions(state)}
        assert final == {self.CANDS[0].ref: "accepted", self.CANDS[1].ref: "rejected",
                         self.CANDS[2].ref: "deferred", self.CANDS[3].ref: "accepted"}
        # the deferred one comes back; accepted/rejected ones do not
        asked = []
        review_session(self.CANDS, state, input_fn=lambda p: "q", output=asked.append)
        assert len(asked) == 1 and "e f" in asked[0]

    def test_eof_quits(self, tmp_path):
        def eof(prompt):
            raise EOFError

        assert review_session(self.CANDS, tmp_path / "s.jsonl", input_fn=eof, output=lambda s: None) == []

    def test_corrupt_state_refused(self, tmp_path):
        state = tmp_path / "s.jsonl"
        state.write_text(ReviewDecision("m:1:a b", "accepted").to_json() + "\n{broken\n")
        with pytest.raises(StateFileError):
            review_session(self.CANDS, state, replay=[])
        assert state.read_text().endswith("{broken\n")  # left untouched

    def test_bad_verdict_in_state(self, tmp_path):
        state = tmp_path / "s.jsonl"
        state.write_text(json.dumps({"candidate": "x", "verdict": "maybe"}) + "\n")
        with pytest.raises(StateFileError):
            read_decisions(state)

    def test_accepted_terms_vote(self):
        cs = [cand("cloud platform", "cnn_crf", cat="dig"), cand("cloud platform", "linear_crf", cat="inn"),
              cand("cloud platform", "cnn", cat="inn"), cand("x y", cat="mac")]
        ds = [ReviewDecision(c.ref, "accepted") for c in cs]
        assert accepted_terms(ds, cs) == [("cloud platform", "inn")]


class TestStats:
    def test_roberta_fixture_row(self):
        rows = [AcceptanceRow("RoBERTa", s, n, a, n - a, 0)
                for s, n, a in zip((1, 2, 3, 4), (202, 234, 182, 503), (141, 158, 94, 391))]
        assert [fmt(r.rate, 2) for r in rows] == ["69.80", "67.52", "51.65", "77.73"]
        assert fmt(mean_rate(rows), 2) == "66.68"

    def test_one_of_four(self):
        ds = [ReviewDecision(f"m:1:{i}", v, model_id="m") for i, v in
              enumerate(["accepted", "rejected", "rejected", "rejected"])]
        (row,) = acceptance_stats(ds)
        assert fmt(row.rate, 2) == "25.00"

    def test_deferred_counted_but_not_rated(self):
        ds = [ReviewDecision("m:1:a", "accepted", model_id="m"), ReviewDecision("m:1:b", "deferred", model_id="m")]
        (row,) = acceptance_stats(ds)
        assert (row.count, row.deferred, row.rate) == (2, 1, 100.0)

    def test_last_verdict_wins(self):
        ds = [ReviewDecision("m:1:a", "rejected", model_id="m"), ReviewDecision("m:1:a", "accepted", model_id="m")]
        assert acceptance_stats(ds)[0].accepted == 1

    def test_rates_bounded_and_reproducible(self):
        rng = random.Random(3)
        ds = [ReviewDecision(f"m{i % 3}:1:{i}", rng.choice(["accepted", "rejected", "deferred"]), model_id=f"m{i % 3}")
              for i in range(200)]
        rows = acceptance_stats(ds)
        assert all(0 <= r.rate <= 100 for r in rows)
        assert acceptance_stats(list(ds)) == rows
