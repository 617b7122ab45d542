import io
import random
from collections import Counter
from types import SimpleNamespace

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lexiforge.evaluation import (MetricCell, entity_metrics, fmt, parse_report_tsv, read_predictions,
                                  render_report, render_table3, render_table4, report_tsv, sequence_entity_metrics,
                                  token_metrics)

GOLD = ["O", "I-dig", "I-dig", "O", "I-inn", "O", "I-mac", "I-mac", "O", "B-mac"]
PRED = ["O", "I-dig", "I-dig", "O", "I-sus", "O", "I-mac", "O", "I-bus", "B-mac"]


class TestTokenLevel:
    def test_confusion_fixture(self):
        # non-O gold: 6 ; non-O pred: 6 ; correct non-O: dig, dig, mac, mac(B) = 4
        s = token_metrics(PRED, GOLD)
        assert (s.tp, s.n_pred, s.n_gold) == (4, 6, 6)
        assert s.precision == pytest.approx(4 / 6) and s.f1 == pytest.approx(4 / 6)

    def test_excluding_mac(self):
        s = token_metrics(PRED, GOLD, include_mac=False)
        assert (s.tp, s.n_pred, s.n_gold) == (2, 4, 3)

    def test_identity_and_all_o(self):
        assert tuple(token_metrics(GOLD, GOLD)) == (1.0, 1.0, 1.0)
        assert tuple(token_metrics(["O"] * 10, GOLD)) == (0.0, 0.0, 0.0)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            token_metrics(["O"], ["O", "O"])


class TestEntityLevel:
    def test_closed_form(self):
        gold = [(0, 0, 2, "dig"), (0, 3, 4, "inn"), (1, 0, 1, "sus")]
        pred = [(0, 0, 2, "dig"), (0, 3, 5, "inn")]
        s = entity_metrics(pred, gold)
        assert (s.precision, s.recall, s.f1) == pytest.approx((0.5, 1 / 3, 0.4))

    def test_off_by_one_is_fp_and_fn(self):
        s = sequence_entity_metrics([["I-dig", "I-dig", "I-dig"]], [["I-dig", "I-dig", "O"]])
        assert (s.tp, s.n_pred, s.n_gold) == (0, 1, 1)

    def test_sentence_boundaries_split_spans(self):
        labels = [["I-dig", "I-dig", "I-dig", "I-dig"]]
        s = sequence_entity_metrics(labels, labels, boundaries=[[0, 2]])
        assert s.n_gold == 2

    def test_fixture_sequences(self):
        s = sequence_entity_metrics([PRED], [GOLD])
        # gold spans: dig 1-3, inn 4-5, mac 6-8, mac 9-10 ; pred: dig, sus, mac 6-7, bus, mac 9-10
        assert (s.tp, s.n_pred, s.n_gold) == (2, 5, 4)


LABELS = ["O", "O", "O", "I-dig", "I-inn", "B-inn", "I-mac", "B-dig"]


def brute_spans(seq):
    out, i = [], 0
    while i < len(seq):
        if seq[i] == "O":
            i += 1
            continue
        cat = seq[i][2:]
        j = i + 1
        while j < len(seq) and seq[j] == f"I-{cat}":
            j += 1
        out.append((i, j, cat))
        i = j
    return out


class TestOracle:
    @settings(max_examples=300, deadline=None)
    @given(st.lists(st.tuples(st.sampled_from(LABELS), st.sampled_from(LABELS)), min_size=1, max_size=20))
    def test_against_brute_force(self, pairs):
        pred, gold = [p for p, _ in pairs], [g for _, g in pairs]
        ps, gs = Counter(brute_spans(pred)), Counter(brute_spans(gold))
        tp = sum((ps & gs).values())
        s = sequence_entity_metrics([pred], [gold])
        assert (s.tp, s.n_pred, s.n_gold) == (tp, sum(ps.values()), sum(gs.values()))
        t = token_metrics(pred, gold)
        assert t.tp == sum(p == g != "O" for p, g in pairs)
        assert 0 <= s.f1 <= 1 and 0 <= t.f1 <= 1

    @settings(max_examples=200, deadline=None)
    @given(st.lists(st.tuples(st.sampled_from(LABELS), st.sampled_from(LABELS)), min_size=1, max_size=20))
    def test_swap_exchanges_p_and_r(self, pairs):
        pred, gold = [p for p, _ in pairs], [g for _, g in pairs]
        a, b = sequence_entity_metrics([pred], [gold]), sequence_entity_metrics([gold], [pred])
        assert (a.precision, a.recall) == (b.recall, b.precision)
        a, b = token_metrics(pred, gold), token_metrics(gold, pred)
        assert (a.precision, a.recall) == (b.recall, b.precision)


class TestRendering:
    def test_fmt_half_up(self):
        assert fmt(66.675, 2) == "66.68"
        assert fmt(0.77225, 4) == "0.7723"
        assert fmt(0.5, 0) == "1"

    def test_table3_f1_identity(self):
        cell = MetricCell.from_pr("CNN", 1, 0.8056, 0.7417)
        assert fmt(cell.f1, 4) == "0.7723"
        assert "| CNN | 0.7723 | - | - | - | 0.7723 |" in render_table3([cell])

    def test_table3_mean(self):
        cells = [MetricCell.from_pr("CRF", s, p, 0.8) for s, p in zip((1, 2, 3, 4), (0.8286, 0.8701, 0.8938, 0.8796))]
        assert "| CRF | 0.8286 | 0.8701 | 0.8938 | 0.8796 | 0.8680 |" in render_table3(cells)

    def test_table4_mean(self):
        rows = [SimpleNamespace(model_id="RoBERTa", scheme_id=s, count=c, rate=r)
                for s, c, r in zip((1, 2, 3, 4), (202, 234, 182, 503), (69.80, 67.52, 51.65, 77.73))]
        text = render_report(rows, "table4")
        assert text.splitlines()[2] == ("| RoBERTa | 202 (69.80%) | 234 (67.52%) | 182 (51.65%) | 503 (77.73%) "
                                        "| 66.68% |")

    def test_empty_is_headers_only(self):
        assert render_table4([]).count("\n") == 2
        assert "Précision" in render_table3([]) and "| CNN" not in render_table3([])

    def test_every_rendered_f1_consistent(self):
        rng = random.Random(0)
        for _ in range(500):
            p, r = rng.random(), rng.random()
            c = MetricCell.from_pr("m", 1, p, r)
            P, R, F = float(fmt(p, 4)), float(fmt(r, 4)), float(fmt(c.f1, 4))
            assert abs(F - 2 * p * r / (p + r)) < 5e-5 and abs(F - 2 * P * R / (P + R)) < 2e-4

    def test_tsv_roundtrip(self):
        cells = [MetricCell.from_pr("cnn_crf", 1, 0.9, 0.8), MetricCell.from_pr("linear_crf", 2, 1 / 3, 0.0, "token")]
        assert parse_report_tsv(report_tsv(cells)) == cells
        with pytest.raises(ValueError):
            parse_report_tsv("a\tb\n")

    def test_unknown_layout(self):
        with pytest.raises(ValueError):
            render_report([], "table9")


class TestExternal:
    def test_read_predictions(self):
        tok, gold, pred = read_predictions(io.StringIO("a\tO\tO\nb\tI-dig\tO\n\nc\tO\tI-inn\n"))
        assert tok == [["a", "b"], ["c"]] and gold == [["O", "I-dig"], ["O"]] and pred[1] == ["I-inn"]

    def test_needs_three_columns(self):
        with pytest.raises(ValueError):
            read_predictions(io.StringIO("a\tO\n"))
