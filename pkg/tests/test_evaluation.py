import numpy as np
import pytest

from hypothesis import given, settings, strategies as st

from app.errors import AlignmentError, ConfigError
from app.models import ExampleRecord
from app.attribute_extractors import Attribute, AttributePrediction, EntitySpan
from app.evaluation import (
    SPLITTING_REFERENCE, AblationReport, AblationRow, ComparisonReport, ComparisonRow, LengthCurve,
    LengthPoint, Metrics, PairingRow, SectionSpan, ablation_configs, answer_window, attribute_prf,
    clean_token_stream, format_delta, line_jaccard, normalize_answer, overlap_matches, parse_windows,
    render_examples, section_prf,
)


def test_all_no_predictor_on_a_rare_attribute():
    # 15 Yes among 510 documents, every prediction No
    metrics = Metrics.from_counts(tp=0, fp=0, fn=15, tn=495)
    assert metrics.precision == 0.0
    assert metrics.recall == 0.0
    assert metrics.f1 == 0.0
    assert metrics.accuracy == pytest.approx(0.9706, abs=1e-4)


def test_metrics_with_nothing_to_find():
    metrics = Metrics.from_counts(tp=0, fp=0, fn=0)
    assert (metrics.precision, metrics.recall) == (1.0, 1.0)


@settings(max_examples=100)
@given(st.integers(0, 50), st.integers(0, 50), st.integers(0, 50))
def test_f1_is_the_harmonic_mean(tp, fp, fn):
    metrics = Metrics.from_counts(tp, fp, fn)
    assert 0.0 <= metrics.f1 <= 1.0
    assert metrics.support == tp + fn
    if tp > 0:
        p, r = tp / (tp + fp), tp / (tp + fn)
        assert metrics.f1 == pytest.approx(2 * p * r / (p + r))
        assert min(p, r) <= metrics.f1 <= max(p, r)


@pytest.mark.parametrize("value, baseline, expected", [
    (.919, .904, "+1.7%"),
    (.840, .900, "-6.7%"),
    (.900, .900, "+0.0%"),
    (.5, 0.0, "n/a"),
])
def test_format_delta(value, baseline, expected):
    assert format_delta(value, baseline) == expected


def test_normalize_answer():
    assert normalize_answer("  State of\nDelaware, ") == "state of delaware"
    assert normalize_answer(None) is None


def test_line_jaccard():
    assert line_jaccard(SectionSpan("clause", 0, 3), SectionSpan("clause", 0, 3)) == 1.0
    assert line_jaccard(SectionSpan("clause", 0, 3), SectionSpan("clause", 2, 5)) == pytest.approx(2 / 6)
    assert line_jaccard(SectionSpan("clause", 0, 1), SectionSpan("clause", 5, 6)) == 0.0


def test_overlap_matching_is_one_to_one():
    predicted = [SectionSpan("clause", 0, 3)]
    gold = [SectionSpan("clause", 0, 1), SectionSpan("clause", 2, 3)]
    assert overlap_matches(predicted, gold) == 1
    assert overlap_matches(gold, predicted) == 1


spans = st.sets(
    st.tuples(st.integers(0, 30), st.integers(0, 5)).map(lambda t: SectionSpan("clause", t[0], t[0] + t[1])),
    max_size=8,
)


@settings(max_examples=60, deadline=None)
@given(spans, spans)
def test_overlap_counts_at_least_the_exact_matches(predicted, gold):
    predicted, gold = sorted(predicted), sorted(gold)
    exact = section_prf([predicted], [gold], "exact")["clause"]
    overlap = section_prf([predicted], [gold], "overlap")["clause"]
    assert overlap.tp >= exact.tp
    assert overlap.tp <= min(len(predicted), len(gold))
    assert exact.tp + exact.fp == len(predicted)
    assert exact.tp + exact.fn == len(gold)


def test_section_prf_counts_per_type():
    gold = [[SectionSpan("clause", 0, 2), SectionSpan("footer", 3, 3)]]
    predicted = [[SectionSpan("clause", 0, 2), SectionSpan("header", 3, 3)]]
    scores = section_prf(predicted, gold)
    assert scores["clause"].f1 == 1.0
    assert (scores["footer"].tp, scores["footer"].fn) == (0, 1)
    assert (scores["header"].tp, scores["header"].fp) == (0, 1)


def test_misaligned_inputs():
    with pytest.raises(AlignmentError):
        section_prf([[]], [])
    with pytest.raises(ConfigError):
        section_prf([[]], [[]], "fuzzy")
    with pytest.raises(AlignmentError):
        attribute_prf({"a": AttributePrediction(Attribute.ANTI_ASSIGNMENT)}, {"b": True}, Attribute.ANTI_ASSIGNMENT)


def test_entity_scoring():
    law = Attribute.GOVERNING_LAW
    predictions = {
        "d1": AttributePrediction(law, span=EntitySpan("State of Ohio,")),
        "d2": AttributePrediction(law, span=EntitySpan("State of Texas")),
        "d3": AttributePrediction(law, no_relevant_section=True),
    }
    golds = {"d1": "state of ohio", "d2": "State of Utah", "d3": "State of Iowa"}
    metrics = attribute_prf(predictions, golds, law)
    assert (metrics.tp, metrics.fp, metrics.fn) == (1, 1, 2)


def test_boolean_scoring():
    t4c = Attribute.TERMINATION_FOR_CONVENIENCE
    predictions = {d: AttributePrediction(t4c, answer=a) for d, a in [("a", True), ("b", True), ("c", False), ("d", False)]}
    golds = {"a": True, "b": False, "c": True, "d": False}
    metrics = attribute_prf(predictions, golds, t4c)
    assert (metrics.tp, metrics.fp, metrics.fn, metrics.tn) == (1, 1, 1, 1)
    assert metrics.accuracy == 0.5


def test_ablation_configs_match_the_reference_rows():
    names = [config.name for config in ablation_configs()]
    assert names == list(SPLITTING_REFERENCE["clause"])


@pytest.mark.parametrize("spec, expected", [("100,500,2500", [100, 500, 2500]), ("7", [7]), (" 10, 20 ", [10, 20])])
def test_parse_windows(spec, expected):
    assert parse_windows(spec) == expected


@pytest.mark.parametrize("spec", ["", "500,100", "100,100", "a,b", "0,10"])
def test_parse_windows_rejects(spec):
    with pytest.raises(ConfigError):
        parse_windows(spec)


def test_answer_windows_hold_the_answer(corpus):
    rng = np.random.default_rng(0)
    for doc, gold in corpus:
        stream = clean_token_stream(doc, gold)
        for window in (20, 100):
            drawn = answer_window(doc, gold, window, rng)
            assert drawn is not None
            tokens, answer = drawn
            assert len(tokens) == window
            assert answer <= set(tokens)
            assert set(tokens) <= set(stream)
        assert answer_window(doc, gold, len(stream) + 1, rng) is None


def test_length_curve_needs_increasing_windows():
    point = LengthPoint(window_tokens=100, metrics=Metrics.from_counts(1, 0, 0), train_windows=1, test_windows=1, skipped=0)
    with pytest.raises(ValueError):
        LengthCurve(seed=7, points=[point, point])


def _metrics(tp):
    return Metrics.from_counts(tp, 10 - tp, 10 - tp)


def test_ablation_report_rendering():
    rows = [
        AblationRow(
            config=name, section_type="footer", exact=_metrics(tp), overlap=_metrics(tp),
            delta_precision=format_delta(tp / 10, 0.5), delta_recall="+0.0%", delta_f1="+0.0%",
        )
        for name, tp in (("baseline", 5), ("+all_groups", 8))
    ]
    report = AblationReport(seed=7, rows=rows)
    assert report.row("+all_groups", "footer").exact.tp == 8
    csv_rows = report.csv_rows()
    assert all(len(row) == len(AblationReport.header) for row in csv_rows)
    assert csv_rows[1][5] == "+60.0%"
    text = report.render()
    assert "seed 7" in text
    assert "published reference" in text


def test_comparison_verdict_is_a_majority():
    rows = [ComparisonRow(pipeline="rules", attribute="anti_assignment", metrics=_metrics(6))]
    pairing = [
        PairingRow(seed=7, baseline_f1=0.6, visual_f1=0.7),
        PairingRow(seed=8, baseline_f1=0.6, visual_f1=0.6),
        PairingRow(seed=9, baseline_f1=0.7, visual_f1=0.5),
    ]
    report = ComparisonReport(seeds=[7, 8, 9], rows=rows, pairing=pairing)
    assert report.verdict
    assert report.pairing_rows()[-1] == ["majority", "", "", "true"]
    assert report.metrics("rules", "anti_assignment").tp == 6
    assert not ComparisonReport(seeds=[9], rows=rows, pairing=pairing[2:]).verdict


def test_examples_render_truncated_text():
    example = ExampleRecord(
        doc_id="doc_001", attribute="governing_law", relevant_section_text="x" * 300,
        correct_answer="State of Ohio", prediction="State of Ohio", correct=True,
    )
    text = render_examples([example], width=40)
    assert "Model predictions for governing_law" in text
    assert "x" * 37 + "..." in text
    assert "✓" in text


def _disjoint(layout):
    spans, position = [], 0
    for gap, length in layout:
        first = position + gap
        spans.append(SectionSpan("clause", first, first + length))
        position = first + length + 1
    return spans


def _best_matching(predicted, gold, used=frozenset()):
    if not predicted:
        return 0
    head, rest = predicted[0], predicted[1:]
    best = _best_matching(rest, gold, used)
    for j, g in enumerate(gold):
        if j not in used and line_jaccard(head, g) >= 0.5:
            best = max(best, 1 + _best_matching(rest, gold, used | {j}))
    return best


layouts = st.lists(st.tuples(st.integers(0, 3), st.integers(0, 4)), max_size=6)


@settings(max_examples=100, deadline=None)
@given(layouts, layouts)
def test_overlap_matching_agrees_with_exhaustive_search(predicted_layout, gold_layout):
    predicted, gold = _disjoint(predicted_layout), _disjoint(gold_layout)
    assert overlap_matches(predicted, gold) == _best_matching(predicted, gold)


@settings(max_examples=20)
@given(st.lists(st.tuples(st.booleans(), st.booleans()), min_size=1, max_size=30))
def test_boolean_counts_match_a_recount(pairs):
    attribute = Attribute.ANTI_ASSIGNMENT
    predictions = {f"d{i}": AttributePrediction(attribute, answer=p) for i, (p, _) in enumerate(pairs)}
    golds = {f"d{i}": g for i, (_, g) in enumerate(pairs)}
    metrics = attribute_prf(predictions, golds, attribute)
    assert metrics.tp == sum(p and g for p, g in pairs)
    assert metrics.fp == sum(p and not g for p, g in pairs)
    assert metrics.fn == sum(g and not p for p, g in pairs)
    assert metrics.tn == sum(not p and not g for p, g in pairs)
