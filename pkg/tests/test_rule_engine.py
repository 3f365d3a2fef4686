import json
import pytest

from app.config import settings
from app.errors import DuplicateId, RuleSyntaxError
from app.evaluation import normalize_answer
from app.attribute_extractors import Attribute
from app.section_splitter import assemble_sections, gold_sections
from app.rule_engine import NO_MATCH_CONFIDENCE, apply_rules, load_rule_dir, load_rule_source, load_rules
from tests.helpers import make_document, stacked_lines


def _rule(rule_id, attribute, pattern, effect, scope="document"):
    return json.dumps({"rule_id": rule_id, "attribute": attribute, "pattern": pattern, "effect": effect, "scope": scope})


def _write(tmp_path, *lines, name="rules.jsonl"):
    path = tmp_path / name
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def _contract():
    return make_document([[
        [("may terminate at will", 72, 30)],
        stacked_lines([
            "1. Termination",
            "Either party may terminate this Agreement for convenience.",
            "2. Governing Law",
            "This Agreement is governed by the laws of the State of",
        ], y0=100),
    ], [
        stacked_lines(["Ohio, without regard to conflicts."], y0=100),
    ]])


def test_bundled_rule_files_load():
    rule_set = load_rule_dir(settings.rules_dir)
    assert len(rule_set) > 0
    for attribute in Attribute:
        assert rule_set.for_attribute(attribute)


def test_syntax_errors_report_line_and_column(tmp_path):
    good = _rule("a", "termination_for_convenience", "at will", {"answer": True})
    path = _write(tmp_path, good, '{"rule_id": "b", "attribute": ')
    with pytest.raises(RuleSyntaxError) as info:
        load_rules(path)
    assert info.value.line == 2
    assert info.value.column > 1
    assert str(path) in str(info.value)


@pytest.mark.parametrize("line", [
    _rule("x", "colour", "red", {"answer": True}),
    _rule("x", "anti_assignment", "([unclosed", {"answer": True}),
    _rule("x", "anti_assignment", "assign", {"capture": 1}),
    _rule("x", "governing_law", "laws of (ohio)", {"answer": True}),
    _rule("x", "governing_law", "laws of ohio", {"capture": 1}),
    _rule("x", "governing_law", "laws of (ohio)", {"capture": 1}, scope="pages"),
])
def test_invalid_rules_are_rejected(tmp_path, line):
    with pytest.raises(RuleSyntaxError) as info:
        load_rules(_write(tmp_path, line))
    assert info.value.line == 1


def test_duplicate_rule_ids(tmp_path):
    rule = _rule("same", "anti_assignment", "assign", {"answer": True})
    with pytest.raises(DuplicateId):
        load_rules(_write(tmp_path, rule, rule))
    directory = tmp_path / "split"
    directory.mkdir()
    _write(directory, rule, name="a.jsonl")
    _write(directory, rule, name="b.jsonl")
    with pytest.raises(DuplicateId):
        load_rule_dir(directory)


def test_first_matching_rule_wins(tmp_path):
    path = _write(
        tmp_path,
        _rule("never", "governing_law", "laws of (mars)", {"capture": 1}),
        _rule("state", "governing_law", "laws of the (state of [a-z ]+?),", {"capture": 1}),
        _rule("any", "governing_law", "laws of (.*)", {"capture": 1}),
    )
    prediction = apply_rules(load_rules(path), _contract(), Attribute.GOVERNING_LAW)
    assert prediction.span_text == "State of Ohio"
    assert prediction.confidence == 1.0


def test_boolean_no_match_defaults_to_no(tmp_path):
    path = _write(tmp_path, _rule("a", "anti_assignment", "shall not assign", {"answer": True}))
    prediction = apply_rules(load_rules(path), _contract(), Attribute.ANTI_ASSIGNMENT)
    assert prediction.answer is False
    assert prediction.confidence == NO_MATCH_CONFIDENCE


def test_entity_no_match_has_no_span(tmp_path):
    path = _write(tmp_path, _rule("a", "expiration_date", "until (never)", {"capture": 1}))
    prediction = apply_rules(load_rules(path), _contract(), Attribute.EXPIRATION_DATE)
    assert prediction.span is None
    assert prediction.no_relevant_section


def test_any_match_looks_past_a_no_verdict(tmp_path):
    path = _write(
        tmp_path,
        _rule("no", "termination_for_convenience", "either party", {"answer": False}),
        _rule("yes", "termination_for_convenience", "for convenience", {"answer": True}),
    )
    rule_set = load_rules(path)
    assert apply_rules(rule_set, _contract(), Attribute.TERMINATION_FOR_CONVENIENCE).answer is False
    assert apply_rules(rule_set, _contract(), Attribute.TERMINATION_FOR_CONVENIENCE, any_match=True).answer is True


def test_clause_scope_skips_margins(tmp_path):
    doc = _contract()
    tags = ["B-header", "B-clause", "I-clause", "B-clause", "I-clause", "I-clause"]
    sections = assemble_sections(doc, tags)
    document_rule = load_rules(_write(tmp_path, _rule("w", "termination_for_convenience", "at will", {"answer": True})))
    clause_rule = load_rules(_write(
        tmp_path, _rule("w", "termination_for_convenience", "at will", {"answer": True}, scope="clauses"), name="c.jsonl",
    ))
    assert apply_rules(document_rule, sections, Attribute.TERMINATION_FOR_CONVENIENCE).answer is True
    assert apply_rules(clause_rule, sections, Attribute.TERMINATION_FOR_CONVENIENCE).answer is False


def test_rules_see_text_rejoined_across_pages(tmp_path):
    path = _write(tmp_path, _rule("gl", "governing_law", "laws of the (state of [a-z]+)", {"capture": 1}, scope="clauses"))
    doc = _contract()
    sections = assemble_sections(doc, ["B-header", "B-clause", "I-clause", "B-clause", "I-clause", "I-clause"])
    assert apply_rules(load_rules(path), sections, Attribute.GOVERNING_LAW).span_text == "State of Ohio"


def test_bundled_rules_find_governing_law_on_clean_sections(corpus):
    rule_set = load_rule_source(settings.rules_dir)
    hits = 0
    for doc, gold in corpus:
        prediction = apply_rules(rule_set, gold_sections(doc, gold), Attribute.GOVERNING_LAW)
        if normalize_answer(prediction.span_text) == normalize_answer(gold.gold_text(doc, "governing_law")):
            hits += 1
    assert hits > 0
