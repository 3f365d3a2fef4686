import pytest

from app.crf_engine import CrfModel, LabelSet, TrainConfig
from app.features import FeatureConfig
from app.errors import ConfigMismatch, DataError, LengthMismatch, ModelMismatch
from app.section_splitter import (
    SECTION_LABELS, SectionTag, assemble_sections, gold_sections, join_lines, predict_tags,
    sections_output, split_document, train_splitter,
)
from app.synth_corpus import GenConfig, generate_document
from tests.helpers import make_document, stacked_lines


@pytest.fixture(scope="module")
def splitter(corpus):
    config = FeatureConfig.all_groups()
    model = train_splitter(corpus[:8], config, TrainConfig(l2_lambda=0.1, max_iterations=60))
    return model, config


def _two_page_doc(first_last_line):
    return make_document([
        [
            stacked_lines(["1. Governing Law", first_last_line], y0=600),
            [("7", 300, 748)],
        ],
        [
            [("CONFIDENTIAL", 480, 30)],
            stacked_lines(["State of Ohio.", "2. Notices"], y0=100),
        ],
    ])


def test_assemble_groups_lines_by_tag():
    doc = make_document([[stacked_lines(["1. Term", "It starts today.", "(a) first", "(b) second", "SIGNED"])]])
    tags = ["B-clause", "I-clause", "B-subclause", "B-subclause", "O"]
    sections = assemble_sections(doc, tags)
    assert [s.key for s in sections] == [("clause", 0, 1), ("subclause", 2, 2), ("subclause", 3, 3)]
    assert sections[0].clean_text == "1. Term It starts today."
    assert len(sections[0].token_provenance) == 5


def test_orphan_inside_tag_starts_a_section():
    doc = make_document([[stacked_lines(["intro", "continued", "more"])]])
    sections = assemble_sections(doc, ["O", "I-clause", "I-clause"])
    assert [s.key for s in sections] == [("clause", 1, 2)]


def test_type_change_starts_a_new_section():
    doc = make_document([[stacked_lines(["one", "two"])]])
    sections = assemble_sections(doc, ["B-clause", "I-subclause"])
    assert [s.key for s in sections] == [("clause", 0, 0), ("subclause", 1, 1)]


def test_clause_continues_across_page_margins():
    doc = _two_page_doc("This Agreement is governed by the laws of the")
    tags = ["B-clause", "I-clause", "B-footer", "B-header", "I-clause", "B-clause"]
    sections = assemble_sections(doc, tags)
    clause = sections[0]
    assert clause.line_positions == (0, 1, 4)
    assert clause.clean_text.endswith("laws of the State of Ohio.")
    assert [s.section_type for s in sections] == ["clause", "footer", "header", "clause"]


def test_finished_sentence_does_not_continue_across_pages():
    doc = _two_page_doc("This Agreement is governed by Ohio law.")
    tags = ["B-clause", "I-clause", "B-footer", "B-header", "I-clause", "B-clause"]
    sections = assemble_sections(doc, tags)
    assert [s.key for s in sections if s.section_type == "clause"] == [
        ("clause", 0, 1), ("clause", 4, 4), ("clause", 5, 5),
    ]


def test_every_line_belongs_to_at_most_one_section(corpus):
    for doc, gold in corpus:
        seen = []
        for section in gold_sections(doc, gold):
            seen.extend(section.line_positions)
        assert len(seen) == len(set(seen))


def test_gold_tags_reassemble_into_gold_sections(corpus):
    for doc, gold in corpus:
        keys = sorted((s.section_type, s.first_line, s.last_line) for s in gold_sections(doc, gold))
        expected = sorted((s.type, s.first_line, s.last_line) for s in gold.sections)
        assert keys == expected


@pytest.mark.parametrize("page_height", [792.0, 396.0])
def test_gold_tags_reassemble_over_many_generated_documents(page_height):
    config = GenConfig(seed=19, doc_count=100, mean_words_per_doc=300, page_height=page_height, broken_span_prob=0.5)
    for index in range(config.doc_count):
        doc, gold = generate_document(config, index)
        keys = sorted(s.key for s in assemble_sections(doc, gold.line_labels))
        assert keys == sorted((s.type, s.first_line, s.last_line) for s in gold.sections), doc.doc_id


def test_all_outside_tags_yield_no_sections():
    doc = make_document([[stacked_lines(["SIGNED", "Name", "Title"])]])
    assert assemble_sections(doc, ["O", "O", "O"]) == []


def test_page_number_footer_is_dropped_from_clean_text():
    doc = make_document([
        [
            stacked_lines(["12. Governing Law. This Agreement shall be", "governed by the laws of the"], y0=700),
            [("4", 300, 748)],
        ],
        [stacked_lines(["State of Delaware, without regard to conflicts of law."], y0=72)],
    ])
    sections = assemble_sections(doc, ["B-clause", "I-clause", "B-footer", "I-clause"])
    assert [s.key for s in sections] == [("clause", 0, 3), ("footer", 2, 2)]
    assert sections[0].clean_text == (
        "12. Governing Law. This Agreement shall be governed by the laws of the "
        "State of Delaware, without regard to conflicts of law."
    )
    assert "4" not in sections[0].clean_text.split()


def test_hyphenated_word_is_rejoined_across_a_page():
    doc = make_document([
        [stacked_lines(["governed by the laws of the Common-"], y0=720), [("4", 300, 748)]],
        [stacked_lines(["wealth of Virginia."], y0=72)],
    ])
    sections = assemble_sections(doc, ["B-clause", "B-footer", "I-clause"])
    assert sections[0].clean_text == "governed by the laws of the Commonwealth of Virginia."


@pytest.mark.parametrize("texts, expected", [
    (["agree-", "ment is final."], "agreement is final."),
    (["Non-", "Solicitation"], "Non- Solicitation"),
    (["pages 1 -", "and"], "pages 1 - and"),
    (["  spaced   out ", "", "line"], "spaced out line"),
])
def test_join_lines(texts, expected):
    assert join_lines(texts) == expected


def test_tag_count_must_match_lines():
    doc = make_document([[stacked_lines(["one", "two"])]])
    with pytest.raises(LengthMismatch):
        assemble_sections(doc, ["B-clause"])


def test_section_tags():
    assert SectionTag("B-footer").is_begin
    assert SectionTag("I-subclause").section_type == "subclause"
    assert SectionTag("O").section_type is None
    assert SECTION_LABELS.labels[0] == "O"


def test_trained_splitter_fits_its_training_documents(corpus, splitter):
    model, config = splitter
    correct = total = 0
    for doc, gold in corpus[:8]:
        tags = predict_tags(model, doc, config)
        assert len(tags) == doc.line_count
        correct += sum(1 for tag, want in zip(tags, gold.line_labels) if tag.value == want)
        total += doc.line_count
    assert correct / total > 0.9


def test_split_document_output(corpus, splitter):
    model, config = splitter
    doc, _ = corpus[9]
    sections = split_document(model, doc, config)
    output = sections_output(doc, sections)
    assert output.doc_id == doc.doc_id
    assert all(record.clean_text for record in output.sections)
    assert [s.first_line for s in sections] == sorted(s.first_line for s in sections)


def test_feature_config_must_match_the_model(corpus, splitter):
    model, _ = splitter
    with pytest.raises(ConfigMismatch):
        predict_tags(model, corpus[0][0], FeatureConfig())


def test_model_with_other_labels_is_rejected(corpus):
    model = CrfModel.zeros(LabelSet.of("O", "B-ans", "I-ans"), ["x"])
    with pytest.raises(ModelMismatch):
        predict_tags(model, corpus[0][0], FeatureConfig())


def test_training_needs_labels(corpus):
    with pytest.raises(DataError):
        train_splitter([], FeatureConfig(), TrainConfig())
    with pytest.raises(DataError):
        train_splitter([(corpus[0][0], None)], FeatureConfig(), TrainConfig())
