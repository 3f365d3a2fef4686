import pytest

from hypothesis import given, settings, strategies as st

from app.errors import ConfigError, DuplicateId, EmptyCorpus
from app.evaluation import normalize_answer
from app.models import SECTION_TAGS
from app.ocr_model import serialize_document
from app.section_splitter import assemble_sections
from app.storage import read_jsonl, write_jsonl
from app.synth_corpus import (
    BODY_FONT, CUAD_REFERENCE, GOVERNING_JURISDICTIONS, MANIFEST_NAME, MARGIN, GenConfig, corpus_stats,
    generate_document, load_corpus, split_corpus, write_corpus, _ContractWriter, _LineSpec, _Row, _Word,
)


def test_generation_is_deterministic(gen_config):
    first_doc, first_gold = generate_document(gen_config, 3)
    second_doc, second_gold = generate_document(gen_config, 3)
    assert serialize_document(first_doc) == serialize_document(second_doc)
    assert first_gold == second_gold


def test_documents_do_not_depend_on_corpus_size(gen_config):
    bigger = gen_config.model_copy(update={"doc_count": gen_config.doc_count + 5})
    assert serialize_document(generate_document(gen_config, 2)[0]) == serialize_document(generate_document(bigger, 2)[0])


def test_labels_cover_every_line(corpus):
    for doc, gold in corpus:
        assert len(gold.line_labels) == doc.line_count
        assert set(gold.line_labels) <= set(SECTION_TAGS)
        for section in gold.sections:
            tags = gold.line_labels[section.first_line: section.last_line + 1]
            assert tags[0] == f"B-{section.type}"


def test_entity_answers_are_present(corpus):
    jurisdictions = {normalize_answer(j) for j in GOVERNING_JURISDICTIONS}
    for doc, gold in corpus:
        assert normalize_answer(gold.gold_text(doc, "governing_law")) in jurisdictions
        assert gold.gold_text(doc, "expiration_date")


def test_party_descriptions_name_other_jurisdictions_first(corpus):
    for doc, gold in corpus:
        stream = [doc.token(ref).text for ref in doc.token_stream()]
        text = " ".join(stream).lower()
        assert text.count("organized under the laws of the") == 2
        recital = next(i for i, word in enumerate(stream) if word == "NOW,")
        assert gold.span("governing_law").first_token > recital


def test_evidence_points_at_content_lines(corpus):
    for doc, gold in corpus:
        assert "governing_law" in gold.evidence
        assert "expiration_date" in gold.evidence
        for span in gold.evidence.values():
            assert gold.line_labels[span.first_line].startswith("B-")
            assert gold.line_labels[span.first_line].endswith("clause")
            assert gold.line_labels[span.last_line].endswith("clause")


def test_broken_spans_cross_a_page_and_skip_margin_tokens():
    config = GenConfig(seed=11, doc_count=4, mean_words_per_doc=600, broken_span_prob=1.0)
    for index in range(config.doc_count):
        doc, gold = generate_document(config, index)
        tokens = gold.gold_tokens(doc, "governing_law")
        pages = {ref.line.page_index for ref in tokens}
        assert len(pages) >= 2
        margin = gold.margin_lines()
        assert all(doc.position_of[ref.line] not in margin for ref in tokens)


@pytest.mark.parametrize("n, sizes", [(10, (8, 1, 1)), (200, (160, 20, 20)), (3, (1, 1, 1)), (2, (2, 0, 0))])
def test_split_sizes(n, sizes):
    split = split_corpus(list(range(n)), seed=7)
    assert (len(split.train), len(split.dev), len(split.test)) == sizes
    assert sorted(split.train + split.dev + split.test) == list(range(n))


def test_split_is_seeded():
    items = list(range(50))
    assert split_corpus(items, 1) == split_corpus(items, 1)
    assert split_corpus(items, 1).test != split_corpus(items, 2).test


def test_corpus_stats(corpus):
    stats = corpus_stats(corpus, seed=7)
    assert stats.documents == len(corpus)
    assert stats.words_min <= stats.words_mean <= stats.words_max
    assert stats.lines == sum(doc.line_count for doc, _ in corpus)
    assert sum(stats.label_distribution.values()) == stats.lines
    assert sum(stats.split_sizes.values()) == len(corpus)
    assert stats.reference == CUAD_REFERENCE


def test_corpus_stats_rejects_empty_corpus():
    with pytest.raises(EmptyCorpus):
        corpus_stats([])


def test_invalid_probability_is_a_config_error():
    with pytest.raises(ConfigError):
        GenConfig(header_prob=1.5)


def test_write_and_load_corpus(corpus, corpus_dir):
    loaded = load_corpus(corpus_dir)
    assert [doc.doc_id for doc, _ in loaded] == [doc.doc_id for doc, _ in corpus]
    for (doc, gold), (original, original_gold) in zip(loaded, corpus):
        assert serialize_document(doc) == serialize_document(original)
        assert gold.line_labels == original_gold.line_labels


def test_duplicate_documents_are_rejected(corpus, tmp_path):
    write_corpus(corpus[:2], tmp_path)
    manifest = tmp_path / MANIFEST_NAME
    records = read_jsonl(manifest)
    write_jsonl(manifest, records + records[:1])
    with pytest.raises(DuplicateId):
        load_corpus(tmp_path)


SHORT_PAGES = GenConfig(seed=3, doc_count=1, page_height=288.0)


def _writer_with_rows(endings, split_at=None):
    """A writer whose body is one clause (two when split_at is set) of one-line rows"""
    writer = _ContractWriter(SHORT_PAGES, 0)
    first = writer._new_section("clause")
    second = writer._new_section("clause") if split_at is not None else first
    for k, ends in enumerate(endings):
        words = [_Word("term"), _Word(f"line{k}." if ends else f"line{k}")]
        if k == 0:
            words = [_Word("ends", mark="expiration_date"), _Word("Ohio", mark="governing_law")] + words
        section_id = second if split_at is not None and k >= split_at else first
        writer.rows.append(_Row([_LineSpec(words, BODY_FONT, MARGIN, "left", 1, "paragraph", section_id)]))
    writer.build_rows = lambda: None
    return writer


def test_pages_never_break_after_a_finished_sentence_in_one_section():
    writer = _writer_with_rows([True] * 40)
    pages = writer.paginate()
    assert len(pages) > 1
    assert sum(len(page) for page in pages) == 40
    for page, following in zip(pages, pages[1:]):
        assert page[-1].section_id != following[0].section_id
        assert writer.section_types[following[0].section_id] == "clause"


def test_sentence_ending_rows_reassemble_into_gold_sections():
    for has_margins in (True, False):
        writer = _writer_with_rows([True] * 40)
        writer.has_header = writer.has_footer = has_margins
        doc, gold = writer.build()
        assert len(doc.pages) > 1
        keys = sorted(s.key for s in assemble_sections(doc, gold.line_labels))
        assert keys == sorted((s.type, s.first_line, s.last_line) for s in gold.sections)
        assert len([s for s in gold.sections if s.type == "clause"]) == len(doc.pages)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.booleans(), min_size=1, max_size=45), st.integers(0, 45))
def test_page_breaks_keep_sentences_whole(endings, split_at):
    writer = _writer_with_rows(endings, split_at=min(split_at, len(endings)))
    rows = list(writer.rows)
    pages = writer.paginate()
    assert [row for page in pages for row in page] == rows
    assert all(pages)
    for page, following in zip(pages, pages[1:]):
        before, after = page[-1], following[0]
        assert not (before.section_id == after.section_id and before.ends_sentence)
