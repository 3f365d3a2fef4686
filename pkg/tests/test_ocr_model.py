import json
import pytest

from hypothesis import given, settings, strategies as st

from app.errors import EmptyError, GeometryError, SchemaError
from app.ocr_model import (
    LineRef, TokenRef, document_text, line_text, lines_in_reading_order,
    parse_document, serialize_document, validate_document,
)
from tests.helpers import make_document, stacked_lines


def test_reading_order_is_page_then_top_then_left():
    doc = make_document([
        [
            [("lower block", 72, 300)],
            [("right", 300, 100), ("left", 72, 100)],
        ],
        [[("second page", 72, 50)]],
    ])
    texts = [line_text(line) for _, line in doc.reading_order]
    assert texts == ["left", "right", "lower block", "second page"]
    assert doc.reading_order[0][0] == LineRef(0, 1, 1)


def test_identical_positions_keep_input_order():
    doc = make_document([[[("first", 72, 100)], [("second", 72, 100)]]])
    assert [line_text(line) for _, line in lines_in_reading_order(doc)] == ["first", "second"]


def test_document_text_joins_lines():
    doc = make_document([[stacked_lines(["Section 1. Term", "This Agreement starts now."])]])
    assert document_text(doc) == "Section 1. Term\nThis Agreement starts now."


def test_token_stream_and_indices_agree():
    doc = make_document([[stacked_lines(["a b c", "d e"])], [stacked_lines(["f"])]])
    stream = doc.token_stream()
    assert len(stream) == doc.token_count == 6
    assert [doc.token_index(ref) for ref in stream] == list(range(6))
    assert doc.token(stream[3]).text == "d"
    assert stream[5] == TokenRef(LineRef(1, 0, 0), 0)


def test_round_trip_hand_built_document():
    doc = make_document([[stacked_lines(["Governing Law.", "The laws of the State of Ohio apply."])]])
    text = serialize_document(doc)
    assert serialize_document(parse_document(text)) == text


def test_round_trip_generated_documents(corpus):
    for doc, _ in corpus:
        text = serialize_document(doc)
        assert serialize_document(parse_document(text)) == text


def _raw(doc):
    return json.loads(serialize_document(doc))


def test_degenerate_box_is_reported_with_its_path():
    raw = _raw(make_document([[stacked_lines(["word"])]]))
    raw["pages"][0]["blocks"][0]["lines"][0]["bbox"] = [100, 100, 90, 110]
    with pytest.raises(GeometryError) as info:
        parse_document(json.dumps(raw))
    assert info.value.path == "pages[0].blocks[0].lines[0].bbox"


def test_box_outside_page_is_rejected():
    raw = _raw(make_document([[stacked_lines(["word"])]]))
    raw["pages"][0]["blocks"][0]["lines"][0]["tokens"][0]["bbox"] = [72, 100, 700, 111]
    with pytest.raises(GeometryError):
        parse_document(json.dumps(raw))


def test_missing_field_is_a_schema_error():
    raw = _raw(make_document([[stacked_lines(["word"])]]))
    del raw["pages"][0]["blocks"][0]["lines"][0]["tokens"][0]["italic"]
    with pytest.raises(SchemaError) as info:
        parse_document(json.dumps(raw))
    assert "tokens[0]" in info.value.path


def test_token_with_whitespace_is_rejected():
    raw = _raw(make_document([[stacked_lines(["word"])]]))
    raw["pages"][0]["blocks"][0]["lines"][0]["tokens"][0]["text"] = "two words"
    with pytest.raises(SchemaError):
        parse_document(json.dumps(raw))


def test_empty_containers_are_rejected():
    raw = _raw(make_document([[stacked_lines(["word"])]]))
    raw["pages"] = []
    with pytest.raises(EmptyError):
        parse_document(json.dumps(raw))

    raw = _raw(make_document([[stacked_lines(["word"])]]))
    raw["pages"][0]["blocks"][0]["lines"] = []
    with pytest.raises(EmptyError):
        parse_document(json.dumps(raw))


def test_validate_accepts_generated_documents(corpus):
    for doc, _ in corpus:
        assert validate_document(doc) is doc


@settings(max_examples=50, deadline=None)
@given(st.lists(
    st.tuples(st.integers(0, 1), st.integers(50, 700), st.integers(50, 400)),
    min_size=1, max_size=12,
))
def test_reading_order_is_sorted_and_complete(placements):
    pages = [[], []]
    for page, y, x in placements:
        pages[page].append([("w", x, y)])
    pages = [blocks for blocks in pages if blocks]
    doc = make_document(pages)

    order = doc.reading_order
    keys = [(ref.page_index, line.bbox[1], line.bbox[0]) for ref, line in order]
    assert keys == sorted(keys)
    assert sorted(ref for ref, _ in order) == sorted(
        LineRef(p, b, 0) for p, blocks in enumerate(pages) for b in range(len(blocks))
    )
