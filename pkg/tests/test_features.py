import pytest

from hypothesis import given, settings, strategies as st

from app.errors import ConfigError, ConfigMismatch, InvalidRef
from app.ocr_model import LineRef
from app.features import (
    BASELINE, FEATURE_GROUPS, VISUAL_GROUPS, FeatureConfig, document_line_features,
    estimate_body_font, line_features, line_shape, stream_features, token_shape,
)
from tests.helpers import make_document, stacked_lines


def _doc():
    return make_document([
        [
            [("CONFIDENTIAL", 480, 30, {"size": 8.0})],
            [("1. Term.", 72, 100, {"bold": True}), ("This Agreement begins today.", 72, 114)],
            [("(a) first item", 108, 140)],
            [("3", 300, 748, {"size": 8.0})],
        ],
    ])


def _groups(features):
    return {name.split(":", 1)[0] for name in features}


def test_baseline_only_emits_baseline_features():
    for vector in document_line_features(_doc(), FeatureConfig()):
        assert _groups(vector) == {BASELINE}


def test_groups_are_independent():
    doc = _doc()
    full = document_line_features(doc, FeatureConfig.all_groups())
    for group in VISUAL_GROUPS:
        single = document_line_features(doc, FeatureConfig(enabled_groups=frozenset({group})))
        for line_single, line_full in zip(single, full):
            own = {k: v for k, v in line_full.items() if k.split(":", 1)[0] in (BASELINE, group)}
            assert line_single == own


def test_visual_cues_fire_where_expected():
    doc = _doc()
    vectors = document_line_features(doc, FeatureConfig.all_groups())
    header, heading, body, item, footer = vectors
    assert "page_layout:near_top" in header
    assert "page_layout:first_on_page" in header
    assert "page_layout:near_bottom" in footer
    assert "page_layout:last_on_page" in footer
    assert "text_placement:centered" in footer
    assert "style:size=smaller" in footer
    assert "style:bold=all" in heading
    assert "baseline:num=decimal" in heading
    assert "baseline:num=paren" in item
    assert "text_placement:indent=2" in item
    assert "visual_grouping:same_block_prev" in body
    assert "visual_grouping:first_of_block" in heading


def test_body_font_is_the_most_frequent_size():
    assert estimate_body_font(_doc()).body_font_size == 11.0


def test_line_features_match_document_features():
    doc = _doc()
    config = FeatureConfig.all_groups()
    body = estimate_body_font(doc)
    vectors = document_line_features(doc, config, body)
    for position, (ref, _) in enumerate(doc.reading_order):
        assert line_features(doc, ref, config, body) == vectors[position]


def test_invalid_line_ref():
    doc = _doc()
    with pytest.raises(InvalidRef):
        line_features(doc, LineRef(0, 9, 0), FeatureConfig(), estimate_body_font(doc))


def test_stream_features_include_neighbours():
    doc = make_document([[stacked_lines(["laws of the State of Ohio"])]])
    vectors = stream_features(doc, doc.token_stream(), FeatureConfig())
    assert len(vectors) == 6
    assert vectors[0]["tok:prev1=BOS"] == 1.0
    assert vectors[3]["tok:lower=state"] == 1.0
    assert vectors[3]["tok:next1=of"] == 1.0
    assert vectors[5]["tok:next1=EOS"] == 1.0


def test_shapes():
    assert line_shape("12") == "dd"
    assert line_shape("2.1") == "d.d"
    assert line_shape("(iv)") == "(a)"
    assert line_shape("ARTICLE") == "XX"
    assert token_shape("7") == "d"
    assert token_shape("Ohio") == "Xx"
    assert token_shape("ohio,") == "mixed"


def test_parse_group_specs():
    assert FeatureConfig.parse("baseline").enabled_groups == frozenset({BASELINE})
    assert FeatureConfig.parse("all").enabled_groups == frozenset(FEATURE_GROUPS)
    assert FeatureConfig.parse("page_layout,+style").enabled_groups == frozenset({BASELINE, "page_layout", "style"})
    with pytest.raises(ConfigError):
        FeatureConfig.parse("colour")


@settings(max_examples=16, deadline=None)
@given(st.sets(st.sampled_from(VISUAL_GROUPS)))
def test_fingerprint_identifies_the_groups(groups):
    config = FeatureConfig(enabled_groups=frozenset(groups))
    assert FeatureConfig.from_fingerprint(config.fingerprint()) == config


def test_unknown_fingerprint_is_a_mismatch():
    with pytest.raises(ConfigMismatch):
        FeatureConfig.from_fingerprint("0" * 64)
