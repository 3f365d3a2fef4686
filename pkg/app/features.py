"""
Line and token feature extraction.

Feature names are namespaced ``group:feature[=value]``. The baseline group is
always on; the four visual groups can be toggled independently and never
influence each other's features.
"""

import re
import math
import logging

from itertools import combinations
from collections import Counter
from typing import Dict, FrozenSet, List, Optional, Sequence
from pydantic import BaseModel, ConfigDict, Field, field_validator

from app.config import settings
from app.errors import ConfigError, ConfigMismatch, EmptyDocument, InvalidRef
from app.storage import canonical_json, get_content_hash
from app.ocr_model import Document, Line, LineRef, Page, Token, TokenRef

# Configure logging
logger = logging.getLogger(__name__)

FEATURE_VERSION = 1

BASELINE = "baseline"
VISUAL_GROUPS = ("page_layout", "text_placement", "visual_grouping", "style")
FEATURE_GROUPS = (BASELINE,) + VISUAL_GROUPS

ALIGN_TOLERANCE_PT = 2.0
CENTER_TOLERANCE = 0.05
EDGE_FRACTION = 0.10
MAX_INDENT = 6
LARGER_RATIO = 1.15
SMALLER_RATIO = 0.9

FeatureVector = Dict[str, float]

_DECIMAL_NUMBER = re.compile(r"^\d+(\.\d+)*\.?$")
_DOTTED_DIGITS = re.compile(r"^\d+(\.\d*)+$")
_PAREN_ITEM = re.compile(r"^\(([a-z]|[ivxl]{1,5}|\d{1,3})\)$", re.IGNORECASE)


class FeatureConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    enabled_groups: FrozenSet[str] = Field(default=frozenset({BASELINE}))
    indent_quantum_pt: float = Field(default_factory=lambda: settings.indent_quantum_pt, gt=0.0)
    left_margin_fraction: float = Field(default_factory=lambda: settings.left_margin_fraction, gt=0.0, lt=1.0)

    @field_validator("enabled_groups", mode="before")
    @classmethod
    def _known_groups(cls, groups) -> FrozenSet[str]:
        groups = frozenset(groups)
        unknown = sorted(groups - set(FEATURE_GROUPS))
        if unknown:
            raise ConfigError(f"Unknown feature group(s) {unknown}; choose from {list(FEATURE_GROUPS)}", path="groups")
        return groups | {BASELINE}

    @classmethod
    def parse(cls, spec: str) -> "FeatureConfig":
        """'baseline', 'all', or a comma list of groups such as 'page_layout,style'"""
        spec = spec.strip()
        if spec == "all":
            return cls(enabled_groups=frozenset(FEATURE_GROUPS))
        names = {part.strip().lstrip("+") for part in spec.split(",") if part.strip()}
        return cls(enabled_groups=frozenset(names or {BASELINE}))

    @classmethod
    def all_groups(cls) -> "FeatureConfig":
        return cls(enabled_groups=frozenset(FEATURE_GROUPS))

    @classmethod
    def from_fingerprint(cls, fingerprint: str) -> "FeatureConfig":
        """The group combination, under the current layout constants, that has this fingerprint"""
        for size in range(len(VISUAL_GROUPS) + 1):
            for extra in combinations(VISUAL_GROUPS, size):
                config = cls(enabled_groups=frozenset((BASELINE,) + extra))
                if config.fingerprint() == fingerprint:
                    return config
        raise ConfigMismatch(
            f"No feature group combination has fingerprint {fingerprint}; "
            "the model was trained with different layout constants"
        )

    def enabled(self, group: str) -> bool:
        return group in self.enabled_groups

    @property
    def name(self) -> str:
        extra = [g for g in VISUAL_GROUPS if g in self.enabled_groups]
        if not extra:
            return "baseline"
        if len(extra) == len(VISUAL_GROUPS):
            return "+all_groups"
        return "+" + "+".join(extra)

    def fingerprint(self) -> str:
        payload = {
            "version": FEATURE_VERSION,
            "groups": sorted(self.enabled_groups),
            "indent_quantum_pt": self.indent_quantum_pt,
            "left_margin_fraction": self.left_margin_fraction,
        }
        return get_content_hash(canonical_json(payload).encode("utf-8"))


class BodyFontEstimate(BaseModel):
    model_config = ConfigDict(frozen=True)

    body_font_size: float = Field(..., gt=0.0)


def estimate_body_font(doc: Document) -> BodyFontEstimate:
    """Most frequent font size rounded to 0.5pt; ties go to the smaller size"""
    counts: Counter = Counter()
    for _, line in doc.reading_order:
        for token in line.tokens:
            counts[round(token.font_size * 2) / 2] += 1
    if not counts:
        raise EmptyDocument(f"Document {doc.doc_id} has no tokens", path=doc.doc_id)
    size, _ = min(counts.items(), key=lambda item: (-item[1], item[0]))
    return BodyFontEstimate(body_font_size=size)


def _clean(value: str) -> str:
    """ASCII-only, whitespace-free rendering of a feature value"""
    ascii_value = value.encode("ascii", "backslashreplace").decode("ascii")
    return re.sub(r"\s", "_", ascii_value)


def line_shape(text: str) -> str:
    if text.isdigit():
        return "dd"
    if _DOTTED_DIGITS.match(text):
        return "d.d"
    if _PAREN_ITEM.match(text):
        return "(a)"
    if text.isalpha():
        if text.isupper():
            return "XX"
        if text[0].isupper() and text[1:].islower():
            return "Xx"
    return "mixed"


def token_shape(text: str) -> str:
    if text.isdigit():
        return "d" if len(text) == 1 else "dd"
    if _DOTTED_DIGITS.match(text):
        return "d.d"
    if _PAREN_ITEM.match(text):
        return "(a)"
    if text.isalpha():
        if text.isupper() and len(text) > 1:
            return "XX"
        if text[0].isupper() and text[1:].islower():
            return "Xx"
        if text.islower():
            return "x"
    return "mixed"


def _length_bucket(n: int) -> str:
    if n <= 1:
        return "1"
    if n <= 5:
        return "2-5"
    if n <= 15:
        return "6-15"
    return "16+"


def _fraction_bucket(flags: Sequence[bool]) -> str:
    hits = sum(1 for flag in flags if flag)
    if hits == 0:
        return "none"
    return "all" if hits == len(flags) else "some"


class _PageGeometry:
    """Left and right text edges of one page"""

    def __init__(self, page: Page):
        boxes = [line.bbox for block in page.blocks for line in block.lines]
        self.min_x0 = min(box[0] for box in boxes)
        self.max_x1 = max(box[2] for box in boxes)


def _check_ref(doc: Document, ref: LineRef) -> Line:
    try:
        if min(ref) < 0:
            raise IndexError(ref)
        return doc.line(ref)
    except (IndexError, TypeError):
        raise InvalidRef(f"Line reference {tuple(ref)} is not valid in document {doc.doc_id}", path=doc.doc_id)


def _line_features(
    doc: Document,
    position: int,
    config: FeatureConfig,
    body: BodyFontEstimate,
    geometry: _PageGeometry,
) -> FeatureVector:
    order = doc.reading_order
    ref, line = order[position]
    page = doc.pages[ref.page_index]
    block = page.blocks[ref.block_index]
    tokens = line.tokens
    texts = [token.text for token in tokens]
    previous = order[position - 1] if position > 0 else None
    following = order[position + 1] if position + 1 < len(order) else None

    features: FeatureVector = {}

    def add(name: str) -> None:
        features[name] = 1.0

    # baseline: text plus reading-order context
    for i, text in enumerate(texts[:3]):
        add(f"baseline:w{i}={_clean(text.lower())}")
    add(f"baseline:shape={line_shape(texts[0])}")
    add(f"baseline:len={_length_bucket(len(texts))}")
    first = texts[0]
    if _PAREN_ITEM.match(first):
        add("baseline:num=paren")
    elif _DECIMAL_NUMBER.match(first) and "." in first:
        add("baseline:num=decimal")
    elif first.lower() in ("section", "article"):
        add("baseline:num=keyword")
    if texts[-1].endswith(":"):
        add("baseline:ends_colon")
    alpha = [text for text in texts if any(ch.isalpha() for ch in text)]
    if alpha:
        add(f"baseline:caps={_fraction_bucket([text.isupper() for text in alpha])}")
    if any(ch.isdigit() for text in texts for ch in text):
        add("baseline:has_digit")
    add(f"baseline:prev_w0={_clean(previous[1].tokens[0].text.lower()) if previous else 'BOS'}")
    add(f"baseline:next_w0={_clean(following[1].tokens[0].text.lower()) if following else 'EOS'}")

    x0, y0, x1, y1 = line.bbox
    if config.enabled("page_layout"):
        y_center = (y0 + y1) / 2 / page.height
        add(f"page_layout:ypos={min(9, int(y_center * 10))}")
        if previous is None or previous[0].page_index != ref.page_index:
            add("page_layout:first_on_page")
        if following is None or following[0].page_index != ref.page_index:
            add("page_layout:last_on_page")
        if y0 < EDGE_FRACTION * page.height:
            add("page_layout:near_top")
        if y1 > (1.0 - EDGE_FRACTION) * page.height:
            add("page_layout:near_bottom")
        if x0 < config.left_margin_fraction * page.width:
            add("page_layout:left_margin")

    if config.enabled("text_placement"):
        if abs(page.width / 2 - (x0 + x1) / 2) < CENTER_TOLERANCE * page.width:
            add("text_placement:centered")
        if abs(x0 - geometry.min_x0) <= ALIGN_TOLERANCE_PT:
            add("text_placement:left_aligned")
        if abs(x1 - geometry.max_x1) <= ALIGN_TOLERANCE_PT:
            add("text_placement:right_aligned")
        level = min(MAX_INDENT, int(math.floor((x0 - geometry.min_x0) / config.indent_quantum_pt)))
        add(f"text_placement:indent={max(0, level)}")

    if config.enabled("visual_grouping"):
        add(f"visual_grouping:block={block.kind}")
        if previous is not None and (previous[0].page_index, previous[0].block_index) == (ref.page_index, ref.block_index):
            add("visual_grouping:same_block_prev")
        if ref.line_index == 0:
            add("visual_grouping:first_of_block")
        if ref.line_index == len(block.lines) - 1:
            add("visual_grouping:last_of_block")

    if config.enabled("style"):
        add(f"style:bold={_fraction_bucket([t.bold for t in tokens])}")
        add(f"style:italic={_fraction_bucket([t.italic for t in tokens])}")
        add(f"style:underline={_fraction_bucket([t.underline for t in tokens])}")
        ratio = sum(t.font_size for t in tokens) / len(tokens) / body.body_font_size
        size = "larger" if ratio > LARGER_RATIO else "smaller" if ratio < SMALLER_RATIO else "body"
        add(f"style:size={size}")

    return features


def line_features(doc: Document, ref: LineRef, config: FeatureConfig, body: BodyFontEstimate) -> FeatureVector:
    """Features of one line; see document_line_features for a whole document"""
    _check_ref(doc, ref)
    geometry = _PageGeometry(doc.pages[ref.page_index])
    return _line_features(doc, doc.position_of[LineRef(*ref)], config, body, geometry)


def document_line_features(
    doc: Document, config: FeatureConfig, body: Optional[BodyFontEstimate] = None,
) -> List[FeatureVector]:
    """Features of every line in reading order"""
    body = body or estimate_body_font(doc)
    geometry = {p: _PageGeometry(page) for p, page in enumerate(doc.pages)}
    return [
        _line_features(doc, position, config, body, geometry[ref.page_index])
        for position, (ref, _) in enumerate(doc.reading_order)
    ]


def _token_features(texts: Sequence[str], tokens: Sequence[Token], index: int, config: FeatureConfig) -> FeatureVector:
    text = texts[index]
    features: FeatureVector = {
        f"tok:lower={_clean(text.lower())}": 1.0,
        f"tok:shape={token_shape(text)}": 1.0,
        f"tok:pos={min(4, int(5 * index / len(texts)))}": 1.0,
    }
    if text.isdigit():
        features["tok:isdigit"] = 1.0
    if text.istitle():
        features["tok:istitle"] = 1.0
    for offset, name in ((-1, "prev1"), (-2, "prev2"), (1, "next1"), (2, "next2")):
        j = index + offset
        neighbour = texts[j].lower() if 0 <= j < len(texts) else ("BOS" if j < 0 else "EOS")
        features[f"tok:{name}={_clean(neighbour)}"] = 1.0
    if config.enabled("style"):
        token = tokens[index]
        if token.bold:
            features["style:tok_bold"] = 1.0
        if token.underline:
            features["style:tok_underline"] = 1.0
    return features


def stream_features(doc: Document, stream: Sequence[TokenRef], config: FeatureConfig) -> List[FeatureVector]:
    """Token features for every position of a token stream (a section or a window)"""
    try:
        tokens = [doc.token(ref) for ref in stream]
    except (IndexError, TypeError):
        raise InvalidRef(f"Token stream does not belong to document {doc.doc_id}", path=doc.doc_id)
    texts = [token.text for token in tokens]
    return [_token_features(texts, tokens, i, config) for i in range(len(tokens))]


def token_features(doc: Document, section, token_index: int, config: FeatureConfig) -> FeatureVector:
    """Features of one token of a section's clean-text token stream"""
    stream = section.token_provenance
    if not 0 <= token_index < len(stream):
        raise InvalidRef(f"Token index {token_index} outside section of {len(stream)} tokens", path=doc.doc_id)
    return stream_features(doc, stream, config)[token_index]
