"""
Section splitting: BIO tags per line, then typed sections with cleaned text.

Headers and footers are pulled out of the clause flow. A clause or
sub-clause interrupted only by header/footer lines at a page boundary
continues on the next page when the line before the break does not end a
sentence, which rejoins answers broken across pages.
"""

import logging

from enum import Enum
from functools import partial
from dataclasses import dataclass, field
from typing import Callable, Iterable, List, Optional, Sequence, Tuple, Union

from app.models import SECTION_TAGS, SectionRecord, SectionsOutput
from app.features import FeatureConfig, document_line_features
from app.ocr_model import Document, LineRef, TokenRef, line_text
from app.crf_engine import CrfModel, LabeledSequence, LabelSet, TrainConfig, train, viterbi_decode
from app.errors import ConfigMismatch, DataError, InvalidDocument, LengthMismatch, ModelMismatch

# Configure logging
logger = logging.getLogger(__name__)

SECTION_LABELS = LabelSet(labels=SECTION_TAGS)
CONTENT_TYPES = ("clause", "subclause")
MARGIN_TYPES = ("header", "footer")


class SectionTag(str, Enum):
    O = "O"
    B_CLAUSE = "B-clause"
    I_CLAUSE = "I-clause"
    B_SUBCLAUSE = "B-subclause"
    I_SUBCLAUSE = "I-subclause"
    B_HEADER = "B-header"
    I_HEADER = "I-header"
    B_FOOTER = "B-footer"
    I_FOOTER = "I-footer"

    @property
    def is_begin(self) -> bool:
        return self.value.startswith("B-")

    @property
    def section_type(self) -> Optional[str]:
        return None if self is SectionTag.O else self.value[2:]


@dataclass(frozen=True)
class Section:
    section_id: int
    section_type: str
    line_refs: Tuple[LineRef, ...]
    line_positions: Tuple[int, ...]
    clean_text: str
    token_provenance: Tuple[TokenRef, ...]

    @property
    def first_line(self) -> int:
        return self.line_positions[0]

    @property
    def last_line(self) -> int:
        return self.line_positions[-1]

    @property
    def key(self) -> Tuple[str, int, int]:
        return self.section_type, self.first_line, self.last_line

    @property
    def is_content(self) -> bool:
        return self.section_type in CONTENT_TYPES

    def to_record(self) -> SectionRecord:
        return SectionRecord(type=self.section_type, first_line=self.first_line, last_line=self.last_line, clean_text=self.clean_text)


@dataclass
class _OpenSection:
    section_type: str
    positions: List[int] = field(default_factory=list)


def _ends_sentence(text: str) -> bool:
    return text.endswith(".") or text.endswith(";")


def join_lines(texts: Iterable[str]) -> str:
    """Whitespace-normalized line texts joined by spaces; a word hyphenated at a line end is rejoined"""
    joined = ""
    for text in texts:
        text = " ".join(text.split())
        if not text:
            continue
        if len(joined) > 1 and joined.endswith("-") and joined[-2].isalpha() and text[0].islower():
            joined = joined[:-1] + text
        else:
            joined = f"{joined} {text}" if joined else text
    return joined


def assemble_sections(doc: Document, tags: Sequence[Union[SectionTag, str]]) -> List[Section]:
    """Group tagged lines into sections, repairing orphan I- tags to B-"""
    if len(tags) != doc.line_count:
        raise LengthMismatch(f"{len(tags)} tags for {doc.line_count} lines", path=doc.doc_id)

    order = doc.reading_order
    opened: List[_OpenSection] = []
    current: Optional[_OpenSection] = None
    suspended: Optional[_OpenSection] = None

    def start(section_type: str, position: int) -> _OpenSection:
        section = _OpenSection(section_type, [position])
        opened.append(section)
        return section

    for position, raw in enumerate(tags):
        tag = SectionTag(raw)
        kind = tag.section_type
        if kind is None:
            current = suspended = None
            continue

        if kind in MARGIN_TYPES:
            if current is not None and current.section_type in CONTENT_TYPES:
                suspended = current
            if not tag.is_begin and current is not None and current.section_type == kind:
                current.positions.append(position)
            else:
                current = start(kind, position)
            continue

        if not tag.is_begin:
            if current is not None and current.section_type == kind:
                current.positions.append(position)
                continue
            if (
                suspended is not None
                and suspended.section_type == kind
                and current is not None
                and current.section_type in MARGIN_TYPES
            ):
                before = order[suspended.positions[-1]]
                if before[0].page_index != order[position][0].page_index and not _ends_sentence(line_text(before[1])):
                    suspended.positions.append(position)
                    current, suspended = suspended, None
                    continue
        current = start(kind, position)
        suspended = None

    sections = []
    for section_id, section in enumerate(opened):
        refs = tuple(order[p][0] for p in section.positions)
        provenance = tuple(
            TokenRef(ref, t) for ref in refs for t in range(len(doc.line(ref).tokens))
        )
        clean_text = join_lines(line_text(doc.line(ref)) for ref in refs)
        sections.append(Section(
            section_id=section_id,
            section_type=section.section_type,
            line_refs=refs,
            line_positions=tuple(section.positions),
            clean_text=clean_text,
            token_provenance=provenance,
        ))
    return sections


def splitter_sequence(entry, feature_config: FeatureConfig) -> LabeledSequence:
    """Line features and gold tag indices of one labelled document"""
    doc, gold = entry
    if gold is None:
        raise DataError(f"Document {doc.doc_id} has no gold labels", path=doc.doc_id)
    if len(gold.line_labels) != doc.line_count:
        raise DataError(f"{len(gold.line_labels)} labels for {doc.line_count} lines", path=doc.doc_id)
    labels = [SECTION_LABELS.index(tag) for tag in gold.line_labels]
    return document_line_features(doc, feature_config), labels


def train_splitter(
    corpus: Sequence,
    feature_config: FeatureConfig,
    train_config: TrainConfig,
    map_fn: Callable[..., Iterable] = map,
) -> CrfModel:
    """One CRF over the 9 section tags, one sequence per document"""
    if not corpus:
        raise DataError("Cannot train a splitter on an empty corpus")
    logger.info(f"🔧 Training splitter on {len(corpus)} documents with groups {feature_config.name}")
    sequences = list(map_fn(partial(splitter_sequence, feature_config=feature_config), corpus))
    model = train(sequences, SECTION_LABELS, train_config, feature_fingerprint=feature_config.fingerprint())
    logger.info(f"✅ Splitter trained: {len(model.feature_names)} features")
    return model


def check_splitter(model: CrfModel, feature_config: FeatureConfig) -> None:
    if model.label_set.labels != SECTION_TAGS:
        raise ModelMismatch(f"Model labels {list(model.label_set.labels)} are not the section tag set")
    if model.feature_fingerprint != feature_config.fingerprint():
        raise ConfigMismatch(
            f"Model was trained with feature fingerprint {model.feature_fingerprint}, "
            f"current feature config {feature_config.name} has {feature_config.fingerprint()}"
        )


def predict_tags(model: CrfModel, doc: Document, feature_config: FeatureConfig) -> List[SectionTag]:
    check_splitter(model, feature_config)
    if doc.line_count == 0:
        raise InvalidDocument(f"Document {doc.doc_id} has no lines", path=doc.doc_id)
    path = viterbi_decode(model, document_line_features(doc, feature_config))
    return [SectionTag(model.label_set.name(i)) for i in path]


def split_document(model: CrfModel, doc: Document, feature_config: FeatureConfig) -> List[Section]:
    return assemble_sections(doc, predict_tags(model, doc, feature_config))


def gold_sections(doc: Document, gold) -> List[Section]:
    """Sections assembled from the gold line tags"""
    return assemble_sections(doc, gold.line_labels)


def sections_output(doc: Document, sections: Sequence[Section]) -> SectionsOutput:
    return SectionsOutput(doc_id=doc.doc_id, sections=[section.to_record() for section in sections])
