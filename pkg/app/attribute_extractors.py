"""
Attribute extraction over split sections.

For every attribute a relevance model picks up to three clause/sub-clause
sections. Expiration Date and Governing Law are then read off the selected
sections with a token CRF over {O, B-ans, I-ans}; Termination for
Convenience and Anti-Assignment are answered by an L2-regularised logistic
model over the concatenated selected sections.
"""

import re
import math
import logging
import numpy as np

from enum import Enum
from pathlib import Path
from functools import cached_property, partial
from scipy import sparse
from scipy.special import expit
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Iterable, List, Optional, Sequence, Set, Tuple, Union
from pydantic import BaseModel, ConfigDict, Field

from app.config import settings
from app.models import PredictionRecord
from app.storage import read_json, write_json
from app.ocr_model import Document, TokenRef
from app.features import FeatureConfig, stream_features
from app.section_splitter import Section, gold_sections
from app.crf_engine import (
    CrfModel, FeatureVector, LabeledSequence, LabelSet, TrainConfig,
    marginals, model_from_dict, model_to_dict, train, viterbi_decode,
)
from app.errors import ConfigMismatch, DataError, ModelMismatch, NonFinite, SchemaError

# Configure logging
logger = logging.getLogger(__name__)

BUNDLE_FORMAT_VERSION = 1
ENTITY_LABELS = LabelSet.of("O", "B-ans", "I-ans")
HEAD_WORDS = 4

_WORD = re.compile(r"[^a-z0-9]+")


class Attribute(str, Enum):
    EXPIRATION_DATE = "expiration_date"
    GOVERNING_LAW = "governing_law"
    TERMINATION_FOR_CONVENIENCE = "termination_for_convenience"
    ANTI_ASSIGNMENT = "anti_assignment"

    @property
    def kind(self) -> str:
        return "entity" if self in (Attribute.EXPIRATION_DATE, Attribute.GOVERNING_LAW) else "boolean"


ENTITY_ATTRIBUTES = (Attribute.EXPIRATION_DATE, Attribute.GOVERNING_LAW)
BOOLEAN_ATTRIBUTES = (Attribute.TERMINATION_FOR_CONVENIENCE, Attribute.ANTI_ASSIGNMENT)


@dataclass(frozen=True)
class EntitySpan:
    """Extracted answer text; rule matches carry no token provenance"""

    text: str
    section_id: Optional[int] = None
    token_start: Optional[int] = None
    token_end: Optional[int] = None


@dataclass(frozen=True)
class AttributePrediction:
    attribute: Attribute
    span: Optional[EntitySpan] = None
    answer: Optional[bool] = None
    confidence: float = 0.0
    no_relevant_section: bool = False

    @property
    def span_text(self) -> Optional[str]:
        return self.span.text if self.span is not None else None

    def to_record(self, doc_id: str) -> PredictionRecord:
        return PredictionRecord(
            doc_id=doc_id,
            attribute=self.attribute.value,
            span_text=self.span_text,
            answer=self.answer,
            confidence=self.confidence,
            no_relevant_section=self.no_relevant_section,
        )


# ---------------------------------------------------------------------------
# Logistic model
# ---------------------------------------------------------------------------

class LogisticConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    l2_lambda: float = Field(default_factory=lambda: settings.logistic_l2_lambda, ge=0.0)
    max_iterations: int = Field(default_factory=lambda: settings.logistic_max_iterations, gt=0)
    tol: float = Field(default_factory=lambda: settings.logistic_tol, gt=0.0)


@dataclass(frozen=True, eq=False)
class LogisticModel:
    feature_names: Tuple[str, ...]
    weights: np.ndarray
    bias: float = 0.0
    l2_lambda: float = 0.0

    def __post_init__(self):
        if self.weights.shape != (len(self.feature_names),):
            raise ModelMismatch(f"{self.weights.shape[0]} weights for {len(self.feature_names)} features")
        if not (np.all(np.isfinite(self.weights)) and math.isfinite(self.bias)):
            raise NonFinite("logistic weights must be finite")

    @cached_property
    def feature_index(self) -> Dict[str, int]:
        return {name: i for i, name in enumerate(self.feature_names)}

    def scores(self, rows: Sequence[FeatureVector]) -> np.ndarray:
        """Sigmoid probability per row; unseen features are ignored"""
        if not rows:
            return np.zeros(0)
        X = design_matrix(rows, self.feature_index)
        return expit(X @ self.weights + self.bias)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "bias": float(self.bias),
            "l2_lambda": self.l2_lambda,
            "weights": {name: float(w) for name, w in zip(self.feature_names, self.weights) if w != 0.0},
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "LogisticModel":
        names = tuple(sorted(data["weights"]))
        return cls(
            feature_names=names,
            weights=np.array([float(data["weights"][name]) for name in names]),
            bias=float(data["bias"]),
            l2_lambda=float(data["l2_lambda"]),
        )


def design_matrix(rows: Sequence[FeatureVector], feature_index: Dict[str, int]) -> sparse.csr_matrix:
    data: List[float] = []
    indices: List[int] = []
    indptr = [0]
    for row in rows:
        for name, value in row.items():
            column = feature_index.get(name)
            if column is not None:
                indices.append(column)
                data.append(value)
        indptr.append(len(indices))
    return sparse.csr_matrix((data, indices, indptr), shape=(len(rows), len(feature_index)))


def logistic_loss(theta: np.ndarray, X, y: np.ndarray, l2_lambda: float) -> Tuple[float, np.ndarray]:
    """
    Mean cross-entropy plus (lambda/2)||w||^2 and its gradient.

    theta holds the feature weights followed by the bias; the bias is not
    penalised.
    """
    w, b = theta[:-1], theta[-1]
    z = np.asarray(X @ w).ravel() + b
    n = len(y)
    loss = float(np.mean(np.logaddexp(0.0, z) - y * z)) + 0.5 * l2_lambda * float(w @ w)
    residual = (expit(z) - y) / n
    grad = np.empty_like(theta)
    grad[:-1] = np.asarray(X.T @ residual).ravel() + l2_lambda * w
    grad[-1] = residual.sum()
    return loss, grad


def train_logistic(rows: Sequence[FeatureVector], labels: Sequence[bool], config: LogisticConfig) -> LogisticModel:
    """Batch gradient descent with backtracking; stops at gradient max-norm tol"""
    if not rows:
        raise DataError("no training rows for logistic model")
    if len(rows) != len(labels):
        raise DataError(f"{len(rows)} rows but {len(labels)} labels")

    names = tuple(sorted({name for row in rows for name in row}))
    X = design_matrix(rows, {name: i for i, name in enumerate(names)})
    y = np.asarray(labels, dtype=float)

    theta = np.zeros(len(names) + 1)
    value, grad = logistic_loss(theta, X, y, config.l2_lambda)
    step = 1.0
    iterations = 0
    while iterations < config.max_iterations and np.max(np.abs(grad)) > config.tol:
        squared = float(grad @ grad)
        while True:
            candidate = theta - step * grad
            new_value, new_grad = logistic_loss(candidate, X, y, config.l2_lambda)
            if new_value <= value - 1e-4 * step * squared:
                break
            step *= 0.5
            if step < 1e-14:
                break
        if step < 1e-14:
            logger.warning(f"⚠️ Line search stalled after {iterations} iterations")
            break
        if not math.isfinite(new_value):
            raise NonFinite(f"logistic objective diverged to {new_value}")
        theta, value, grad = candidate, new_value, new_grad
        step *= 2.0
        iterations += 1

    logger.debug(f"🔍 Logistic model: {len(rows)} rows, {len(names)} features, {iterations} iterations, loss {value:.5f}")
    return LogisticModel(feature_names=names, weights=theta[:-1].copy(), bias=float(theta[-1]), l2_lambda=config.l2_lambda)


# ---------------------------------------------------------------------------
# Section features
# ---------------------------------------------------------------------------

def section_words(section: Section) -> List[str]:
    words = []
    for raw in section.clean_text.split():
        word = _WORD.sub("", raw.lower())
        if word:
            words.append("<num>" if word.isdigit() else word)
    return words


def section_features(section: Section) -> FeatureVector:
    """Bag of lowercase words, leading (heading) words and the section type"""
    words = section_words(section)
    features: FeatureVector = {f"type={section.section_type}": 1.0}
    for word in words:
        features[f"bow={word}"] = 1.0
    for word in words[:HEAD_WORDS]:
        features[f"head={word}"] = 1.0
    return features


def classifier_features(sections: Sequence[Section]) -> FeatureVector:
    """Unigrams and bigrams of the concatenated sections plus their heading and type features"""
    features: FeatureVector = {}
    words: List[str] = []
    for section in sorted(sections, key=lambda s: s.first_line):
        section_tokens = section_words(section)
        words.extend(section_tokens)
        features[f"type={section.section_type}"] = 1.0
        for word in section_tokens[:HEAD_WORDS]:
            features[f"head={word}"] = 1.0
    for word in words:
        features[f"bow={word}"] = 1.0
    for left, right in zip(words, words[1:]):
        features[f"bi={left}_{right}"] = 1.0
    return features


# ---------------------------------------------------------------------------
# Inference
# ---------------------------------------------------------------------------

def select_relevant_sections(
    relevance_model: LogisticModel,
    sections: Sequence[Section],
    attribute: Attribute,
    threshold: Optional[float] = None,
    cap: Optional[int] = None,
) -> List[Section]:
    """Content sections scoring at least the threshold, best first, at most cap of them"""
    threshold = settings.relevance_threshold if threshold is None else threshold
    cap = settings.relevance_cap if cap is None else cap
    candidates = [section for section in sections if section.is_content]
    if not candidates:
        return []
    scores = relevance_model.scores([section_features(section) for section in candidates])
    ranked = sorted(
        ((float(score), section) for score, section in zip(scores, candidates) if score >= threshold),
        key=lambda item: (-item[0], item[1].first_line),
    )
    logger.debug(f"🔍 {attribute.value}: {len(ranked)} of {len(candidates)} sections above {threshold}")
    return [section for _, section in ranked[:cap]]


def _check_entity_model(entity_model: CrfModel, attribute: Attribute, feature_config: FeatureConfig) -> None:
    if attribute.kind != "entity":
        raise ModelMismatch(f"{attribute.value} is not an entity attribute")
    if entity_model.label_set != ENTITY_LABELS:
        raise ModelMismatch(f"Entity model labels {list(entity_model.label_set.labels)} are not {list(ENTITY_LABELS.labels)}")
    if entity_model.feature_fingerprint != feature_config.fingerprint():
        raise ConfigMismatch(f"Entity model for {attribute.value} was trained with a different feature config")


def _decoded_spans(path: Sequence[int]) -> List[Tuple[int, int]]:
    """Maximal B I* runs; an I without a preceding B opens a span"""
    spans = []
    start = None
    for i, label in enumerate(path):
        name = ENTITY_LABELS.name(label)
        if name == "B-ans" or (name == "I-ans" and start is None):
            if start is not None:
                spans.append((start, i - 1))
            start = i
        elif name == "O" and start is not None:
            spans.append((start, i - 1))
            start = None
    if start is not None:
        spans.append((start, len(path) - 1))
    return spans


def best_span(path: Sequence[int], probabilities: np.ndarray) -> Optional[Tuple[int, int, float]]:
    """Decoded span with the highest mean marginal of its decoded labels"""
    best = None
    for start, end in _decoded_spans(path):
        score = float(np.mean([probabilities[i, path[i]] for i in range(start, end + 1)]))
        if best is None or score > best[2]:
            best = (start, end, score)
    return best


def fallback_span(probabilities: np.ndarray, min_probability: Optional[float] = None) -> Optional[Tuple[int, int, float]]:
    """
    Most likely span start extended while I-ans beats O, for when Viterbi
    found no span. None when no position reaches min_probability for B-ans.
    """
    min_probability = settings.span_fallback_min_probability if min_probability is None else min_probability
    begin, inside, outside = (ENTITY_LABELS.index(name) for name in ("B-ans", "I-ans", "O"))
    start = int(np.argmax(probabilities[:, begin]))
    if probabilities[start, begin] < min_probability:
        return None
    end = start
    while end + 1 < len(probabilities) and probabilities[end + 1, inside] > probabilities[end + 1, outside]:
        end += 1
    score = float(np.mean([probabilities[start, begin]] + [probabilities[i, inside] for i in range(start + 1, end + 1)]))
    return start, end, score


def extract_entity(
    entity_model: CrfModel,
    doc: Document,
    sections: Sequence[Section],
    attribute: Attribute,
    feature_config: FeatureConfig,
) -> AttributePrediction:
    _check_entity_model(entity_model, attribute, feature_config)
    if not sections:
        return AttributePrediction(attribute=attribute, no_relevant_section=True)

    decoded = []
    for section in sections:
        if not section.token_provenance:
            continue
        features = stream_features(doc, section.token_provenance, feature_config)
        decoded.append((section, viterbi_decode(entity_model, features), marginals(entity_model, features)))
    if not decoded:
        return AttributePrediction(attribute=attribute, no_relevant_section=True)

    best = None
    for section, path, probabilities in decoded:
        candidate = best_span(path, probabilities)
        if candidate is not None and (best is None or candidate[2] > best[1][2]):
            best = (section, candidate)
    if best is None:
        # no decoded span anywhere: take the strongest span start across sections
        for section, _, probabilities in decoded:
            candidate = fallback_span(probabilities)
            if candidate is not None and (best is None or candidate[2] > best[1][2]):
                best = (section, candidate)
    if best is None:
        return AttributePrediction(attribute=attribute)

    section, (start, end, score) = best
    text = " ".join(doc.token(ref).text for ref in section.token_provenance[start:end + 1])
    span = EntitySpan(section_id=section.section_id, token_start=start, token_end=end, text=text)
    return AttributePrediction(attribute=attribute, span=span, confidence=min(1.0, max(0.0, score)))


def classify(classifier: LogisticModel, sections: Sequence[Section], attribute: Attribute) -> AttributePrediction:
    if attribute.kind != "boolean":
        raise ModelMismatch(f"{attribute.value} is not a boolean attribute")
    if not sections:
        return AttributePrediction(attribute=attribute, answer=False, confidence=0.0, no_relevant_section=True)
    score = float(classifier.scores([classifier_features(sections)])[0])
    return AttributePrediction(attribute=attribute, answer=score >= 0.5, confidence=score)


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

def relevant_positions(sections: Sequence[Section], gold, attribute: Attribute) -> Set[int]:
    """
    Indices of gold-relevant content sections: those overlapping the
    evidence lines, plus the parent clause right before an evidence sub-clause.
    """
    evidence = gold.evidence.get(attribute.value)
    if evidence is None:
        return set()
    positives = set()
    last_clause = None
    for i, section in enumerate(sections):
        if not section.is_content:
            continue
        if any(evidence.first_line <= p <= evidence.last_line for p in section.line_positions):
            positives.add(i)
            if section.section_type == "subclause" and last_clause is not None:
                positives.add(last_clause)
        if section.section_type == "clause":
            last_clause = i
    return positives


def entity_sequence(
    doc: Document, stream: Sequence[TokenRef], answer: Set[TokenRef], feature_config: FeatureConfig,
) -> LabeledSequence:
    """Token features of a stream with B/I/O projected from the answer tokens"""
    labels = []
    previous = False
    for ref in stream:
        inside = ref in answer
        name = ("I-ans" if previous else "B-ans") if inside else "O"
        labels.append(ENTITY_LABELS.index(name))
        previous = inside
    return stream_features(doc, stream, feature_config), labels


@dataclass
class _DocumentTraining:
    relevance_rows: Dict[str, List[Tuple[FeatureVector, bool]]] = field(default_factory=dict)
    entity_sequences: Dict[str, List[LabeledSequence]] = field(default_factory=dict)
    classifier_rows: Dict[str, List[Tuple[FeatureVector, bool]]] = field(default_factory=dict)


def document_training_data(entry, feature_config: FeatureConfig) -> _DocumentTraining:
    doc, gold = entry
    if gold is None:
        raise DataError(f"Document {doc.doc_id} has no gold labels", path=doc.doc_id)
    sections = gold_sections(doc, gold)
    data = _DocumentTraining()
    for attribute in Attribute:
        positives = relevant_positions(sections, gold, attribute)
        data.relevance_rows[attribute.value] = [
            (section_features(section), i in positives)
            for i, section in enumerate(sections) if section.is_content
        ]
        relevant = [sections[i] for i in sorted(positives)]

        if attribute.kind == "entity":
            answer = set(gold.gold_tokens(doc, attribute.value))
            covered = {ref for section in relevant for ref in section.token_provenance}
            if not answer or not answer <= covered:
                raise DataError(f"Gold {attribute.value} span does not resolve to a relevant section", path=doc.doc_id)
            data.entity_sequences[attribute.value] = [
                entity_sequence(doc, section.token_provenance, answer, feature_config)
                for section in relevant if section.token_provenance
            ]
        elif relevant:
            data.classifier_rows[attribute.value] = [(classifier_features(relevant), gold.answer(attribute.value))]
    return data


@dataclass(frozen=True, eq=False)
class ExtractorBundle:
    feature_config: FeatureConfig
    relevance: Dict[str, LogisticModel]
    entity: Dict[str, CrfModel]
    classifiers: Dict[str, LogisticModel]
    relevance_threshold: float = 0.5
    relevance_cap: int = 3

    def relevant_sections(self, sections: Sequence[Section], attribute: Attribute) -> List[Section]:
        return select_relevant_sections(
            self.relevance[attribute.value], sections, attribute,
            threshold=self.relevance_threshold, cap=self.relevance_cap,
        )

    def predict(self, doc: Document, sections: Sequence[Section], attribute: Attribute) -> AttributePrediction:
        relevant = self.relevant_sections(sections, attribute)
        if attribute.kind == "entity":
            return extract_entity(self.entity[attribute.value], doc, relevant, attribute, self.feature_config)
        return classify(self.classifiers[attribute.value], relevant, attribute)

    def predict_all(self, doc: Document, sections: Sequence[Section]) -> List[AttributePrediction]:
        return [self.predict(doc, sections, attribute) for attribute in Attribute]


def train_extractors(
    corpus: Sequence,
    feature_config: FeatureConfig,
    crf_config: TrainConfig,
    logistic_config: LogisticConfig,
    map_fn: Callable[..., Iterable] = map,
) -> ExtractorBundle:
    """Relevance, entity and classifier models for all four attributes from gold sections"""
    if not corpus:
        raise DataError("Cannot train extractors on an empty corpus")
    logger.info(f"🔧 Training extractors on {len(corpus)} documents with groups {feature_config.name}")
    per_document = list(map_fn(partial(document_training_data, feature_config=feature_config), corpus))

    relevance, entity, classifiers = {}, {}, {}
    for attribute in Attribute:
        rows = [row for data in per_document for row in data.relevance_rows[attribute.value]]
        relevance[attribute.value] = train_logistic([r for r, _ in rows], [y for _, y in rows], logistic_config)
        if attribute.kind == "entity":
            sequences = [s for data in per_document for s in data.entity_sequences[attribute.value]]
            entity[attribute.value] = train(sequences, ENTITY_LABELS, crf_config, feature_fingerprint=feature_config.fingerprint())
        else:
            rows = [row for data in per_document for row in data.classifier_rows.get(attribute.value, [])]
            if not rows:
                raise DataError(f"No gold relevant sections for {attribute.value}")
            classifiers[attribute.value] = train_logistic([r for r, _ in rows], [y for _, y in rows], logistic_config)
        logger.info(f"✅ Trained {attribute.value} ({attribute.kind})")

    return ExtractorBundle(
        feature_config=feature_config,
        relevance=relevance,
        entity=entity,
        classifiers=classifiers,
        relevance_threshold=settings.relevance_threshold,
        relevance_cap=settings.relevance_cap,
    )


def bundle_to_dict(bundle: ExtractorBundle) -> Dict[str, Any]:
    return {
        "version": BUNDLE_FORMAT_VERSION,
        "feature_config": bundle.feature_config.model_dump(mode="json"),
        "feature_fingerprint": bundle.feature_config.fingerprint(),
        "relevance_threshold": bundle.relevance_threshold,
        "relevance_cap": bundle.relevance_cap,
        "relevance": {name: model.to_dict() for name, model in sorted(bundle.relevance.items())},
        "entity": {name: model_to_dict(model) for name, model in sorted(bundle.entity.items())},
        "classifiers": {name: model.to_dict() for name, model in sorted(bundle.classifiers.items())},
    }


def bundle_from_dict(data: Dict[str, Any]) -> ExtractorBundle:
    version = data.get("version")
    if version != BUNDLE_FORMAT_VERSION:
        raise SchemaError(f"Unsupported extractor bundle version {version!r} (expected {BUNDLE_FORMAT_VERSION})", path="version")
    try:
        bundle = ExtractorBundle(
            feature_config=FeatureConfig.model_validate(data["feature_config"]),
            relevance={name: LogisticModel.from_dict(m) for name, m in data["relevance"].items()},
            entity={name: model_from_dict(m) for name, m in data["entity"].items()},
            classifiers={name: LogisticModel.from_dict(m) for name, m in data["classifiers"].items()},
            relevance_threshold=float(data["relevance_threshold"]),
            relevance_cap=int(data["relevance_cap"]),
        )
    except (KeyError, TypeError, ValueError) as e:
        raise SchemaError(f"Malformed extractor bundle: {e}")

    if bundle.feature_config.fingerprint() != data.get("feature_fingerprint"):
        raise ConfigMismatch("Extractor bundle fingerprint does not match its feature groups")
    missing = [a.value for a in Attribute if a.value not in bundle.relevance]
    missing += [a.value for a in ENTITY_ATTRIBUTES if a.value not in bundle.entity]
    missing += [a.value for a in BOOLEAN_ATTRIBUTES if a.value not in bundle.classifiers]
    if missing:
        raise ModelMismatch(f"Extractor bundle lacks models for {sorted(set(missing))}")
    return bundle


def save_bundle(bundle: ExtractorBundle, path: Union[str, Path]) -> None:
    logger.debug(f"💾 Saving extractor bundle to: {path}")
    write_json(path, bundle_to_dict(bundle))


def load_bundle(path: Union[str, Path]) -> ExtractorBundle:
    logger.debug(f"🔍 Loading extractor bundle from: {path}")
    return bundle_from_dict(read_json(path))
