"""
Metrics and experiment harnesses.

Experiments are pure functions of (corpus, configs, seed): the corpus is
split with split_corpus(seed), models are trained on train and scored on
test, and every report renders to CSV deterministically. Published numbers
are carried as reference constants and printed beside results, never
asserted.
"""

import string
import logging
import numpy as np

from functools import partial
from pydantic import BaseModel, ConfigDict, Field, model_validator
from typing import Any, Callable, ClassVar, Dict, Iterable, List, Mapping, NamedTuple, Optional, Sequence, Set, Tuple

from app.errors import AlignmentError, ConfigError
from app.models import ExampleRecord
from app.ocr_model import Document, TokenRef
from app.crf_engine import CrfModel, TrainConfig, marginals, train, viterbi_decode
from app.features import BASELINE, FEATURE_GROUPS, VISUAL_GROUPS, FeatureConfig
from app.synth_corpus import CUAD_REFERENCE, split_corpus
from app.section_splitter import split_document, train_splitter
from app.attribute_extractors import (
    ENTITY_LABELS, Attribute, AttributePrediction, ExtractorBundle, LogisticConfig,
    best_span, entity_sequence, train_extractors,
)
from app.rule_engine import RuleSet, apply_rules

# Configure logging
logger = logging.getLogger(__name__)

SECTION_TYPES = ("clause", "subclause", "header", "footer")
PIPELINES = ("rules", "model", "model+visual")
NO_RELEVANT_SECTION = "(no relevant section found)"
REFERENCE_LABEL = "published reference"

# Section splitting scores per section type and feature configuration (P, R, F1)
SPLITTING_REFERENCE: Dict[str, Dict[str, Tuple[float, float, float]]] = {
    "clause": {
        "baseline": (.904, .897, .900), "+page_layout": (.902, .897, .899),
        "+text_placement": (.908, .897, .902), "+visual_grouping": (.912, .899, .905),
        "+style": (.917, .902, .909), "+all_groups": (.919, .901, .910),
    },
    "subclause": {
        "baseline": (.901, .913, .907), "+page_layout": (.900, .913, .906),
        "+text_placement": (.901, .913, .907), "+visual_grouping": (.904, .914, .909),
        "+style": (.908, .913, .910), "+all_groups": (.910, .913, .911),
    },
    "header": {
        "baseline": (.900, .956, .927), "+page_layout": (.840, .961, .896),
        "+text_placement": (.845, .955, .897), "+visual_grouping": (.910, .958, .933),
        "+style": (.890, .956, .922), "+all_groups": (.858, .960, .906),
    },
    "footer": {
        "baseline": (.845, .760, .800), "+page_layout": (.877, .862, .869),
        "+text_placement": (.849, .792, .820), "+visual_grouping": (.855, .834, .844),
        "+style": (.843, .757, .798), "+all_groups": (.887, .857, .872),
    },
}

# End-to-end task scores (P, R, F1); the question-answering model is reported at 80% recall
ENDTOEND_REFERENCE: Dict[str, Dict[str, Tuple[float, float, float]]] = {
    "expert rules": {
        "expiration_date": (.77, .64, .70), "governing_law": (.75, .60, .67),
        "termination_for_convenience": (.80, .44, .57), "anti_assignment": (.83, .57, .68),
    },
    "deberta": {
        "expiration_date": (.86, .80, .83), "governing_law": (.97, .80, .88),
        "termination_for_convenience": (.37, .80, .51), "anti_assignment": (.76, .80, .78),
    },
    "layout model": {
        "expiration_date": (.87, .87, .87), "governing_law": (.98, .98, .98),
        "termination_for_convenience": (.77, .75, .76), "anti_assignment": (.89, .88, .89),
    },
}

# Anti-Assignment with sections split without / with visual cues
VISUAL_SPLIT_REFERENCE: Dict[str, Tuple[float, float, float]] = {
    "model": (.89, .69, .71),
    "model+visual": (.93, .81, .85),
}

CORPUS_REFERENCE = CUAD_REFERENCE


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------

class Metrics(BaseModel):
    model_config = ConfigDict(frozen=True)

    precision: float = Field(..., ge=0.0, le=1.0)
    recall: float = Field(..., ge=0.0, le=1.0)
    f1: float = Field(..., ge=0.0, le=1.0)
    tp: int = Field(..., ge=0)
    fp: int = Field(..., ge=0)
    fn: int = Field(..., ge=0)
    support: int = Field(..., ge=0)
    tn: Optional[int] = None
    accuracy: Optional[float] = None

    @classmethod
    def from_counts(cls, tp: int, fp: int, fn: int, tn: Optional[int] = None) -> "Metrics":
        """
        Nothing predicted scores precision 1 only when nothing was missed
        either, otherwise 0; recall is symmetric.
        """
        if tp + fp == 0:
            precision = 1.0 if fn == 0 else 0.0
        else:
            precision = tp / (tp + fp)
        if tp + fn == 0:
            recall = 1.0 if fp == 0 else 0.0
        else:
            recall = tp / (tp + fn)
        f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
        accuracy = None
        if tn is not None and tp + fp + fn + tn > 0:
            accuracy = (tp + tn) / (tp + fp + fn + tn)
        return cls(
            precision=precision, recall=recall, f1=f1,
            tp=tp, fp=fp, fn=fn, support=tp + fn, tn=tn, accuracy=accuracy,
        )

    def row(self) -> List[str]:
        return [f"{self.precision:.4f}", f"{self.recall:.4f}", f"{self.f1:.4f}", str(self.tp), str(self.fp), str(self.fn)]


def format_delta(value: float, baseline: float) -> str:
    """Relative change against the baseline, e.g. .904 -> .919 is '+1.7%'"""
    if baseline == 0:
        return "n/a"
    delta = value / baseline - 1.0
    if round(delta * 100, 1) == 0:
        return "+0.0%"
    return f"{delta * 100:+.1f}%"


def normalize_answer(text: Optional[str]) -> Optional[str]:
    if text is None:
        return None
    return " ".join(text.split()).casefold().strip(string.punctuation + string.whitespace)


class SectionSpan(NamedTuple):
    section_type: str
    first_line: int
    last_line: int


def section_spans(sections: Iterable[Any]) -> List[SectionSpan]:
    """Spans of assembled sections or gold section records"""
    spans = []
    for section in sections:
        kind = getattr(section, "section_type", None) or getattr(section, "type")
        spans.append(SectionSpan(kind, section.first_line, section.last_line))
    return spans


def line_jaccard(a: SectionSpan, b: SectionSpan) -> float:
    inter = min(a.last_line, b.last_line) - max(a.first_line, b.first_line) + 1
    if inter <= 0:
        return 0.0
    union = (a.last_line - a.first_line + 1) + (b.last_line - b.first_line + 1) - inter
    return inter / union


def overlap_matches(predicted: Sequence[SectionSpan], gold: Sequence[SectionSpan], threshold: float = 0.5) -> int:
    """Greedy one-to-one matching by descending Jaccard, then position"""
    pairs = sorted(
        (-line_jaccard(p, g), i, j)
        for i, p in enumerate(predicted)
        for j, g in enumerate(gold)
        if line_jaccard(p, g) >= threshold
    )
    used_p: Set[int] = set()
    used_g: Set[int] = set()
    for _, i, j in pairs:
        if i not in used_p and j not in used_g:
            used_p.add(i)
            used_g.add(j)
    return len(used_p)


def section_prf(
    predicted: Sequence[Sequence[SectionSpan]],
    gold: Sequence[Sequence[SectionSpan]],
    match_mode: str = "exact",
) -> Dict[str, Metrics]:
    """Per-type metrics over documents; exact matches (type, first, last)"""
    if match_mode not in ("exact", "overlap"):
        raise ConfigError(f"Unknown match mode {match_mode!r}", path="match_mode")
    if len(predicted) != len(gold):
        raise AlignmentError(f"{len(predicted)} predicted documents but {len(gold)} gold documents")

    counts = {kind: [0, 0, 0] for kind in SECTION_TYPES}
    for doc_pred, doc_gold in zip(predicted, gold):
        for kind in SECTION_TYPES:
            p = [s for s in doc_pred if s.section_type == kind]
            g = [s for s in doc_gold if s.section_type == kind]
            if match_mode == "exact":
                tp = len(set(p) & set(g))
            else:
                tp = overlap_matches(p, g)
            counts[kind][0] += tp
            counts[kind][1] += len(p) - tp
            counts[kind][2] += len(g) - tp
    return {kind: Metrics.from_counts(*counts[kind]) for kind in SECTION_TYPES}


def gold_value(doc: Document, gold, attribute: Attribute) -> Any:
    if attribute.kind == "entity":
        return gold.gold_text(doc, attribute.value)
    return gold.answer(attribute.value)


def attribute_prf(
    predictions: Mapping[str, AttributePrediction],
    golds: Mapping[str, Any],
    attribute: Attribute,
) -> Metrics:
    """
    Boolean attributes count Yes as the positive class. An entity prediction
    is correct when its normalised text equals the normalised gold text; a
    wrong span is both a false positive and a false negative.
    """
    if set(predictions) != set(golds):
        missing = sorted(set(golds) - set(predictions))
        extra = sorted(set(predictions) - set(golds))
        raise AlignmentError(f"Predictions and golds differ: missing {missing[:5]}, unexpected {extra[:5]}")

    tp = fp = fn = tn = 0
    for doc_id in sorted(golds):
        prediction = predictions[doc_id]
        if attribute.kind == "boolean":
            predicted, expected = bool(prediction.answer), bool(golds[doc_id])
            tp += predicted and expected
            fp += predicted and not expected
            fn += expected and not predicted
            tn += not predicted and not expected
            continue
        predicted = normalize_answer(prediction.span_text)
        expected = normalize_answer(golds[doc_id])
        if predicted is not None and predicted == expected:
            tp += 1
        elif predicted is None and expected is None:
            tn += 1
        else:
            fp += predicted is not None
            fn += expected is not None
    return Metrics.from_counts(tp, fp, fn, tn)


# ---------------------------------------------------------------------------
# Section splitting ablation
# ---------------------------------------------------------------------------

def ablation_configs() -> List[FeatureConfig]:
    """Baseline, each visual group alone, then all groups"""
    configs = [FeatureConfig(enabled_groups=frozenset({BASELINE}))]
    configs += [FeatureConfig(enabled_groups=frozenset({BASELINE, group})) for group in VISUAL_GROUPS]
    configs.append(FeatureConfig(enabled_groups=frozenset(FEATURE_GROUPS)))
    return configs


def predicted_spans(entry, model: CrfModel, feature_config: FeatureConfig) -> List[SectionSpan]:
    doc, _ = entry
    return section_spans(split_document(model, doc, feature_config))


def evaluate_splitter(
    model: CrfModel,
    feature_config: FeatureConfig,
    entries: Sequence,
    map_fn: Callable[..., Iterable] = map,
) -> Tuple[Dict[str, Metrics], Dict[str, Metrics]]:
    """(exact, overlap) per-type metrics of a splitter on labelled documents"""
    predicted = list(map_fn(partial(predicted_spans, model=model, feature_config=feature_config), entries))
    gold = [section_spans(labels.sections) for _, labels in entries]
    return section_prf(predicted, gold, "exact"), section_prf(predicted, gold, "overlap")


class AblationRow(BaseModel):
    config: str
    section_type: str
    exact: Metrics
    overlap: Metrics
    delta_precision: str
    delta_recall: str
    delta_f1: str


class AblationReport(BaseModel):
    seed: int
    rows: List[AblationRow]

    header: ClassVar[Tuple[str, ...]] = (
        "config", "section_type", "precision", "recall", "f1",
        "delta_precision", "delta_recall", "delta_f1",
        "overlap_precision", "overlap_recall", "overlap_f1", "tp", "fp", "fn",
    )

    def csv_rows(self) -> List[List[str]]:
        return [
            [
                row.config, row.section_type,
                f"{row.exact.precision:.4f}", f"{row.exact.recall:.4f}", f"{row.exact.f1:.4f}",
                row.delta_precision, row.delta_recall, row.delta_f1,
                f"{row.overlap.precision:.4f}", f"{row.overlap.recall:.4f}", f"{row.overlap.f1:.4f}",
                str(row.exact.tp), str(row.exact.fp), str(row.exact.fn),
            ]
            for row in self.rows
        ]

    def row(self, config: str, section_type: str) -> AblationRow:
        return next(r for r in self.rows if r.config == config and r.section_type == section_type)

    def render(self) -> str:
        lines = [f"Section splitting ablation (seed {self.seed}, exact match)"]
        for kind in SECTION_TYPES:
            lines.append(f"\n{kind}\n{'config':<18}{'P':>16}{'R':>16}{'F1':>16}")
            for row in (r for r in self.rows if r.section_type == kind):
                lines.append(
                    f"{row.config:<18}"
                    f"{row.exact.precision:>7.3f} ({row.delta_precision:>6})"
                    f"{row.exact.recall:>7.3f} ({row.delta_recall:>6})"
                    f"{row.exact.f1:>7.3f} ({row.delta_f1:>6})"
                )
        lines.append(f"\n{REFERENCE_LABEL} (not comparable to synthetic results)")
        for kind, configs in SPLITTING_REFERENCE.items():
            base = configs["baseline"]
            for config, (p, r, f) in configs.items():
                lines.append(
                    f"  {kind:<10}{config:<18}P {p:.3f} ({format_delta(p, base[0])})  "
                    f"R {r:.3f} ({format_delta(r, base[1])})  F1 {f:.3f} ({format_delta(f, base[2])})"
                )
        return "\n".join(lines) + "\n"


def run_ablation(
    corpus: Sequence,
    train_config: TrainConfig,
    seed: int,
    map_fn: Callable[..., Iterable] = map,
) -> AblationReport:
    """Six splitters trained on the train split, scored on the test split"""
    split = split_corpus(corpus, seed)
    logger.info(f"🔧 Ablation: {len(split.train)} train / {len(split.test)} test documents")

    results = {}
    for feature_config in ablation_configs():
        model = train_splitter(split.train, feature_config, train_config, map_fn=map_fn)
        results[feature_config.name] = evaluate_splitter(model, feature_config, split.test, map_fn=map_fn)
        logger.info(f"📊 {feature_config.name}: footer F1 {results[feature_config.name][0]['footer'].f1:.3f}")

    baseline = results["baseline"][0]
    rows = []
    for kind in SECTION_TYPES:
        base = baseline[kind]
        for name, (exact, overlap) in results.items():
            metrics = exact[kind]
            rows.append(AblationRow(
                config=name,
                section_type=kind,
                exact=metrics,
                overlap=overlap[kind],
                delta_precision=format_delta(metrics.precision, base.precision),
                delta_recall=format_delta(metrics.recall, base.recall),
                delta_f1=format_delta(metrics.f1, base.f1),
            ))
    return AblationReport(seed=seed, rows=rows)


# ---------------------------------------------------------------------------
# Document length
# ---------------------------------------------------------------------------

class LengthPoint(BaseModel):
    window_tokens: int
    metrics: Metrics
    train_windows: int
    test_windows: int
    skipped: int


class LengthCurve(BaseModel):
    seed: int
    points: List[LengthPoint]

    @model_validator(mode="after")
    def _increasing(self) -> "LengthCurve":
        sizes = [p.window_tokens for p in self.points]
        if any(b <= a for a, b in zip(sizes, sizes[1:])):
            raise ValueError("window sizes must be strictly increasing")
        return self

    header: ClassVar[Tuple[str, ...]] = ("window_tokens", "precision", "recall", "f1", "tp", "fp", "fn", "train_windows", "test_windows", "skipped")

    def csv_rows(self) -> List[List[str]]:
        return [
            [str(p.window_tokens)] + p.metrics.row() + [str(p.train_windows), str(p.test_windows), str(p.skipped)]
            for p in self.points
        ]

    def plot_rows(self) -> List[List[str]]:
        return [[str(p.window_tokens), f"{p.metrics.f1:.4f}"] for p in self.points]


def parse_windows(spec: str) -> List[int]:
    try:
        sizes = [int(part) for part in spec.split(",") if part.strip()]
    except ValueError:
        raise ConfigError(f"Window sizes must be integers: {spec!r}", path="windows")
    if not sizes or any(size < 1 for size in sizes):
        raise ConfigError(f"Window sizes must be positive: {spec!r}", path="windows")
    if any(b <= a for a, b in zip(sizes, sizes[1:])):
        raise ConfigError(f"Window sizes must be strictly increasing: {spec!r}", path="windows")
    return sizes


def clean_token_stream(doc: Document, gold) -> List[TokenRef]:
    """Reading-order tokens of every line not labelled header or footer"""
    margin = gold.margin_lines()
    return [
        ref for ref in doc.token_stream()
        if doc.position_of[ref.line] not in margin
    ]


def answer_window(
    doc: Document, gold, window: int, rng: np.random.Generator, attribute: Attribute = Attribute.GOVERNING_LAW,
) -> Optional[Tuple[List[TokenRef], Set[TokenRef]]]:
    """
    Exactly `window` clean tokens containing the gold span at a uniformly
    drawn offset; None when the document cannot hold such a window.
    """
    answer = gold.gold_tokens(doc, attribute.value)
    stream = clean_token_stream(doc, gold)
    if not answer or len(stream) < window or len(answer) > window:
        return None
    position = {ref: i for i, ref in enumerate(stream)}
    start, end = position[answer[0]], position[answer[-1]]
    low, high = max(0, end - window + 1), min(start, len(stream) - window)
    offset = int(rng.integers(low, high + 1))
    return stream[offset: offset + window], set(answer)


def _window_sequences(entries, window: int, seed: int, feature_config: FeatureConfig, salt: int):
    sequences, spans, skipped = [], [], 0
    for index, (doc, gold) in enumerate(entries):
        rng = np.random.default_rng([seed, window, salt, index])
        drawn = answer_window(doc, gold, window, rng)
        if drawn is None:
            skipped += 1
            continue
        stream, answer = drawn
        features, labels = entity_sequence(doc, stream, answer, feature_config)
        inside = [i for i, ref in enumerate(stream) if ref in answer]
        sequences.append((features, labels))
        spans.append((inside[0], inside[-1]))
    return sequences, spans, skipped


def window_f1(model: CrfModel, sequences, spans) -> Metrics:
    """Exact-span scoring: the best decoded span per window against the gold span"""
    tp = fp = fn = 0
    for (features, _), gold_span in zip(sequences, spans):
        found = best_span(viterbi_decode(model, features), marginals(model, features))
        if found is not None and (found[0], found[1]) == gold_span:
            tp += 1
        else:
            fp += found is not None
            fn += 1
    return Metrics.from_counts(tp, fp, fn)


def run_length_experiment(
    corpus: Sequence,
    window_sizes: Sequence[int],
    seed: int,
    train_config: TrainConfig,
) -> LengthCurve:
    """Governing Law token CRF trained and scored on fixed-size windows around the answer"""
    sizes = list(window_sizes)
    if any(b <= a for a, b in zip(sizes, sizes[1:])):
        raise ConfigError("Window sizes must be strictly increasing", path="windows")
    split = split_corpus(corpus, seed)
    feature_config = FeatureConfig()

    points = []
    for window in sizes:
        train_seqs, _, train_skipped = _window_sequences(split.train, window, seed, feature_config, salt=0)
        test_seqs, test_spans, test_skipped = _window_sequences(split.test, window, seed, feature_config, salt=1)
        skipped = train_skipped + test_skipped
        if not train_seqs or not test_seqs:
            raise ConfigError(
                f"Window of {window} tokens fits no {'training' if not train_seqs else 'test'} document",
                path="windows",
            )
        model = train(train_seqs, ENTITY_LABELS, train_config, feature_fingerprint=feature_config.fingerprint())
        metrics = window_f1(model, test_seqs, test_spans)
        logger.info(f"📊 Window {window}: F1 {metrics.f1:.3f} ({len(train_seqs)} train, {len(test_seqs)} test, {skipped} skipped)")
        points.append(LengthPoint(
            window_tokens=window, metrics=metrics,
            train_windows=len(train_seqs), test_windows=len(test_seqs), skipped=skipped,
        ))
    return LengthCurve(seed=seed, points=points)


# ---------------------------------------------------------------------------
# End-to-end comparison
# ---------------------------------------------------------------------------

class TrainedPipeline(NamedTuple):
    feature_config: FeatureConfig
    splitter: CrfModel
    bundle: ExtractorBundle


def train_pipeline(
    train_docs: Sequence,
    feature_config: FeatureConfig,
    train_config: TrainConfig,
    logistic_config: LogisticConfig,
    map_fn: Callable[..., Iterable] = map,
) -> TrainedPipeline:
    splitter = train_splitter(train_docs, feature_config, train_config, map_fn=map_fn)
    bundle = train_extractors(train_docs, feature_config, train_config, logistic_config, map_fn=map_fn)
    return TrainedPipeline(feature_config, splitter, bundle)


def pipeline_predictions(entry, pipeline: TrainedPipeline) -> List[AttributePrediction]:
    doc, _ = entry
    sections = split_document(pipeline.splitter, doc, pipeline.feature_config)
    return pipeline.bundle.predict_all(doc, sections)


def rule_predictions(entry, rule_set: RuleSet, any_match: bool = False) -> List[AttributePrediction]:
    doc, _ = entry
    return [apply_rules(rule_set, doc, attribute, any_match=any_match) for attribute in Attribute]


def score_predictions(entries: Sequence, predictions: Sequence[List[AttributePrediction]]) -> Dict[str, Metrics]:
    scores = {}
    for attribute in Attribute:
        by_doc = {doc.doc_id: next(p for p in preds if p.attribute == attribute) for (doc, _), preds in zip(entries, predictions)}
        golds = {doc.doc_id: gold_value(doc, gold, attribute) for doc, gold in entries}
        scores[attribute.value] = attribute_prf(by_doc, golds, attribute)
    return scores


class ComparisonRow(BaseModel):
    pipeline: str
    attribute: str
    metrics: Metrics


class PairingRow(BaseModel):
    seed: int
    baseline_f1: float
    visual_f1: float

    @property
    def visual_not_worse(self) -> bool:
        return self.visual_f1 >= self.baseline_f1


class ComparisonReport(BaseModel):
    seeds: List[int]
    rows: List[ComparisonRow]
    pairing: List[PairingRow]

    header: ClassVar[Tuple[str, ...]] = ("pipeline", "attribute", "P", "R", "F1", "tp", "fp", "fn")
    pairing_header: ClassVar[Tuple[str, ...]] = ("seed", "baseline_f1", "visual_f1", "visual_not_worse")

    @property
    def verdict(self) -> bool:
        """Majority of seeds where visual splitting did not lower Anti-Assignment F1"""
        return sum(row.visual_not_worse for row in self.pairing) * 2 > len(self.pairing)

    def metrics(self, pipeline: str, attribute: str) -> Metrics:
        return next(r.metrics for r in self.rows if r.pipeline == pipeline and r.attribute == attribute)

    def csv_rows(self) -> List[List[str]]:
        return [[row.pipeline, row.attribute] + row.metrics.row() for row in self.rows]

    def pairing_rows(self) -> List[List[str]]:
        rows = [
            [str(row.seed), f"{row.baseline_f1:.4f}", f"{row.visual_f1:.4f}", str(row.visual_not_worse).lower()]
            for row in self.pairing
        ]
        rows.append(["majority", "", "", str(self.verdict).lower()])
        return rows

    def render(self) -> str:
        lines = [f"End-to-end comparison (seed {self.seeds[0]})", f"{'pipeline':<14}{'attribute':<30}{'P':>7}{'R':>7}{'F1':>7}"]
        for row in self.rows:
            m = row.metrics
            lines.append(f"{row.pipeline:<14}{row.attribute:<30}{m.precision:>7.3f}{m.recall:>7.3f}{m.f1:>7.3f}")
        lines.append("\nAnti-Assignment F1 by splitter")
        for row in self.pairing:
            lines.append(f"  seed {row.seed}: baseline {row.baseline_f1:.3f}  visual {row.visual_f1:.3f}")
        lines.append(f"  visual not worse on the majority of seeds: {'yes' if self.verdict else 'no'}")
        lines.append(f"\n{REFERENCE_LABEL} (not comparable to synthetic results)")
        for model, scores in ENDTOEND_REFERENCE.items():
            for attribute, (p, r, f) in scores.items():
                lines.append(f"  {model:<14}{attribute:<30}{p:>7.2f}{r:>7.2f}{f:>7.2f}")
        for pipeline, (p, r, f) in VISUAL_SPLIT_REFERENCE.items():
            lines.append(f"  anti_assignment {pipeline:<14}{p:>7.2f}{r:>7.2f}{f:>7.2f}")
        return "\n".join(lines) + "\n"


def run_endtoend_comparison(
    corpus: Sequence,
    seeds: Sequence[int],
    train_config: TrainConfig,
    logistic_config: LogisticConfig,
    rule_set: RuleSet,
    map_fn: Callable[..., Iterable] = map,
) -> ComparisonReport:
    """
    Rules, model and model+visual pipelines on the test split of the first
    seed; every seed also pairs Anti-Assignment F1 of the two model pipelines.
    """
    if not seeds:
        raise ConfigError("At least one seed is required", path="seeds")
    configs = {"model": FeatureConfig(), "model+visual": FeatureConfig.all_groups()}

    rows: List[ComparisonRow] = []
    pairing: List[PairingRow] = []
    for position, seed in enumerate(seeds):
        split = split_corpus(corpus, seed)
        scores: Dict[str, Dict[str, Metrics]] = {}
        if position == 0:
            predictions = list(map_fn(partial(rule_predictions, rule_set=rule_set), split.test))
            scores["rules"] = score_predictions(split.test, predictions)
        for name, feature_config in configs.items():
            pipeline = train_pipeline(split.train, feature_config, train_config, logistic_config, map_fn=map_fn)
            predictions = list(map_fn(partial(pipeline_predictions, pipeline=pipeline), split.test))
            scores[name] = score_predictions(split.test, predictions)

        pairing.append(PairingRow(
            seed=seed,
            baseline_f1=scores["model"][Attribute.ANTI_ASSIGNMENT.value].f1,
            visual_f1=scores["model+visual"][Attribute.ANTI_ASSIGNMENT.value].f1,
        ))
        logger.info(f"📊 Seed {seed}: anti-assignment F1 baseline {pairing[-1].baseline_f1:.3f}, visual {pairing[-1].visual_f1:.3f}")
        if position == 0:
            rows = [
                ComparisonRow(pipeline=name, attribute=attribute.value, metrics=scores[name][attribute.value])
                for name in PIPELINES
                for attribute in Attribute
            ]
    return ComparisonReport(seeds=list(seeds), rows=rows, pairing=pairing)


# ---------------------------------------------------------------------------
# Prediction examples
# ---------------------------------------------------------------------------

def _answer_text(attribute: Attribute, value: Any) -> str:
    if attribute.kind == "boolean":
        return "Yes" if value else "No"
    return value if value is not None else "(none)"


def document_examples(entry, pipeline: TrainedPipeline) -> List[ExampleRecord]:
    doc, gold = entry
    sections = split_document(pipeline.splitter, doc, pipeline.feature_config)
    records = []
    for attribute in Attribute:
        relevant = sorted(pipeline.bundle.relevant_sections(sections, attribute), key=lambda s: s.first_line)
        prediction = pipeline.bundle.predict(doc, sections, attribute)
        expected = gold_value(doc, gold, attribute)
        if attribute.kind == "boolean":
            predicted_value: Any = bool(prediction.answer)
            correct = predicted_value == bool(expected)
        else:
            predicted_value = prediction.span_text
            correct = normalize_answer(predicted_value) == normalize_answer(expected)
        records.append(ExampleRecord(
            doc_id=doc.doc_id,
            attribute=attribute.value,
            relevant_section_text=" ".join(s.clean_text for s in relevant) if relevant else NO_RELEVANT_SECTION,
            correct_answer=_answer_text(attribute, expected),
            prediction=_answer_text(attribute, predicted_value),
            correct=correct,
        ))
    return records


def prediction_examples(
    entries: Sequence,
    pipeline: TrainedPipeline,
    per_attribute: int,
    map_fn: Callable[..., Iterable] = map,
) -> List[ExampleRecord]:
    """Up to per_attribute examples for each attribute, in test-document order"""
    per_document = list(map_fn(partial(document_examples, pipeline=pipeline), entries))
    examples = []
    for attribute in Attribute:
        chosen = [r for records in per_document for r in records if r.attribute == attribute.value]
        examples.extend(chosen[:per_attribute])
    return examples


def render_examples(examples: Sequence[ExampleRecord], width: int = 100) -> str:
    lines = []
    for attribute in Attribute:
        chosen = [e for e in examples if e.attribute == attribute.value]
        if not chosen:
            continue
        lines.append(f"Model predictions for {attribute.value}")
        lines.append(f"{'Relevant Section Text':<{width}} | Correct Answer | Model Prediction")
        for example in chosen:
            text = example.relevant_section_text
            if len(text) > width:
                text = text[: width - 3] + "..."
            mark = "✓" if example.correct else "✗"
            lines.append(f"{text:<{width}} | {example.correct_answer} | {example.prediction} {mark}")
        lines.append("")
    return "\n".join(lines)
