import logging

from pathlib import Path
from functools import partial
from concurrent.futures import ProcessPoolExecutor
from typing import Any, Callable, Dict, Iterable, List, Optional, Sequence, Tuple, TypeVar, Union

from app.config import settings
from app.errors import ConfigError, ConfigMismatch, DataError
from app.ocr_model import Document, line_text, load_document
from app.crf_engine import CrfModel, TrainConfig, load_model, save_model
from app.features import FeatureConfig, document_line_features
from app.models import ExampleRecord, PredictionRecord, SectionsOutput
from app.synth_corpus import (
    CorpusEntry, CorpusStats, GenConfig, corpus_stats, generate_document,
    load_corpus, split_corpus, write_corpus,
)
from app.section_splitter import Section, check_splitter, sections_output, split_document, train_splitter
from app.attribute_extractors import Attribute, ExtractorBundle, LogisticConfig, load_bundle, save_bundle, train_extractors
from app.rule_engine import RuleSet, apply_rules, load_rule_source
from app.evaluation import (
    AblationReport, ComparisonReport, LengthCurve, Metrics, TrainedPipeline,
    evaluate_splitter, prediction_examples, run_ablation, run_endtoend_comparison,
    run_length_experiment, train_pipeline,
)

# Configure logging
logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")

SPLITS = ("all", "train", "dev", "test")


def parallel_map(fn: Callable[[T], R], items: Sequence[T], jobs: int = 1) -> List[R]:
    """Map over items in a process pool when jobs > 1; results keep input order"""
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    logger.debug(f"🔧 Mapping {len(items)} items over {jobs} processes")
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def mapper(jobs: int) -> Callable[..., Iterable]:
    return partial(parallel_map, jobs=jobs)


def select_split(corpus: Sequence[CorpusEntry], split: str, seed: int) -> List[CorpusEntry]:
    if split not in SPLITS:
        raise ConfigError(f"Unknown split {split!r}; choose from {list(SPLITS)}", path="split")
    if split == "all":
        return list(corpus)
    return list(getattr(split_corpus(corpus, seed), split))


def _require_labels(corpus: Sequence[CorpusEntry]) -> None:
    unlabelled = [doc.doc_id for doc, gold in corpus if gold is None]
    if unlabelled:
        raise DataError(f"{len(unlabelled)} documents have no gold labels, e.g. {unlabelled[0]}")


class CorpusService:
    @staticmethod
    def generate(config: GenConfig, out_dir: Union[str, Path], jobs: int = 1) -> Tuple[Path, CorpusStats]:
        """Generate, write and summarise a synthetic corpus"""
        logger.info(f"🔧 Generating {config.doc_count} contracts into {out_dir} (seed={config.seed})")
        corpus = parallel_map(partial(generate_document, config), range(config.doc_count), jobs)
        manifest = write_corpus(corpus, out_dir)
        stats = corpus_stats(corpus, seed=config.seed)
        logger.info(f"✅ Corpus ready: {stats.documents} documents, {stats.pages} pages")
        return manifest, stats

    @staticmethod
    def load(path: Union[str, Path], labelled: bool = True) -> List[CorpusEntry]:
        logger.debug(f"🔍 Loading corpus: {path}")
        corpus = load_corpus(path)
        if labelled:
            _require_labels(corpus)
        logger.info(f"📊 Loaded {len(corpus)} documents from {path}")
        return corpus

    @staticmethod
    def stats(corpus: Sequence[CorpusEntry], seed: int) -> CorpusStats:
        return corpus_stats(corpus, seed=seed)

    @staticmethod
    def documents(
        doc_paths: Optional[Sequence[Union[str, Path]]] = None,
        corpus_path: Optional[Union[str, Path]] = None,
        split: str = "all",
        seed: int = 0,
    ) -> List[Document]:
        """Documents named one by one, or the chosen split of a corpus"""
        if doc_paths:
            return [load_document(path) for path in doc_paths]
        if corpus_path is None:
            raise ConfigError("Give documents with --doc or a corpus with --corpus", path="doc")
        corpus = CorpusService.load(corpus_path, labelled=False)
        return [doc for doc, _ in select_split(corpus, split, seed)]


class SplitterService:
    @staticmethod
    def train(
        corpus: Sequence[CorpusEntry],
        feature_config: FeatureConfig,
        train_config: TrainConfig,
        out_path: Union[str, Path],
        jobs: int = 1,
    ) -> CrfModel:
        model = train_splitter(corpus, feature_config, train_config, map_fn=mapper(jobs))
        save_model(model, out_path)
        logger.info(f"💾 Saved splitter model to {out_path}")
        return model

    @staticmethod
    def load(path: Union[str, Path]) -> CrfModel:
        return load_model(path)

    @staticmethod
    def feature_config(model: CrfModel, groups: Optional[str] = None) -> FeatureConfig:
        """The named groups, checked against the model, or the groups the model was trained with"""
        if groups:
            config = FeatureConfig.parse(groups)
            check_splitter(model, config)
            return config
        if model.feature_fingerprint is None:
            raise ConfigMismatch("Model carries no feature fingerprint; pass --groups")
        config = FeatureConfig.from_fingerprint(model.feature_fingerprint)
        check_splitter(model, config)
        logger.debug(f"🔍 Model was trained with feature groups {config.name}")
        return config

    @staticmethod
    def split(model: CrfModel, doc: Document, feature_config: FeatureConfig) -> SectionsOutput:
        sections = split_document(model, doc, feature_config)
        logger.info(f"📊 {doc.doc_id}: {len(sections)} sections")
        return sections_output(doc, sections)

    @staticmethod
    def evaluate(
        model: CrfModel,
        feature_config: FeatureConfig,
        entries: Sequence[CorpusEntry],
        jobs: int = 1,
    ) -> Tuple[dict, dict]:
        _require_labels(entries)
        exact, overlap = evaluate_splitter(model, feature_config, entries, map_fn=mapper(jobs))
        for kind, metrics in exact.items():
            logger.info(f"📊 {kind}: P {metrics.precision:.3f} R {metrics.recall:.3f} F1 {metrics.f1:.3f} (overlap F1 {overlap[kind].f1:.3f})")
        return exact, overlap

    @staticmethod
    def evaluation_rows(exact: Dict[str, Metrics], overlap: Dict[str, Metrics]) -> List[List[str]]:
        return [
            [kind, mode] + scores[kind].row()
            for kind in exact
            for mode, scores in (("exact", exact), ("overlap", overlap))
        ]


def _document_predictions(doc: Document, splitter: CrfModel, bundle: ExtractorBundle) -> List[PredictionRecord]:
    sections = split_document(splitter, doc, bundle.feature_config)
    return [prediction.to_record(doc.doc_id) for prediction in bundle.predict_all(doc, sections)]


def _document_rule_predictions(
    doc: Document, rule_set: RuleSet, splitter: Optional[CrfModel], feature_config: Optional[FeatureConfig], any_match: bool,
) -> List[PredictionRecord]:
    target: Union[Document, List[Section]] = doc
    if splitter is not None:
        target = split_document(splitter, doc, feature_config)
    return [apply_rules(rule_set, target, attribute, any_match=any_match).to_record(doc.doc_id) for attribute in Attribute]


class ExtractorService:
    @staticmethod
    def train(
        corpus: Sequence[CorpusEntry],
        feature_config: FeatureConfig,
        train_config: TrainConfig,
        logistic_config: LogisticConfig,
        out_path: Union[str, Path],
        jobs: int = 1,
    ) -> ExtractorBundle:
        bundle = train_extractors(corpus, feature_config, train_config, logistic_config, map_fn=mapper(jobs))
        save_bundle(bundle, out_path)
        logger.info(f"💾 Saved extractor bundle to {out_path}")
        return bundle

    @staticmethod
    def load(path: Union[str, Path]) -> ExtractorBundle:
        return load_bundle(path)

    @staticmethod
    def predict(
        splitter: CrfModel, bundle: ExtractorBundle, docs: Sequence[Document], jobs: int = 1,
    ) -> List[PredictionRecord]:
        if splitter.feature_fingerprint != bundle.feature_config.fingerprint():
            raise ConfigMismatch(
                f"Splitter fingerprint {splitter.feature_fingerprint} differs from the extractors' "
                f"feature config {bundle.feature_config.name} ({bundle.feature_config.fingerprint()})"
            )
        per_document = parallel_map(partial(_document_predictions, splitter=splitter, bundle=bundle), docs, jobs)
        records = [record for records in per_document for record in records]
        logger.info(f"✅ {len(records)} predictions for {len(docs)} documents")
        return records


class RuleService:
    @staticmethod
    def load(path: Optional[Union[str, Path]] = None) -> RuleSet:
        return load_rule_source(path or settings.rules_dir)

    @staticmethod
    def apply(
        rule_set: RuleSet,
        docs: Sequence[Document],
        splitter: Optional[CrfModel] = None,
        feature_config: Optional[FeatureConfig] = None,
        any_match: bool = False,
        jobs: int = 1,
    ) -> List[PredictionRecord]:
        """Rules over whole documents, or over split sections when a splitter is given"""
        worker = partial(
            _document_rule_predictions,
            rule_set=rule_set, splitter=splitter, feature_config=feature_config, any_match=any_match,
        )
        records = [record for records in parallel_map(worker, docs, jobs) for record in records]
        logger.info(f"✅ {len(records)} rule predictions for {len(docs)} documents")
        return records


class FeatureService:
    @staticmethod
    def inspect(
        doc: Document,
        feature_config: FeatureConfig,
        line: Optional[int] = None,
        model: Optional[CrfModel] = None,
    ) -> List[Dict[str, Any]]:
        """Sorted feature maps per reading-order line, with per-label emission weights when a model is given"""
        vectors = document_line_features(doc, feature_config)
        positions = range(len(vectors))
        if line is not None:
            if not 0 <= line < len(vectors):
                raise ConfigError(f"Line {line} outside document of {len(vectors)} lines", path="line")
            positions = [line]

        records = []
        for position in positions:
            ref, text_line = doc.reading_order[position]
            record: Dict[str, Any] = {
                "line": position,
                "page": ref.page_index,
                "text": line_text(text_line),
                "features": dict(sorted(vectors[position].items())),
            }
            if model is not None:
                record["weights"] = {
                    label: {
                        name: round(model.emission_weight(name, index), 6)
                        for name in sorted(vectors[position])
                        if name in model.feature_index
                    }
                    for index, label in enumerate(model.label_set.labels)
                }
            records.append(record)
        logger.debug(f"🔍 Inspected {len(records)} lines of {doc.doc_id}")
        return records


class ExperimentService:
    @staticmethod
    def ablate(corpus: Sequence[CorpusEntry], train_config: TrainConfig, seed: int, jobs: int = 1) -> AblationReport:
        _require_labels(corpus)
        return run_ablation(corpus, train_config, seed, map_fn=mapper(jobs))

    @staticmethod
    def doclength(
        corpus: Sequence[CorpusEntry], windows: Sequence[int], seed: int, train_config: TrainConfig,
    ) -> LengthCurve:
        _require_labels(corpus)
        return run_length_experiment(corpus, windows, seed, train_config)

    @staticmethod
    def compare(
        corpus: Sequence[CorpusEntry],
        seeds: Sequence[int],
        train_config: TrainConfig,
        logistic_config: LogisticConfig,
        rule_set: RuleSet,
        jobs: int = 1,
    ) -> ComparisonReport:
        _require_labels(corpus)
        return run_endtoend_comparison(corpus, seeds, train_config, logistic_config, rule_set, map_fn=mapper(jobs))

    @staticmethod
    def examples(
        corpus: Sequence[CorpusEntry],
        feature_config: FeatureConfig,
        train_config: TrainConfig,
        logistic_config: LogisticConfig,
        seed: int,
        per_attribute: int,
        jobs: int = 1,
    ) -> List[ExampleRecord]:
        _require_labels(corpus)
        split = split_corpus(corpus, seed)
        pipeline: TrainedPipeline = train_pipeline(split.train, feature_config, train_config, logistic_config, map_fn=mapper(jobs))
        return prediction_examples(split.test, pipeline, per_attribute, map_fn=mapper(jobs))
