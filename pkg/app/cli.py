"""
Command-line entry point: one subcommand per pipeline stage and experiment.

Every subcommand reads an optional TOML/JSON --config plus flags (flags win),
writes only under its --out path(s) and leaves a run manifest next to them.
Exit codes: 0 success, 1 validation error, 2 runtime failure.
"""

import sys
import json
import time
import logging
import argparse

from pathlib import Path
from contextlib import contextmanager
from datetime import datetime, timezone
from typing import Any, Dict, Iterator, List, Optional, Sequence

from app import __version__
from app.config import RunConfig, resolve_run_config, settings
from app.crf_engine import TrainConfig
from app.features import FeatureConfig
from app.models import RunManifest
from app.ocr_model import load_document
from app.attribute_extractors import LogisticConfig
from app.synth_corpus import GenConfig
from app.errors import ConfigError, UsageError, ValidationFailure
from app.evaluation import AblationReport, ComparisonReport, LengthCurve, parse_windows, render_examples
from app.storage import canonical_json, dumps_csv, dumps_jsonl, get_content_hash, output_guard, write_json, write_text
from app.services import (
    SPLITS, CorpusService, ExperimentService, ExtractorService, FeatureService,
    RuleService, SplitterService, select_split,
)

# Configure logging
logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR")
RUN_MANIFEST_NAME = "run_manifest.json"
DEFAULT_WINDOWS = "100,500,2500,5000"
DEFAULT_SEEDS = "7,8,9"
DEFAULT_PER_ATTRIBUTE = 3
EVAL_HEADER = ("section_type", "match", "precision", "recall", "f1", "tp", "fp", "fn")
INPUT_FLAGS = ("config", "corpus", "doc", "model", "extractors", "rules")


class ArgumentParser(argparse.ArgumentParser):
    """Usage errors become UsageError so they exit 1 like any other validation failure"""

    def error(self, message: str) -> None:
        raise UsageError(f"{self.prog}: {message}")


def configure_logging(level: str) -> None:
    logging.basicConfig(level=level.upper(), format=LOG_FORMAT, stream=sys.stderr, force=True)


# ---------------------------------------------------------------------------
# Run plumbing
# ---------------------------------------------------------------------------

def run_config(args: argparse.Namespace) -> RunConfig:
    return resolve_run_config(args.config, args.command, vars(args))


def train_config(config: RunConfig) -> TrainConfig:
    return TrainConfig(
        l2_lambda=config.l2_lambda,
        max_iterations=config.max_iterations,
        convergence_tol=config.convergence_tol,
        seed=config.seed,
    )


def logistic_config(config: RunConfig) -> LogisticConfig:
    if config.logistic_l2_lambda is None:
        return LogisticConfig()
    return LogisticConfig(l2_lambda=config.logistic_l2_lambda)


def parse_seeds(spec: str) -> List[int]:
    try:
        seeds = [int(part) for part in spec.split(",") if part.strip()]
    except ValueError:
        raise ConfigError(f"Seeds must be integers: {spec!r}", path="seeds")
    if not seeds:
        raise ConfigError("At least one seed is required", path="seeds")
    return seeds


def manifest_path(out: Optional[Path], directory: bool = False) -> Optional[Path]:
    if out is None:
        return None
    if directory:
        return out / RUN_MANIFEST_NAME
    return out.with_name(out.name + ".manifest.json")


def run_inputs(args: argparse.Namespace) -> List[str]:
    inputs: List[str] = []
    for flag in INPUT_FLAGS:
        value = getattr(args, flag, None)
        if value is None:
            continue
        if isinstance(value, list):
            inputs.extend(str(v) for v in value)
        else:
            inputs.append(str(value))
    return inputs


@contextmanager
def recorded_run(
    args: argparse.Namespace,
    config: RunConfig,
    outputs: Sequence[Optional[Path]],
    directory: bool = False,
) -> Iterator[None]:
    """
    Remove partial outputs on failure; on success write the run manifest next
    to the first output, or log it when everything went to standard output.
    """
    started_at = datetime.now(timezone.utc).isoformat(timespec="seconds")
    start = time.perf_counter()
    written = [path for path in outputs if path is not None]
    manifest = manifest_path(outputs[0] if outputs else None, directory)
    guarded = written + ([manifest] if manifest is not None and not directory else [])

    with output_guard(*guarded):
        yield
        record = RunManifest(
            command=args.command,
            config_fingerprint=get_content_hash(canonical_json(config.model_dump(mode="json")).encode("utf-8")),
            seed=config.seed,
            inputs=run_inputs(args),
            outputs=[str(path) for path in written],
            toolkit_version=__version__,
            started_at=started_at,
            wall_clock_seconds=round(time.perf_counter() - start, 3),
        )
        if manifest is not None:
            write_json(manifest, record.model_dump(mode="json"))
            logger.info(f"💾 Run manifest written to {manifest}")
        else:
            logger.info(f"📊 Run manifest: {canonical_json(record.model_dump(mode='json'))}")


def emit(text: str, out: Optional[Path]) -> None:
    """Write to the output file, or to standard output when there is none"""
    if out is None:
        sys.stdout.write(text)
        sys.stdout.flush()
        return
    write_text(out, text)
    logger.info(f"💾 Wrote {out}")


def json_text(obj: Any) -> str:
    return json.dumps(obj, indent=2, ensure_ascii=False) + "\n"


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_gen(args: argparse.Namespace) -> int:
    config = run_config(args)
    options: Dict[str, Any] = {
        "seed": config.seed,
        "doc_count": config.docs,
        "mean_words_per_doc": config.mean_words,
        "header_prob": config.header_prob,
        "footer_prob": config.footer_prob,
        "broken_span_prob": config.broken_span_prob,
        "style_noise": config.style_noise,
    }
    gen_config = GenConfig(**{key: value for key, value in options.items() if value is not None})
    with recorded_run(args, config, [args.out], directory=True):
        _, stats = CorpusService.generate(gen_config, args.out, jobs=config.jobs)
        write_json(args.out / "stats.json", stats.model_dump(mode="json"))
    return 0


def cmd_stats(args: argparse.Namespace) -> int:
    config = run_config(args)
    corpus = CorpusService.load(args.corpus, labelled=False)
    with recorded_run(args, config, [args.out]):
        emit(json_text(CorpusService.stats(corpus, config.seed).model_dump(mode="json")), args.out)
    return 0


def cmd_train_splitter(args: argparse.Namespace) -> int:
    config = run_config(args)
    corpus = select_split(CorpusService.load(args.corpus), config.split or "train", config.seed)
    feature_config = FeatureConfig.parse(config.groups or "baseline")
    with recorded_run(args, config, [args.out]):
        SplitterService.train(corpus, feature_config, train_config(config), args.out, jobs=config.jobs)
    return 0


def cmd_split(args: argparse.Namespace) -> int:
    config = run_config(args)
    model = SplitterService.load(args.model)
    feature_config = SplitterService.feature_config(model, config.groups)
    doc = load_document(args.doc)
    with recorded_run(args, config, [args.out]):
        output = SplitterService.split(model, doc, feature_config)
        emit(json_text(output.model_dump(mode="json")), args.out)
    return 0


def cmd_train_extractors(args: argparse.Namespace) -> int:
    config = run_config(args)
    corpus = select_split(CorpusService.load(args.corpus), config.split or "train", config.seed)
    feature_config = FeatureConfig.parse(config.groups or "baseline")
    with recorded_run(args, config, [args.out]):
        ExtractorService.train(
            corpus, feature_config, train_config(config), logistic_config(config), args.out, jobs=config.jobs,
        )
    return 0


def cmd_predict(args: argparse.Namespace) -> int:
    config = run_config(args)
    splitter = SplitterService.load(args.model)
    bundle = ExtractorService.load(args.extractors)
    docs = CorpusService.documents(args.doc, args.corpus, config.split or "all", config.seed)
    with recorded_run(args, config, [args.out]):
        records = ExtractorService.predict(splitter, bundle, docs, jobs=config.jobs)
        emit(dumps_jsonl(record.model_dump(mode="json") for record in records), args.out)
    return 0


def cmd_rules(args: argparse.Namespace) -> int:
    config = run_config(args)
    rule_set = RuleService.load(config.rules)
    docs = CorpusService.documents(args.doc, args.corpus, config.split or "all", config.seed)
    splitter = feature_config = None
    if args.sections:
        if args.model is None:
            raise UsageError("rules: --sections needs --model to split documents first")
        splitter = SplitterService.load(args.model)
        feature_config = SplitterService.feature_config(splitter, config.groups)
    with recorded_run(args, config, [args.out]):
        records = RuleService.apply(
            rule_set, docs, splitter=splitter, feature_config=feature_config,
            any_match=bool(config.any_match), jobs=config.jobs,
        )
        emit(dumps_jsonl(record.model_dump(mode="json") for record in records), args.out)
    return 0


def cmd_eval_sections(args: argparse.Namespace) -> int:
    config = run_config(args)
    model = SplitterService.load(args.model)
    feature_config = SplitterService.feature_config(model, config.groups)
    entries = select_split(CorpusService.load(args.corpus), config.split or "test", config.seed)
    with recorded_run(args, config, [args.out]):
        exact, overlap = SplitterService.evaluate(model, feature_config, entries, jobs=config.jobs)
        emit(dumps_csv(EVAL_HEADER, SplitterService.evaluation_rows(exact, overlap)), args.out)
    return 0


def cmd_ablate(args: argparse.Namespace) -> int:
    config = run_config(args)
    corpus = CorpusService.load(args.corpus)
    with recorded_run(args, config, [args.out]):
        report = ExperimentService.ablate(corpus, train_config(config), config.seed, jobs=config.jobs)
        emit(dumps_csv(AblationReport.header, report.csv_rows()), args.out)
        if args.out is not None:
            sys.stdout.write(report.render())
    return 0


def cmd_doclength(args: argparse.Namespace) -> int:
    config = run_config(args)
    windows = parse_windows(config.windows or DEFAULT_WINDOWS)
    corpus = CorpusService.load(args.corpus)
    plot_out = args.plot_out
    if plot_out is None and args.out is not None:
        plot_out = args.out.with_name(args.out.stem + ".plot.csv")
    with recorded_run(args, config, [args.out, plot_out]):
        curve = ExperimentService.doclength(corpus, windows, config.seed, train_config(config))
        emit(dumps_csv(LengthCurve.header, curve.csv_rows()), args.out)
        if plot_out is not None:
            emit(dumps_csv(("window_tokens", "f1"), curve.plot_rows()), plot_out)
    return 0


def cmd_compare(args: argparse.Namespace) -> int:
    config = run_config(args)
    seeds = parse_seeds(config.seeds or DEFAULT_SEEDS)
    corpus = CorpusService.load(args.corpus)
    rule_set = RuleService.load(config.rules)
    pairing_out = args.pairing_out
    if pairing_out is None and args.out is not None:
        pairing_out = args.out.with_name(args.out.stem + ".pairing.csv")
    with recorded_run(args, config, [args.out, pairing_out]):
        report = ExperimentService.compare(
            corpus, seeds, train_config(config), logistic_config(config), rule_set, jobs=config.jobs,
        )
        emit(dumps_csv(ComparisonReport.header, report.csv_rows()), args.out)
        if pairing_out is not None:
            emit(dumps_csv(ComparisonReport.pairing_header, report.pairing_rows()), pairing_out)
        if args.out is not None:
            sys.stdout.write(report.render())
    return 0


def cmd_inspect_features(args: argparse.Namespace) -> int:
    config = run_config(args)
    doc = load_document(args.doc)
    model = SplitterService.load(args.model) if args.model else None
    if model is not None:
        feature_config = SplitterService.feature_config(model, config.groups)
    else:
        feature_config = FeatureConfig.parse(config.groups or "baseline")
    with recorded_run(args, config, [args.out]):
        records = FeatureService.inspect(doc, feature_config, line=args.line, model=model)
        emit(dumps_jsonl(records), args.out)
    return 0


def cmd_examples(args: argparse.Namespace) -> int:
    config = run_config(args)
    corpus = CorpusService.load(args.corpus)
    feature_config = FeatureConfig.parse(config.groups or "all")
    with recorded_run(args, config, [args.out]):
        examples = ExperimentService.examples(
            corpus, feature_config, train_config(config), logistic_config(config),
            config.seed, config.per_attribute or DEFAULT_PER_ATTRIBUTE, jobs=config.jobs,
        )
        emit(dumps_jsonl(example.model_dump(mode="json") for example in examples), args.out)
        if args.out is not None:
            sys.stdout.write(render_examples(examples))
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=str, default=None, help="TOML or JSON run config; flags override it")
    parser.add_argument("--seed", type=int, default=None, help=f"Random seed (default {settings.seed})")
    parser.add_argument("--jobs", type=int, default=None, help="Worker processes for document-level work")
    parser.add_argument(
        "--log-level", type=str.upper, choices=LOG_LEVELS, default=None, help=f"Logging level (default {settings.log_level})",
    )


def _training(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--l2-lambda", type=float, default=None, help=f"CRF L2 strength (default {settings.crf_l2_lambda})")
    parser.add_argument("--max-iterations", type=int, default=None, help="CRF optimiser iteration cap")
    parser.add_argument("--convergence-tol", type=float, default=None, help="CRF optimiser gradient tolerance")


def _groups(parser: argparse.ArgumentParser, default: str) -> None:
    parser.add_argument(
        "--groups", type=str, default=None,
        help=f"Feature groups: baseline, all, or a comma list of page_layout,text_placement,visual_grouping,style (default {default})",
    )


def _split(parser: argparse.ArgumentParser, default: str) -> None:
    parser.add_argument("--split", choices=SPLITS, default=None, help=f"Corpus split to use (default {default})")


def _documents(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--doc", type=Path, nargs="+", default=None, help="Document JSON file(s)")
    parser.add_argument("--corpus", type=Path, default=None, help="Corpus directory or manifest, used when --doc is absent")
    _split(parser, "all")


def build_parser() -> argparse.ArgumentParser:
    parser = ArgumentParser(prog="sectioner", description="Visual-cue contract section splitting and attribute extraction")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=ArgumentParser)

    gen = sub.add_parser("gen", help="Generate a labelled synthetic contract corpus")
    _common(gen)
    gen.add_argument("--docs", type=int, default=None, help="Number of documents (default 200)")
    gen.add_argument("--mean-words", type=int, default=None, help="Mean words per document")
    gen.add_argument("--header-prob", type=float, default=None, help="Probability a page carries a header")
    gen.add_argument("--footer-prob", type=float, default=None, help="Probability a page carries a footer")
    gen.add_argument("--broken-span-prob", type=float, default=None, help="Probability the governing-law answer is forced across a page break")
    gen.add_argument("--style-noise", type=float, default=None, help="Probability of a random style flip per token")
    gen.add_argument("--out", type=Path, required=True, help="Output corpus directory")
    gen.set_defaults(func=cmd_gen)

    stats = sub.add_parser("stats", help="Corpus statistics as JSON")
    _common(stats)
    stats.add_argument("--corpus", type=Path, required=True, help="Corpus directory or manifest")
    stats.add_argument("--out", type=Path, default=None, help="Output JSON file (default standard output)")
    stats.set_defaults(func=cmd_stats)

    train_split = sub.add_parser("train-splitter", help="Train the line-level section splitter")
    _common(train_split)
    _training(train_split)
    _groups(train_split, "baseline")
    _split(train_split, "train")
    train_split.add_argument("--corpus", type=Path, required=True, help="Corpus directory or manifest")
    train_split.add_argument("--out", type=Path, required=True, help="Output model JSON file")
    train_split.set_defaults(func=cmd_train_splitter)

    split = sub.add_parser("split", help="Split one document into sections (JSON)")
    _common(split)
    _groups(split, "the groups the model was trained with")
    split.add_argument("--model", type=Path, required=True, help="Splitter model JSON file")
    split.add_argument("--doc", type=Path, required=True, help="Document JSON file")
    split.add_argument("--out", type=Path, default=None, help="Output JSON file (default standard output)")
    split.set_defaults(func=cmd_split)

    train_ext = sub.add_parser("train-extractors", help="Train relevance, entity and classifier models")
    _common(train_ext)
    _training(train_ext)
    _groups(train_ext, "baseline")
    _split(train_ext, "train")
    train_ext.add_argument("--logistic-l2-lambda", type=float, default=None, help=f"Logistic L2 strength (default {settings.logistic_l2_lambda})")
    train_ext.add_argument("--corpus", type=Path, required=True, help="Corpus directory or manifest")
    train_ext.add_argument("--out", type=Path, required=True, help="Output extractor bundle JSON file")
    train_ext.set_defaults(func=cmd_train_extractors)

    predict = sub.add_parser("predict", help="Predict every attribute for documents (JSONL)")
    _common(predict)
    _documents(predict)
    predict.add_argument("--model", type=Path, required=True, help="Splitter model JSON file")
    predict.add_argument("--extractors", type=Path, required=True, help="Extractor bundle JSON file")
    predict.add_argument("--out", type=Path, default=None, help="Output JSONL file (default standard output)")
    predict.set_defaults(func=cmd_predict)

    rules = sub.add_parser("rules", help="Apply expert rules to documents (JSONL)")
    _common(rules)
    _documents(rules)
    _groups(rules, "the groups the model was trained with")
    rules.add_argument("--rules", type=str, default=None, help=f"Rule file or directory (default {settings.rules_dir})")
    rules.add_argument("--sections", action="store_true", help="Apply rules to split sections so clause-scoped rules see clause text only")
    rules.add_argument("--model", type=Path, default=None, help="Splitter model JSON file, required with --sections")
    rules.add_argument("--any-match", action="store_true", default=None, help="A boolean attribute is Yes when any Yes rule matches")
    rules.add_argument("--out", type=Path, default=None, help="Output JSONL file (default standard output)")
    rules.set_defaults(func=cmd_rules)

    eval_sections = sub.add_parser("eval-sections", help="Per-type section P/R/F1, exact and overlap match (CSV)")
    _common(eval_sections)
    _groups(eval_sections, "the groups the model was trained with")
    _split(eval_sections, "test")
    eval_sections.add_argument("--model", type=Path, required=True, help="Splitter model JSON file")
    eval_sections.add_argument("--corpus", type=Path, required=True, help="Corpus directory or manifest")
    eval_sections.add_argument("--out", type=Path, default=None, help="Output CSV file (default standard output)")
    eval_sections.set_defaults(func=cmd_eval_sections)

    ablate = sub.add_parser("ablate", help="Feature-group ablation of the section splitter (CSV)")
    _common(ablate)
    _training(ablate)
    ablate.add_argument("--corpus", type=Path, required=True, help="Corpus directory or manifest")
    ablate.add_argument("--out", type=Path, default=None, help="Output CSV file (default standard output)")
    ablate.set_defaults(func=cmd_ablate)

    doclength = sub.add_parser("doclength", help="Governing-law F1 against window length (CSV)")
    _common(doclength)
    _training(doclength)
    doclength.add_argument("--corpus", type=Path, required=True, help="Corpus directory or manifest")
    doclength.add_argument("--windows", type=str, default=None, help=f"Strictly increasing window sizes in tokens (default {DEFAULT_WINDOWS})")
    doclength.add_argument("--out", type=Path, default=None, help="Output CSV file (default standard output)")
    doclength.add_argument("--plot-out", type=Path, default=None, help="Two-column window_tokens,f1 file (default <out>.plot.csv)")
    doclength.set_defaults(func=cmd_doclength)

    compare = sub.add_parser("compare", help="Rules against model pipelines, plus the visual-splitting pairing (CSV)")
    _common(compare)
    _training(compare)
    compare.add_argument("--logistic-l2-lambda", type=float, default=None, help=f"Logistic L2 strength (default {settings.logistic_l2_lambda})")
    compare.add_argument("--corpus", type=Path, required=True, help="Corpus directory or manifest")
    compare.add_argument("--seeds", type=str, default=None, help=f"Comma list of split seeds (default {DEFAULT_SEEDS})")
    compare.add_argument("--rules", type=str, default=None, help=f"Rule file or directory (default {settings.rules_dir})")
    compare.add_argument("--out", type=Path, default=None, help="Output CSV file (default standard output)")
    compare.add_argument("--pairing-out", type=Path, default=None, help="Per-seed pairing CSV (default <out>.pairing.csv)")
    compare.set_defaults(func=cmd_compare)

    inspect = sub.add_parser("inspect-features", help="Line feature maps of a document (JSONL)")
    _common(inspect)
    _groups(inspect, "baseline, or the model's groups")
    inspect.add_argument("--doc", type=Path, required=True, help="Document JSON file")
    inspect.add_argument("--line", type=int, default=None, help="Only this reading-order line")
    inspect.add_argument("--model", type=Path, default=None, help="Splitter model; adds per-label weights of each feature")
    inspect.add_argument("--out", type=Path, default=None, help="Output JSONL file (default standard output)")
    inspect.set_defaults(func=cmd_inspect_features)

    examples = sub.add_parser("examples", help="Prediction examples per attribute on the test split (JSONL)")
    _common(examples)
    _training(examples)
    _groups(examples, "all")
    examples.add_argument("--logistic-l2-lambda", type=float, default=None, help=f"Logistic L2 strength (default {settings.logistic_l2_lambda})")
    examples.add_argument("--corpus", type=Path, required=True, help="Corpus directory or manifest")
    examples.add_argument("--per-attribute", type=int, default=None, help=f"Examples per attribute (default {DEFAULT_PER_ATTRIBUTE})")
    examples.add_argument("--out", type=Path, default=None, help="Output JSONL file (default standard output)")
    examples.set_defaults(func=cmd_examples)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    configure_logging(settings.log_level)
    try:
        args = build_parser().parse_args(argv)
        if args.log_level:
            configure_logging(args.log_level)
        return args.func(args)
    except ValidationFailure as e:
        logger.error(f"❌ {e}", exc_info=settings.debug)
        return 1
    except Exception as e:
        logger.error(f"❌ Run failed: {e}", exc_info=True)
        return 2


if __name__ == "__main__":
    sys.exit(main())
