"""Experiment trends on the default-size corpus; run with `pytest -m slow`"""

import pytest

from app.config import settings
from app.crf_engine import TrainConfig
from app.features import FeatureConfig
from app.evaluation import normalize_answer, run_ablation, run_endtoend_comparison, run_length_experiment, train_pipeline
from app.attribute_extractors import Attribute, LogisticConfig
from app.rule_engine import load_rule_source
from app.section_splitter import split_document
from app.synth_corpus import GenConfig, generate_corpus, split_corpus

pytestmark = pytest.mark.slow

TRAINING = TrainConfig(l2_lambda=0.1, max_iterations=150)


@pytest.fixture(scope="module")
def full_corpus():
    return generate_corpus(GenConfig(seed=7, doc_count=200))


def test_visual_groups_help_footers_most(full_corpus):
    report = run_ablation(full_corpus, TRAINING, seed=7)
    footer_gain = report.row("+all_groups", "footer").exact.f1 - report.row("baseline", "footer").exact.f1
    assert footer_gain >= 0.03
    assert report.row("+all_groups", "clause").exact.f1 >= report.row("baseline", "clause").exact.f1


def test_longer_windows_hurt_extraction(full_corpus):
    curve = run_length_experiment(full_corpus, [100, 500, 2500, 5000], seed=7, train_config=TRAINING)
    f1 = [point.metrics.f1 for point in curve.points]
    assert f1[0] - f1[-1] >= 0.2
    inversions = [b - a for a, b in zip(f1, f1[1:]) if b > a]
    assert len(inversions) <= 1 and all(step <= 0.02 for step in inversions)


def test_length_experiment_is_deterministic(full_corpus):
    first = run_length_experiment(full_corpus[:60], [100, 500], seed=3, train_config=TRAINING)
    second = run_length_experiment(full_corpus[:60], [100, 500], seed=3, train_config=TRAINING)
    assert first.csv_rows() == second.csv_rows()


def test_rules_are_precise_and_visual_splitting_helps_anti_assignment(full_corpus):
    report = run_endtoend_comparison(
        full_corpus, [7, 8, 9], TRAINING, LogisticConfig(), load_rule_source(settings.rules_dir),
    )
    for attribute in (Attribute.TERMINATION_FOR_CONVENIENCE, Attribute.ANTI_ASSIGNMENT):
        metrics = report.metrics("rules", attribute.value)
        assert metrics.precision >= metrics.recall
    assert report.verdict


def test_broken_answers_are_rejoined_without_page_numbers():
    corpus = generate_corpus(GenConfig(seed=5, doc_count=60, broken_span_prob=1.0))
    split = split_corpus(corpus, 5)
    pipeline = train_pipeline(split.train, FeatureConfig.all_groups(), TRAINING, LogisticConfig())
    extracted = 0
    for doc, gold in split.test:
        sections = split_document(pipeline.splitter, doc, pipeline.feature_config)
        prediction = pipeline.bundle.predict(doc, sections, Attribute.GOVERNING_LAW)
        if prediction.span is None or prediction.span.section_id is None:
            continue
        extracted += 1
        section = next(s for s in sections if s.section_id == prediction.span.section_id)
        refs = section.token_provenance[prediction.span.token_start: prediction.span.token_end + 1]
        margin = gold.margin_lines()
        assert all(doc.position_of[ref.line] not in margin for ref in refs)
        answer = normalize_answer(gold.gold_text(doc, "governing_law"))
        if normalize_answer(prediction.span_text) == answer:
            assert answer in normalize_answer(section.clean_text)
    assert extracted > 0
