"""
Expert rules: ordered case-insensitive regex rules per attribute.

Rule files are JSONL, one rule per line:
    {"rule_id": "t4c-at-will", "attribute": "termination_for_convenience",
     "pattern": "may terminate at will", "effect": {"answer": true}, "scope": "document"}
Entity rules use {"capture": 1} and must have exactly one capture group.
"""

import re
import json
import logging

from pathlib import Path
from dataclasses import dataclass
from pydantic import ValidationError
from typing import List, Optional, Pattern, Sequence, Tuple, Union

from app.models import RuleRecord
from app.ocr_model import Document, document_text
from app.section_splitter import Section
from app.errors import DuplicateId, RuleSyntaxError, SchemaError
from app.attribute_extractors import Attribute, AttributePrediction, EntitySpan

# Configure logging
logger = logging.getLogger(__name__)

NO_MATCH_CONFIDENCE = 0.5


@dataclass(frozen=True)
class Rule:
    rule_id: str
    attribute: Attribute
    pattern: str
    compiled: Pattern
    answer: Optional[bool] = None
    capture: Optional[int] = None
    scope: str = "document"


@dataclass(frozen=True)
class RuleSet:
    rules: Tuple[Rule, ...] = ()

    def __len__(self) -> int:
        return len(self.rules)

    def for_attribute(self, attribute: Attribute) -> List[Rule]:
        return [rule for rule in self.rules if rule.attribute == attribute]

    def extended(self, other: "RuleSet") -> "RuleSet":
        return _unique(self.rules + other.rules)


def _unique(rules: Sequence[Rule]) -> RuleSet:
    seen = set()
    for rule in rules:
        if rule.rule_id in seen:
            raise DuplicateId(f"rule_id {rule.rule_id!r} is defined more than once")
        seen.add(rule.rule_id)
    return RuleSet(rules=tuple(rules))


def _parse_rule(raw: str, path: str, line: int) -> Rule:
    def fail(message: str, column: int = 1) -> RuleSyntaxError:
        return RuleSyntaxError(message, path=path, line=line, column=column)

    try:
        data = json.loads(raw)
    except json.JSONDecodeError as e:
        raise fail(f"invalid JSON: {e.msg}", e.colno)
    try:
        record = RuleRecord.model_validate(data)
    except ValidationError as e:
        first = e.errors()[0]
        location = ".".join(str(part) for part in first.get("loc", ()))
        raise fail(f"invalid rule record at {location or '<root>'}: {first['msg']}")

    try:
        attribute = Attribute(record.attribute)
    except ValueError:
        raise fail(f"unknown attribute {record.attribute!r}", raw.find(record.attribute) + 1)

    try:
        compiled = re.compile(record.pattern, re.IGNORECASE)
    except re.error as e:
        raise fail(f"pattern does not compile: {e.msg}", raw.find('"pattern"') + 1)

    if attribute.kind == "boolean":
        if set(record.effect) != {"answer"} or not isinstance(record.effect["answer"], bool):
            raise fail('boolean rules need the effect {"answer": true|false}', raw.find('"effect"') + 1)
        return Rule(record.rule_id, attribute, record.pattern, compiled, answer=record.effect["answer"], scope=record.scope)

    if record.effect != {"capture": 1}:
        raise fail('entity rules need the effect {"capture": 1}', raw.find('"effect"') + 1)
    if compiled.groups != 1:
        raise fail(f"entity rules need exactly one capture group, pattern has {compiled.groups}", raw.find('"pattern"') + 1)
    return Rule(record.rule_id, attribute, record.pattern, compiled, capture=1, scope=record.scope)


def load_rules(path: Union[str, Path]) -> RuleSet:
    rule_path = Path(path)
    logger.debug(f"🔍 Loading rules from: {rule_path}")
    try:
        text = rule_path.read_text(encoding="utf-8")
    except OSError as e:
        raise SchemaError(f"Cannot read rule file: {e}", path=str(rule_path))

    rules = [
        _parse_rule(raw, str(rule_path), number)
        for number, raw in enumerate(text.splitlines(), start=1)
        if raw.strip()
    ]
    rule_set = _unique(rules)
    logger.info(f"✅ Loaded {len(rule_set)} rules from {rule_path.name}")
    return rule_set


def load_rule_dir(directory: Union[str, Path]) -> RuleSet:
    """Every *.jsonl rule file of a directory, in file-name order"""
    rule_set = RuleSet()
    for rule_file in sorted(Path(directory).glob("*.jsonl")):
        rule_set = rule_set.extended(load_rules(rule_file))
    return rule_set


def load_rule_source(path: Union[str, Path]) -> RuleSet:
    target = Path(path)
    return load_rule_dir(target) if target.is_dir() else load_rules(target)


def _flatten(text: str) -> str:
    return " ".join(text.split())


def _rule_text(target: Union[Document, Sequence[Section]], scope: str) -> str:
    if isinstance(target, Document):
        return _flatten(document_text(target))
    sections = sorted(target, key=lambda s: s.first_line)
    if scope == "clauses":
        sections = [section for section in sections if section.is_content]
    return _flatten(" ".join(section.clean_text for section in sections))


def apply_rules(
    rule_set: RuleSet,
    target: Union[Document, Sequence[Section]],
    attribute: Attribute,
    any_match: bool = False,
) -> AttributePrediction:
    """
    First matching rule wins. With any_match a boolean attribute is Yes as
    soon as any Yes rule matches.
    """
    texts = {}
    chosen: Optional[Tuple[Rule, re.Match]] = None
    for rule in rule_set.for_attribute(attribute):
        if rule.scope not in texts:
            texts[rule.scope] = _rule_text(target, rule.scope)
        match = rule.compiled.search(texts[rule.scope])
        if match is None:
            continue
        if not any_match or attribute.kind != "boolean" or rule.answer:
            chosen = (rule, match)
            break
        if chosen is None:
            # keep the first No verdict while looking for a Yes
            chosen = (rule, match)

    if chosen is None:
        if attribute.kind == "boolean":
            return AttributePrediction(attribute=attribute, answer=False, confidence=NO_MATCH_CONFIDENCE)
        return AttributePrediction(attribute=attribute, no_relevant_section=True)

    rule, match = chosen
    logger.debug(f"🔍 Rule {rule.rule_id} matched for {attribute.value}")
    if attribute.kind == "boolean":
        return AttributePrediction(attribute=attribute, answer=rule.answer, confidence=1.0)
    return AttributePrediction(attribute=attribute, span=EntitySpan(text=_flatten(match.group(rule.capture))), confidence=1.0)
