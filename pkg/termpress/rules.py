from __future__ import annotations

import json
import math
import re
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Any

from pydantic import ValidationError

from termpress.errors import RuleParseError, RuleValidationError
from termpress.schemas import (
    CompressionRule,
    ProblemKind,
    RuleValidationReport,
    ValidationEntry,
)


PATTERN_FIELDS = ("keep_patterns", "strip_patterns")
_BACKREF_DIGITS = "123456789"


def unsupported_construct(pattern: str) -> str | None:
    """Name the first construct outside the portable dialect, or None.

    Lookaround, backreferences, conditionals, atomic groups and possessive
    quantifiers are rejected; everything `re` compiles otherwise passes.
    """
    i = 0
    in_class = False
    size = len(pattern)
    while i < size:
        ch = pattern[i]
        nxt = pattern[i + 1 : i + 2]
        if ch == "\\":
            if not in_class:
                if nxt and nxt in _BACKREF_DIGITS:
                    return "backreference"
                if nxt == "k" and pattern[i + 2 : i + 3] == "<":
                    return "backreference"
            i += 2
            continue
        if in_class:
            if ch == "]":
                in_class = False
            i += 1
            continue
        if ch == "[":
            in_class = True
            i += 1
            if pattern[i : i + 1] == "^":
                i += 1
            if pattern[i : i + 1] == "]":
                i += 1
            continue
        if ch == "(" and nxt == "?":
            head = pattern[i + 2 : i + 4]
            if head.startswith(("<=", "<!")):
                return "lookbehind"
            if head[:1] in ("=", "!"):
                return "lookahead"
            if head.startswith("P="):
                return "backreference"
            if head[:1] == "(":
                return "conditional group"
            if head[:1] == ">":
                return "atomic group"
        if ch in "*+?}" and nxt == "+":
            return "possessive quantifier"
        i += 1
    return None


@lru_cache(maxsize=4096)
def compile_pattern(source: str) -> re.Pattern[str]:
    return re.compile(source)


def _check_pattern(field: str, source: str, entries: list[ValidationEntry]) -> None:
    construct = unsupported_construct(source)
    if construct:
        entries.append(
            ValidationEntry(
                field=field,
                kind=ProblemKind.UNSUPPORTED_CONSTRUCT,
                message=f"{construct} is not supported in {source!r}",
            )
        )
        return
    try:
        compile_pattern(source)
    except re.error as exc:
        entries.append(
            ValidationEntry(
                field=field,
                kind=ProblemKind.BAD_REGEX,
                message=f"{source!r} does not compile: {exc}",
            )
        )


def validate_rule(rule: CompressionRule) -> RuleValidationReport:
    entries: list[ValidationEntry] = []
    if not rule.rule_id.strip():
        entries.append(
            ValidationEntry(field="rule_id", kind=ProblemKind.MISSING_FIELD, message="rule_id is empty")
        )
    if not rule.trigger_regex:
        entries.append(
            ValidationEntry(
                field="trigger_regex", kind=ProblemKind.MISSING_FIELD, message="trigger_regex is empty"
            )
        )
    else:
        _check_pattern("trigger_regex", rule.trigger_regex, entries)
    for name in PATTERN_FIELDS:
        for index, source in enumerate(getattr(rule, name)):
            _check_pattern(f"{name}[{index}]", source, entries)

    if math.isnan(rule.confidence) or not 0.0 <= rule.confidence <= 1.0:
        entries.append(
            ValidationEntry(
                field="confidence",
                kind=ProblemKind.OUT_OF_RANGE,
                message=f"confidence {rule.confidence} is outside [0, 1]",
            )
        )
    for name in ("keep_first_n", "keep_last_n", "times_applied", "times_complained"):
        value = getattr(rule, name)
        if value < 0:
            entries.append(
                ValidationEntry(
                    field=name, kind=ProblemKind.OUT_OF_RANGE, message=f"{name} {value} is negative"
                )
            )
    if rule.max_lines is not None and rule.max_lines < 0:
        entries.append(
            ValidationEntry(
                field="max_lines",
                kind=ProblemKind.OUT_OF_RANGE,
                message=f"max_lines {rule.max_lines} is negative",
            )
        )
    if not rule.strip_patterns and rule.max_lines is None:
        entries.append(
            ValidationEntry(
                field="strip_patterns",
                kind=ProblemKind.INEFFECTIVE,
                message="no strip patterns and no max_lines: the rule never removes a line",
            )
        )
    return RuleValidationReport(rule_id=rule.rule_id, entries=entries)


def rule_from_mapping(data: Any) -> CompressionRule:
    if not isinstance(data, dict):
        raise RuleParseError("expected a single rule object")
    try:
        rule = CompressionRule.model_validate(data)
    except ValidationError as exc:
        error = exc.errors()[0]
        field = ".".join(str(part) for part in error["loc"]) or None
        message = "required field is missing" if error["type"] == "missing" else error["msg"]
        raise RuleParseError(message, field=field) from exc
    report = validate_rule(rule)
    if not report.valid:
        raise RuleValidationError(report)
    return rule


def parse_rule(text: str) -> CompressionRule:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise RuleParseError(f"not a JSON document ({exc.msg} at position {exc.pos})") from exc
    return rule_from_mapping(data)


def rule_to_document(rule: CompressionRule) -> dict[str, Any]:
    document = rule.model_dump()
    for name in PATTERN_FIELDS:
        document[name] = list(document[name])
    if document.get("category") is None:
        document.pop("category", None)
    return document


def serialize_rule(rule: CompressionRule) -> str:
    return json.dumps(rule_to_document(rule), indent=2, ensure_ascii=False)


def load_rules_file(path: str | Path) -> list[CompressionRule]:
    raw = Path(path).read_text(encoding="utf-8")
    try:
        data = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise RuleParseError(f"{path} is not valid JSON ({exc.msg} at position {exc.pos})") from exc
    if not isinstance(data, list):
        raise RuleParseError(f"{path} must hold an array of rule objects")
    return [rule_from_mapping(item) for item in data]


def seed_rules_text() -> str:
    return resources.files("termpress").joinpath("data/seed_rules.json").read_text(encoding="utf-8")


def load_seed_rules() -> list[CompressionRule]:
    return [rule_from_mapping(item) for item in json.loads(seed_rules_text())]


SEED_RULE_IDS = frozenset(rule.rule_id for rule in load_seed_rules())
