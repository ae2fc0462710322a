import json

import pytest

from termpress.errors import RuleParseError, RuleValidationError
from termpress.rules import (
    SEED_RULE_IDS,
    load_rules_file,
    load_seed_rules,
    parse_rule,
    rule_to_document,
    serialize_rule,
    unsupported_construct,
    validate_rule,
)
from termpress.schemas import ProblemKind, Verdict

from tests.conftest import make_rule


def test_seed_rules_load_in_document_order():
    ids = [rule.rule_id for rule in load_seed_rules()]
    assert ids == [
        "seed_git_noise",
        "seed_heredoc",
        "seed_pip_install",
        "seed_apt_install",
        "seed_compiler_output",
        "seed_openssl",
    ]
    assert SEED_RULE_IDS == frozenset(ids)


def test_seed_rules_share_starting_counters():
    for rule in load_seed_rules():
        assert rule.confidence == 0.8
        assert rule.times_applied == 10
        assert rule.times_complained == 0
        assert validate_rule(rule).verdict is Verdict.VALID


def test_parse_rule_applies_defaults():
    rule = parse_rule('{"rule_id": "x", "trigger_regex": "foo", "strip_patterns": ["bar"]}')
    assert rule.keep_first_n == 5
    assert rule.keep_last_n == 10
    assert rule.max_lines is None
    assert rule.priority == 42
    assert rule.confidence == 1.0


def test_parse_rule_missing_trigger_names_field():
    with pytest.raises(RuleParseError) as info:
        parse_rule('{"rule_id": "x"}')
    assert info.value.field == "trigger_regex"


def test_parse_rule_rejects_non_json():
    with pytest.raises(RuleParseError):
        parse_rule("rule_id: x")


def test_parse_rule_rejects_array():
    with pytest.raises(RuleParseError):
        parse_rule("[]")


@pytest.mark.parametrize(
    "pattern, construct",
    [
        (r"(?<=foo)bar", "lookbehind"),
        (r"(?<!foo)bar", "lookbehind"),
        (r"foo(?=bar)", "lookahead"),
        (r"foo(?!bar)", "lookahead"),
        (r"(a)\1", "backreference"),
        (r"(?P<x>a)(?P=x)", "backreference"),
        (r"(?>abc)", "atomic group"),
        (r"a++", "possessive quantifier"),
        (r"(a)?(?(1)b|c)", "conditional group"),
    ],
)
def test_unsupported_constructs_are_named(pattern, construct):
    assert unsupported_construct(pattern) == construct


@pytest.mark.parametrize(
    "pattern",
    [r"^\s*Collecting \S+", r"[(?<=]", r"(?:ab)+", r"\\1", r"(?i)error", r"\d{2,}"],
)
def test_portable_patterns_pass(pattern):
    assert unsupported_construct(pattern) is None


def test_lookbehind_rule_is_invalid():
    with pytest.raises(RuleValidationError) as info:
        parse_rule(json.dumps({"rule_id": "x", "trigger_regex": "(?<=a)b", "strip_patterns": ["c"]}))
    kinds = {entry.kind for entry in info.value.report.entries}
    assert ProblemKind.UNSUPPORTED_CONSTRUCT in kinds


def test_bad_regex_in_strip_pattern_is_reported_with_index():
    report = validate_rule(make_rule(strip_patterns=["ok", "(unclosed"]))
    assert report.verdict is Verdict.INVALID
    assert [entry.field for entry in report.entries] == ["strip_patterns[1]"]
    assert report.entries[0].kind is ProblemKind.BAD_REGEX


@pytest.mark.parametrize(
    "fields",
    [{"keep_first_n": -1}, {"keep_last_n": -2}, {"max_lines": -1}, {"confidence": 1.5}],
)
def test_out_of_range_values_are_fatal(fields):
    report = validate_rule(make_rule(**fields))
    assert not report.valid
    assert report.entries[0].kind is ProblemKind.OUT_OF_RANGE


def test_rule_that_cannot_remove_lines_is_only_a_warning():
    report = validate_rule(make_rule(strip_patterns=[], max_lines=None))
    assert report.valid
    assert [entry.kind for entry in report.entries] == [ProblemKind.INEFFECTIVE]


def test_serialized_seed_parses_back(seeds):
    rule = seeds["seed_heredoc"]
    assert parse_rule(serialize_rule(rule)) == rule


def test_unknown_fields_survive_serialization():
    rule = parse_rule('{"rule_id": "x", "trigger_regex": "a", "strip_patterns": ["b"], "author": "ops"}')
    assert rule_to_document(rule)["author"] == "ops"


def test_load_rules_file(tmp_path, seeds):
    path = tmp_path / "rules.json"
    path.write_text(json.dumps([rule_to_document(seeds["seed_openssl"])]))
    assert [rule.rule_id for rule in load_rules_file(path)] == ["seed_openssl"]


def test_load_rules_file_requires_array(tmp_path):
    path = tmp_path / "rules.json"
    path.write_text('{"rule_id": "x"}')
    with pytest.raises(RuleParseError):
        load_rules_file(path)
