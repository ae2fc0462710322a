from __future__ import annotations

import pytest

from termpress.rules import load_seed_rules
from termpress.schemas import CompressionRule


def make_rule(rule_id: str = "test_rule", **fields) -> CompressionRule:
    document = {
        "rule_id": rule_id,
        "trigger_regex": r"\btool\b",
        "strip_patterns": [r"^noise"],
        "keep_first_n": 1,
        "keep_last_n": 1,
    }
    document.update(fields)
    return CompressionRule.model_validate(document)


@pytest.fixture
def seeds() -> dict[str, CompressionRule]:
    return {rule.rule_id: rule for rule in load_seed_rules()}


@pytest.fixture
def pool_path(tmp_path):
    return tmp_path / "pool.json"
