from __future__ import annotations

import asyncio
import json
import logging
import os
import tempfile
from collections.abc import Iterable
from pathlib import Path
from typing import Any

from filelock import FileLock

from termpress.errors import (
    PoolCorruptError,
    PoolFileMissingError,
    PoolSchemaError,
    RuleParseError,
    RuleValidationError,
)
from termpress.rules import SEED_RULE_IDS, load_seed_rules, rule_from_mapping, rule_to_document
from termpress.schemas import (
    CompressionRule,
    GlobalRulePool,
    RetentionReport,
    RuleOutcome,
    WriteBackResult,
)


logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
DEFAULT_CAPACITY = 500


def ranking_score(rule: CompressionRule) -> float:
    return rule.confidence * (rule.times_applied + 1)


def top_k(pool: GlobalRulePool, k: int, category: str | None = None) -> list[CompressionRule]:
    def key(rule: CompressionRule) -> tuple[float, int, str]:
        return (-ranking_score(rule), -pool.last_written.get(rule.rule_id, -1), rule.rule_id)

    ranked = sorted(pool.rules, key=key)
    if category:
        ranked = [r for r in ranked if r.category == category] + [
            r for r in ranked if r.category != category
        ]
    return ranked[:k]


def _clamp(value: float) -> float:
    return min(1.0, max(0.0, value))


def _evict(
    rules: dict[str, CompressionRule],
    last_written: dict[str, int],
    capacity: int,
) -> list[str]:
    evicted: list[str] = []
    while len(rules) > capacity:
        candidates = [rule for rule in rules.values() if rule.rule_id not in SEED_RULE_IDS]
        if not candidates:
            break
        victim = min(
            candidates,
            key=lambda r: (ranking_score(r), last_written.get(r.rule_id, -1), r.rule_id),
        )
        rules.pop(victim.rule_id)
        last_written.pop(victim.rule_id, None)
        evicted.append(victim.rule_id)
    return evicted


def write_back(
    pool: GlobalRulePool,
    outcomes: Iterable[RuleOutcome],
    tau: float,
    alpha: float = 0.3,
) -> WriteBackResult:
    """Fold one task's outcomes into a new pool; the input pool is left untouched."""
    outcomes = list(outcomes)
    rules = {rule.rule_id: rule for rule in pool.rules}
    last_written = dict(pool.last_written)
    generation = pool.generation + 1
    result = WriteBackResult(pool=pool)

    complained = {outcome.rule_id for outcome in outcomes if outcome.complained}
    for rule_id in sorted(complained):
        if rules.pop(rule_id, None) is not None:
            last_written.pop(rule_id, None)
            result.removed.append(rule_id)
            logger.info("removed complained rule %s from pool", rule_id)

    for outcome in outcomes:
        if outcome.rule_id in complained:
            continue
        stored = rules.get(outcome.rule_id)
        if stored is None and outcome.rule_body is None:
            message = f"outcome for {outcome.rule_id} references no pooled rule and carries no body"
            result.diagnostics.append(message)
            logger.warning(message)
            continue
        if outcome.delta_applications < 1 or outcome.task_confidence < tau:
            continue
        if stored is None:
            rules[outcome.rule_id] = outcome.rule_body.model_copy(
                update={
                    "rule_id": outcome.rule_id,
                    "confidence": _clamp(outcome.task_confidence),
                    "times_applied": outcome.delta_applications,
                    "times_complained": 0,
                }
            )
            result.inserted.append(outcome.rule_id)
        else:
            confidence = (1 - alpha) * stored.confidence + alpha * outcome.task_confidence
            rules[outcome.rule_id] = stored.model_copy(
                update={
                    "confidence": _clamp(confidence),
                    "times_applied": stored.times_applied + outcome.delta_applications,
                }
            )
            result.updated.append(outcome.rule_id)
        last_written[outcome.rule_id] = generation

    result.evicted = _evict(rules, last_written, pool.capacity)
    if result.evicted:
        logger.info("evicted %d rules over capacity %d", len(result.evicted), pool.capacity)

    result.pool = GlobalRulePool(
        schema_version=pool.schema_version,
        generation=generation,
        capacity=pool.capacity,
        rules=list(rules.values()),
        last_written=last_written,
    )
    return result


def retention(
    pool_prev: GlobalRulePool,
    pool_curr: GlobalRulePool,
    k: int,
    run_index: int = 0,
) -> RetentionReport:
    previous = {rule.rule_id for rule in top_k(pool_prev, k)}
    current = {rule.rule_id for rule in top_k(pool_curr, k)}
    retained = len(previous & current)
    return RetentionReport(
        run_index=run_index,
        k=k,
        retained_count=retained,
        retention_percent=100.0 * retained / k,
        undersized=len(pool_prev.rules) < k or len(pool_curr.rules) < k,
    )


def seed_pool(capacity: int = DEFAULT_CAPACITY) -> GlobalRulePool:
    return GlobalRulePool(schema_version=SCHEMA_VERSION, capacity=capacity, rules=load_seed_rules())


def pool_to_document(pool: GlobalRulePool) -> dict[str, Any]:
    return {
        "schema_version": pool.schema_version,
        "generation": pool.generation,
        "capacity": pool.capacity,
        "rules": [rule_to_document(rule) for rule in pool.rules],
        "last_written": dict(sorted(pool.last_written.items())),
    }


def pool_from_document(document: Any, path: str = "<memory>") -> GlobalRulePool:
    if not isinstance(document, dict):
        raise PoolCorruptError(path, "pool document must be a JSON object")
    found = document.get("schema_version")
    if found != SCHEMA_VERSION:
        raise PoolSchemaError(path, found, SCHEMA_VERSION)
    try:
        rules = [rule_from_mapping(item) for item in document.get("rules", [])]
    except (RuleParseError, RuleValidationError) as exc:
        raise PoolCorruptError(path, f"invalid rule: {exc}") from exc
    ids = [rule.rule_id for rule in rules]
    if len(ids) != len(set(ids)):
        raise PoolCorruptError(path, "duplicate rule_id in pool")
    try:
        return GlobalRulePool(
            schema_version=found,
            generation=document.get("generation", 0),
            capacity=document.get("capacity", DEFAULT_CAPACITY),
            rules=rules,
            last_written=document.get("last_written", {}),
        )
    except ValueError as exc:
        raise PoolCorruptError(path, str(exc)) from exc


def load_pool(path: str | Path, create_missing: bool = True) -> GlobalRulePool:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        if create_missing:
            logger.info("no pool at %s, starting from the seed rules", path)
            return seed_pool()
        raise PoolFileMissingError(str(path)) from None
    try:
        document = json.loads(text)
    except json.JSONDecodeError as exc:
        offset = len(text[: exc.pos].encode("utf-8"))
        raise PoolCorruptError(str(path), exc.msg, offset=offset) from exc
    return pool_from_document(document, str(path))


def save_pool(pool: GlobalRulePool, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = json.dumps(pool_to_document(pool), indent=2, ensure_ascii=False) + "\n"
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as handle:
            handle.write(payload)
            handle.flush()
            os.fsync(handle.fileno())
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


class PoolStore:
    """A pool file shared by concurrent sessions and processes.

    Reads never lock: saves replace the file atomically. Write-backs are
    read-modify-write cycles serialized by an in-process lock and a lock file
    next to the pool.
    """

    def __init__(
        self,
        path: str | Path,
        tau: float = 0.3,
        alpha: float = 0.3,
        create_missing: bool = True,
    ) -> None:
        self.path = Path(path)
        self.tau = tau
        self.alpha = alpha
        self.create_missing = create_missing
        self._lock = asyncio.Lock()
        self._file_lock = FileLock(f"{self.path}.lock")

    def load_sync(self) -> GlobalRulePool:
        return load_pool(self.path, create_missing=self.create_missing)

    async def load(self) -> GlobalRulePool:
        return await asyncio.to_thread(self.load_sync)

    def write_back_sync(self, outcomes: Iterable[RuleOutcome]) -> WriteBackResult:
        with self._file_lock:
            pool = self.load_sync()
            result = write_back(pool, outcomes, self.tau, self.alpha)
            save_pool(result.pool, self.path)
        return result

    async def write_back(self, outcomes: Iterable[RuleOutcome]) -> WriteBackResult:
        outcomes = list(outcomes)
        async with self._lock:
            return await asyncio.to_thread(self.write_back_sync, outcomes)
