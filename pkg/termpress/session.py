from __future__ import annotations

import logging
import re
from collections import Counter
from dataclasses import dataclass, field

from termpress.client import Gateway, propose_rules, spawn_replacement, spawn_rule
from termpress.complaints import detect, feedback_text
from termpress.errors import GatewayError, PromptBindingError, ResponseParseError, TermpressError
from termpress.executor import apply_rule, compress, measure
from termpress.pool import top_k
from termpress.schemas import (
    CompressionRule,
    Coverage,
    FollowupEvent,
    GlobalRulePool,
    ObservationRecord,
    RuleOrigin,
    RuleOutcome,
    TranscriptEntry,
)
from termpress.settings import DEFAULT_COMPLAINT_PHRASES, Settings


logger = logging.getLogger(__name__)

SPAWN_FAILURES = (GatewayError, ResponseParseError, PromptBindingError)
_VERSIONED = re.compile(r"^(?P<base>.+)_v(?P<n>\d+)$")


@dataclass
class SessionConfig:
    k: int = 30
    tau: float = 0.3
    spawn_char_threshold: int = 1500
    spawn_line_threshold: int = 40
    rule_cap: int = 12
    confidence_step: float = 0.05
    complaint_window: int = 3
    complaint_phrases: list[str] = field(default_factory=lambda: list(DEFAULT_COMPLAINT_PHRASES))
    intra_task_evolution: bool = True

    @classmethod
    def from_settings(cls, settings: Settings) -> SessionConfig:
        return cls(
            k=settings.top_k,
            tau=settings.tau,
            spawn_char_threshold=settings.spawn_char_threshold,
            spawn_line_threshold=settings.spawn_line_threshold,
            rule_cap=settings.session_rule_cap,
            confidence_step=settings.confidence_step,
            complaint_window=settings.complaint_window,
            complaint_phrases=list(settings.complaint_phrases),
            intra_task_evolution=settings.intra_task_evolution,
        )


@dataclass
class ActiveRule:
    rule: CompressionRule
    origin: RuleOrigin
    task_confidence: float = 1.0
    delta_applications: int = 0
    frozen: bool = False
    shadowed: bool = False
    complained: bool = False

    @property
    def rule_id(self) -> str:
        return self.rule.rule_id

    @property
    def eligible(self) -> bool:
        return not self.frozen and not self.shadowed


@dataclass
class TaskSession:
    task_id: str
    instruction: str
    category: str | None
    config: SessionConfig
    active_rules: list[ActiveRule] = field(default_factory=list)
    history: list[ObservationRecord] = field(default_factory=list)
    diagnostics: list[str] = field(default_factory=list)
    finalized: bool = False

    def active(self, rule_id: str | None) -> ActiveRule | None:
        for entry in self.active_rules:
            if entry.rule_id == rule_id:
                return entry
        return None

    def eligible_rules(self) -> list[CompressionRule]:
        return [entry.rule for entry in self.active_rules if entry.eligible]

    def record(self, step_index: int) -> ObservationRecord | None:
        for record in self.history:
            if record.step_index == step_index:
                return record
        return None

    @property
    def at_capacity(self) -> bool:
        return len(self.active_rules) >= self.config.rule_cap

    def unique_id(self, rule_id: str) -> str:
        if self.active(rule_id) is None:
            return rule_id
        n = 2
        while self.active(f"{rule_id}_{n}") is not None:
            n += 1
        return f"{rule_id}_{n}"

    def add(self, rule: CompressionRule, origin: RuleOrigin, task_confidence: float = 1.0) -> ActiveRule:
        updates: dict[str, object] = {}
        rule_id = self.unique_id(rule.rule_id)
        if rule_id != rule.rule_id:
            updates["rule_id"] = rule_id
        if origin is not RuleOrigin.SELECTED and rule.category is None and self.category:
            updates["category"] = self.category
        if updates:
            rule = rule.model_copy(update=updates)
        entry = ActiveRule(rule=rule, origin=origin, task_confidence=task_confidence)
        self.active_rules.append(entry)
        return entry

    def origin_counts(self) -> dict[str, int]:
        counts = Counter(entry.origin.value for entry in self.active_rules)
        return {origin.value: counts.get(origin.value, 0) for origin in RuleOrigin}

    def transcript(self) -> list[TranscriptEntry]:
        return [
            TranscriptEntry(
                step_index=record.step_index,
                command=record.command,
                coverage=record.coverage,
                applied_rule_id=record.result.applied_rule_id,
                lines_removed=record.result.lines_removed,
                chars_before=record.result.chars_before,
                chars_after=record.result.chars_after,
                ratio=record.result.ratio,
            )
            for record in self.history
        ]


def next_version_id(rule_id: str) -> str:
    match = _VERSIONED.match(rule_id)
    if match:
        return f"{match.group('base')}_v{int(match.group('n')) + 1}"
    return f"{rule_id}_v2"


async def init_session(
    task_id: str,
    instruction: str,
    category: str | None,
    terminal_state: str,
    pool: GlobalRulePool,
    gateway: Gateway,
    config: SessionConfig | None = None,
) -> TaskSession:
    config = config or SessionConfig()
    session = TaskSession(task_id=task_id, instruction=instruction, category=category, config=config)
    candidates = top_k(pool, config.k, category)

    try:
        proposal = await propose_rules(gateway, instruction, category, terminal_state, candidates)
    except SPAWN_FAILURES as exc:
        logger.warning("task %s: rule proposal failed (%s); using raw candidates", task_id, exc)
        session.diagnostics.append(f"proposal failed: {exc}")
        for rule in candidates[: config.rule_cap]:
            session.add(rule, RuleOrigin.SELECTED, task_confidence=rule.confidence)
        return session

    session.diagnostics.extend(proposal.diagnostics)
    by_id = {rule.rule_id: rule for rule in candidates}
    for rule_id in proposal.selected_rule_ids:
        rule = by_id.get(rule_id)
        if rule is None:
            session.diagnostics.append(f"selected rule {rule_id} is not among the candidates")
            continue
        if session.active(rule_id) is not None:
            continue
        if session.at_capacity:
            session.diagnostics.append(f"rule cap reached, dropped selected {rule_id}")
            continue
        session.add(rule, RuleOrigin.SELECTED, task_confidence=rule.confidence)
    planned = [(rule, RuleOrigin.MODIFIED) for rule in proposal.modified_rules]
    planned += [(rule, RuleOrigin.NEW_PLAN) for rule in proposal.new_rules]
    for rule, origin in planned:
        if session.at_capacity:
            session.diagnostics.append(f"rule cap reached, dropped {rule.rule_id}")
            continue
        session.add(rule, origin)

    for entry in session.active_rules:
        if entry.origin is RuleOrigin.MODIFIED and entry.rule_id.endswith("_mod"):
            source = session.active(entry.rule_id[: -len("_mod")])
            if source is not None and source.origin is RuleOrigin.SELECTED:
                source.shadowed = True

    for message in session.diagnostics:
        logger.info("task %s: %s", task_id, message)
    return session


async def step(
    session: TaskSession,
    step_index: int,
    command: str,
    raw_output: str,
    gateway: Gateway,
) -> ObservationRecord:
    if session.finalized:
        raise TermpressError(f"session {session.task_id} is finalized")
    config = session.config
    record = compress(
        step_index,
        command,
        raw_output,
        session.eligible_rules(),
        config.spawn_char_threshold,
        config.spawn_line_threshold,
    )

    spawning = config.intra_task_evolution and not session.at_capacity
    if record.coverage is Coverage.UNCOVERED and spawning:
        filtered = record.result.compressed_text
        try:
            spawned = await spawn_rule(
                gateway, command, filtered, session.instruction, output_length=len(raw_output)
            )
        except SPAWN_FAILURES as exc:
            logger.warning("task %s step %d: rule spawn failed (%s)", session.task_id, step_index, exc)
            session.diagnostics.append(f"spawn failed at step {step_index}: {exc}")
        else:
            entry = session.add(spawned, RuleOrigin.NEW_MIDTASK)
            logger.info("task %s step %d: spawned rule %s", session.task_id, step_index, entry.rule_id)
            applied = apply_rule(entry.rule, filtered)
            record = record.model_copy(
                update={
                    "result": measure(
                        raw_output, applied.compressed_text, applied.lines_removed, entry.rule_id
                    ),
                    "coverage": Coverage.COVERED,
                }
            )

    if record.compressed:
        entry = session.active(record.result.applied_rule_id)
        if entry is not None:
            entry.delta_applications += 1
            entry.task_confidence = min(1.0, entry.task_confidence + config.confidence_step)
    session.history.append(record)
    return record


async def report_feedback(
    session: TaskSession,
    followup: FollowupEvent,
    gateway: Gateway,
) -> list[str]:
    config = session.config
    if not config.intra_task_evolution:
        return []
    complaint = detect(session.history, followup, config.complaint_window, config.complaint_phrases)
    if complaint is None:
        return []
    record = session.record(complaint.step_index)
    entry = session.active(record.result.applied_rule_id) if record else None
    if entry is None or entry.frozen:
        return []

    entry.frozen = True
    entry.complained = True
    entry.task_confidence = 0.0
    logger.info(
        "task %s: complaint on step %d (%s), froze %s",
        session.task_id,
        complaint.step_index,
        complaint.reason.value,
        entry.rule_id,
    )

    if session.at_capacity:
        session.diagnostics.append(f"rule cap reached, no replacement for {entry.rule_id}")
        return [entry.rule_id]
    try:
        replacement = await spawn_replacement(
            gateway,
            entry.rule,
            record.command,
            record.raw_output,
            feedback_text(complaint, followup),
        )
    except SPAWN_FAILURES as exc:
        logger.warning("task %s: replacement for %s failed (%s)", session.task_id, entry.rule_id, exc)
        session.diagnostics.append(f"replacement for {entry.rule_id} failed: {exc}")
    else:
        replacement = replacement.model_copy(update={"rule_id": next_version_id(entry.rule_id)})
        added = session.add(replacement, RuleOrigin.REPLACEMENT)
        logger.info("task %s: %s replaces %s", session.task_id, added.rule_id, entry.rule_id)
    return [entry.rule_id]


def finalize(session: TaskSession) -> list[RuleOutcome]:
    session.finalized = True
    outcomes: list[RuleOutcome] = []
    for entry in session.active_rules:
        body = None
        if entry.origin is not RuleOrigin.SELECTED:
            body = entry.rule.model_copy(
                update={"confidence": entry.task_confidence, "times_applied": 0, "times_complained": 0}
            )
        outcomes.append(
            RuleOutcome(
                rule_id=entry.rule_id,
                delta_applications=entry.delta_applications,
                task_confidence=0.0 if entry.complained else entry.task_confidence,
                complained=entry.complained,
                rule_body=body,
            )
        )
    return outcomes
