from __future__ import annotations

import asyncio
import json
import logging
import statistics
from collections.abc import Sequence
from pathlib import Path

from pydantic import ValidationError

from termpress.client import Gateway
from termpress.errors import TrajectoryError
from termpress.pool import PoolStore, retention, save_pool, seed_pool
from termpress.schemas import (
    CompressionReport,
    EvolutionRunReport,
    FollowupEvent,
    FollowupKind,
    GlobalRulePool,
    RuleOutcome,
    RuleStats,
    TaskCompressionReport,
    Trajectory,
    TrajectoryStep,
)
from termpress.session import SessionConfig, TaskSession, finalize, init_session, report_feedback, step


logger = logging.getLogger(__name__)

CHARS_PER_TOKEN = 4


def load_trajectory(path: str | Path) -> Trajectory:
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise TrajectoryError(str(path), f"cannot read trajectory: {exc}") from exc
    records: list[tuple[int, dict]] = []
    for number, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise TrajectoryError(str(path), f"invalid JSON: {exc.msg}", line=number) from exc
        if not isinstance(record, dict):
            raise TrajectoryError(str(path), "record must be an object", line=number)
        records.append((number, record))
    if not records or records[0][1].get("kind") != "task":
        raise TrajectoryError(str(path), "first record must be the task header", line=1)

    _, header = records[0]
    steps: list[TrajectoryStep] = []
    for number, record in records[1:]:
        if record.get("kind") != "step":
            raise TrajectoryError(str(path), f"unexpected record kind {record.get('kind')!r}", line=number)
        try:
            steps.append(TrajectoryStep.model_validate({k: v for k, v in record.items() if k != "kind"}))
        except ValidationError as exc:
            raise TrajectoryError(str(path), str(exc.errors()[0]["msg"]), line=number) from exc
    try:
        return Trajectory(
            task_id=header.get("task_id", ""),
            instruction=header.get("instruction", ""),
            category=header.get("category"),
            terminal_state=header.get("terminal_state", ""),
            steps=steps,
        )
    except ValidationError as exc:
        raise TrajectoryError(str(path), str(exc.errors()[0]["msg"])) from exc


def dump_trajectory(trajectory: Trajectory, path: str | Path) -> None:
    header = {
        "kind": "task",
        "task_id": trajectory.task_id,
        "instruction": trajectory.instruction,
        "category": trajectory.category,
        "terminal_state": trajectory.terminal_state,
    }
    lines = [json.dumps(header)]
    for item in trajectory.steps:
        lines.append(json.dumps({"kind": "step", **item.model_dump()}))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def followups(trajectory: Trajectory, position: int) -> list[FollowupEvent]:
    """Follow-up signals observed after the step at `position`, in the order they arrive."""
    current = trajectory.steps[position]
    following = trajectory.steps[position + 1] if position + 1 < len(trajectory.steps) else None
    at_step = following.step_index if following else current.step_index + 1
    events: list[FollowupEvent] = []
    if current.agent_message:
        events.append(
            FollowupEvent(
                kind=FollowupKind.AGENT_MESSAGE,
                text=current.agent_message,
                at_step=at_step,
                refers_to_step=current.step_index,
            )
        )
    if following is not None:
        events.append(
            FollowupEvent(kind=FollowupKind.NEXT_COMMAND, text=following.command, at_step=at_step)
        )
    return events


def task_report(trajectory: Trajectory, session: TaskSession) -> TaskCompressionReport:
    entries = [record for record in session.history if record.compressed]
    before = sum(record.result.chars_before for record in entries)
    after = sum(record.result.chars_after for record in entries)
    per_rule: dict[str, RuleStats] = {}
    for record in entries:
        stats = per_rule.setdefault(record.result.applied_rule_id, RuleStats())
        stats.entries += 1
        stats.chars_saved += record.result.chars_before - record.result.chars_after
    return TaskCompressionReport(
        task_id=trajectory.task_id,
        episodes=len(trajectory.steps),
        entries=len(entries),
        observed_chars=sum(record.result.chars_before for record in session.history),
        chars_before=before,
        chars_after=after,
        chars_saved=before - after,
        overall_ratio=after / before if before else 1.0,
        best_ratio=min((record.result.ratio for record in entries), default=1.0),
        estimated_tokens_saved=(before - after) // CHARS_PER_TOKEN,
        per_rule=dict(sorted(per_rule.items())),
        rule_origins=session.origin_counts(),
        complained_rules=[entry.rule_id for entry in session.active_rules if entry.complained],
    )


async def replay_task(
    trajectory: Trajectory,
    pool: GlobalRulePool,
    gateway: Gateway,
    config: SessionConfig | None = None,
) -> tuple[TaskCompressionReport, list[RuleOutcome]]:
    session = await init_session(
        trajectory.task_id,
        trajectory.instruction,
        trajectory.category,
        trajectory.terminal_state,
        pool,
        gateway,
        config,
    )
    for position, item in enumerate(trajectory.steps):
        await step(session, item.step_index, item.command, item.raw_output, gateway)
        for event in followups(trajectory, position):
            await report_feedback(session, event, gateway)
    outcomes = finalize(session)
    return task_report(trajectory, session), outcomes


def summarize(
    reports: Sequence[TaskCompressionReport],
    failures: dict[str, str] | None = None,
) -> CompressionReport:
    before = sum(report.chars_before for report in reports)
    after = sum(report.chars_after for report in reports)
    return CompressionReport(
        tasks=list(reports),
        episodes=sum(report.episodes for report in reports),
        entries=sum(report.entries for report in reports),
        observed_chars=sum(report.observed_chars for report in reports),
        chars_before=before,
        chars_after=after,
        chars_saved=before - after,
        overall_ratio=after / before if before else 1.0,
        best_ratio=min((report.best_ratio for report in reports if report.entries), default=1.0),
        estimated_tokens_saved=(before - after) // CHARS_PER_TOKEN,
        failures=dict(failures or {}),
    )


def rolling_std(series: Sequence[float], window: int = 3) -> list[float]:
    if window < 2:
        raise ValueError("window must be at least 2")
    return [
        statistics.stdev(series[end - window + 1 : end + 1])
        for end in range(window - 1, len(series))
    ]


def task_score(report: CompressionReport) -> float:
    if not report.observed_chars:
        return 0.0
    return report.chars_saved / report.observed_chars


async def replay_all(
    trajectories: Sequence[Trajectory],
    pool: GlobalRulePool,
    gateway: Gateway,
    config: SessionConfig | None = None,
    batch_size: int = 4,
    global_evolution: bool = True,
) -> CompressionReport:
    if not global_evolution:
        pool = GlobalRulePool(capacity=pool.capacity)
    reports: list[TaskCompressionReport] = []
    failures: dict[str, str] = {}
    for start in range(0, len(trajectories), batch_size):
        wave = trajectories[start : start + batch_size]
        results = await asyncio.gather(
            *(replay_task(t, pool, gateway, config) for t in wave), return_exceptions=True
        )
        for trajectory, result in zip(wave, results):
            if isinstance(result, Exception):
                logger.error("task %s failed: %s", trajectory.task_id, result)
                failures[trajectory.task_id] = str(result)
                continue
            if isinstance(result, BaseException):
                raise result
            reports.append(result[0])
    return summarize(reports, failures)


async def run_evolution(
    tasks: Sequence[Trajectory],
    pool_path: str | Path,
    gateway: Gateway,
    batch_size: int = 4,
    turns: int = 10,
    retention_threshold: float = 90.0,
    retention_k: int = 30,
    config: SessionConfig | None = None,
    alpha: float = 0.3,
    min_turns_before_stop: int = 2,
    global_evolution: bool = True,
) -> list[EvolutionRunReport]:
    """Replay every task once per turn, writing outcomes back between waves.

    Each wave of `batch_size` sessions starts from one pool snapshot; its
    write-backs then land in task order before the next wave loads.

    With `global_evolution` off every session starts from an empty pool. With
    intra-task evolution off the pool serves as a fixed source. Either way
    nothing is written back.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be at least 1")
    config = config or SessionConfig()
    pool_path = Path(pool_path)
    if not pool_path.exists():
        save_pool(seed_pool(), pool_path)
    store = PoolStore(pool_path, tau=config.tau, alpha=alpha, create_missing=False)
    writes_back = global_evolution and config.intra_task_evolution
    if not writes_back:
        logger.info("pool write-back disabled, %s stays unchanged", pool_path)

    runs: list[EvolutionRunReport] = []
    scores: list[float] = []
    for turn in range(1, turns + 1):
        turn_start = await store.load()
        reports: list[TaskCompressionReport] = []
        failures: dict[str, str] = {}
        for start in range(0, len(tasks), batch_size):
            wave = tasks[start : start + batch_size]
            snapshot = await store.load()
            if not global_evolution:
                snapshot = GlobalRulePool(capacity=snapshot.capacity)
            results = await asyncio.gather(
                *(replay_task(t, snapshot, gateway, config) for t in wave), return_exceptions=True
            )
            for trajectory, result in zip(wave, results):
                if isinstance(result, Exception):
                    logger.error("turn %d: task %s failed: %s", turn, trajectory.task_id, result)
                    failures[trajectory.task_id] = str(result)
                    continue
                if isinstance(result, BaseException):
                    raise result
                report, outcomes = result
                reports.append(report)
                if not writes_back:
                    continue
                written = await store.write_back(outcomes)
                for message in written.diagnostics:
                    logger.warning("turn %d: task %s: %s", turn, trajectory.task_id, message)

        turn_end = await store.load()
        compression = summarize(reports, failures)
        scores.append(task_score(compression))
        deviations = rolling_std(scores)
        kept = retention(turn_start, turn_end, retention_k, run_index=turn)
        stop = turn >= min_turns_before_stop and kept.retention_percent >= retention_threshold
        runs.append(
            EvolutionRunReport(
                turn=turn,
                retention=kept,
                generation=turn_end.generation,
                pool_size=len(turn_end.rules),
                task_score=scores[-1],
                rolling_std=deviations[-1] if deviations else None,
                counter_total=sum(rule.times_applied for rule in turn_end.rules),
                compression=compression,
                stopped_early=stop,
            )
        )
        logger.info(
            "turn %d: retention %.1f%%, generation %d, %d rules",
            turn,
            kept.retention_percent,
            turn_end.generation,
            len(turn_end.rules),
        )
        if stop:
            logger.info("retention %.1f%% reached the threshold, stopping", kept.retention_percent)
            break
    return runs


def render_table(report: CompressionReport) -> str:
    header = ("Task", "Episodes", "Entries", "Chars saved", "Overall ratio", "Best ratio", "Est. tokens")
    rows = [
        (
            task.task_id,
            str(task.episodes),
            str(task.entries),
            f"{task.chars_saved:,}",
            f"{task.overall_ratio:.3f}",
            f"{task.best_ratio:.3f}",
            f"{task.estimated_tokens_saved:,}",
        )
        for task in report.tasks
    ]
    rows.append(
        (
            "TOTAL",
            str(report.episodes),
            str(report.entries),
            f"{report.chars_saved:,}",
            f"{report.overall_ratio:.3f}",
            f"{report.best_ratio:.3f}",
            f"{report.estimated_tokens_saved:,}",
        )
    )
    widths = [max(len(row[i]) for row in [header, *rows]) for i in range(len(header))]

    def line(cells: Sequence[str]) -> str:
        first = cells[0].ljust(widths[0])
        rest = [cell.rjust(width) for cell, width in zip(cells[1:], widths[1:])]
        return "  ".join([first, *rest])

    out = [line(header), "  ".join("-" * width for width in widths)]
    out += [line(row) for row in rows]
    for task_id, message in sorted(report.failures.items()):
        out.append(f"FAILED {task_id}: {message}")
    return "\n".join(out)
