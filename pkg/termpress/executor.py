from __future__ import annotations

import re
from collections.abc import Iterable

from termpress.pool import ranking_score
from termpress.rules import compile_pattern
from termpress.schemas import (
    CompressionResult,
    CompressionRule,
    Coverage,
    ObservationRecord,
    OutputClass,
)


CRITICAL_SIGNALS = [
    re.compile(pattern)
    for pattern in (
        r"Traceback \(most recent call last\)",
        r"SyntaxError",
        r" error:",
        r"^error:",
        r"fatal:",
        r"FATAL",
        r"Segmentation fault",
        r"panicked at",
        r"undefined reference",
        r"AssertionError",
        r"^E: ",
        r"npm ERR!",
    )
]

ANSI_ESCAPE = re.compile(r"\x1B(?:\[[0-?]*[ -/]*[@-~]|\][^\x07\x1B]*(?:\x07|\x1B\\)|[@-Z\\^_-])")
MOTD_START = re.compile(r"^Welcome to Ubuntu\b")
MOTD_END = re.compile(
    r"^Last login:"
    r"|^ \* Support:"
    r"|unminimize"
    r"|applicable law\.$"
    r"|^\d+ updates? can be applied"
)
MOTD_SCAN_LINES = 60
PROMPT_ONLY = re.compile(r"^\s*(?:\([^)]*\)\s*)?[\w.-]+@[\w.-]+:[^\n]*[#$]\s*$|^\s*[#$>]\s*$")

DEFAULT_SPAWN_CHARS = 1500
DEFAULT_SPAWN_LINES = 40


def classify_output(command: str, raw: str) -> OutputClass:
    for line in raw.split("\n"):
        for signal in CRITICAL_SIGNALS:
            if signal.search(line):
                return OutputClass.CRITICAL
    return OutputClass.NORMAL


def _strip_escapes(text: str) -> str:
    return ANSI_ESCAPE.sub("", text).replace("\x1b", "")


def _resolve_carriage_returns(line: str) -> str:
    line = line.rstrip("\r")
    if "\r" not in line:
        return line
    return line.rsplit("\r", 1)[1]


def _drop_motd(lines: list[str]) -> list[str]:
    while True:
        start = 0
        while start < len(lines) and not lines[start].strip():
            start += 1
        if start >= len(lines) or not MOTD_START.search(lines[start]):
            return lines
        end = None
        for index in range(start, min(len(lines), start + MOTD_SCAN_LINES)):
            if MOTD_END.search(lines[index]):
                end = index
        if end is None:
            end = start
            while end + 1 < len(lines) and lines[end + 1].strip():
                end += 1
        end += 1
        while end < len(lines) and not lines[end].strip():
            end += 1
        lines = lines[end:]


def _collapse_polling(lines: list[str]) -> list[str]:
    collapsed: list[str] = []
    for line in lines:
        if collapsed and line == collapsed[-1] and PROMPT_ONLY.match(line):
            continue
        collapsed.append(line)
    return collapsed


def baseline_filter(raw: str) -> str:
    """Escape removal, carriage-return collapse, MOTD banner and polling cleanup."""
    text = _strip_escapes(raw)
    lines = [_resolve_carriage_returns(line) for line in text.split("\n")]
    lines = _drop_motd(lines)
    lines = _collapse_polling(lines)
    return "\n".join(lines)


def _selection_key(rule: CompressionRule) -> tuple[int, float, str]:
    return (rule.priority, -ranking_score(rule), rule.rule_id)


def select_rule(command: str, active_rules: Iterable[CompressionRule]) -> CompressionRule | None:
    matching = [
        rule for rule in active_rules if compile_pattern(rule.trigger_regex).search(command)
    ]
    if not matching:
        return None
    return min(matching, key=_selection_key)


def _matches_any(line: str, patterns: tuple[str, ...]) -> bool:
    return any(compile_pattern(source).search(line) for source in patterns)


def measure(text: str, compressed: str, removed: int, rule_id: str | None) -> CompressionResult:
    before = len(text)
    after = len(compressed)
    return CompressionResult(
        compressed_text=compressed,
        lines_removed=removed,
        chars_before=before,
        chars_after=after,
        ratio=after / before if before else 1.0,
        applied_rule_id=rule_id,
    )


def summary_annotation(rule: CompressionRule, removed: int) -> str:
    return f"{rule.summary_header}\n  [{removed} lines removed]"


def apply_rule(rule: CompressionRule, text: str) -> CompressionResult:
    body_text = text[:-1] if text.endswith("\n") else text
    trailer = "\n" if text.endswith("\n") else ""
    lines = body_text.split("\n")
    total = len(lines)
    first_n = rule.keep_first_n
    last_n = rule.keep_last_n
    if first_n + last_n >= total:
        return measure(text, text, 0, rule.rule_id)

    head = lines[:first_n]
    tail = lines[total - last_n :] if last_n else []
    body = lines[first_n : total - last_n]

    retained: list[str] = []
    for line in body:
        if _matches_any(line, rule.keep_patterns):
            retained.append(line)
            continue
        if _matches_any(line, rule.strip_patterns):
            continue
        if rule.max_lines is not None and len(retained) >= rule.max_lines:
            continue
        retained.append(line)

    removed = len(body) - len(retained)
    if removed == 0:
        return measure(text, text, 0, rule.rule_id)
    output = head + [summary_annotation(rule, removed)] + retained + tail
    return measure(text, "\n".join(output) + trailer, removed, rule.rule_id)


def is_uncovered_size(
    raw: str,
    char_threshold: int = DEFAULT_SPAWN_CHARS,
    line_threshold: int = DEFAULT_SPAWN_LINES,
) -> bool:
    return len(raw) > char_threshold or raw.count("\n") + 1 > line_threshold


def compress(
    step_index: int,
    command: str,
    raw: str,
    active_rules: Iterable[CompressionRule],
    char_threshold: int = DEFAULT_SPAWN_CHARS,
    line_threshold: int = DEFAULT_SPAWN_LINES,
) -> ObservationRecord:
    output_class = classify_output(command, raw)
    if output_class is OutputClass.CRITICAL:
        return ObservationRecord(
            step_index=step_index,
            command=command,
            raw_output=raw,
            output_class=output_class,
            result=measure(raw, raw, 0, None),
            coverage=Coverage.BYPASSED,
        )

    filtered = baseline_filter(raw)
    rule = select_rule(command, active_rules)
    if rule is not None:
        applied = apply_rule(rule, filtered)
        # sizes are reported against the raw observation
        result = measure(raw, applied.compressed_text, applied.lines_removed, rule.rule_id)
        coverage = Coverage.COVERED
    else:
        result = measure(raw, filtered, 0, None)
        uncovered = is_uncovered_size(raw, char_threshold, line_threshold)
        coverage = Coverage.UNCOVERED if uncovered else Coverage.COVERED
    return ObservationRecord(
        step_index=step_index,
        command=command,
        raw_output=raw,
        output_class=output_class,
        result=result,
        coverage=coverage,
    )
