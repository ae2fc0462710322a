from __future__ import annotations

import re
from collections.abc import Sequence

from termpress.schemas import (
    Complaint,
    ComplaintReason,
    FollowupEvent,
    FollowupKind,
    ObservationRecord,
    OutputClass,
)
from termpress.settings import DEFAULT_COMPLAINT_PHRASES


DEFAULT_WINDOW = 3

_TRAILING_PAGER = re.compile(r"\s*\|\s*(?:head|tail)(?:\s+-n\s*\d+|\s+-\d+|\s+--lines[= ]\d+)?\s*$")
_QUIET_FLAGS = {"-q", "--quiet"}
_VERBOSE_FLAGS = {"-v", "--verbose"}


def normalize_command(command: str) -> str:
    return " ".join(command.split())


def _canonical(command: str) -> tuple[str, bool, bool, bool]:
    """Strip the output-narrowing parts of a command.

    Returns the canonical command plus whether a trailing pager, a quiet flag
    or a verbose flag was present.
    """
    text = normalize_command(command)
    piped = bool(_TRAILING_PAGER.search(text))
    if piped:
        text = _TRAILING_PAGER.sub("", text)
    tokens = text.split(" ")
    quiet = any(token in _QUIET_FLAGS for token in tokens)
    verbose = any(token in _VERBOSE_FLAGS for token in tokens)
    tokens = [token for token in tokens if token not in _QUIET_FLAGS | _VERBOSE_FLAGS]
    return " ".join(tokens), piped, quiet, verbose


def is_widening(previous: str, current: str) -> bool:
    prev_base, prev_piped, prev_quiet, prev_verbose = _canonical(previous)
    curr_base, curr_piped, curr_quiet, curr_verbose = _canonical(current)
    if prev_base != curr_base or not prev_base:
        return False
    dropped_pager = prev_piped and not curr_piped
    dropped_quiet = prev_quiet and not curr_quiet
    added_verbose = curr_verbose and not prev_verbose
    narrowed = (curr_piped and not prev_piped) or (curr_quiet and not prev_quiet)
    return (dropped_pager or dropped_quiet or added_verbose) and not narrowed


def _qualifies(record: ObservationRecord, at_step: int, window: int) -> bool:
    return (
        record.output_class is OutputClass.NORMAL
        and record.compressed
        and 0 < at_step - record.step_index <= window
    )


def detect(
    history: Sequence[ObservationRecord],
    event: FollowupEvent,
    window: int = DEFAULT_WINDOW,
    phrases: Sequence[str] = DEFAULT_COMPLAINT_PHRASES,
) -> Complaint | None:
    candidates = sorted(
        (record for record in history if _qualifies(record, event.at_step, window)),
        key=lambda record: record.step_index,
        reverse=True,
    )
    if not candidates:
        return None

    if event.kind is FollowupKind.NEXT_COMMAND:
        command = normalize_command(event.text)
        for record in candidates:
            if normalize_command(record.command) == command:
                return Complaint(
                    step_index=record.step_index,
                    reason=ComplaintReason.REPEATED_COMMAND,
                    evidence=event.text,
                )
        for record in candidates:
            if is_widening(record.command, event.text):
                return Complaint(
                    step_index=record.step_index,
                    reason=ComplaintReason.WIDENED_COMMAND,
                    evidence=event.text,
                )
        return None

    lowered = event.text.lower()
    phrase = next((p for p in phrases if p.lower() in lowered), None)
    if phrase is None:
        return None
    if event.refers_to_step is None:
        referenced = candidates[0]
    else:
        # a named step is the only one the message can blame
        referenced = next((r for r in candidates if r.step_index == event.refers_to_step), None)
        if referenced is None:
            return None
    return Complaint(
        step_index=referenced.step_index,
        reason=ComplaintReason.COMPLAINT_PHRASE,
        evidence=phrase,
    )


def feedback_text(complaint: Complaint, event: FollowupEvent) -> str:
    """Describe a complaint for the replacement prompt."""
    if complaint.reason is ComplaintReason.COMPLAINT_PHRASE:
        return event.text
    if complaint.reason is ComplaintReason.REPEATED_COMMAND:
        return (
            f"The agent re-ran the same command ({event.text}) right after seeing the "
            "compressed output, so the compressed output was missing information it needed."
        )
    return (
        f"The agent re-ran the command with more output ({event.text}) right after seeing "
        "the compressed output, so the compressed output was missing information it needed."
    )
