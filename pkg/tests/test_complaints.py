import pytest

from termpress.complaints import detect, feedback_text, is_widening, normalize_command
from termpress.schemas import (
    ComplaintReason,
    CompressionResult,
    Coverage,
    FollowupEvent,
    FollowupKind,
    ObservationRecord,
    OutputClass,
)


def _record(step: int, command: str, removed: int = 5, output_class=OutputClass.NORMAL) -> ObservationRecord:
    return ObservationRecord(
        step_index=step,
        command=command,
        raw_output="raw",
        output_class=output_class,
        result=CompressionResult(
            compressed_text="short",
            lines_removed=removed,
            chars_before=100,
            chars_after=20 if removed else 100,
            ratio=0.2 if removed else 1.0,
            applied_rule_id="seed_pip_install" if removed else None,
        ),
        coverage=Coverage.COVERED,
    )


def _next(text: str, at_step: int) -> FollowupEvent:
    return FollowupEvent(kind=FollowupKind.NEXT_COMMAND, text=text, at_step=at_step)


def _message(text: str, at_step: int, refers_to: int | None = None) -> FollowupEvent:
    return FollowupEvent(kind=FollowupKind.AGENT_MESSAGE, text=text, at_step=at_step, refers_to_step=refers_to)


def test_repeated_command_within_window():
    history = [_record(4, "pip install numpy")]
    complaint = detect(history, _next("pip  install   numpy", 6))
    assert complaint.step_index == 4
    assert complaint.reason is ComplaintReason.REPEATED_COMMAND


def test_repeat_outside_window_is_ignored():
    history = [_record(1, "pip install numpy")]
    assert detect(history, _next("pip install numpy", 5), window=3) is None


def test_repeat_of_uncompressed_output_is_ignored():
    history = [_record(2, "ls", removed=0)]
    assert detect(history, _next("ls", 3)) is None


def test_repeat_of_critical_output_is_ignored():
    history = [_record(2, "make", output_class=OutputClass.CRITICAL)]
    assert detect(history, _next("make", 3)) is None


@pytest.mark.parametrize(
    "previous, current",
    [
        ("make 2>&1 | tail -20", "make 2>&1"),
        ("pytest tests | head -n 50", "pytest tests"),
        ("pip install -q numpy", "pip install numpy"),
        ("apt-get --quiet install r-base", "apt-get install r-base"),
        ("pytest tests", "pytest -v tests"),
        ("pytest tests", "pytest tests --verbose"),
    ],
)
def test_widening(previous, current):
    assert is_widening(previous, current)


@pytest.mark.parametrize(
    "previous, current",
    [
        ("make", "make | tail -5"),
        ("pytest tests", "pytest other"),
        ("pytest -v tests | head", "pytest -q -v tests"),
        ("ls", "ls"),
    ],
)
def test_not_widening(previous, current):
    assert not is_widening(previous, current)


def test_widened_rerun_is_a_complaint():
    history = [_record(3, "pytest tests | tail -20")]
    complaint = detect(history, _next("pytest tests", 4))
    assert complaint.reason is ComplaintReason.WIDENED_COMMAND
    assert complaint.step_index == 3


def test_most_recent_qualifying_step_is_referenced():
    history = [_record(3, "pip install x"), _record(4, "ls", removed=0), _record(5, "pip install x")]
    assert detect(history, _next("pip install x", 6)).step_index == 5


def test_complaint_phrase_references_the_named_step():
    history = [_record(3, "apt-get install r-base"), _record(4, "pip install x")]
    event = _message("The output was TRUNCATED, I need the full output", 5, refers_to=3)
    complaint = detect(history, event)
    assert complaint.step_index == 3
    assert complaint.reason is ComplaintReason.COMPLAINT_PHRASE
    assert complaint.evidence == "full output"


def test_complaint_phrase_without_a_named_step_blames_the_most_recent():
    history = [_record(3, "apt-get install r-base"), _record(4, "pip install x")]
    complaint = detect(history, _message("something is missing here", 5))
    assert complaint.step_index == 4


@pytest.mark.parametrize(
    "named",
    [
        pytest.param(4, id="bypassed"),
        pytest.param(5, id="nothing-removed"),
        pytest.param(1, id="outside-window"),
    ],
)
def test_complaint_phrase_naming_an_unqualified_step_is_ignored(named):
    history = [
        _record(1, "pip install y"),
        _record(3, "apt-get install r-base"),
        _record(4, "python train.py", removed=0, output_class=OutputClass.CRITICAL),
        _record(5, "ls", removed=0),
    ]
    assert detect(history, _message("numpy is missing, I will install it", 6, refers_to=named)) is None


def test_message_without_phrase_is_not_a_complaint():
    history = [_record(3, "pip install x")]
    assert detect(history, _message("Installed fine, moving on.", 4)) is None


def test_custom_phrases():
    history = [_record(3, "pip install x")]
    assert detect(history, _message("where did it go", 4), phrases=["where did"]) is not None


def test_normalize_command():
    assert normalize_command("  git   status \t") == "git status"


def test_feedback_text_for_phrase_is_the_message():
    history = [_record(3, "pip install x")]
    event = _message("please show the complete log", 4)
    complaint = detect(history, event)
    assert feedback_text(complaint, event) == "please show the complete log"


def test_feedback_text_for_repeat_names_the_command():
    history = [_record(3, "pip install x")]
    event = _next("pip install x", 4)
    assert "pip install x" in feedback_text(detect(history, event), event)
