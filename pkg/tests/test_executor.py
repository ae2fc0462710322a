import re

from hypothesis import given, settings
from hypothesis import strategies as st

from termpress.executor import (
    apply_rule,
    baseline_filter,
    classify_output,
    compress,
    is_uncovered_size,
    select_rule,
)
from termpress.rules import compile_pattern, load_seed_rules
from termpress.schemas import Coverage, OutputClass

from tests.conftest import make_rule


SEEDS = load_seed_rules()
SEEDS_BY_ID = {rule.rule_id: rule for rule in SEEDS}

CRITICAL_LINES = [
    "Traceback (most recent call last):",
    "  File 'x.py', line 3\nSyntaxError: invalid syntax",
    "main.c:3:5: error: expected ';'",
    "error: could not compile `demo`",
    "fatal: repository 'https://example.com/x.git/' not found",
    "FATAL: password authentication failed",
    "Segmentation fault (core dumped)",
    "thread 'main' panicked at src/main.rs:2:5",
    "/usr/bin/ld: main.o: undefined reference to `foo'",
    "AssertionError: expected 3",
    "E: Unable to locate package r-base",
    "npm ERR! code ENOENT",
]


def _lines(text: str) -> list[str]:
    return text.split("\n")


def test_apply_rule_scenario_from_pip_output(seeds):
    raw = "\n".join(
        ["Collecting numpy"] * 3
        + ["  Downloading numpy.whl", "Collecting scipy", "ERROR: could not build wheel", "Collecting six"]
        + ["Successfully installed numpy"] * 5
    )
    result = apply_rule(seeds["seed_pip_install"], raw)
    out = _lines(result.compressed_text)
    assert out[:3] == ["Collecting numpy"] * 3
    assert out[3] == "[pip install output compressed]"
    assert out[4] == "  [3 lines removed]"
    assert "ERROR: could not build wheel" in out
    assert out[-5:] == ["Successfully installed numpy"] * 5
    assert result.lines_removed == 3
    assert result.applied_rule_id == "seed_pip_install"


def test_short_output_is_returned_unchanged(seeds):
    raw = "Hit:1 http://archive.ubuntu.com jammy InRelease\nReading package lists... Done\n"
    result = apply_rule(seeds["seed_apt_install"], raw)
    assert result.compressed_text == raw
    assert result.lines_removed == 0


def test_nothing_removed_means_no_header():
    rule = make_rule(keep_first_n=0, keep_last_n=0)
    result = apply_rule(rule, "a\nb\nc")
    assert result.compressed_text == "a\nb\nc"
    assert result.ratio == 1.0


def test_keep_wins_over_strip():
    rule = make_rule(keep_patterns=["important"], strip_patterns=["."], keep_first_n=0, keep_last_n=0)
    result = apply_rule(rule, "x\nimportant noise\ny")
    assert "important noise" in _lines(result.compressed_text)
    assert result.lines_removed == 2


def test_max_lines_counts_keep_lines_but_never_drops_them():
    rule = make_rule(
        keep_patterns=["^keep"], strip_patterns=["^drop"], keep_first_n=0, keep_last_n=0, max_lines=2
    )
    body = ["plain 1", "keep 1", "plain 2", "keep 2", "keep 3", "drop"]
    result = apply_rule(rule, "\n".join(body))
    out = _lines(result.compressed_text)[2:]
    assert out == ["plain 1", "keep 1", "keep 2", "keep 3"]
    assert result.lines_removed == 2


def test_trailing_newline_is_preserved(seeds):
    raw = "".join(f"Unpacking lib{i} (1.0) ...\n" for i in range(20))
    result = apply_rule(seeds["seed_apt_install"], raw)
    assert result.compressed_text.endswith("...\n")
    assert result.lines_removed == 16


def test_openssl_three_lines_are_kept_by_the_boundary(seeds):
    raw = "Generating RSA private key\n" + "." * 40 + "+++++\ne is 65537 (0x010001)"
    result = apply_rule(seeds["seed_openssl"], raw)
    assert result.compressed_text == raw


def test_openssl_progress_inside_the_body_is_removed(seeds):
    lines = ["Generating RSA private key"] + ["." * 40 + "+++++"] * 12 + ["e is 65537 (0x010001)"]
    result = apply_rule(seeds["seed_openssl"], "\n".join(lines))
    assert result.lines_removed == 4
    assert "[key generation progress compressed]" in result.compressed_text


def test_apt_unpacking_log_ratio(seeds):
    raw = "\n".join(f"Unpacking libpkg{i:03d}:amd64 (1.2.{i}-1ubuntu1) ..." for i in range(200))
    record = compress(0, "apt-get install -y r-base", raw, SEEDS)
    assert record.coverage is Coverage.COVERED
    assert record.result.applied_rule_id == "seed_apt_install"
    assert record.result.ratio <= 0.10


def test_git_clone_progress_removed_and_clone_line_kept():
    lines = ["Cloning into 'repo'...", "remote: Enumerating objects: 500, done."]
    for pct in range(0, 101, 5):
        lines += [
            f"remote: Counting objects: {pct:3d}% ({pct * 5}/500)",
            f"remote: Compressing objects: {pct:3d}% ({pct * 3}/300)",
            f"Receiving objects: {pct:3d}% ({pct * 5}/500), 1.20 MiB | 2.40 MiB/s",
            f"Resolving deltas: {pct:3d}% ({pct * 2}/200)",
        ]
    lines += ["remote: Total 500 (delta 200), reused 480 (delta 190)", "Updating files: 100% (120/120), done."]
    record = compress(0, "git clone https://example.com/repo.git", "\n".join(lines), SEEDS)
    out = record.result.compressed_text
    assert "Cloning into 'repo'..." in out
    body = _lines(out)[3:-5]
    progress = re.compile(r"(Counting|Compressing|Receiving) objects: +\d+%|Resolving deltas: +\d+%")
    assert not [line for line in body if progress.search(line)]


def test_rule_without_trigger_match_leaves_output_alone():
    record = compress(0, "pwd", "/app", SEEDS)
    assert record.result.compressed_text == "/app"
    assert record.result.applied_rule_id is None
    assert record.coverage is Coverage.COVERED


def test_long_unmatched_output_is_uncovered():
    raw = "\n".join(f"line {i}" for i in range(80))
    record = compress(3, "objdump -d /app/vulnerable", raw, SEEDS)
    assert record.coverage is Coverage.UNCOVERED
    assert record.result.compressed_text == raw


def test_uncovered_thresholds():
    assert not is_uncovered_size("x" * 1500)
    assert is_uncovered_size("x" * 1501)
    assert not is_uncovered_size("\n".join(["x"] * 40))
    assert is_uncovered_size("\n".join(["x"] * 41))


def test_selection_prefers_lower_priority():
    general = make_rule("general", trigger_regex="install", priority=50)
    specific = make_rule("specific", trigger_regex="install", priority=10)
    assert select_rule("pip install x", [general, specific]).rule_id == "specific"


def test_selection_breaks_priority_ties_by_score_then_id():
    low = make_rule("b_rule", trigger_regex="x", confidence=0.5, times_applied=1)
    high = make_rule("c_rule", trigger_regex="x", confidence=1.0, times_applied=9)
    assert select_rule("x", [low, high]).rule_id == "c_rule"
    twin = make_rule("a_rule", trigger_regex="x", confidence=1.0, times_applied=9)
    assert select_rule("x", [high, twin]).rule_id == "a_rule"


def test_baseline_filter_strips_escapes_and_carriage_returns():
    raw = "\x1b[32mok\x1b[0m\nDownloading  10%\rDownloading 100%\n\x1b]0;title\x07done"
    assert baseline_filter(raw) == "ok\nDownloading 100%\ndone"


def test_baseline_filter_drops_motd_banner():
    raw = "\n".join(
        [
            "Welcome to Ubuntu 22.04.4 LTS (GNU/Linux 5.15.0-101-generic x86_64)",
            "",
            " * Documentation:  https://help.ubuntu.com",
            " * Support:        https://ubuntu.com/pro",
            "",
            "root@box:/app# ls",
            "data",
        ]
    )
    assert baseline_filter(raw) == "root@box:/app# ls\ndata"


def test_baseline_filter_collapses_prompt_polling():
    raw = "root@box:/app# \nroot@box:/app# \nroot@box:/app# \nresult"
    assert baseline_filter(raw) == "root@box:/app# \nresult"


@given(st.text(alphabet=st.sampled_from(list("ab \r\n\x1b[0m#$>")), max_size=200))
def test_baseline_filter_is_idempotent(raw):
    once = baseline_filter(raw)
    assert baseline_filter(once) == once


@settings(max_examples=200)
@given(
    noise=st.lists(st.text(alphabet="abcdefgh .:/-", max_size=60), max_size=60),
    signal=st.sampled_from(CRITICAL_LINES),
    position=st.integers(min_value=0, max_value=60),
    rule=st.sampled_from(SEEDS),
)
def test_critical_output_passes_through_byte_identical(noise, signal, position, rule):
    lines = list(noise)
    lines.insert(min(position, len(lines)), signal)
    raw = "\n".join(lines) + "\x1b[0m\r\n"
    command = {
        "seed_git_noise": "git clone x",
        "seed_heredoc": "cat > f << EOF",
        "seed_pip_install": "pip install x",
        "seed_apt_install": "apt-get install x",
        "seed_compiler_output": "make",
        "seed_openssl": "openssl genrsa",
    }[rule.rule_id]
    assert classify_output(command, raw) is OutputClass.CRITICAL
    record = compress(0, command, raw, SEEDS)
    assert record.coverage is Coverage.BYPASSED
    assert record.result.compressed_text == raw
    assert record.result.ratio == 1.0


NOISE_LINES = [
    "Unpacking libx (1.0) ...",
    "Setting up libx (1.0) ...",
    "Get:7 http://archive.ubuntu.com jammy/main amd64 libx",
    "Collecting requests",
    "  Downloading requests-2.31.0.whl (62 kB)",
    "Requirement already satisfied: idna in /usr/lib",
    "remote: Counting objects:  40% (4/10)",
    "Receiving objects:  90% (9/10)",
    "> heredoc line",
    "." * 30 + "+++",
    "gcc " + "-DFLAG=1 " * 30 + "-c main.c",
    "Successfully installed requests-2.31.0",
    "Reading package lists...",
    "Cloning into 'x'...",
    "WARNING: pip is old",
    "plain line",
    "",
]


@settings(max_examples=1000, deadline=None)
@given(rule=st.sampled_from(SEEDS), lines=st.lists(st.sampled_from(NOISE_LINES), max_size=80))
def test_keep_lines_and_boundaries_survive(rule, lines):
    text = "\n".join(lines)
    result = apply_rule(rule, text)
    out = _lines(result.compressed_text)
    src = _lines(text)
    if result.lines_removed == 0:
        assert result.compressed_text == text
        return
    first, last = rule.keep_first_n, rule.keep_last_n
    assert out[:first] == src[:first]
    if last:
        assert out[-last:] == src[-last:]
    body_out = out[first + 1 : len(out) - last]
    keep = [compile_pattern(p) for p in rule.keep_patterns]
    kept = [line for line in src[first : len(src) - last] if any(p.search(line) for p in keep)]
    remaining = iter(body_out)
    for line in kept:
        assert line in remaining
