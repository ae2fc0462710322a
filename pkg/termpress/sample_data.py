"""Synthetic trajectories and a scripted transcript for offline replay.

The trajectories mimic real agent sessions: long package-manager and build
outputs that the seed rules cover, two outputs no rule covers (one of which
the transcript answers with a new rule), an over-compression complaint and
a Critical failure.
"""

from __future__ import annotations

import json
from pathlib import Path

from termpress.client import (
    WILDCARD_HASH,
    ScriptedResponse,
    bindings_hash,
    save_transcript,
    spawn_new_request,
)
from termpress.executor import baseline_filter
from termpress.harness import dump_trajectory
from termpress.rules import SEED_RULE_IDS
from termpress.schemas import TemplateId, Trajectory, TrajectoryStep


WGET_RULE = {
    "rule_id": "wget_progress",
    "trigger_regex": "\\b(wget|curl)\\b",
    "description": "Removes wget dot-progress lines while keeping the request, length and saved lines.",
    "keep_patterns": ["ERROR", "HTTP request sent", "Length:", "saved \\["],
    "strip_patterns": ["^\\s*\\d+K(?: \\.{10})+"],
    "keep_first_n": 6,
    "keep_last_n": 2,
    "max_lines": None,
    "summary_header": "[download progress compressed]",
    "priority": 45,
}

OBJDUMP_RULE = {
    "rule_id": "objdump_disassembly_rule",
    "trigger_regex": "\\bobjdump\\b",
    "description": "Strips instruction lines from objdump disassembly, keeping section headers, symbol labels and calls.",
    "keep_patterns": [
        "^Disassembly of section",
        "^[0-9a-f]+ <[^>]+>:",
        "file format",
        "\\bcall\\b",
        "<[^>]*@plt>",
    ],
    "strip_patterns": ["^\\s+[0-9a-f]+:\\s+(?:[0-9a-f]{2} )+"],
    "keep_first_n": 5,
    "keep_last_n": 5,
    "max_lines": None,
    "summary_header": "[objdump disassembly compressed - instruction lines removed]",
    "priority": 42,
}

PYTEST_RULE = {
    "rule_id": "pytest_output",
    "trigger_regex": "\\bpytest\\b",
    "description": "Removes PASSED lines from pytest output.",
    "keep_patterns": ["FAILED", "ERROR", "\\d+ (passed|failed)", "^collected"],
    "strip_patterns": ["PASSED"],
    "keep_first_n": 2,
    "keep_last_n": 2,
    "max_lines": None,
    "summary_header": "[pytest output compressed]",
    "priority": 42,
}

PYTEST_REPLACEMENT = {
    "rule_id": "pytest_output_v2",
    "trigger_regex": "\\bpytest\\b",
    "description": "Keeps every test result line; removes only the session header noise.",
    "keep_patterns": ["FAILED", "ERROR", "PASSED", "passed", "failed", "collected", "warnings"],
    "strip_patterns": ["^platform ", "^rootdir: ", "^plugins: ", "^cachedir: "],
    "keep_first_n": 1,
    "keep_last_n": 3,
    "max_lines": None,
    "summary_header": "[pytest header compressed]",
    "priority": 42,
}

PROPOSAL = {
    "selected_rule_ids": sorted(SEED_RULE_IDS),
    "modified_rules": [],
    "new_rules": [WGET_RULE],
}

COLD_START = {"rules": [WGET_RULE, OBJDUMP_RULE, PYTEST_REPLACEMENT]}

# (task_id, step_index) -> rule the transcript spawns for that uncovered output
SPAWN_POINTS = {
    ("vulnerable-secret", 2): OBJDUMP_RULE,
    ("pytest-regression", 5): PYTEST_RULE,
}


def _text(lines: list[str]) -> str:
    return "\n".join(lines) + "\n"


def apt_update() -> str:
    lines = ["Hit:1 http://archive.ubuntu.com/ubuntu jammy InRelease"]
    suites = ["jammy-updates", "jammy-backports", "jammy-security"]
    for i in range(2, 32):
        suite = suites[i % 3]
        lines.append(
            f"Get:{i} http://archive.ubuntu.com/ubuntu {suite}/main amd64 Packages [{100 + i * 7} kB]"
        )
    lines += [
        "Fetched 25.3 MB in 3s (8,414 kB/s)",
        "Reading package lists...",
    ]
    return _text(lines)


def apt_install(packages: list[str]) -> str:
    lines = [
        "Reading package lists...",
        "Building dependency tree...",
        "Reading state information...",
        "The following NEW packages will be installed:",
    ]
    for start in range(0, len(packages), 6):
        lines.append("  " + " ".join(packages[start : start + 6]))
    lines += [
        f"0 upgraded, {len(packages)} newly installed, 0 to remove and 3 not upgraded.",
        f"Need to get {len(packages) * 0.7:.1f} MB of archives.",
        f"After this operation, {len(packages) * 2} MB of additional disk space will be used.",
    ]
    for i, name in enumerate(packages, start=1):
        lines.append(
            f"Get:{i} http://archive.ubuntu.com/ubuntu jammy/universe amd64 {name} amd64 1.0-{i} [{50 + i} kB]"
        )
    lines += [
        f"Fetched {len(packages) * 0.7:.1f} MB in 4s (17.5 MB/s)",
        "debconf: delaying package configuration, since apt-utils is not installed",
    ]
    for i, name in enumerate(packages):
        lines += [
            f"Selecting previously unselected package {name}.",
            f"Preparing to unpack .../{i:03d}-{name}_1.0-{i + 1}_amd64.deb ...",
            f"Unpacking {name} (1.0-{i + 1}) ...",
        ]
    for i, name in enumerate(packages):
        lines.append(f"Setting up {name} (1.0-{i + 1}) ...")
    lines.append("Processing triggers for libc-bin (2.35-0ubuntu3.6) ...")
    return _text(lines)


def pip_install(packages: list[str], dependencies: list[str]) -> str:
    lines: list[str] = []
    for name in packages:
        lines += [
            f"Collecting {name}",
            f"  Downloading {name}-2.1.0-cp311-cp311-manylinux_2_17_x86_64.whl (11.4 MB)",
        ]
    for name in dependencies:
        lines.append(
            f"Requirement already satisfied: {name} in /usr/local/lib/python3.11/site-packages (from {packages[0]}) (1.4.0)"
        )
    for name in dependencies[:3]:
        lines.append(f"  Using cached {name}-1.4.0-py3-none-any.whl (21 kB)")
    lines += [
        "Installing collected packages: " + ", ".join(packages),
        "Successfully installed " + " ".join(f"{name}-2.1.0" for name in packages),
        "WARNING: Running pip as the 'root' user can result in broken permissions.",
    ]
    return _text(lines)


def git_clone(repo: str, name: str) -> str:
    lines = [f"Cloning into '{name}'...", "remote: Enumerating objects: 1000, done."]
    for pct in range(10, 101, 10):
        lines.append(f"remote: Counting objects: {pct:3d}% ({pct * 10}/1000)")
    lines.append("remote: Compressing objects: 100% (600/600), done.")
    lines.append("remote: Total 1000 (delta 400), reused 900 (delta 350), pack-reused 0")
    for pct in range(5, 101, 5):
        lines.append(f"Receiving objects: {pct:3d}% ({pct * 10}/1000), {pct * 21 // 10}.0 MiB | 3.2 MiB/s")
    for pct in range(10, 101, 10):
        lines.append(f"Resolving deltas: {pct:3d}% ({pct * 4}/400)")
    lines.append("Resolving deltas: 100% (400/400), done.")
    return _text(lines)


def git_fetch() -> str:
    lines = ["remote: Enumerating objects: 45, done."]
    for pct in range(10, 101, 10):
        lines.append(f"remote: Counting objects: {pct:3d}% ({int(45 * pct / 100)}/45)")
    lines += [
        "remote: Compressing objects: 100% (20/20), done.",
        "remote: Total 45 (delta 25), reused 40 (delta 22), pack-reused 0",
        "Unpacking objects: 100% (45/45), 12.40 KiB | 1.24 MiB/s, done.",
        "From https://github.com/example/pipeline",
        "   3f2a1b4..9c8d7e6  main       -> origin/main",
    ]
    return _text(lines)


def configure_output() -> str:
    checks = [
        ("for gcc", "gcc"),
        ("whether the C compiler works", "yes"),
        ("for C compiler default output file name", "a.out"),
        ("for suffix of executables", ""),
        ("whether we are cross compiling", "no"),
        ("for suffix of object files", "o"),
        ("whether we are using the GNU C compiler", "yes"),
        ("whether gcc accepts -g", "yes"),
        ("for a BSD-compatible install", "/usr/bin/install -c"),
        ("for tclsh8.6", "no"),
        ("for stdint.h", "yes"),
        ("for inttypes.h", "yes"),
        ("for zlib.h", "yes"),
        ("for library containing fdatasync", "none required"),
        ("for readline", "no"),
    ]
    lines = [f"checking {what}... {answer}" for what, answer in checks]
    lines += ["configure: creating ./config.status", "config.status: creating Makefile"]
    return _text(lines)


def make_output(sources: list[str]) -> str:
    flags = " ".join(
        [
            "-DPACKAGE_NAME=\\\"sqlite\\\"",
            "-DPACKAGE_VERSION=\\\"3.45.0\\\"",
            "-DHAVE_STDINT_H=1",
            "-DHAVE_INTTYPES_H=1",
            "-DHAVE_ZLIB_H=1",
            "-DSQLITE_THREADSAFE=1",
            "-DSQLITE_ENABLE_FTS5",
            "-fprofile-arcs",
            "-ftest-coverage",
            "-I. -I./src -I./ext/fts5",
            "-O2 -g -Wall",
        ]
    )
    lines = ["make[1]: Entering directory '/app/sqlite'"]
    for name in sources:
        lines.append(f"gcc {flags} -c ./src/{name}.c -o {name}.o")
    lines += [
        "ar cr libsqlite3.a " + " ".join(f"{name}.o" for name in sources[:8]),
        "ranlib libsqlite3.a",
        "gcc -O2 -g -o sqlite3 shell.o libsqlite3.a -lgcov -lz -lm",
        "make[1]: Leaving directory '/app/sqlite'",
    ]
    return _text(lines)


def objdump_output(functions: list[tuple[str, int]]) -> str:
    lines = ["", "/app/vulnerable:     file format elf64-x86-64", "", ""]
    address = 0x401000
    sections = {".init": functions[:1], ".plt": functions[1:4], ".text": functions[4:]}
    mnemonics = [
        ("f3 0f 1e fa", "endbr64"),
        ("55", "push   %rbp"),
        ("48 89 e5", "mov    %rsp,%rbp"),
        ("48 83 ec 50", "sub    $0x50,%rsp"),
        ("48 8d 45 b0", "lea    -0x50(%rbp),%rax"),
        ("48 89 c7", "mov    %rax,%rdi"),
        ("b8 00 00 00 00", "mov    $0x0,%eax"),
        ("90", "nop"),
    ]
    for section, members in sections.items():
        lines += [f"Disassembly of section {section}:", ""]
        for name, count in members:
            lines.append(f"{address:016x} <{name}>:")
            for i in range(count):
                encoded, text = mnemonics[i % len(mnemonics)]
                if name == "vulnerable_function" and i == 6:
                    encoded, text = "e8 9b fe ff ff", "call   401030 <gets@plt>"
                lines.append(f"  {address:x}:\t{encoded:<21}\t{text}")
                address += len(encoded.split())
            lines.append("")
    return _text(lines)


def pytest_output(module: str, count: int) -> str:
    lines = [
        "============================= test session starts ==============================",
        "platform linux -- Python 3.11.4, pytest-7.4.0, pluggy-1.2.0",
        "rootdir: /app",
        "plugins: hypothesis-6.82.0",
        f"collected {count} items",
        "",
    ]
    for i in range(count):
        pct = (i + 1) * 100 // count
        lines.append(f"{module}::test_case_{i:02d} PASSED{' ' * 30}[{pct:3d}%]")
    lines += ["", f"============================== {count} passed in 1.42s =============================="]
    return _text(lines)


def openssl_genrsa() -> str:
    lines = ["Generating RSA private key, 4096 bit long modulus (2 primes)"]
    for i in range(12):
        lines.append("." * (30 + 3 * i) + "++++")
    lines.append("e is 65537 (0x010001)")
    return _text(lines)


def heredoc_echo() -> str:
    body = ["[server]", "host = 0.0.0.0", "port = 8443", "tls = true"]
    body += [f"worker_{i} = enabled" for i in range(20)]
    body += ["", "[logging]", "level = info"]
    return _text([f"> {line}" for line in body])


def npm_install(packages: list[str]) -> str:
    lines = [
        f"npm http fetch GET 200 https://registry.npmjs.org/{name} {40 + i * 3}ms (cache miss)"
        for i, name in enumerate(packages)
    ]
    lines += [
        "npm WARN deprecated inflight@1.0.6: This module is not supported.",
        "",
        f"added {len(packages)} packages, and audited {len(packages) + 1} packages in 4s",
        "",
        "found 0 vulnerabilities",
    ]
    return _text(lines)


def wget_output() -> str:
    lines = [
        "--2024-05-01 10:00:00--  https://example.com/data/measurements.csv",
        "Resolving example.com (example.com)... 93.184.216.34",
        "Connecting to example.com (example.com)|93.184.216.34|:443... connected.",
        "HTTP request sent, awaiting response... 200 OK",
        "Length: 2560000 (2.4M) [text/csv]",
        "Saving to: 'measurements.csv'",
        "",
    ]
    for i in range(50):
        lines.append(f"{i * 50:6d}K .......... .......... .......... .......... .......... {i * 2:2d}% 1.21M 2s")
    lines += [
        "",
        "2024-05-01 10:00:02 (1.21 MB/s) - 'measurements.csv' saved [2560000/2560000]",
    ]
    return _text(lines)


def traceback_output() -> str:
    return _text(
        [
            "Loading dataset from data/train.csv",
            "Traceback (most recent call last):",
            '  File "/app/train.py", line 4, in <module>',
            "    from sklearn.ensemble import RandomForestClassifier",
            "ModuleNotFoundError: No module named 'sklearn'",
        ]
    )


def _steps(pairs: list[tuple[str, str]], messages: dict[int, str] | None = None) -> list[TrajectoryStep]:
    messages = messages or {}
    return [
        TrajectoryStep(step_index=i, command=command, raw_output=raw, agent_message=messages.get(i))
        for i, (command, raw) in enumerate(pairs)
    ]


def rejection_sampler() -> Trajectory:
    r_packages = [f"r-cran-pkg{i:03d}" for i in range(120)]
    dev_packages = [f"libdev{i:02d}" for i in range(24)]
    pairs = [
        ("cat /app/task.md", _text(["# Adaptive rejection sampler", "Implement ars() in R.", "Write tests."])),
        ("which R", ""),
        ("cat /etc/os-release | head -3", _text(['PRETTY_NAME="Ubuntu 22.04.4 LTS"', 'NAME="Ubuntu"', 'VERSION_ID="22.04"'])),
        ("apt-get update", apt_update()),
        ("apt-get install -y r-base", apt_install(r_packages)),
        ("R --version | head -1", _text(['R version 4.1.2 (2021-11-01) -- "Bird Hippie"'])),
        ("mkdir -p /app/src", ""),
        ("ls /app", _text(["src", "task.md", "tests"])),
        ("head -8 /app/tests/test_sampler.R", _text(["library(stats)", "source('/app/ars.R')", "set.seed(1)", "x <- ars(dnorm, c(-2, 2), n = 1000)", "stopifnot(abs(mean(x)) < 0.1)"])),
        ("apt-get install -y libcurl4-openssl-dev libssl-dev", apt_install(dev_packages)),
        ("Rscript -e 'cat(R.version.string)'", "R version 4.1.2 (2021-11-01)"),
        ("touch /app/ars.R", ""),
        ("ls -la /app/src", _text(["total 8", "drwxr-xr-x 2 root root 4096 May  1 10:00 .", "drwxr-xr-x 5 root root 4096 May  1 10:00 .."])),
        ("pip install numpy scipy", pip_install(["numpy", "scipy"], ["packaging", "pyparsing", "six", "python-dateutil"])),
        ("python3 -c 'import numpy; print(numpy.__version__)'", _text(["1.26.4"])),
        ("Rscript /app/ars.R", ""),
        ("wc -l /app/ars.R", _text(["120 /app/ars.R"])),
        ("Rscript -e 'source(\"/app/ars.R\"); print(ars(dnorm, c(-2, 2), n = 5))'", _text(["[1] -0.412  1.203  0.087 -1.554  0.631"])),
        ("Rscript -e 'source(\"/app/ars.R\"); test()'", _text(["TEST normal: PASS (mean 0.012, sd 0.998)", "TEST exponential: PASS (mean 0.994)"])),
        ("head -5 /app/normal_samples.txt", _text(["0.1243", "-0.8812", "1.0021", "0.3310", "-0.0457"])),
        ("Rscript -e 'x <- scan(\"/app/normal_samples.txt\"); cat(mean(x), sd(x))'", _text(["Read 1000 items", "0.0123 0.9987"])),
        ("ls /app", _text(["ars.R", "normal_samples.txt", "src", "task.md", "tests"])),
        ("grep -n 'function' /app/ars.R", _text(["3:ars <- function(f, bounds, n) {", "41:test <- function() {"])),
        ("Rscript /app/tests/test_sampler.R", _text(["All tests passed."])),
        ("echo done", _text(["done"])),
    ]
    return Trajectory(
        task_id="adaptive-rejection-sampler",
        instruction="Implement an adaptive rejection sampler in R at /app/ars.R and test it.",
        category="scientific-computing",
        terminal_state="root@4f1c:/app# ",
        steps=_steps(pairs),
    )


def sqlite_gcov() -> Trajectory:
    sources = [f"module{i:02d}" for i in range(30)]
    pairs = [
        ("git clone https://github.com/example/sqlite.git", git_clone("https://github.com/example/sqlite.git", "sqlite")),
        ("cd sqlite && ls", _text(["Makefile.in", "configure", "src", "test"])),
        ("./configure --enable-gcov", configure_output()),
        ("make -j4", make_output(sources)),
        ("./sqlite3 --version", _text(["3.45.0 2024-01-15 17:01:13"])),
        ("ls *.gcno | head -3", _text(["module00.gcno", "module01.gcno", "module02.gcno"])),
    ]
    return Trajectory(
        task_id="sqlite-with-gcov",
        instruction="Build sqlite from source with gcov instrumentation enabled.",
        category="build-and-compile",
        terminal_state="root@77ab:/app# ",
        steps=_steps(pairs),
    )


def vulnerable_secret() -> Trajectory:
    full = [("_init", 6), ("puts@plt", 3), ("gets@plt", 3), ("printf@plt", 3), ("_start", 12), ("vulnerable_function", 16), ("main", 14), ("print_flag", 20)]
    narrow = [("_init", 2), ("puts@plt", 2), ("gets@plt", 2), ("printf@plt", 2), ("vulnerable_function", 16)]
    plt = [("_init", 2), ("puts@plt", 4), ("gets@plt", 4), ("printf@plt", 4)]
    pairs = [
        ("ls /app", _text(["vulnerable", "vulnerable.c.bak"])),
        ("file /app/vulnerable", _text(["/app/vulnerable: ELF 64-bit LSB executable, x86-64, dynamically linked, not stripped"])),
        ("objdump -d /app/vulnerable", objdump_output(full)),
        ("strings /app/vulnerable | grep -i flag", _text(["print_flag", "flag.txt"])),
        ("objdump -d --start-address=0x401196 /app/vulnerable", objdump_output(narrow)),
        ("objdump -d -j .plt /app/vulnerable", objdump_output(plt)),
        ("echo done", _text(["done"])),
    ]
    return Trajectory(
        task_id="vulnerable-secret",
        instruction="Find the secret flag hidden in /app/vulnerable.",
        category="security",
        terminal_state="root@c0de:/app# ",
        steps=_steps(pairs),
    )


def pytest_regression() -> Trajectory:
    pairs = [
        ("pip install -e .", pip_install(["stattools"], ["numpy", "scipy", "packaging", "six"])),
        ("ls", _text(["setup.cfg", "src", "tests"])),
        ("cat setup.cfg", _text(["[metadata]", "name = stattools", "version = 0.3.0"])),
        ("python --version", _text(["Python 3.11.4"])),
        ("git log --oneline -3", _text(["9c8d7e6 fix sampler bounds", "3f2a1b4 add ks test", "1a2b3c4 initial"])),
        ("pytest tests/", pytest_output("tests/test_core.py", 60)),
        ("pytest tests/", pytest_output("tests/test_core.py", 60)),
        ("git status", _text(["On branch main", "nothing to commit, working tree clean"])),
        ("pytest tests/test_core.py", pytest_output("tests/test_core.py", 20)),
        ("echo finished", _text(["finished"])),
    ]
    return Trajectory(
        task_id="pytest-regression",
        instruction="Make sure the stattools test suite passes.",
        category="software-engineering",
        terminal_state="root@5e5e:/app# ",
        steps=_steps(pairs),
    )


def tls_bootstrap() -> Trajectory:
    pairs = [
        ("openssl genrsa -out key.pem 4096", openssl_genrsa()),
        ("openssl req -new -x509 -key key.pem -out cert.pem -days 365 -subj '/CN=localhost'", ""),
        ("cat > config.ini << 'EOF'", heredoc_echo()),
        ("ls -la", _text(["total 20", "-rw-r--r-- 1 root root  612 May  1 10:00 config.ini", "-rw-r--r-- 1 root root 1801 May  1 10:00 cert.pem", "-rw------- 1 root root 3272 May  1 10:00 key.pem"])),
    ]
    return Trajectory(
        task_id="tls-bootstrap",
        instruction="Generate a self-signed certificate and write the server config.",
        category="system-administration",
        terminal_state="root@0a0a:/srv# ",
        steps=_steps(pairs),
    )


def train_after_install() -> Trajectory:
    pairs = [
        ("pip install pandas requests", pip_install(["pandas", "requests"], ["numpy", "pytz", "urllib3", "idna", "certifi"])),
        ("python train.py", traceback_output()),
        ("pip install scikit-learn", pip_install(["scikit-learn"], ["numpy", "scipy", "joblib", "threadpoolctl"])),
        ("python train.py", _text(["Loading dataset from data/train.csv", "accuracy: 0.913"])),
    ]
    return Trajectory(
        task_id="train-after-install",
        instruction="Train the classifier in /app/train.py and report its accuracy.",
        category="machine-learning",
        terminal_state="root@ml01:/app# ",
        steps=_steps(pairs),
    )


def node_app_setup() -> Trajectory:
    packages = [f"pkg-{i:02d}" for i in range(60)]
    pairs = [
        ("npm install --loglevel http", npm_install(packages)),
        ("npm test", _text(["> app@1.0.0 test", "> node test.js", "ok 3 tests"])),
        ("node --version", _text(["v20.11.1"])),
    ]
    return Trajectory(
        task_id="node-app-setup",
        instruction="Install the node app's dependencies and run its tests.",
        category="web-development",
        terminal_state="root@n0de:/app# ",
        steps=_steps(pairs, {0: "The install log is missing the audit summary, moving on."}),
    )


def sensor_data_pipeline() -> Trajectory:
    pairs = [
        ("git fetch origin", git_fetch()),
        ("wget https://example.com/data/measurements.csv", wget_output()),
        ("pip install pyarrow", pip_install(["pyarrow"], ["numpy", "six", "packaging"])),
        ("python etl.py measurements.csv", _text(["rows: 40000", "written: out/measurements.parquet"])),
        ("git pull --rebase", _text(["Already up to date."])),
    ]
    return Trajectory(
        task_id="sensor-data-pipeline",
        instruction="Download the sensor measurements and convert them to parquet with etl.py.",
        category="data-processing",
        terminal_state="root@da7a:/app# ",
        steps=_steps(pairs),
    )


def build_trajectories() -> list[Trajectory]:
    return [
        rejection_sampler(),
        sqlite_gcov(),
        vulnerable_secret(),
        pytest_regression(),
        tls_bootstrap(),
        train_after_install(),
        node_app_setup(),
        sensor_data_pipeline(),
    ]


def build_transcript(trajectories: list[Trajectory]) -> list[ScriptedResponse]:
    entries = [
        ScriptedResponse(
            template_id=TemplateId.PROPOSAL_WITH_CACHE,
            bindings_hash=WILDCARD_HASH,
            response_text=json.dumps(PROPOSAL, indent=2),
        ),
        ScriptedResponse(
            template_id=TemplateId.PROPOSAL_NO_CACHE,
            bindings_hash=WILDCARD_HASH,
            response_text=json.dumps(COLD_START, indent=2),
        ),
        ScriptedResponse(
            template_id=TemplateId.SPAWN_REPLACEMENT,
            bindings_hash=WILDCARD_HASH,
            response_text="```json\n" + json.dumps(PYTEST_REPLACEMENT, indent=2) + "\n```",
        ),
    ]
    by_id = {trajectory.task_id: trajectory for trajectory in trajectories}
    for (task_id, step_index), rule in SPAWN_POINTS.items():
        trajectory = by_id.get(task_id)
        if trajectory is None:
            continue
        item = next(s for s in trajectory.steps if s.step_index == step_index)
        request = spawn_new_request(
            item.command,
            baseline_filter(item.raw_output),
            trajectory.instruction,
            output_length=len(item.raw_output),
        )
        entries.append(
            ScriptedResponse(
                template_id=TemplateId.SPAWN_NEW,
                bindings_hash=bindings_hash(request),
                response_text=json.dumps(rule, indent=2),
            )
        )
    return entries


def write_sample_data(directory: str | Path) -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    trajectories = build_trajectories()
    written: list[Path] = []
    for trajectory in trajectories:
        path = directory / f"{trajectory.task_id}.jsonl"
        dump_trajectory(trajectory, path)
        written.append(path)
    transcript = directory / "transcript.json"
    save_transcript(build_transcript(trajectories), transcript)
    written.append(transcript)
    return written
