import asyncio
import json
import statistics

import pytest

from termpress.client import ScriptedGateway
from termpress.errors import TrajectoryError
from termpress.harness import (
    dump_trajectory,
    followups,
    load_trajectory,
    render_table,
    replay_all,
    replay_task,
    rolling_std,
    run_evolution,
    summarize,
    task_score,
)
from termpress.pool import load_pool, save_pool, seed_pool
from termpress.sample_data import apt_install, build_trajectories, build_transcript, traceback_output, write_sample_data
from termpress.schemas import FollowupKind, TemplateId, Trajectory, TrajectoryStep
from termpress.session import SessionConfig


TRAJECTORIES = build_trajectories()


def _gateway() -> ScriptedGateway:
    return ScriptedGateway(build_transcript(TRAJECTORIES))


def _replay(batch_size: int = 4):
    return asyncio.run(replay_all(TRAJECTORIES, seed_pool(), _gateway(), batch_size=batch_size))


def _evolve(path, **options):
    gateway = options.pop("gateway", None) or _gateway()
    return asyncio.run(run_evolution(TRAJECTORIES, path, gateway, **options))


def test_rolling_std_oracle():
    assert rolling_std([1, 2, 3]) == [1.0]


def test_rolling_std_matches_hand_computation():
    series = [0.42, 0.47, 0.51, 0.50, 0.58, 0.61]
    expected = []
    for end in range(2, len(series)):
        window = series[end - 2 : end + 1]
        mean = sum(window) / 3
        expected.append((sum((x - mean) ** 2 for x in window) / 2) ** 0.5)
    for got, want in zip(rolling_std(series), expected):
        assert got == pytest.approx(want, abs=1e-12)
    assert rolling_std([0.3, 0.4]) == []
    assert rolling_std([1, 3, 5, 7], window=2) == pytest.approx([statistics.stdev([1, 3])] * 3)


def test_rolling_std_rejects_tiny_window():
    with pytest.raises(ValueError):
        rolling_std([1, 2, 3], window=1)


def test_trajectory_file_round_trip(tmp_path):
    trajectory = TRAJECTORIES[6]
    path = tmp_path / "node.jsonl"
    dump_trajectory(trajectory, path)
    assert load_trajectory(path) == trajectory
    assert json.loads(path.read_text().splitlines()[0])["kind"] == "task"


def test_trajectory_errors_carry_line_numbers(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text('{"kind": "task", "task_id": "t", "instruction": "i"}\n{"kind": "step", "step_index": 0,\n')
    with pytest.raises(TrajectoryError) as info:
        load_trajectory(path)
    assert info.value.line == 2


def test_trajectory_requires_header(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text('{"kind": "step", "step_index": 0, "command": "ls", "raw_output": ""}\n')
    with pytest.raises(TrajectoryError):
        load_trajectory(path)


def test_step_indices_must_increase(tmp_path):
    path = tmp_path / "bad.jsonl"
    lines = [
        {"kind": "task", "task_id": "t", "instruction": "i"},
        {"kind": "step", "step_index": 1, "command": "ls", "raw_output": ""},
        {"kind": "step", "step_index": 1, "command": "pwd", "raw_output": "/"},
    ]
    path.write_text("\n".join(json.dumps(line) for line in lines))
    with pytest.raises(TrajectoryError):
        load_trajectory(path)


def test_followups_put_the_message_before_the_next_command():
    trajectory = Trajectory(
        task_id="t",
        instruction="i",
        steps=[
            TrajectoryStep(step_index=0, command="make", raw_output="", agent_message="output truncated?"),
            TrajectoryStep(step_index=1, command="make", raw_output=""),
        ],
    )
    events = followups(trajectory, 0)
    assert [event.kind for event in events] == [FollowupKind.AGENT_MESSAGE, FollowupKind.NEXT_COMMAND]
    assert events[0].refers_to_step == 0
    assert all(event.at_step == 1 for event in events)
    assert followups(trajectory, 1) == []


def test_bundled_replay_report():
    report = _replay()
    tasks = {task.task_id: task for task in report.tasks}
    assert len(tasks) == 8
    assert report.failures == {}

    sampler = tasks["adaptive-rejection-sampler"]
    assert sampler.episodes == 25
    assert sampler.entries == 4
    assert sampler.overall_ratio < 0.5

    assert tasks["sqlite-with-gcov"].per_rule.keys() == {"seed_git_noise", "seed_compiler_output"}
    assert tasks["vulnerable-secret"].per_rule["objdump_disassembly_rule"].entries == 3
    assert tasks["train-after-install"].entries == 2
    assert tasks["node-app-setup"].entries == 0
    assert tasks["sensor-data-pipeline"].per_rule["wget_progress"].entries == 1

    pytest_task = tasks["pytest-regression"]
    assert pytest_task.complained_rules == ["pytest_output"]
    assert pytest_task.rule_origins["new-midtask"] == 1
    assert pytest_task.rule_origins["replacement"] == 1
    assert "pytest_output_v2" in pytest_task.per_rule

    assert report.entries == 20
    assert report.chars_saved == report.chars_before - report.chars_after
    assert report.chars_saved == sum(task.chars_saved for task in report.tasks)
    assert report.estimated_tokens_saved == report.chars_saved // 4


def test_replay_is_deterministic_across_batch_sizes():
    assert _replay(1).model_dump_json() == _replay(4).model_dump_json()


def test_summarize_empty():
    report = summarize([])
    assert report.overall_ratio == 1.0
    assert task_score(report) == 0.0


def test_render_table():
    table = render_table(_replay())
    lines = table.splitlines()
    assert lines[0].split()[:2] == ["Task", "Episodes"]
    assert lines[-1].startswith("TOTAL")
    assert any(line.startswith("adaptive-rejection-sampler") for line in lines)


def test_single_turn_advances_generation_by_task_count(pool_path):
    runs = _evolve(pool_path, batch_size=4, turns=1)
    assert len(runs) == 1
    assert runs[0].generation == 8
    assert runs[0].turn == 1
    pool = load_pool(pool_path, create_missing=False)
    assert {"objdump_disassembly_rule", "wget_progress", "pytest_output_v2"} <= set(pool.rule_ids)
    assert "pytest_output" not in pool.rule_ids


def test_counter_totals_do_not_depend_on_batch_size(tmp_path):
    serial = _evolve(tmp_path / "serial.json", batch_size=1, turns=3, retention_threshold=101.0)
    waves = _evolve(tmp_path / "waves.json", batch_size=4, turns=3, retention_threshold=101.0)
    assert [run.counter_total for run in serial] == [run.counter_total for run in waves]
    assert [run.generation for run in serial] == [8, 16, 24]


def test_evolution_reports_are_reproducible(tmp_path):
    outputs = [
        json.dumps([run.model_dump(mode="json") for run in _evolve(tmp_path / f"pool_{i}.json", turns=3)])
        for i in range(3)
    ]
    assert outputs[0] == outputs[1] == outputs[2]


def test_smaller_waves_propagate_spawned_rules_sooner(tmp_path):
    def cached_rules_seen(batch_size: int) -> list[bool]:
        gateway = _gateway()
        _evolve(tmp_path / f"pool_{batch_size}.json", gateway=gateway, batch_size=batch_size, turns=1)
        proposals = [r for r in gateway.requests if r.template_id is TemplateId.PROPOSAL_WITH_CACHE]
        return ["objdump_disassembly_rule" in r.bindings["cached_rules"] for r in proposals]

    serial = cached_rules_seen(1)
    assert serial[:3] == [False, False, False]
    assert all(serial[3:])
    assert not any(cached_rules_seen(4)[:4])


def test_saturating_scenario_stops_early(pool_path, caplog):
    caplog.set_level("INFO", logger="termpress.harness")
    runs = _evolve(pool_path, turns=10, retention_threshold=90.0, retention_k=6)
    assert len(runs) == 2
    assert runs[-1].stopped_early
    assert runs[-1].retention.retention_percent >= 90.0
    assert not runs[0].stopped_early
    assert "reached the threshold" in caplog.text


def test_write_sample_data(tmp_path):
    written = write_sample_data(tmp_path)
    assert len(written) == 9
    assert load_trajectory(tmp_path / "vulnerable-secret.jsonl").task_id == "vulnerable-secret"
    assert ScriptedGateway.from_file(tmp_path / "transcript.json").requests == []


def test_message_after_a_traceback_does_not_blame_an_earlier_rule():
    trajectory = Trajectory(
        task_id="train",
        instruction="Train the model.",
        steps=[
            TrajectoryStep(step_index=0, command="apt-get install -y python3-dev", raw_output=apt_install([f"lib{i}" for i in range(30)])),
            TrajectoryStep(
                step_index=1,
                command="python train.py",
                raw_output=traceback_output(),
                agent_message="sklearn is missing, I will install it",
            ),
            TrajectoryStep(step_index=2, command="pip install scikit-learn", raw_output="Successfully installed scikit-learn-1.4.2\n"),
        ],
    )
    report, outcomes = asyncio.run(replay_task(trajectory, seed_pool(), _gateway()))
    assert report.per_rule["seed_apt_install"].entries == 1
    assert report.complained_rules == []
    assert not any(outcome.complained for outcome in outcomes)


def _requested_templates(gateway: ScriptedGateway) -> set[TemplateId]:
    return {request.template_id for request in gateway.requests}


def test_without_global_evolution_the_pool_is_never_used(pool_path):
    save_pool(seed_pool(), pool_path)
    before = pool_path.read_bytes()
    gateway = _gateway()
    runs = _evolve(pool_path, gateway=gateway, turns=1, global_evolution=False)
    assert pool_path.read_bytes() == before
    assert runs[0].generation == 0
    assert TemplateId.PROPOSAL_WITH_CACHE not in _requested_templates(gateway)
    assert TemplateId.PROPOSAL_NO_CACHE in _requested_templates(gateway)


def test_without_intra_task_evolution_nothing_is_spawned_or_written(pool_path):
    save_pool(seed_pool(), pool_path)
    before = pool_path.read_bytes()
    gateway = _gateway()
    runs = _evolve(pool_path, gateway=gateway, turns=1, config=SessionConfig(intra_task_evolution=False))
    assert pool_path.read_bytes() == before
    assert runs[0].generation == 0
    assert _requested_templates(gateway) == {TemplateId.PROPOSAL_WITH_CACHE}
    assert runs[0].compression.entries > 0
    assert all(task.complained_rules == [] for task in runs[0].compression.tasks)


def test_replay_without_global_evolution_cold_starts_every_task():
    gateway = _gateway()
    report = asyncio.run(replay_all(TRAJECTORIES, seed_pool(), gateway, global_evolution=False))
    proposals = [r for r in gateway.requests if r.template_id.value.startswith("proposal")]
    assert len(proposals) == 8
    assert all(r.template_id is TemplateId.PROPOSAL_NO_CACHE for r in proposals)
    assert report.failures == {}
