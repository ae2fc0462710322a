from __future__ import annotations

import argparse
import asyncio
import json
import logging
import shlex
import subprocess
import sys
from contextlib import AsyncExitStack
from dataclasses import replace
from pathlib import Path

from termpress.client import ChatCompletionGateway, Gateway, RecordingGateway, ScriptedGateway
from termpress.errors import (
    GatewayError,
    PoolError,
    PoolFileMissingError,
    RuleParseError,
    RuleValidationError,
    TrajectoryError,
)
from termpress.executor import compress
from termpress.harness import load_trajectory, render_table, replay_all, run_evolution
from termpress.pool import load_pool, ranking_score, retention, save_pool, seed_pool, top_k
from termpress.rules import load_rules_file, serialize_rule
from termpress.schemas import CompressionRule, Trajectory
from termpress.session import SessionConfig
from termpress.settings import Settings, get_settings


logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_INPUT = 65
EXIT_POOL = 66
EXIT_GATEWAY = 69
EXIT_SPAWN = 127

BUNDLED = "bundled"


def _read_input(path: str | None) -> str:
    data = Path(path).read_bytes() if path else sys.stdin.buffer.read()
    return data.decode("utf-8", errors="surrogateescape")


def _write_output(text: str) -> None:
    sys.stdout.buffer.write(text.encode("utf-8", errors="surrogateescape"))
    sys.stdout.buffer.flush()


def _session_config(args: argparse.Namespace, settings: Settings) -> SessionConfig:
    return replace(
        SessionConfig.from_settings(settings),
        k=args.k,
        tau=args.tau,
        intra_task_evolution=args.intra_task_evolution,
    )


def _active_rules(args: argparse.Namespace) -> list[CompressionRule]:
    if args.rules:
        return load_rules_file(args.rules)
    return top_k(load_pool(args.pool), args.k, args.category)


def _compress_text(args: argparse.Namespace, settings: Settings, command: str, raw: str) -> str:
    record = compress(
        0,
        command,
        raw,
        _active_rules(args),
        settings.spawn_char_threshold,
        settings.spawn_line_threshold,
    )
    if args.stats:
        result = record.result
        stats = {
            "chars_before": result.chars_before,
            "chars_after": result.chars_after,
            "ratio": round(result.ratio, 6),
            "applied_rule_id": result.applied_rule_id,
        }
        print(json.dumps(stats), file=sys.stderr)
    return record.result.compressed_text


def cmd_compress(args: argparse.Namespace, settings: Settings) -> int:
    try:
        raw = _read_input(args.input)
    except OSError as exc:
        logger.error("cannot read input: %s", exc)
        return EXIT_INPUT
    _write_output(_compress_text(args, settings, args.command, raw))
    return EXIT_OK


def cmd_wrap(args: argparse.Namespace, settings: Settings) -> int:
    child = list(args.child)
    if child and child[0] == "--":
        child = child[1:]
    if not child:
        logger.error("wrap needs a child command after --")
        return EXIT_INPUT
    try:
        completed = subprocess.run(child, stdout=subprocess.PIPE, stderr=subprocess.STDOUT, check=False)
    except OSError as exc:
        logger.error("cannot start %s: %s", child[0], exc)
        return EXIT_SPAWN
    raw = completed.stdout.decode("utf-8", errors="surrogateescape")
    label = args.command or shlex.join(child)
    _write_output(_compress_text(args, settings, label, raw))
    return completed.returncode


def cmd_pool(args: argparse.Namespace, settings: Settings) -> int:
    path = Path(args.pool)
    if args.pool_action == "init":
        if path.exists() and not args.force:
            logger.error("pool %s already exists (use --force to overwrite)", path)
            return EXIT_POOL
        pool = seed_pool(settings.pool_capacity)
        save_pool(pool, path)
        print(f"wrote {len(pool.rules)} seed rules to {path}")
        return EXIT_OK

    if args.pool_action == "retention":
        prev = load_pool(args.prev, create_missing=False)
        curr = load_pool(args.curr, create_missing=False)
        print(f"{retention(prev, curr, args.K).retention_percent:.1f}")
        return EXIT_OK

    pool = load_pool(path, create_missing=False)
    if args.pool_action == "show":
        rule = pool.get(args.rule_id)
        if rule is None:
            logger.error("no rule %s in %s", args.rule_id, path)
            return EXIT_INPUT
        print(serialize_rule(rule))
        return EXIT_OK

    for rule in top_k(pool, args.k, args.category):
        print(
            f"{ranking_score(rule):10.1f}  {rule.rule_id}  "
            f"(priority {rule.priority}, c={rule.confidence:.3f}, n={rule.times_applied})"
        )
    return EXIT_OK


def _load_trajectories(paths: list[str]) -> tuple[list[Trajectory], int]:
    if not paths:
        from termpress.sample_data import build_trajectories

        return build_trajectories(), 0
    files: list[Path] = []
    for name in paths:
        path = Path(name)
        files.extend(sorted(path.glob("*.jsonl")) if path.is_dir() else [path])
    trajectories: list[Trajectory] = []
    errors = 0
    for file in files:
        try:
            trajectories.append(load_trajectory(file))
        except TrajectoryError as exc:
            logger.error("skipping %s", exc)
            errors += 1
    return trajectories, errors


async def _gateway(
    stack: AsyncExitStack,
    args: argparse.Namespace,
    settings: Settings,
    trajectories: list[Trajectory],
) -> Gateway:
    if args.mock == BUNDLED:
        from termpress.sample_data import build_transcript

        return ScriptedGateway(build_transcript(trajectories))
    if args.mock:
        return ScriptedGateway.from_file(args.mock)
    gateway: Gateway = await stack.enter_async_context(ChatCompletionGateway(settings))
    if args.record:
        recorder = RecordingGateway(gateway, args.record)
        stack.callback(recorder.save)
        return recorder
    return gateway


async def _replay(args: argparse.Namespace, settings: Settings, trajectories: list[Trajectory]):
    async with AsyncExitStack() as stack:
        gateway = await _gateway(stack, args, settings, trajectories)
        return await replay_all(
            trajectories,
            load_pool(args.pool),
            gateway,
            _session_config(args, settings),
            args.n,
            global_evolution=args.global_evolution,
        )


async def _evolve(args: argparse.Namespace, settings: Settings, trajectories: list[Trajectory]):
    async with AsyncExitStack() as stack:
        gateway = await _gateway(stack, args, settings, trajectories)
        return await run_evolution(
            trajectories,
            args.pool,
            gateway,
            batch_size=args.n,
            turns=args.turns,
            retention_threshold=args.retention_threshold,
            retention_k=args.K,
            config=_session_config(args, settings),
            alpha=settings.alpha,
            min_turns_before_stop=settings.min_turns_before_stop,
            global_evolution=args.global_evolution,
        )


def cmd_replay(args: argparse.Namespace, settings: Settings) -> int:
    trajectories, errors = _load_trajectories(args.paths)
    report = asyncio.run(_replay(args, settings, trajectories))
    if args.table:
        print(render_table(report))
    else:
        print(report.model_dump_json(indent=2))
    if errors:
        return EXIT_INPUT
    return EXIT_FAILED if report.failures else EXIT_OK


def cmd_evolve(args: argparse.Namespace, settings: Settings) -> int:
    trajectories, errors = _load_trajectories(args.paths)
    runs = asyncio.run(_evolve(args, settings, trajectories))
    print(json.dumps([run.model_dump(mode="json") for run in runs], indent=2))
    if errors:
        return EXIT_INPUT
    return EXIT_FAILED if any(run.compression.failures for run in runs) else EXIT_OK


def build_parser(settings: Settings) -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--pool", default=settings.pool_path)
    common.add_argument("--log-level", default=settings.log_level)

    parser = argparse.ArgumentParser(prog="termpress", description="Rule-based terminal output compression")
    sub = parser.add_subparsers(dest="action", required=True)

    def rule_source(p: argparse.ArgumentParser) -> None:
        p.add_argument("--command", default=settings.command_label)
        p.add_argument("--rules", default=settings.rules_path)
        p.add_argument("--k", type=int, default=settings.top_k)
        p.add_argument("--category", default=settings.category)
        p.add_argument("--stats", action=argparse.BooleanOptionalAction, default=settings.stats)

    p = sub.add_parser("compress", parents=[common], help="compress one output read from stdin or --input")
    rule_source(p)
    p.add_argument("--input")
    p.set_defaults(handler=cmd_compress)

    p = sub.add_parser("wrap", parents=[common], help="run a child command and compress its combined output")
    rule_source(p)
    p.add_argument("child", nargs=argparse.REMAINDER)
    p.set_defaults(handler=cmd_wrap)

    p = sub.add_parser("pool", help="inspect or initialize the global rule pool")
    actions = p.add_subparsers(dest="pool_action", required=True)
    top = actions.add_parser("top", parents=[common])
    top.add_argument("--k", type=int, default=settings.top_k)
    top.add_argument("--category", default=settings.category)
    show = actions.add_parser("show", parents=[common])
    show.add_argument("rule_id")
    init = actions.add_parser("init", parents=[common])
    init.add_argument("--force", action="store_true")
    kept = actions.add_parser("retention", parents=[common])
    kept.add_argument("--prev", required=True)
    kept.add_argument("--curr", required=True)
    kept.add_argument("--K", type=int, default=settings.retention_k)
    p.set_defaults(handler=cmd_pool)

    def run_options(p: argparse.ArgumentParser) -> None:
        p.add_argument("paths", nargs="*", help="trajectory files or directories (default: bundled samples)")
        p.add_argument("--mock", nargs="?", const=BUNDLED, default=settings.mock_transcript)
        p.add_argument("--record", default=settings.record_transcript)
        p.add_argument("--k", type=int, default=settings.top_k)
        p.add_argument("--tau", type=float, default=settings.tau)
        p.add_argument("--n", type=int, default=settings.batch_size)
        p.add_argument(
            "--intra-task-evolution",
            action=argparse.BooleanOptionalAction,
            default=settings.intra_task_evolution,
            help="spawn and replace rules inside each task",
        )
        p.add_argument(
            "--global-evolution",
            action=argparse.BooleanOptionalAction,
            default=settings.global_evolution,
            help="start sessions from the pool and write outcomes back",
        )

    p = sub.add_parser("replay", parents=[common], help="replay trajectories once and report compression")
    run_options(p)
    p.add_argument("--table", action="store_true")
    p.set_defaults(handler=cmd_replay)

    p = sub.add_parser("evolve", parents=[common], help="run multi-turn pool evolution")
    run_options(p)
    p.add_argument("--turns", type=int, default=settings.turns)
    p.add_argument("--K", type=int, default=settings.retention_k)
    p.add_argument("--retention-threshold", type=float, default=settings.retention_threshold)
    p.set_defaults(handler=cmd_evolve)
    return parser


def main(argv: list[str] | None = None) -> int:
    settings = get_settings()
    args = build_parser(settings).parse_args(argv)
    logging.basicConfig(
        level=args.log_level.upper(),
        stream=sys.stderr,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.handler(args, settings)
    except (TrajectoryError, RuleParseError, RuleValidationError) as exc:
        logger.error("%s", exc)
        return EXIT_INPUT
    except PoolFileMissingError as exc:
        logger.error("%s (run `termpress pool init` first)", exc)
        return EXIT_POOL
    except PoolError as exc:
        logger.error("%s", exc)
        return EXIT_POOL
    except GatewayError as exc:
        logger.error("%s", exc)
        return EXIT_GATEWAY
    except OSError as exc:
        logger.error("%s", exc)
        return EXIT_INPUT


def run() -> None:
    sys.exit(main())


if __name__ == "__main__":
    run()
