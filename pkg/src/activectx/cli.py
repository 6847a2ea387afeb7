"""Command-line entry point: ``activectx {gen-bench,run-agent,forge,gspo-eval}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Callable

from activectx.bench import (
    NeedleTask,
    PiTask,
    context_reduction,
    gen_needle_task,
    gen_pi_task,
    lost_keys,
    score_task,
    task_from_dict,
)
from activectx.forge import CollectError, TrainingSample, check_exactly_once, forge_record
from activectx.gateway import EndpointConfig, GatewayError, HttpChatModel, ScriptedPolicy, scripted_summarizer
from activectx.gspo import GspoGroup, group_report
from activectx.policies import needle_strategy, pi_strategy
from activectx.prompts import load_prompt
from activectx.runtime import TrajectoryRecord, TurnAborted, TurnLimits, run_turn
from activectx.store import new_state

log = logging.getLogger("activectx")


def _write_json(path: Path, data: Any) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")


def _read_jsonl(path: Path) -> list[dict[str, Any]]:
    return [json.loads(line) for line in path.read_text(encoding="utf-8").splitlines() if line.strip()]


def _write_jsonl(path: Path, rows: list[dict[str, Any]]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, ensure_ascii=False) + "\n")


def cmd_gen_bench(args: argparse.Namespace) -> int:
    tasks = []
    for k in range(args.count):
        seed = args.seed + k
        if args.kind == "pi":
            tasks.append(gen_pi_task(args.keys, args.updates, seed).to_dict())
        else:
            tasks.append(gen_needle_task(args.needles, args.chars, args.depth, seed).to_dict())
    _write_json(Path(args.out), {"kind": args.kind, "tasks": tasks})
    print(f"wrote {len(tasks)} {args.kind} task(s) to {args.out}")
    return 0


def _policy_factory(args: argparse.Namespace) -> Callable[[], Callable]:
    if args.policy == "live":
        config = EndpointConfig(
            base_url=args.endpoint,
            api_key_env=args.api_key_env,
            log_path=Path(args.debug_log) if args.debug_log else None,
        )
        return lambda: HttpChatModel(config)
    if args.policy == "pi":
        return pi_strategy
    if args.policy == "needle":
        return needle_strategy
    path = Path(args.policy)
    if not path.is_file():
        raise FileNotFoundError(f"policy must be live, pi, needle, or a response file; got {args.policy!r}")
    return lambda: ScriptedPolicy.from_file(path)


def _run_one(
    index: int, task: PiTask | NeedleTask, args: argparse.Namespace, make_policy, prompt: str
) -> tuple[TrajectoryRecord, dict[str, Any]]:
    rollout_id = f"{task.seed}-{index}"
    state = new_state([("system", prompt)], seed=args.seed + index)
    limits = TurnLimits(max_tool_steps=args.max_tool_steps)
    try:
        _, rec = run_turn(
            state,
            task.prompt(),
            make_policy(),
            limits,
            summarizer=scripted_summarizer,
            tools_enabled=not args.no_tools,
            model=args.model,
            rollout_id=rollout_id,
        )
    except TurnAborted as exc:
        exc.record.meta["aborted"] = str(exc.cause)
        raise
    score = score_task(rec.final_answer, task)
    verdict = "correct" if score == 1.0 else "incorrect"
    rec.meta.update({"task_kind": "pi" if isinstance(task, PiTask) else "needle", "verdict": verdict})
    report = {
        "rollout_id": rollout_id,
        "score": score,
        "verdict": verdict,
        "tool_call_count": rec.tool_call_count,
        "reduction": context_reduction(rec).to_dict(),
    }
    if isinstance(task, PiTask):
        report["lost_keys"] = lost_keys(rec.final_answer, task)
    return rec, report


def cmd_run_agent(args: argparse.Namespace) -> int:
    data = json.loads(Path(args.task_file).read_text(encoding="utf-8"))
    tasks = [task_from_dict(t) for t in data.get("tasks", [data])]
    prompt = load_prompt(args.prompt)
    make_policy = _policy_factory(args)
    out = Path(args.out)

    def job(item):
        return _run_one(item[0], item[1], args, make_policy, prompt)

    try:
        with ThreadPoolExecutor(max_workers=max(1, args.jobs)) as pool:
            results = list(pool.map(job, enumerate(tasks)))
    except TurnAborted as exc:
        print(f"error: GatewayError({exc.cause.category}): {exc.cause.message}", file=sys.stderr)
        return 1
    _write_jsonl(out / "trajectories.jsonl", [rec.to_dict() for rec, _ in results])
    reports = [rep for _, rep in results]
    _write_json(out / "scores.json", {"results": reports})
    for rep in reports:
        print(
            f"{rep['rollout_id']}: score={rep['score']:.3f} tools={rep['tool_call_count']} "
            f"reduction={rep['reduction']['reduction']:.3f}"
        )
    return 0


def cmd_forge(args: argparse.Namespace) -> int:
    rows = _read_jsonl(Path(args.trajectories))
    samples: list[TrainingSample] = []
    try:
        for row in rows:
            samples.extend(forge_record(TrajectoryRecord.from_dict(row)))
        if samples:
            check_exactly_once(samples)
    except CollectError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    _write_jsonl(Path(args.out), [s.to_dict() for s in samples])
    print(f"wrote {len(samples)} sample(s) from {len(rows)} trajectory record(s)")
    return 0


def cmd_gspo_eval(args: argparse.Namespace) -> int:
    rewards_by_rollout: dict[str, float] = {}
    if args.samples:
        for row in _read_jsonl(Path(args.samples)):
            rewards_by_rollout.setdefault(row["rollout_id"], row["reward"])
    fixture = json.loads(Path(args.fixture).read_text(encoding="utf-8"))
    reports = []
    try:
        for g in fixture["groups"]:
            rollouts = g["rollouts"]
            ids = [r["rollout_id"] for r in rollouts]
            rewards = [rewards_by_rollout.get(r["rollout_id"], r.get("reward")) for r in rollouts]
            if any(r is None for r in rewards):
                raise ValueError(f"group {g['query']!r}: missing reward for some rollout")
            group = GspoGroup(
                query=g["query"],
                logp_new=[r["logp_new"] for r in rollouts],
                logp_old=[r["logp_old"] for r in rollouts],
                rewards=rewards,
                eps=g.get("eps", fixture.get("eps", 0.2)),
                eps_high=g.get("eps_high", fixture.get("eps_high")),
                rollout_ids=ids,
            )
            reports.append(group_report(group))
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    summary = {
        "groups": reports,
        "mean_objective": sum(r["objective"] for r in reports) / len(reports) if reports else 0.0,
    }
    text = json.dumps(summary, indent=2) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="activectx")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen-bench", help="generate synthetic task files")
    gen.add_argument("kind", choices=["pi", "needle"])
    gen.add_argument("--out", required=True)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--count", type=int, default=1)
    gen.add_argument("--keys", type=int, default=46)
    gen.add_argument("--updates", type=int, default=64)
    gen.add_argument("--needles", type=int, default=3)
    gen.add_argument("--chars", type=int, default=16_000)
    gen.add_argument("--depth", type=float, default=0.4)
    gen.set_defaults(func=cmd_gen_bench)

    run = sub.add_parser("run-agent", help="run the agent on a task file")
    run.add_argument("task_file")
    run.add_argument("--policy", default="live", help="live, pi, needle, or a JSON response file")
    run.add_argument("--prompt", default="unified", help="unified, pi, needle, or a prompt file")
    run.add_argument("--out", required=True, help="output directory")
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--jobs", type=int, default=1)
    run.add_argument("--endpoint", default=None, help="chat-completions base URL")
    run.add_argument("--api-key-env", default="OPENAI_API_KEY")
    run.add_argument("--model", default="gpt-4.1")
    run.add_argument("--limits.max-tool-steps", dest="max_tool_steps", type=int, default=20)
    run.add_argument("--no-tools", action="store_true", help="baseline run without context tools")
    run.add_argument("--debug-log", default=None, help="append request/response pairs to this JSONL")
    run.set_defaults(func=cmd_run_agent)

    forge = sub.add_parser("forge", help="turn trajectories into training samples")
    forge.add_argument("trajectories")
    forge.add_argument("out")
    forge.set_defaults(func=cmd_forge)

    ev = sub.add_parser("gspo-eval", help="evaluate the GSPO objective on log-prob fixtures")
    ev.add_argument("fixture")
    ev.add_argument("--samples", default=None, help="samples JSONL providing rewards")
    ev.add_argument("--out", default=None)
    ev.set_defaults(func=cmd_gspo_eval)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except (FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except GatewayError as exc:
        print(f"error: GatewayError({exc.category}): {exc.message}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
