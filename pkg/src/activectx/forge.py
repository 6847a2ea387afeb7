"""Training samples from agent trajectories.

A rollout whose context is rewritten mid-turn is no longer a single
prefix-extending sequence, so it is cut into snapshots: one at every
context-modifying step plus one at the end. Each completion carries loss
in exactly one snapshot, the first one that contains it.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Any, Iterable

from activectx.gateway import wire_messages
from activectx.runtime import CONTEXT_MODIFYING_TOOLS, TrajectoryRecord
from activectx.store import ConversationState, Message, append_message
from activectx.tools import dispatch

MAX_TOOL_CALLS = 20
MAX_TRAJECTORY_TOKENS = 128_000


class CollectError(Exception):
    pass


@dataclass
class TrainingSample:
    rollout_id: str
    messages: list[dict[str, Any]]
    loss_mask: list[int]
    reward: float = 0.0

    def to_dict(self) -> dict[str, Any]:
        return {
            "rollout_id": self.rollout_id,
            "messages": self.messages,
            "loss_mask": self.loss_mask,
            "reward": self.reward,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> TrainingSample:
        return cls(data["rollout_id"], data["messages"], data["loss_mask"], data.get("reward", 0.0))

    def completion_positions(self) -> list[int]:
        """Positions of this turn's completions: assistant messages after the last user message."""
        last_user = max((i for i, m in enumerate(self.messages) if m["role"] == "user"), default=-1)
        return [i for i, m in enumerate(self.messages) if i > last_user and m["role"] == "assistant"]

    def trained_completions(self) -> list[int]:
        return [k for k, pos in enumerate(self.completion_positions()) if self.loss_mask[pos]]


def _raw_wire(msg: Message) -> dict[str, Any]:
    out = msg.to_dict()
    del out["index"]
    return out


def _recorded_summary(payload: str):
    summary = json.loads(payload).get("summary")

    def summarizer(original: str, focus: str) -> str:
        if summary is None:
            raise RuntimeError("recorded result carries no summary")
        return summary

    return summarizer


def _status(payload: str) -> str | None:
    try:
        return json.loads(payload).get("status")
    except (ValueError, AttributeError):
        raise CollectError(f"tool result is not a JSON object: {payload[:80]!r}") from None


def _validate(rec: TrajectoryRecord) -> None:
    if not rec.steps:
        raise CollectError(f"rollout {rec.rollout_id!r} has no steps")
    for i, step in enumerate(rec.steps):
        last = i == len(rec.steps) - 1
        if step.completion.role != "assistant":
            raise CollectError(f"step {i} completion is not an assistant message")
        if last and step.tool_messages:
            raise CollectError("final step must not carry tool results")
        if not last and not step.tool_messages:
            raise CollectError(f"non-final step {i} has no tool results")
        calls = step.completion.tool_calls or ()
        if len(calls) != len(step.tool_messages) or len(step.executed) != len(step.tool_messages):
            raise CollectError(f"step {i} tool calls and results do not line up")


def collect_training_samples(rec: TrajectoryRecord) -> list[TrainingSample]:
    """Conditional trajectory collection with incremental loss assignment.

    The query part of each snapshot is the initial conversation as rendered
    after the context edits made so far. Edits are reproduced by replaying
    the recorded context-modifying calls against a reconstruction of the
    runtime state; prior completions and tool results are kept verbatim.
    """
    _validate(rec)
    q_len = len(rec.initial_state.messages)
    state: ConversationState = rec.initial_state
    history: list[dict[str, Any]] = []
    trained: set[int] = set()
    samples: list[TrainingSample] = []
    n = len(rec.steps) - 1

    for i, step in enumerate(rec.steps):
        query = wire_messages(state)[:q_len]
        calls = step.completion.tool_calls or ()
        modifying = any(
            ok and c.name in CONTEXT_MODIFYING_TOOLS for c, ok in zip(calls, step.executed)
        )
        if modifying != step.ctx_modifying:
            raise CollectError(f"step {i} ctx_modifying flag disagrees with its tool calls")

        history.append(_raw_wire(step.completion))
        history.extend(_raw_wire(m) for m in step.tool_messages)

        state = append_message(state, step.completion)
        if modifying or i == n:
            # the final step has no tool results, so history already ends at its completion
            messages = query + list(history)
            mask = [0] * len(messages)
            for j, pos in enumerate(_completion_positions(query, history)):
                if j not in trained:
                    mask[pos] = 1
                    trained.add(j)
            samples.append(TrainingSample(rec.rollout_id, messages, mask))

        for call, ok, tool_msg in zip(calls, step.executed, step.tool_messages):
            # failed calls leave the state untouched, so there is nothing to replay
            failed = _status(tool_msg.content) != "ok"
            if ok and call.name in CONTEXT_MODIFYING_TOOLS and not failed:
                summarizer = _recorded_summary(tool_msg.content) if call.name == "summarize_fragment" else None
                state, result = dispatch(state, call, summarizer)
                if result.payload != tool_msg.content:
                    raise CollectError(
                        f"replay of {call.name} at step {i} diverged from the recorded result"
                    )
            state = append_message(state, tool_msg)

    return samples


def _completion_positions(query: list[dict[str, Any]], history: list[dict[str, Any]]) -> list[int]:
    return [len(query) + k for k, m in enumerate(history) if m["role"] == "assistant"]


def check_exactly_once(samples: Iterable[TrainingSample]) -> None:
    """Raise CollectError unless every completion of each rollout is trained exactly once."""
    by_rollout: dict[str, list[TrainingSample]] = {}
    for s in samples:
        by_rollout.setdefault(s.rollout_id, []).append(s)
    for rid, group in by_rollout.items():
        n_completions = max(len(s.completion_positions()) for s in group)
        seen: list[int] = []
        for s in group:
            for pos, flag in enumerate(s.loss_mask):
                if flag and s.messages[pos]["role"] != "assistant":
                    raise CollectError(f"rollout {rid!r}: loss on a non-assistant message")
            seen.extend(s.trained_completions())
        if sorted(seen) != list(range(n_completions)):
            raise CollectError(
                f"rollout {rid!r}: trained completions {sorted(seen)} do not partition 0..{n_completions - 1}"
            )


def reward(rec: TrajectoryRecord, verdict: str, token_count: int | None = None) -> int:
    """Terminal reward: penalties first, then correctness."""
    if verdict not in ("correct", "incorrect"):
        raise ValueError(f"verdict must be 'correct' or 'incorrect', got {verdict!r}")
    tokens = rec.peak_tokens if token_count is None else token_count
    if rec.format_error or rec.tool_call_count > MAX_TOOL_CALLS or tokens > MAX_TRAJECTORY_TOKENS:
        return -1
    return 1 if verdict == "correct" else 0


def forge_record(rec: TrajectoryRecord, verdict: str | None = None) -> list[TrainingSample]:
    """Samples for one rollout, each carrying the rollout's terminal reward."""
    verdict = verdict or rec.meta.get("verdict", "incorrect")
    r = reward(rec, verdict)
    samples = collect_training_samples(rec)
    for s in samples:
        s.reward = r
    return samples
