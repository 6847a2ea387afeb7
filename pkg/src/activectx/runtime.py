"""Single-turn agent loop over the context tools."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Callable

from activectx.gateway import (
    ChatRequest,
    ChatResponse,
    GatewayError,
    TokenCounter,
    approx_tokens,
    count_message_tokens,
    wire_messages,
)
from activectx.schemas import TOOL_NAMES, tool_schemas
from activectx.store import ConversationState, Message, append_message
from activectx.tools import ERROR, Summarizer, ToolResult, dispatch

CONTEXT_MODIFYING_TOOLS = frozenset(
    {"fragment_context", "fold_fragment", "summarize_fragment", "restore_fragment"}
)

Model = Callable[[ChatRequest], ChatResponse]


def is_context_modifying(name: str) -> bool:
    if name not in TOOL_NAMES:
        raise ValueError(f"unknown tool {name!r}")
    return name in CONTEXT_MODIFYING_TOOLS


@dataclass(frozen=True)
class TurnLimits:
    max_tool_steps: int = 20
    max_context_tokens: int = 128_000
    first_step_tool_choice: str = "required"

    def __post_init__(self) -> None:
        if self.max_tool_steps < 1:
            raise ValueError("max_tool_steps must be >= 1")
        if self.first_step_tool_choice not in ("auto", "required", "none"):
            raise ValueError(f"bad first_step_tool_choice {self.first_step_tool_choice!r}")


@dataclass
class Step:
    """One completion and the tool messages produced in response to it.

    ``executed[k]`` is False when the k-th call was refused because the
    tool budget was already spent.
    """

    completion: Message
    tool_messages: list[Message] = field(default_factory=list)
    executed: list[bool] = field(default_factory=list)
    ctx_modifying: bool = False
    prompt_tokens: int = 0

    def to_dict(self) -> dict[str, Any]:
        return {
            "completion": self.completion.to_dict(),
            "tool_messages": [m.to_dict() for m in self.tool_messages],
            "executed": list(self.executed),
            "ctx_modifying": self.ctx_modifying,
            "prompt_tokens": self.prompt_tokens,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> Step:
        return cls(
            completion=Message.from_dict(data["completion"]),
            tool_messages=[Message.from_dict(m) for m in data["tool_messages"]],
            executed=list(data["executed"]),
            ctx_modifying=data["ctx_modifying"],
            prompt_tokens=data.get("prompt_tokens", 0),
        )


@dataclass
class TrajectoryRecord:
    rollout_id: str
    initial_state: ConversationState
    steps: list[Step] = field(default_factory=list)
    final_answer: str = ""
    tool_call_count: int = 0
    initial_context_tokens: int = 0
    final_context_tokens: int = 0
    peak_tokens: int = 0
    completion_tokens: int = 0
    format_error: bool = False
    forced_final: bool = False
    meta: dict[str, Any] = field(default_factory=dict)

    @property
    def ctx_mod_flags(self) -> list[bool]:
        return [s.ctx_modifying for s in self.steps]

    def to_dict(self) -> dict[str, Any]:
        return {
            "rollout_id": self.rollout_id,
            "initial_state": self.initial_state.to_dict(),
            "steps": [s.to_dict() for s in self.steps],
            "ctx_mod_flags": self.ctx_mod_flags,
            "final_answer": self.final_answer,
            "tool_call_count": self.tool_call_count,
            "token_counts": {
                "initial_context": self.initial_context_tokens,
                "final_context": self.final_context_tokens,
                "peak": self.peak_tokens,
                "completion": self.completion_tokens,
            },
            "format_error": self.format_error,
            "forced_final": self.forced_final,
            "meta": self.meta,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> TrajectoryRecord:
        tokens = data.get("token_counts", {})
        return cls(
            rollout_id=data["rollout_id"],
            initial_state=ConversationState.from_dict(data["initial_state"]),
            steps=[Step.from_dict(s) for s in data["steps"]],
            final_answer=data.get("final_answer", ""),
            tool_call_count=data.get("tool_call_count", 0),
            initial_context_tokens=tokens.get("initial_context", 0),
            final_context_tokens=tokens.get("final_context", 0),
            peak_tokens=tokens.get("peak", 0),
            completion_tokens=tokens.get("completion", 0),
            format_error=data.get("format_error", False),
            forced_final=data.get("forced_final", False),
            meta=data.get("meta", {}),
        )


class TurnAborted(Exception):
    def __init__(self, record: TrajectoryRecord, cause: GatewayError) -> None:
        super().__init__(f"turn aborted after {len(record.steps)} steps: {cause}")
        self.record = record
        self.cause = cause


def _budget_refusal(call_id: str, limit: int) -> ToolResult:
    payload = json.dumps(
        {
            "status": ERROR,
            "error": "ToolBudgetExhausted",
            "message": f"the limit of {limit} tool calls for this turn is reached; answer now",
        }
    )
    return ToolResult(call_id, ERROR, payload)


def run_turn(
    state: ConversationState,
    user_msg: str,
    llm: Model,
    limits: TurnLimits = TurnLimits(),
    *,
    summarizer: Summarizer | None = None,
    tools_enabled: bool = True,
    model: str = "scripted",
    max_tokens: int = 4096,
    temperature: float = 0.0,
    counter: TokenCounter = approx_tokens,
    rollout_id: str = "",
) -> tuple[ConversationState, TrajectoryRecord]:
    """Run one user turn until the model answers without tool calls.

    After ``limits.max_tool_steps`` executed tool calls, or once the rendered
    context exceeds ``limits.max_context_tokens``, one last request is sent
    with ``tool_choice="none"`` and its reply is taken as the answer.
    """
    if not user_msg:
        raise ValueError("user_msg must be non-empty")
    state = append_message(state, Message(len(state.messages), "user", user_msg))
    schemas = tool_schemas() if tools_enabled else []

    record = TrajectoryRecord(rollout_id=rollout_id, initial_state=state)
    record.initial_context_tokens = count_message_tokens(wire_messages(state), counter)

    while True:
        messages = wire_messages(state)
        prompt_tokens = count_message_tokens(messages, counter)
        over_budget = prompt_tokens > limits.max_context_tokens
        forced = tools_enabled and (record.tool_call_count >= limits.max_tool_steps or over_budget)
        if not tools_enabled or forced:
            choice = "none"
        elif not record.steps:
            choice = limits.first_step_tool_choice
        else:
            choice = "auto"
        req = ChatRequest(
            model=model,
            messages=messages,
            tools=schemas,
            tool_choice=choice,
            max_tokens=max_tokens,
            temperature=temperature,
        )
        try:
            resp = llm(req)
        except GatewayError as exc:
            raise TurnAborted(record, exc) from exc

        calls = resp.tool_calls if choice != "none" else ()
        completion_text = resp.content or ""
        completion = Message(
            len(state.messages), "assistant", completion_text, tool_calls=tuple(calls) or None
        )
        state = append_message(state, completion)
        step_tokens = count_message_tokens([completion.to_dict()], counter)
        record.completion_tokens += step_tokens
        record.peak_tokens = max(record.peak_tokens, prompt_tokens + step_tokens)
        record.final_context_tokens = prompt_tokens
        step = Step(completion=completion, prompt_tokens=prompt_tokens)
        record.steps.append(step)

        if not calls:
            record.final_answer = completion_text
            record.forced_final = forced
            if resp.tool_calls and choice == "none":
                record.format_error = True
            if not completion_text.strip():
                record.format_error = True
            return state, record

        for call in calls:
            if record.tool_call_count >= limits.max_tool_steps:
                result = _budget_refusal(call.id, limits.max_tool_steps)
                step.executed.append(False)
            else:
                record.tool_call_count += 1
                state, result = dispatch(state, call, summarizer)
                step.executed.append(True)
                if call.name in CONTEXT_MODIFYING_TOOLS:
                    step.ctx_modifying = True
            tool_msg = Message(len(state.messages), "tool", result.payload, tool_call_id=call.id)
            state = append_message(state, tool_msg)
            step.tool_messages.append(tool_msg)
