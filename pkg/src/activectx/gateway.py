"""OpenAI-compatible chat-completions client plus deterministic stand-ins.

The live path is :class:`HttpChatModel`; tests and scripted experiments use
:class:`ScriptedPolicy`. Both are plain callables ``ChatRequest -> ChatResponse``.
"""

from __future__ import annotations

import json
import logging
import math
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Sequence

import httpx

from activectx.store import ConversationState, ToolCall, render_context

log = logging.getLogger(__name__)

TOOL_CHOICES = ("auto", "required", "none")

TokenCounter = Callable[[str], int]


def approx_tokens(text: str) -> int:
    """Default token estimate: one token per four characters."""
    return math.ceil(len(text) / 4)


class GatewayError(Exception):
    CATEGORIES = ("transport", "auth", "rate_limit", "malformed")

    def __init__(self, category: str, message: str) -> None:
        if category not in self.CATEGORIES:
            raise ValueError(f"unknown gateway error category {category!r}")
        super().__init__(f"{category}: {message}")
        self.category = category
        self.message = message


@dataclass(frozen=True)
class ChatRequest:
    model: str
    messages: list[dict[str, Any]]
    tools: list[dict[str, Any]] = field(default_factory=list)
    tool_choice: str = "auto"
    max_tokens: int = 4096
    temperature: float = 0.0

    def __post_init__(self) -> None:
        if self.tool_choice not in TOOL_CHOICES:
            raise ValueError(f"tool_choice must be one of {TOOL_CHOICES}")
        if self.tool_choice == "required" and not self.tools:
            raise ValueError("tool_choice='required' needs at least one tool")

    def to_wire(self) -> dict[str, Any]:
        body: dict[str, Any] = {"model": self.model, "messages": self.messages}
        if self.tools:
            body["tools"] = self.tools
            body["tool_choice"] = self.tool_choice
        body["max_tokens"] = self.max_tokens
        body["temperature"] = self.temperature
        return body


@dataclass(frozen=True)
class ChatResponse:
    content: str | None = None
    tool_calls: tuple[ToolCall, ...] = ()
    finish_reason: str = "stop"
    prompt_tokens: int = 0
    completion_tokens: int = 0

    def __post_init__(self) -> None:
        if self.content is None and not self.tool_calls:
            raise ValueError("a response needs content or tool calls")

    @classmethod
    def from_wire(cls, body: Any) -> ChatResponse:
        """Parse a chat-completions response body.

        Tool calls whose argument string is not valid JSON are kept, flagged as
        malformed, so the runtime can send the model an error result.
        """
        try:
            choice = body["choices"][0]
            message = choice["message"]
        except (KeyError, IndexError, TypeError) as exc:
            raise GatewayError("malformed", f"response has no choices[0].message: {exc}") from None
        if not isinstance(message, dict) or not isinstance(choice, dict):
            raise GatewayError("malformed", "choices[0].message must be an object")
        raw_calls = message.get("tool_calls")
        if raw_calls is None:
            raw_calls = []
        if not isinstance(raw_calls, list):
            raise GatewayError("malformed", "tool_calls must be a list")
        calls = []
        for raw in raw_calls:
            if not isinstance(raw, dict) or not isinstance(raw.get("function"), dict):
                raise GatewayError("malformed", f"bad tool call entry: {raw!r}")
            calls.append(ToolCall.from_wire(raw))
        content = message.get("content")
        if content is not None and not isinstance(content, str):
            raise GatewayError("malformed", "message content must be text")
        if content is None and not calls:
            raise GatewayError("malformed", "message has neither content nor tool calls")
        usage = body.get("usage") or {}
        try:
            prompt_tokens = int(usage.get("prompt_tokens", 0))
            completion_tokens = int(usage.get("completion_tokens", 0))
        except (AttributeError, TypeError, ValueError):
            raise GatewayError("malformed", f"bad usage block: {usage!r}") from None
        return cls(
            content=content,
            tool_calls=tuple(calls),
            finish_reason=choice.get("finish_reason") or "stop",
            prompt_tokens=prompt_tokens,
            completion_tokens=completion_tokens,
        )

    def to_wire(self) -> dict[str, Any]:
        message: dict[str, Any] = {"role": "assistant", "content": self.content}
        if self.tool_calls:
            message["tool_calls"] = [tc.to_wire() for tc in self.tool_calls]
        return {
            "choices": [{"index": 0, "message": message, "finish_reason": self.finish_reason}],
            "usage": {"prompt_tokens": self.prompt_tokens, "completion_tokens": self.completion_tokens},
        }


def wire_messages(state: ConversationState) -> list[dict[str, Any]]:
    """Rendered conversation in chat-completions message format."""
    out = []
    for msg, (role, text) in zip(state.messages, render_context(state)):
        entry: dict[str, Any] = {"role": role, "content": text}
        if msg.tool_calls:
            entry["tool_calls"] = [tc.to_wire() for tc in msg.tool_calls]
        if msg.tool_call_id is not None:
            entry["tool_call_id"] = msg.tool_call_id
        out.append(entry)
    return out


def count_message_tokens(messages: Sequence[dict[str, Any]], counter: TokenCounter = approx_tokens) -> int:
    total = 0
    for m in messages:
        total += counter(m.get("content") or "")
        for tc in m.get("tool_calls") or ():
            fn = tc["function"]
            total += counter(fn["name"]) + counter(fn["arguments"])
    return total


@dataclass
class EndpointConfig:
    base_url: str | None = None
    api_key_env: str = "OPENAI_API_KEY"
    base_url_env: str = "OPENAI_BASE_URL"
    max_retries: int = 3
    backoff: float = 0.5
    timeout: float = 120.0
    log_path: Path | None = None

    def resolve_url(self) -> str:
        url = self.base_url or os.environ.get(self.base_url_env) or "https://api.openai.com/v1"
        return url.rstrip("/") + "/chat/completions"

    def api_key(self) -> str:
        key = os.environ.get(self.api_key_env)
        if not key:
            raise GatewayError("auth", f"no API key in environment variable {self.api_key_env}")
        return key


_log_lock = threading.Lock()


def _debug_log(path: Path, record: dict[str, Any]) -> None:
    with _log_lock, path.open("a", encoding="utf-8") as fh:
        fh.write(json.dumps(record, ensure_ascii=False) + "\n")


def send_chat(
    config: EndpointConfig,
    req: ChatRequest,
    *,
    transport: httpx.BaseTransport | None = None,
    sleep: Callable[[float], None] = time.sleep,
) -> ChatResponse:
    """One chat-completions round trip with retry on transient failures."""
    key = config.api_key()
    url = config.resolve_url()
    body = req.to_wire()
    headers = {"Authorization": f"Bearer {key}", "Content-Type": "application/json"}
    last: GatewayError | None = None
    with httpx.Client(transport=transport, timeout=config.timeout) as client:
        for attempt in range(config.max_retries + 1):
            if attempt:
                sleep(config.backoff * 2 ** (attempt - 1))
            try:
                resp = client.post(url, json=body, headers=headers)
            except httpx.TransportError as exc:
                last = GatewayError("transport", str(exc) or type(exc).__name__)
                log.warning("chat request failed (attempt %d): %s", attempt + 1, last)
                continue
            if resp.status_code in (401, 403):
                raise GatewayError("auth", f"HTTP {resp.status_code}")
            if resp.status_code == 429:
                last = GatewayError("rate_limit", "HTTP 429")
                continue
            if resp.status_code >= 500:
                last = GatewayError("transport", f"HTTP {resp.status_code}")
                continue
            if resp.status_code >= 400:
                raise GatewayError("malformed", f"HTTP {resp.status_code}: {resp.text[:200]}")
            try:
                data = resp.json()
            except ValueError:
                raise GatewayError("malformed", "response body is not JSON") from None
            if config.log_path is not None:
                _debug_log(config.log_path, {"request": body, "response": data})
            return ChatResponse.from_wire(data)
    assert last is not None
    raise last


class HttpChatModel:
    """Callable model backed by a live chat-completions endpoint."""

    def __init__(self, config: EndpointConfig, transport: httpx.BaseTransport | None = None) -> None:
        self.config = config
        self.transport = transport

    def __call__(self, req: ChatRequest) -> ChatResponse:
        return send_chat(self.config, req, transport=self.transport)


Rule = Callable[[int, ChatRequest], ChatResponse]


class ScriptedPolicy:
    """Playback model: either a fixed list of responses or a rule function.

    With a list, step ``i`` returns ``responses[i]`` and the last response is
    repeated once the list runs out. A rule receives ``(step, request)``.
    """

    def __init__(self, responses: Sequence[ChatResponse] | None = None, rule: Rule | None = None) -> None:
        if (responses is None) == (rule is None):
            raise ValueError("give exactly one of responses or rule")
        self.responses = list(responses or [])
        if responses is not None and not self.responses:
            raise ValueError("responses must be non-empty")
        self.rule = rule
        self.step = 0
        self.requests: list[ChatRequest] = []

    def __call__(self, req: ChatRequest) -> ChatResponse:
        self.requests.append(req)
        step = self.step
        self.step += 1
        if self.rule is not None:
            return self.rule(step, req)
        return self.responses[min(step, len(self.responses) - 1)]

    @classmethod
    def from_file(cls, path: str | Path) -> ScriptedPolicy:
        """Load canned responses: a JSON list of ``{"content", "tool_calls"}`` objects."""
        items = json.loads(Path(path).read_text(encoding="utf-8"))
        responses = []
        for i, item in enumerate(items):
            calls = tuple(
                ToolCall(id=c.get("id", f"call_{i}_{k}"), name=c["name"], arguments=c.get("arguments", {}))
                for k, c in enumerate(item.get("tool_calls", []))
            )
            responses.append(ChatResponse(content=item.get("content"), tool_calls=calls))
        return cls(responses)


def tool_response(step: int, name: str, arguments: dict[str, Any], content: str | None = None) -> ChatResponse:
    return ChatResponse(
        content=content,
        tool_calls=(ToolCall(id=f"call_{step}", name=name, arguments=arguments),),
        finish_reason="tool_calls",
    )


def scripted_summarizer(original: str, focus: str) -> str:
    return f"SUMMARY[{focus}]: {original[:80]}"
