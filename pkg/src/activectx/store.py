"""Conversation state: messages, fragment registry, and rendering.

Offsets are counted in Unicode code points (Python ``str`` indices), so
markers produced by a model resolve identically regardless of encoding.

All operations are pure: they return a new :class:`ConversationState` and
never mutate the one passed in.
"""

from __future__ import annotations

import json
import random
import string
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Iterable, Literal

Role = Literal["system", "user", "assistant", "tool"]
ROLES: tuple[str, ...] = ("system", "user", "assistant", "tool")

ID_ALPHABET = string.ascii_lowercase + string.digits
FRAGMENT_PREFIX = "f"
SEARCH_PREFIX = "s"

ACTIVE = "active"
FOLDED = "folded"
SUMMARIZED = "summarized"
FRAGMENT_STATES = (ACTIVE, FOLDED, SUMMARIZED)


class ContextError(Exception):
    """Base class for errors raised by context operations."""

    kind = "ContextError"

    def __init__(self, message: str) -> None:
        super().__init__(message)
        self.message = message


class StructuralError(ContextError):
    kind = "StructuralError"


class MarkerNotFound(ContextError):
    kind = "MarkerNotFound"

    def __init__(self, which: str, marker: str) -> None:
        super().__init__(f"{which} marker not found: {marker!r}")
        self.which = which
        self.marker = marker


class CrossMessageSpan(ContextError):
    kind = "CrossMessageSpan"

    def __init__(self, start_index: int, end_index: int) -> None:
        super().__init__(
            f"start marker is in message {start_index} but end marker only "
            f"occurs in message {end_index}; fragments cannot span messages"
        )
        self.start_index = start_index
        self.end_index = end_index


@dataclass(frozen=True)
class ToolCall:
    """A tool invocation requested by the model.

    ``malformed`` carries a parse error when the model's argument string was
    not valid JSON; ``raw_arguments`` then keeps the original text.
    """

    id: str
    name: str
    arguments: dict[str, Any] = field(default_factory=dict)
    malformed: str | None = None
    raw_arguments: str | None = None

    def to_wire(self) -> dict[str, Any]:
        if self.malformed is not None and self.raw_arguments is not None:
            args = self.raw_arguments
        else:
            args = json.dumps(self.arguments, ensure_ascii=False)
        return {
            "id": self.id,
            "type": "function",
            "function": {"name": self.name, "arguments": args},
        }

    @classmethod
    def from_wire(cls, data: dict[str, Any]) -> ToolCall:
        fn = data.get("function") or {}
        name = fn.get("name", "")
        raw = fn.get("arguments", "{}")
        call_id = data.get("id", "")
        if isinstance(raw, dict):
            return cls(id=call_id, name=name, arguments=raw)
        try:
            parsed = json.loads(raw) if raw else {}
        except (TypeError, ValueError) as exc:
            return cls(id=call_id, name=name, malformed=str(exc), raw_arguments=str(raw))
        if not isinstance(parsed, dict):
            return cls(
                id=call_id,
                name=name,
                malformed="arguments must be a JSON object",
                raw_arguments=raw,
            )
        return cls(id=call_id, name=name, arguments=parsed)


@dataclass(frozen=True)
class Message:
    index: int
    role: str
    content: str
    tool_calls: tuple[ToolCall, ...] | None = None
    tool_call_id: str | None = None

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"index": self.index, "role": self.role, "content": self.content}
        if self.tool_calls is not None:
            out["tool_calls"] = [tc.to_wire() for tc in self.tool_calls]
        if self.tool_call_id is not None:
            out["tool_call_id"] = self.tool_call_id
        return out

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> Message:
        calls = data.get("tool_calls")
        return cls(
            index=data["index"],
            role=data["role"],
            content=data.get("content") or "",
            tool_calls=tuple(ToolCall.from_wire(c) for c in calls) if calls is not None else None,
            tool_call_id=data.get("tool_call_id"),
        )


def folded_marker(fragment_id: str, n_chars: int) -> str:
    return f"[FOLDED fragment {fragment_id}: {n_chars} chars hidden — restore with restore_fragment]"


@dataclass(frozen=True)
class Fragment:
    id: str
    message_index: int
    start: int
    end: int
    original_content: str
    state: str = ACTIVE
    display_content: str = ""
    focus: str | None = None

    def __post_init__(self) -> None:
        if self.state == ACTIVE and self.display_content != self.original_content:
            object.__setattr__(self, "display_content", self.original_content)

    @property
    def span(self) -> tuple[int, int]:
        return (self.start, self.end)

    def overlaps(self, message_index: int, start: int, end: int) -> bool:
        return self.message_index == message_index and start < self.end and self.start < end

    def folded(self) -> Fragment:
        marker = folded_marker(self.id, len(self.original_content))
        return replace(self, state=FOLDED, display_content=marker, focus=None)

    def summarized(self, summary: str, focus: str) -> Fragment:
        return replace(self, state=SUMMARIZED, display_content=summary, focus=focus)

    def restored(self) -> Fragment:
        return replace(self, state=ACTIVE, display_content=self.original_content, focus=None)

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "message_index": self.message_index,
            "span": [self.start, self.end],
            "state": self.state,
            "original_content": self.original_content,
            "display_content": self.display_content,
            "focus": self.focus,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> Fragment:
        start, end = data["span"]
        return cls(
            id=data["id"],
            message_index=data["message_index"],
            start=start,
            end=end,
            original_content=data["original_content"],
            state=data["state"],
            display_content=data["display_content"],
            focus=data.get("focus"),
        )


@dataclass(frozen=True)
class SearchHit:
    id: str
    message_index: int
    match_offset: int
    query: str
    snippet: str
    inside_fragment: str | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "message_index": self.message_index,
            "match_offset": self.match_offset,
            "query": self.query,
            "snippet": self.snippet,
            "inside_fragment": self.inside_fragment,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> SearchHit:
        return cls(**data)


@dataclass(frozen=True)
class ConversationState:
    """Immutable snapshot of one conversation.

    Fragment and search ids are derived from ``(seed, counter)``, with a
    separate counter per id kind, so replaying the same tool calls on the
    same snapshot reproduces the same ids.
    """

    messages: tuple[Message, ...] = ()
    fragments: dict[str, Fragment] = field(default_factory=dict)
    search_results: dict[str, SearchHit] = field(default_factory=dict)
    seed: int = 0
    fragment_counter: int = 0
    search_counter: int = 0

    def message(self, index: int) -> Message:
        return self.messages[index]

    def fragments_in(self, message_index: int) -> list[Fragment]:
        return sorted(
            (f for f in self.fragments.values() if f.message_index == message_index),
            key=lambda f: f.start,
        )

    def sidecar(self) -> dict[str, Any]:
        return {
            "seed": self.seed,
            "fragment_counter": self.fragment_counter,
            "search_counter": self.search_counter,
            "fragments": {k: v.to_dict() for k, v in sorted(self.fragments.items())},
            "search_results": {k: v.to_dict() for k, v in sorted(self.search_results.items())},
        }

    def to_dict(self) -> dict[str, Any]:
        return {"messages": [m.to_dict() for m in self.messages], **self.sidecar()}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> ConversationState:
        messages = tuple(Message.from_dict(m) for m in data.get("messages", []))
        return cls.from_parts(messages, data)

    @classmethod
    def from_parts(cls, messages: Iterable[Message], sidecar: dict[str, Any]) -> ConversationState:
        return cls(
            messages=tuple(messages),
            fragments={k: Fragment.from_dict(v) for k, v in sidecar.get("fragments", {}).items()},
            search_results={
                k: SearchHit.from_dict(v) for k, v in sidecar.get("search_results", {}).items()
            },
            seed=sidecar.get("seed", 0),
            fragment_counter=sidecar.get("fragment_counter", 0),
            search_counter=sidecar.get("search_counter", 0),
        )


def new_state(messages: Iterable[tuple[str, str]] = (), seed: int = 0) -> ConversationState:
    """Build a state from ``(role, content)`` pairs."""
    state = ConversationState(seed=seed)
    for role, content in messages:
        state = append_message(state, Message(len(state.messages), role, content))
    return state


def append_message(state: ConversationState, msg: Message) -> ConversationState:
    if msg.index != len(state.messages):
        raise StructuralError(
            f"message index {msg.index} does not continue a conversation of "
            f"{len(state.messages)} messages"
        )
    if msg.role not in ROLES:
        raise StructuralError(f"unknown role {msg.role!r}")
    if msg.role == "tool":
        issued = {
            tc.id for m in state.messages if m.role == "assistant" and m.tool_calls for tc in m.tool_calls
        }
        if msg.tool_call_id not in issued:
            raise StructuralError(f"tool message references unknown tool_call_id {msg.tool_call_id!r}")
    elif msg.tool_call_id is not None:
        raise StructuralError("only tool messages may carry a tool_call_id")
    if msg.tool_calls is not None and msg.role != "assistant":
        raise StructuralError("only assistant messages may carry tool_calls")
    return replace(state, messages=state.messages + (msg,))


def _make_id(prefix: str, seed: int, counter: int) -> str:
    rng = random.Random(f"{prefix}:{seed}:{counter}")
    return prefix + "".join(rng.choice(ID_ALPHABET) for _ in range(5))


def allocate_fragment_id(state: ConversationState, taken: set[str] = frozenset()) -> tuple[str, int]:
    """Return a fresh fragment id and the advanced counter."""
    counter = state.fragment_counter
    while True:
        fid = _make_id(FRAGMENT_PREFIX, state.seed, counter)
        counter += 1
        if fid not in state.fragments and fid not in taken:
            return fid, counter


def allocate_search_id(state: ConversationState, taken: set[str] = frozenset()) -> tuple[str, int]:
    counter = state.search_counter
    while True:
        sid = _make_id(SEARCH_PREFIX, state.seed, counter)
        counter += 1
        if sid not in state.search_results and sid not in taken:
            return sid, counter


def splice(text: str, fragments: Iterable[Fragment]) -> str:
    # right to left keeps the stored offsets of earlier spans valid
    for frag in sorted(fragments, key=lambda f: f.start, reverse=True):
        text = text[: frag.start] + frag.display_content + text[frag.end :]
    return text


def render_message(state: ConversationState, index: int) -> str:
    msg = state.messages[index]
    frags = [f for f in state.fragments.values() if f.message_index == index and f.state != ACTIVE]
    if not frags:
        return msg.content
    return splice(msg.content, frags)


def render_context(state: ConversationState) -> list[tuple[str, str]]:
    """Current view of the conversation as ``(role, text)`` pairs."""
    by_message: dict[int, list[Fragment]] = {}
    for frag in state.fragments.values():
        if frag.state != ACTIVE:
            by_message.setdefault(frag.message_index, []).append(frag)
    out = []
    for msg in state.messages:
        frags = by_message.get(msg.index)
        out.append((msg.role, splice(msg.content, frags) if frags else msg.content))
    return out


def role_matches(msg_role: str, role: str) -> bool:
    return role == "all" or msg_role == role


def locate_span(
    state: ConversationState, start_marker: str, end_marker: str, role: str = "user"
) -> tuple[int, tuple[int, int]]:
    """Find ``start_marker`` then the first ``end_marker`` at or after it.

    Only the first message containing ``start_marker`` is considered. The
    returned span runs from the start of the start marker to the end of the
    end marker, in original-content offsets.
    """
    if not start_marker or not end_marker:
        raise ContextError("markers must be non-empty")
    candidates = [m for m in state.messages if role_matches(m.role, role)]
    for pos, msg in enumerate(candidates):
        start = msg.content.find(start_marker)
        if start < 0:
            continue
        end = msg.content.find(end_marker, start)
        if end >= 0:
            return msg.index, (start, end + len(end_marker))
        for later in candidates[pos + 1 :]:
            if end_marker in later.content:
                raise CrossMessageSpan(msg.index, later.index)
        raise MarkerNotFound("end", end_marker)
    raise MarkerNotFound("start", start_marker)


def check_invariants(state: ConversationState) -> None:
    """Raise StructuralError if the state violates a registry invariant."""
    for i, msg in enumerate(state.messages):
        if msg.index != i:
            raise StructuralError(f"message at position {i} has index {msg.index}")
    spans: dict[int, list[Fragment]] = {}
    for fid, frag in state.fragments.items():
        if fid != frag.id or len(fid) != 6:
            raise StructuralError(f"bad fragment id {fid!r}")
        if not 0 <= frag.message_index < len(state.messages):
            raise StructuralError(f"fragment {fid} targets missing message {frag.message_index}")
        content = state.messages[frag.message_index].content
        if not 0 <= frag.start < frag.end <= len(content):
            raise StructuralError(f"fragment {fid} span {frag.span} out of range")
        if content[frag.start : frag.end] != frag.original_content:
            raise StructuralError(f"fragment {fid} original content drifted")
        if frag.state == ACTIVE and frag.display_content != frag.original_content:
            raise StructuralError(f"active fragment {fid} displays altered content")
        spans.setdefault(frag.message_index, []).append(frag)
    for frags in spans.values():
        frags.sort(key=lambda f: f.start)
        for a, b in zip(frags, frags[1:]):
            if b.start < a.end:
                raise StructuralError(f"fragments {a.id} and {b.id} overlap")


def dump_jsonl(state: ConversationState, path: str | Path) -> Path:
    """Write messages as JSONL and the registries to ``<path>.sidecar.json``."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for msg in state.messages:
            fh.write(json.dumps(msg.to_dict(), ensure_ascii=False) + "\n")
    sidecar = sidecar_path(path)
    sidecar.write_text(json.dumps(state.sidecar(), ensure_ascii=False, indent=2) + "\n", encoding="utf-8")
    return sidecar


def load_jsonl(path: str | Path) -> ConversationState:
    path = Path(path)
    messages = [
        Message.from_dict(json.loads(line))
        for line in path.read_text(encoding="utf-8").splitlines()
        if line.strip()
    ]
    sidecar = sidecar_path(path)
    data = json.loads(sidecar.read_text(encoding="utf-8")) if sidecar.exists() else {}
    return ConversationState.from_parts(messages, data)


def sidecar_path(path: Path) -> Path:
    return path.with_name(path.name + ".sidecar.json")
