"""The six context-management tools and their dispatcher.

Every operation takes a :class:`~activectx.store.ConversationState` and
returns a new one together with a :class:`ToolResult`. Direct calls raise
:class:`~activectx.store.ContextError` subclasses; :func:`dispatch` turns
every failure into an error result so the model can correct itself.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from typing import Any, Callable

import jsonschema

from activectx.schemas import TOOL_NAMES, TOOL_SCHEMAS, parameters_schema
from activectx.store import (
    ACTIVE,
    ContextError,
    ConversationState,
    Fragment,
    SearchHit,
    ToolCall,
    allocate_fragment_id,
    allocate_search_id,
    locate_span,
    role_matches,
)

Summarizer = Callable[[str, str], str]

OK = "ok"
ERROR = "error"


class SchemaViolation(ContextError):
    kind = "SchemaViolation"


class FragmentNotFound(ContextError):
    kind = "FragmentNotFound"

    def __init__(self, fragment_id: str) -> None:
        super().__init__(
            f"no fragment with id {fragment_id!r}; create fragments with fragment_context first"
        )
        self.fragment_id = fragment_id


class OverlapRejected(ContextError):
    kind = "OverlapRejected"


class SpanTooShort(ContextError):
    kind = "SpanTooShort"


class SummarizerError(ContextError):
    kind = "SummarizerError"


class SearchIdNotFound(ContextError):
    kind = "SearchIdNotFound"

    def __init__(self, search_id: str) -> None:
        super().__init__(f"no search result with id {search_id!r}")
        self.search_id = search_id


class UnknownTool(ContextError):
    kind = "UnknownTool"


@dataclass(frozen=True)
class ToolResult:
    tool_call_id: str
    status: str
    payload: str

    @property
    def ok(self) -> bool:
        return self.status == OK

    def data(self) -> dict[str, Any]:
        return json.loads(self.payload)

    def to_dict(self) -> dict[str, Any]:
        return {"tool_call_id": self.tool_call_id, "status": self.status, "payload": self.payload}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> ToolResult:
        return cls(**data)


def _payload(**fields: Any) -> str:
    return json.dumps(fields, ensure_ascii=False)


def _ok(call_id: str, **fields: Any) -> ToolResult:
    return ToolResult(call_id, OK, _payload(status=OK, **fields))


def error_result(call_id: str, exc: ContextError) -> ToolResult:
    return ToolResult(call_id, ERROR, _payload(status=ERROR, error=exc.kind, message=exc.message))


def _check_range(name: str, value: int, lo: int, hi: int) -> None:
    if isinstance(value, bool) or not isinstance(value, int) or not lo <= value <= hi:
        raise SchemaViolation(f"{name} must be an integer in [{lo}, {hi}], got {value!r}")


def _check_role(role: str) -> None:
    if role not in ("user", "assistant", "all"):
        raise SchemaViolation(f"role must be one of user, assistant, all; got {role!r}")


def _get_fragment(state: ConversationState, fragment_id: str) -> Fragment:
    try:
        return state.fragments[fragment_id]
    except KeyError:
        raise FragmentNotFound(fragment_id) from None


def partition(length: int, parts: int) -> list[int]:
    """Near-equal sizes summing to ``length``; leading parts absorb the remainder."""
    q, r = divmod(length, parts)
    return [q + 1 if i < r else q for i in range(parts)]


def fragment_context(
    state: ConversationState,
    start_marker: str,
    end_marker: str,
    num_fragments: int = 5,
    role: str = "user",
    *,
    call_id: str = "",
) -> tuple[ConversationState, ToolResult]:
    _check_range("num_fragments", num_fragments, 1, 20)
    _check_role(role)
    index, (start, end) = locate_span(state, start_marker, end_marker, role)
    for frag in state.fragments.values():
        if frag.overlaps(index, start, end):
            raise OverlapRejected(
                f"span [{start}, {end}) of message {index} overlaps existing fragment {frag.id}"
            )
    if end - start < num_fragments:
        raise SpanTooShort(
            f"span of {end - start} chars cannot be split into {num_fragments} fragments"
        )

    content = state.messages[index].content
    fragments = dict(state.fragments)
    taken: set[str] = set()
    created = []
    counter_state = state
    pos = start
    for size in partition(end - start, num_fragments):
        fid, counter = allocate_fragment_id(counter_state, taken)
        counter_state = replace(counter_state, fragment_counter=counter)
        taken.add(fid)
        frag = Fragment(fid, index, pos, pos + size, content[pos : pos + size])
        fragments[fid] = frag
        created.append(frag)
        pos += size

    new = replace(state, fragments=fragments, fragment_counter=counter_state.fragment_counter)
    return new, _ok(
        call_id,
        message_index=index,
        span=[start, end],
        fragments=[
            {"id": f.id, "span": [f.start, f.end], "chars": f.end - f.start, "preview": f.original_content[:60]}
            for f in created
        ],
    )


def _with_fragment(state: ConversationState, frag: Fragment) -> ConversationState:
    fragments = dict(state.fragments)
    fragments[frag.id] = frag
    return replace(state, fragments=fragments)


def fold_fragment(
    state: ConversationState, fragment_id: str, *, call_id: str = ""
) -> tuple[ConversationState, ToolResult]:
    frag = _get_fragment(state, fragment_id)
    if frag.state != "folded":
        state = _with_fragment(state, frag.folded())
    return state, _ok(
        call_id, fragment_id=fragment_id, state="folded", hidden_chars=len(frag.original_content)
    )


def restore_fragment(
    state: ConversationState, fragment_id: str, *, call_id: str = ""
) -> tuple[ConversationState, ToolResult]:
    frag = _get_fragment(state, fragment_id)
    previous = frag.state
    if previous != ACTIVE:
        state = _with_fragment(state, frag.restored())
    return state, _ok(
        call_id,
        fragment_id=fragment_id,
        state=ACTIVE,
        previous_state=previous,
        chars=len(frag.original_content),
    )


def summarize_fragment(
    state: ConversationState,
    fragment_id: str,
    focus: str,
    summarizer: Summarizer | None,
    *,
    call_id: str = "",
) -> tuple[ConversationState, ToolResult]:
    if not isinstance(focus, str) or not focus:
        raise SchemaViolation("focus is required and must be a non-empty string")
    frag = _get_fragment(state, fragment_id)
    if summarizer is None:
        raise SummarizerError("no summarizer is configured")
    try:
        summary = summarizer(frag.original_content, focus)
    except Exception as exc:  # noqa: BLE001 - any summarizer failure leaves the fragment intact
        raise SummarizerError(f"summarizer failed: {exc}") from exc
    if not isinstance(summary, str):
        raise SummarizerError("summarizer returned non-text output")
    state = _with_fragment(state, frag.summarized(summary, focus))
    return state, _ok(
        call_id,
        fragment_id=fragment_id,
        state="summarized",
        focus=focus,
        original_chars=len(frag.original_content),
        summary=summary,
    )


def find_all(text: str, query: str) -> list[int]:
    """Start offsets of every (possibly overlapping) occurrence of ``query``."""
    out = []
    pos = text.find(query)
    while pos >= 0:
        out.append(pos)
        pos = text.find(query, pos + 1)
    return out


def _enclosing_fragment(state: ConversationState, index: int, start: int, end: int) -> str | None:
    for frag in state.fragments_in(index):
        if frag.state != ACTIVE and frag.overlaps(index, start, end):
            return frag.id
    return None


def search_context(
    state: ConversationState,
    query: str,
    role: str = "user",
    max_results: int = 10,
    context_size: int = 200,
    *,
    call_id: str = "",
) -> tuple[ConversationState, ToolResult]:
    """Exact substring search over original message content.

    Text hidden inside folded or summarized fragments is still searched;
    such hits name the enclosing fragment so it can be restored.
    """
    if not isinstance(query, str) or not query:
        raise SchemaViolation("query must be a non-empty string")
    _check_role(role)
    _check_range("max_results", max_results, 1, 50)
    _check_range("context_size", context_size, 50, 1000)

    total = 0
    hits: list[SearchHit] = []
    results = dict(state.search_results)
    counter_state = state
    for msg in state.messages:
        if not role_matches(msg.role, role):
            continue
        offsets = find_all(msg.content, query)
        total += len(offsets)
        for off in offsets:
            if len(hits) >= max_results:
                break
            sid, counter = allocate_search_id(counter_state)
            counter_state = replace(counter_state, search_counter=counter, search_results=results)
            lo = max(0, off - context_size)
            hi = min(len(msg.content), off + len(query) + context_size)
            hit = SearchHit(
                id=sid,
                message_index=msg.index,
                match_offset=off,
                query=query,
                snippet=msg.content[lo:hi],
                inside_fragment=_enclosing_fragment(state, msg.index, off, off + len(query)),
            )
            results[sid] = hit
            hits.append(hit)

    new = replace(state, search_results=results, search_counter=counter_state.search_counter)
    rows = []
    for h in hits:
        row = {
            "id": h.id,
            "message_index": h.message_index,
            "role": state.messages[h.message_index].role,
            "offset": h.match_offset,
            "snippet": h.snippet,
        }
        if h.inside_fragment:
            row["fragment_id"] = h.inside_fragment
        rows.append(row)
    return new, _ok(call_id, query=query, total_matches=total, returned=len(hits), results=rows)


def get_search_detail(
    state: ConversationState, search_id: str, extended_context: int = 500, *, call_id: str = ""
) -> ToolResult:
    _check_range("extended_context", extended_context, 100, 2000)
    try:
        hit = state.search_results[search_id]
    except KeyError:
        raise SearchIdNotFound(search_id) from None
    content = state.messages[hit.message_index].content
    lo = max(0, hit.match_offset - extended_context)
    hi = min(len(content), hit.match_offset + len(hit.query) + extended_context)
    return _ok(
        call_id,
        search_id=search_id,
        message_index=hit.message_index,
        offset=hit.match_offset,
        start=lo,
        end=hi,
        context=content[lo:hi],
    )


_VALIDATORS = {name: jsonschema.Draft7Validator(parameters_schema(name)) for name in TOOL_NAMES}


def validate_arguments(name: str, arguments: Any) -> dict[str, Any]:
    """Validate against the tool's schema and fill in defaults."""
    if name not in TOOL_SCHEMAS:
        raise UnknownTool(f"unknown tool {name!r}; available: {', '.join(TOOL_NAMES)}")
    error = jsonschema.exceptions.best_match(_VALIDATORS[name].iter_errors(arguments))
    if error is not None:
        where = ".".join(str(p) for p in error.absolute_path) or "arguments"
        raise SchemaViolation(f"{name}: {where}: {error.message}")
    filled = dict(arguments)
    for key, prop in parameters_schema(name)["properties"].items():
        if key not in filled and "default" in prop:
            filled[key] = prop["default"]
    return filled


def dispatch(
    state: ConversationState, call: ToolCall, summarizer: Summarizer | None = None
) -> tuple[ConversationState, ToolResult]:
    """Validate and run one tool call. Never raises for tool-level failures."""
    try:
        if call.malformed is not None:
            raise SchemaViolation(
                f"tool arguments are not valid JSON (GatewayError malformed): {call.malformed}"
            )
        args = validate_arguments(call.name, call.arguments)
        cid = call.id
        if call.name == "fragment_context":
            return fragment_context(state, call_id=cid, **args)
        if call.name == "fold_fragment":
            return fold_fragment(state, args["fragment_id"], call_id=cid)
        if call.name == "restore_fragment":
            return restore_fragment(state, args["fragment_id"], call_id=cid)
        if call.name == "summarize_fragment":
            return summarize_fragment(state, args["fragment_id"], args["focus"], summarizer, call_id=cid)
        if call.name == "search_context":
            return search_context(state, call_id=cid, **args)
        return state, get_search_detail(state, call_id=cid, **args)
    except ContextError as exc:
        return state, error_result(call.id, exc)
