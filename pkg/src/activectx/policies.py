"""Deterministic rule policies that drive the tools the way a prompted model would.

Each policy only looks at the :class:`~activectx.gateway.ChatRequest` it is
given, so it sees exactly the rendered (possibly folded) context.
"""

from __future__ import annotations

import json
import re
from typing import Any

from activectx.bench import PI_LINE_RE
from activectx.gateway import ChatRequest, ChatResponse, ScriptedPolicy, tool_response


def _turn_messages(req: ChatRequest) -> tuple[dict[str, Any], list[dict[str, Any]]]:
    """The current user message and everything after it."""
    last_user = max(i for i, m in enumerate(req.messages) if m["role"] == "user")
    return req.messages[last_user], req.messages[last_user + 1 :]


def _tool_results(after: list[dict[str, Any]]) -> list[tuple[str, dict[str, Any]]]:
    """``(tool name, payload)`` for each tool message, in order."""
    names = {}
    out = []
    for m in after:
        for tc in m.get("tool_calls") or ():
            names[tc["id"]] = tc["function"]["name"]
        if m["role"] == "tool":
            out.append((names.get(m["tool_call_id"], ""), json.loads(m["content"])))
    return out


def _answer(text: str) -> ChatResponse:
    return ChatResponse(content=text, finish_reason="stop")


def latest_values(text: str) -> dict[str, str]:
    """Last visible value per key in ``text``, in first-seen key order."""
    latest: dict[str, str] = {}
    for key, value in PI_LINE_RE.findall(text):
        latest[key] = value
    return latest


def pi_strategy(num_fragments: int = 10, keep: int = 2) -> ScriptedPolicy:
    """Fragment the update stream, fold all but the last ``keep`` fragments, answer.

    The answer reads only the visible user message, so keys whose final
    update sits in a folded fragment come out stale or missing.
    """

    def rule(step: int, req: ChatRequest) -> ChatResponse:
        user, after = _turn_messages(req)
        if req.tool_choice == "none" or not req.tools:
            values = latest_values(user["content"])
            return _answer("\n".join(f"{k}: {v}" for k, v in values.items()))
        results = _tool_results(after)
        fragmented = [p for name, p in results if name == "fragment_context" and p["status"] == "ok"]
        if not fragmented:
            lines = PI_LINE_RE.finditer(user["content"])
            matches = list(lines)
            return tool_response(
                step,
                "fragment_context",
                {
                    "start_marker": matches[0].group(0),
                    "end_marker": matches[-1].group(0),
                    "num_fragments": num_fragments,
                },
            )
        ids = [f["id"] for f in fragmented[0]["fragments"]]
        folded = {p["fragment_id"] for name, p in results if name == "fold_fragment" and p["status"] == "ok"}
        for fid in ids[: max(0, len(ids) - keep)]:
            if fid not in folded:
                return tool_response(step, "fold_fragment", {"fragment_id": fid})
        values = latest_values(user["content"])
        return _answer("\n".join(f"{k}: {v}" for k, v in values.items()))

    return ScriptedPolicy(rule=rule)


_START_RE = re.compile(r"oldest ancestor that (\w+) can trace back to")


def needle_strategy(context_size: int = 50, extended_context: int = 200) -> ScriptedPolicy:
    """Walk the relation chain with search then detail, one hop at a time.

    Stops when a search for the current person's elder returns nothing.
    """

    def rule(step: int, req: ChatRequest) -> ChatResponse:
        user, after = _turn_messages(req)
        match = _START_RE.search(user["content"])
        if match is None:
            return _answer("unknown")
        current = match.group(1)
        last: tuple[str, dict[str, Any]] | None = None
        for name, payload in _tool_results(after):
            last = (name, payload)
            if name == "get_search_detail" and payload["status"] == "ok":
                elder = re.search(rf"(\w+) is {re.escape(current)}'s \w+\.", payload["context"])
                if elder:
                    current = elder.group(1)
        if req.tool_choice == "none" or not req.tools:
            return _answer(current)
        if last is not None and last[0] == "search_context" and last[1]["status"] == "ok":
            if last[1]["returned"] == 0:
                return _answer(current)
            return tool_response(
                step,
                "get_search_detail",
                {"search_id": last[1]["results"][0]["id"], "extended_context": extended_context},
            )
        return tool_response(
            step,
            "search_context",
            {"query": f"is {current}'s", "role": "user", "max_results": 5, "context_size": context_size},
        )

    return ScriptedPolicy(rule=rule)


def direct_answer(text: str = "done") -> ScriptedPolicy:
    return ScriptedPolicy([_answer(text)])
