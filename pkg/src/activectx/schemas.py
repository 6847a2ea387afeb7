"""Function-calling schemas for the six context tools."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any

_ROLE_ENUM = ["user", "assistant", "all"]


def _function(name: str, description: str, properties: dict, required: list[str]) -> dict[str, Any]:
    return {
        "type": "function",
        "function": {
            "name": name,
            "description": description,
            "parameters": {
                "type": "object",
                "properties": properties,
                "required": required,
                "additionalProperties": False,
            },
        },
    }


def _fragment_id_param(verb: str) -> dict[str, str]:
    return {"type": "string", "description": f"ID of the fragment to {verb} (e.g., 'f1a2b3')"}


TOOL_SCHEMAS: dict[str, dict[str, Any]] = {
    "fragment_context": _function(
        "fragment_context",
        "Fragment conversation content between specified markers into manageable pieces. "
        "Useful for breaking down long text sections for detailed analysis.",
        {
            "start_marker": {
                "type": "string",
                "description": "Start marker text to identify the beginning of content to fragment",
            },
            "end_marker": {
                "type": "string",
                "description": "End marker text to identify the end of content to fragment",
            },
            "num_fragments": {
                "type": "integer",
                "default": 5,
                "minimum": 1,
                "maximum": 20,
                "description": "Number of fragments to create (default: 5)",
            },
            "role": {
                "type": "string",
                "enum": list(_ROLE_ENUM),
                "default": "user",
                "description": "Which role's messages to search in (default: user)",
            },
        },
        ["start_marker", "end_marker"],
    ),
    "fold_fragment": _function(
        "fold_fragment",
        "Fold (hide) a conversation fragment to reduce visible context length. "
        "The content is preserved and can be expanded later.",
        {"fragment_id": _fragment_id_param("fold")},
        ["fragment_id"],
    ),
    "restore_fragment": _function(
        "restore_fragment",
        "Restore a fragment to its original content from ACM storage. "
        "Works for both summarized and folded fragments.",
        {"fragment_id": _fragment_id_param("restore")},
        ["fragment_id"],
    ),
    "summarize_fragment": _function(
        "summarize_fragment",
        "Summarize a conversation fragment using LLM to compress content while preserving key "
        "information. Supports focus-oriented summarization.",
        {
            "fragment_id": _fragment_id_param("summarize"),
            "focus": {
                "type": "string",
                "description": "Focus area for the summary (e.g., 'technical details', 'key decisions', "
                "'action items', 'main points', 'problems', 'solutions')",
            },
        },
        ["fragment_id", "focus"],
    ),
    "search_context": _function(
        "search_context",
        "Search tool for finding exact text matches in conversation history.",
        {
            "query": {
                "type": "string",
                "description": "Exact text to search for in conversation history",
            },
            "role": {
                "type": "string",
                "enum": list(_ROLE_ENUM),
                "default": "user",
                "description": "Filter by message role (default: user)",
            },
            "max_results": {
                "type": "integer",
                "default": 10,
                "minimum": 1,
                "maximum": 50,
                "description": "Maximum number of results to return",
            },
            "context_size": {
                "type": "integer",
                "default": 200,
                "minimum": 50,
                "maximum": 1000,
                "description": "Context characters before/after match",
            },
        },
        ["query"],
    ),
    "get_search_detail": _function(
        "get_search_detail",
        "Get detailed context for a search result by its ID. "
        "Retrieves extended context around the search match position.",
        {
            "search_id": {
                "type": "string",
                "description": "Search result ID from search_context (e.g., 's1a2b3')",
            },
            "extended_context": {
                "type": "integer",
                "default": 500,
                "minimum": 100,
                "maximum": 2000,
                "description": "Number of characters to show before and after the match (default: 500)",
            },
        },
        ["search_id"],
    ),
}

TOOL_NAMES: tuple[str, ...] = tuple(TOOL_SCHEMAS)


def tool_schemas() -> list[dict[str, Any]]:
    """The schemas in the order they are offered to the model."""
    return json.loads(json.dumps(list(TOOL_SCHEMAS.values())))


def parameters_schema(name: str) -> dict[str, Any]:
    return TOOL_SCHEMAS[name]["function"]["parameters"]


def _is_scalar(v: Any) -> bool:
    return not isinstance(v, (dict, list))


def format_schema(value: Any, indent: int = 0) -> str:
    """Pretty-print JSON with two-space indentation and scalar lists inline."""
    pad = "  " * indent
    inner = "  " * (indent + 1)
    if isinstance(value, dict):
        if not value:
            return "{}"
        items = [f"{inner}{json.dumps(k)}: {format_schema(v, indent + 1)}" for k, v in value.items()]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(value, list):
        if all(_is_scalar(v) for v in value):
            return "[" + ", ".join(json.dumps(v, ensure_ascii=False) for v in value) + "]"
        items = [inner + format_schema(v, indent + 1) for v in value]
        return "[\n" + ",\n".join(items) + "\n" + pad + "]"
    return json.dumps(value, ensure_ascii=False)


def export_schemas(out_dir: str | Path) -> list[Path]:
    """Write one ``<tool>.json`` file per tool; returns the paths written."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for name, schema in TOOL_SCHEMAS.items():
        path = out_dir / f"{name}.json"
        path.write_text(format_schema(schema) + "\n", encoding="utf-8")
        paths.append(path)
    return paths
