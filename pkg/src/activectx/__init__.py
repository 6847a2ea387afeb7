"""Context-management tools an LLM agent uses to fold, summarize, restore and search its own history."""

from activectx.store import ConversationState, Fragment, Message, ToolCall, new_state, render_context
from activectx.tools import ToolResult, dispatch

__all__ = [
    "ConversationState",
    "Fragment",
    "Message",
    "ToolCall",
    "ToolResult",
    "dispatch",
    "new_state",
    "render_context",
]

__version__ = "0.1.0"
