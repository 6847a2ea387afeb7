from __future__ import annotations

import random
from pathlib import Path

import pytest

from activectx.gateway import ChatRequest, ChatResponse, ScriptedPolicy, scripted_summarizer, tool_response
from activectx.runtime import TrajectoryRecord, run_turn
from activectx.store import ConversationState, new_state
from activectx.tools import fragment_context

GOLDEN = Path(__file__).parent / "golden"

WORDS = "alpha beta gamma delta epsilon zeta eta theta iota kappa lambda mu nu xi omicron pi rho".split()


@pytest.fixture
def golden() -> Path:
    return GOLDEN


def random_text(rng: random.Random, n_words: int, alphabet: list[str] = WORDS) -> str:
    return " ".join(rng.choice(alphabet) for _ in range(n_words))


def random_conversation(rng: random.Random, max_messages: int = 6, max_words: int = 80) -> ConversationState:
    roles = ["system", "user", "assistant", "user", "assistant"]
    n = rng.randint(1, max_messages)
    pairs = [(rng.choice(roles[1:]) if i else rng.choice(roles), random_text(rng, rng.randint(1, max_words))) for i in range(n)]
    return new_state(pairs, seed=rng.randrange(2**31))


def fragmented_history(seed: int = 0, n_fragments: int = 4) -> ConversationState:
    """A prior-turn user message already split into fragments."""
    rng = random.Random(seed)
    doc = "BEGIN " + random_text(rng, 120) + " END"
    state = new_state([("system", "sys"), ("user", doc), ("assistant", "noted")], seed=seed)
    state, _ = fragment_context(state, "BEGIN", "END", n_fragments)
    return state


def pattern_record(pattern: list[bool], seed: int = 0) -> TrajectoryRecord:
    """A rollout with ``len(pattern)`` tool steps; step k modifies context iff ``pattern[k]``.

    Context-modifying steps fold, summarize or restore one of the
    pre-existing fragments; the others search or look up search details.
    """
    rng = random.Random(seed)
    state = fragmented_history(seed)
    fids = sorted(state.fragments)

    def rule(step: int, req: ChatRequest) -> ChatResponse:
        if step >= len(pattern):
            return ChatResponse(content=f"final answer {seed}")
        if pattern[step]:
            op = rng.choice(["fold_fragment", "summarize_fragment", "restore_fragment"])
            args = {"fragment_id": rng.choice(fids)}
            if op == "summarize_fragment":
                args["focus"] = rng.choice(["key decisions", "main points"])
            return tool_response(step, op, args)
        if rng.random() < 0.7:
            return tool_response(step, "search_context", {"query": rng.choice(WORDS), "role": "all"})
        return tool_response(step, "get_search_detail", {"search_id": "s00000"})

    _, rec = run_turn(
        state,
        "question " + random_text(rng, 5),
        ScriptedPolicy(rule=rule),
        summarizer=scripted_summarizer,
        rollout_id=f"r{seed}",
    )
    return rec


def search_fold_answer_record():
    """search, fold, answer over a single fragmented user document."""
    state = new_state([("system", "sys"), ("user", "Doc: BEGIN " + "filler " * 30 + "END. Which?")], seed=2)
    state, res = fragment_context(state, "BEGIN", "END", 1)
    fid = res.data()["fragments"][0]["id"]
    policy = ScriptedPolicy(
        [
            tool_response(0, "search_context", {"query": "filler", "max_results": 2}),
            tool_response(1, "fold_fragment", {"fragment_id": fid}),
            ChatResponse(content="It is the filler."),
        ]
    )
    _, rec = run_turn(state, "answer the question", policy, rollout_id="sfa")
    return rec, policy, fid


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for number in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[number])
