import pytest

from activectx.bench import context_reduction, gen_needle_task, gen_pi_task, lost_keys, score_needle, score_pi
from activectx.policies import direct_answer, latest_values, needle_strategy, pi_strategy
from activectx.runtime import run_turn
from activectx.store import new_state

from oracles import tail_holds_every_final_update


def run_pi(task, **kw):
    _, rec = run_turn(new_state([("system", "sys")]), task.prompt(), pi_strategy(**kw))
    return rec


def test_pi_strategy_call_shape():
    rec = run_pi(gen_pi_task(46, 64, 1))
    names = [tc.name for s in rec.steps for tc in (s.completion.tool_calls or ())]
    assert names == ["fragment_context"] + ["fold_fragment"] * 8
    assert rec.ctx_mod_flags == [True] * 9 + [False]


def test_pi_strategy_scores_when_tail_is_complete():
    for seed in range(5):
        task = gen_pi_task(46, 64, seed)
        rec = run_pi(task)
        assert score_pi(rec.final_answer, task) == 1.0
        assert context_reduction(rec).reduction >= 0.70


def test_pi_strategy_reports_lost_keys_when_tail_is_short():
    # with few updates per key, some keys' final update falls in the folded region
    task = gen_pi_task(46, 3, seed=0)
    rec = run_pi(task, keep=1)
    lost = lost_keys(rec.final_answer, task)
    assert lost and score_pi(rec.final_answer, task) == pytest.approx(1 - len(lost) / 46)


@pytest.mark.parametrize("updates", [2, 8, 32, 64])
def test_full_score_exactly_when_tail_complete(updates):
    for seed in range(10):
        task = gen_pi_task(46, updates, seed)
        rec = run_pi(task)
        assert (score_pi(rec.final_answer, task) == 1.0) == tail_holds_every_final_update(task)


def test_latest_values_last_write_wins():
    text = "The value of a is now x.\nThe value of b is now y.\nThe value of a is now z."
    assert latest_values(text) == {"a": "z", "b": "y"}


def test_needle_strategy_follows_chain():
    for seed in range(5):
        task = gen_needle_task(3, 16_000, 0.4, seed)
        _, rec = run_turn(new_state([("system", "sys")]), task.prompt(), needle_strategy())
        assert score_needle(rec.final_answer, task) == 1.0
        assert rec.tool_call_count <= 20
        assert not any(rec.ctx_mod_flags)


def test_direct_answer():
    _, rec = run_turn(new_state([]), "hi", direct_answer("hello"), tools_enabled=False)
    assert rec.final_answer == "hello"
