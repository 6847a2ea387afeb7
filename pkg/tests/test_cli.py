import json

import pytest

from activectx.bench import gen_pi_task, task_from_dict
from activectx.cli import main
from activectx.runtime import TrajectoryRecord


def read_jsonl(path):
    return [json.loads(line) for line in path.read_text().splitlines() if line.strip()]


@pytest.fixture
def pi_file(tmp_path):
    path = tmp_path / "pi.json"
    assert main(["gen-bench", "pi", "--keys", "6", "--updates", "8", "--seed", "0", "--out", str(path)]) == 0
    return path


def test_gen_bench_pi_round_trip(tmp_path):
    path = tmp_path / "t.json"
    assert main(["gen-bench", "pi", "--out", str(path), "--seed", "3"]) == 0
    data = json.loads(path.read_text())
    assert data["kind"] == "pi" and len(data["tasks"]) == 1
    assert task_from_dict(data["tasks"][0]) == gen_pi_task(46, 64, 3)


def test_gen_bench_needle_count(tmp_path):
    path = tmp_path / "n.json"
    assert main(["gen-bench", "needle", "--count", "3", "--out", str(path)]) == 0
    tasks = [task_from_dict(t) for t in json.loads(path.read_text())["tasks"]]
    assert [t.seed for t in tasks] == [0, 1, 2]
    assert all(len(t.haystack) <= 16_000 for t in tasks)


def test_gen_bench_bad_kind(tmp_path, capsys):
    with pytest.raises(SystemExit) as exc:
        main(["gen-bench", "mrcr", "--out", str(tmp_path / "x.json")])
    assert exc.value.code == 2


def test_run_agent_pi_matches_golden(pi_file, tmp_path, golden):
    out = tmp_path / "run"
    assert main(["run-agent", str(pi_file), "--policy", "pi", "--out", str(out)]) == 0
    assert (out / "trajectories.jsonl").read_text() == (golden / "pi_trajectories.jsonl").read_text()
    scores = json.loads((out / "scores.json").read_text())["results"]
    assert scores[0]["score"] == 1.0 and scores[0]["lost_keys"] == []


def test_live_without_key_fails_cleanly(pi_file, tmp_path, monkeypatch, capsys):
    monkeypatch.delenv("ACTIVECTX_TEST_KEY", raising=False)
    code = main(["run-agent", str(pi_file), "--out", str(tmp_path / "o"), "--api-key-env", "ACTIVECTX_TEST_KEY"])
    assert code == 1
    assert "GatewayError(auth)" in capsys.readouterr().err


def test_no_tools_baseline(tmp_path):
    task_path = tmp_path / "n.json"
    main(["gen-bench", "needle", "--out", str(task_path), "--chars", "4000"])
    responses = tmp_path / "responses.json"
    responses.write_text(json.dumps([{"content": "Nobody"}]))
    out = tmp_path / "o"
    assert main(["run-agent", str(task_path), "--policy", str(responses), "--no-tools", "--out", str(out)]) == 0
    (row,) = read_jsonl(out / "trajectories.jsonl")
    rec = TrajectoryRecord.from_dict(row)
    assert rec.tool_call_count == 0 and len(rec.steps) == 1
    (score,) = json.loads((out / "scores.json").read_text())["results"]
    assert score["reduction"]["reduction"] == 0.0
    assert rec.initial_state.fragments == {}


def test_jobs_do_not_change_output(tmp_path):
    task_path = tmp_path / "pi.json"
    main(["gen-bench", "pi", "--keys", "5", "--updates", "6", "--count", "4", "--out", str(task_path)])
    outs = []
    for jobs in ("1", "4"):
        out = tmp_path / f"o{jobs}"
        assert main(["run-agent", str(task_path), "--policy", "pi", "--jobs", jobs, "--out", str(out)]) == 0
        outs.append((out / "trajectories.jsonl").read_text())
    assert outs[0] == outs[1]


def test_forge_produces_validated_samples(pi_file, tmp_path):
    out = tmp_path / "run"
    main(["run-agent", str(pi_file), "--policy", "pi", "--out", str(out)])
    samples_path = tmp_path / "samples.jsonl"
    assert main(["forge", str(out / "trajectories.jsonl"), str(samples_path)]) == 0
    rows = read_jsonl(samples_path)
    # fragment + 8 folds are context-modifying, plus the final answer
    assert len(rows) == 10
    assert {r["reward"] for r in rows} == {1}
    assert all(set(r) == {"rollout_id", "messages", "loss_mask", "reward"} for r in rows)


def test_forge_empty_file(tmp_path):
    src = tmp_path / "empty.jsonl"
    src.write_text("")
    dst = tmp_path / "s.jsonl"
    assert main(["forge", str(src), str(dst)]) == 0
    assert dst.read_text() == ""


def fixture_file(tmp_path, groups, **extra):
    path = tmp_path / "fixture.json"
    path.write_text(json.dumps({"groups": groups, **extra}))
    return path


def test_gspo_eval_identical_policy(tmp_path):
    rollouts = [{"rollout_id": f"r{i}", "logp_new": [-1.0, -0.5], "logp_old": [-1.0, -0.5], "reward": float(i % 2)} for i in range(4)]
    out = tmp_path / "report.json"
    assert main(["gspo-eval", str(fixture_file(tmp_path, [{"query": "q", "rollouts": rollouts}])), "--out", str(out)]) == 0
    report = json.loads(out.read_text())
    assert abs(report["mean_objective"]) < 1e-12


def test_gspo_eval_uses_sample_rewards(tmp_path):
    samples = tmp_path / "s.jsonl"
    samples.write_text("\n".join(json.dumps({"rollout_id": rid, "messages": [], "loss_mask": [], "reward": r}) for rid, r in [("a", 1), ("b", -1)]))
    rollouts = [{"rollout_id": "a", "logp_new": [-0.5], "logp_old": [-1.0]}, {"rollout_id": "b", "logp_new": [-1.0], "logp_old": [-1.0]}]
    out = tmp_path / "r.json"
    assert main(["gspo-eval", str(fixture_file(tmp_path, [{"query": "q", "rollouts": rollouts}])), "--samples", str(samples), "--out", str(out)]) == 0
    (group,) = json.loads(out.read_text())["groups"]
    assert group["advantages"] == [1.0, -1.0]
    # ratio e^0.5 is clipped at 1.2 for the positive advantage; the other side is exactly -1
    assert group["objective"] == pytest.approx((1.2 - 1.0) / 2)


def test_gspo_eval_singleton_group(tmp_path, capsys):
    rollouts = [{"rollout_id": "a", "logp_new": [-1.0], "logp_old": [-1.0], "reward": 1}]
    assert main(["gspo-eval", str(fixture_file(tmp_path, [{"query": "q", "rollouts": rollouts}]))]) == 1
    assert "error" in capsys.readouterr().err


def test_missing_task_file(tmp_path, capsys):
    assert main(["run-agent", str(tmp_path / "nope.json"), "--policy", "pi", "--out", str(tmp_path)]) == 1
