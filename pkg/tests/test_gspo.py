import math
import random

import pytest

from activectx.gspo import GspoGroup, clip, group_advantages, group_report, gspo_objective, sequence_ratio

from oracles import advantages_oracle, objective_oracle, random_group, ratio_oracle


class TestSequenceRatio:
    def test_identical(self):
        assert sequence_ratio([-1.0, -2.5, -0.3], [-1.0, -2.5, -0.3]) == 1.0

    def test_constant_log_two_difference(self):
        old = [-3.0, -1.0, -0.5, -2.0]
        assert sequence_ratio([x + math.log(2) for x in old], old) == pytest.approx(2.0, abs=1e-15)

    def test_matches_product_oracle(self):
        rng = random.Random(17)
        for _ in range(300):
            n = rng.randint(1, 40)
            old = [rng.uniform(-5, 0) for _ in range(n)]
            new = [x + rng.gauss(0, 0.3) for x in old]
            assert abs(sequence_ratio(new, old) - float(ratio_oracle(new, old))) < 1e-12

    def test_errors(self):
        with pytest.raises(ValueError):
            sequence_ratio([], [])
        with pytest.raises(ValueError):
            sequence_ratio([0.0], [0.0, 1.0])


class TestAdvantages:
    def test_two_point(self):
        assert group_advantages([1, -1]) == [1.0, -1.0]

    def test_constant_group(self):
        assert group_advantages([0.5, 0.5, 0.5]) == [0.0, 0.0, 0.0]

    def test_mixed(self):
        got = group_advantages([1, 0, 0, -1])
        want = advantages_oracle([1, 0, 0, -1])
        assert all(abs(a - float(b)) < 1e-12 for a, b in zip(got, want))
        assert got[0] == pytest.approx(math.sqrt(2))

    def test_normalization(self):
        rng = random.Random(3)
        for _ in range(200):
            adv = group_advantages([rng.uniform(-1, 1) for _ in range(rng.randint(2, 16))])
            mean = sum(adv) / len(adv)
            assert abs(mean) < 1e-9
            assert abs(math.sqrt(sum((a - mean) ** 2 for a in adv) / len(adv)) - 1) < 1e-9

    def test_singleton_rejected(self):
        with pytest.raises(ValueError):
            group_advantages([1.0])


def group_with(ratios, advantages, eps=0.2):
    n = len(ratios)
    return GspoGroup("q", [[0.0]] * n, [[0.0]] * n, [0.0] * n, eps=eps, ratios=ratios, advantages=advantages)


class TestObjective:
    def test_clipped_positive_advantage(self):
        assert gspo_objective(group_with([1.5], [1.0])) == pytest.approx(1.2)

    def test_negative_advantage_takes_pessimistic_side(self):
        assert gspo_objective(group_with([0.5], [-1.0])) == pytest.approx(-0.8)

    def test_inside_range_is_unclipped(self):
        assert gspo_objective(group_with([1.1, 0.9], [1.0, -1.0])) == pytest.approx((1.1 - 0.9) / 2)

    def test_identical_policies_give_zero(self):
        rng = random.Random(8)
        for _ in range(200):
            new, old, rewards, eps, eps_high = random_group(rng, identical=True)
            assert abs(gspo_objective(GspoGroup("q", new, old, rewards, eps, eps_high))) < 1e-12

    def test_matches_brute_force(self):
        rng = random.Random(99)
        for _ in range(500):
            new, old, rewards, eps, eps_high = random_group(rng)
            got = gspo_objective(GspoGroup("q", new, old, rewards, eps, eps_high))
            assert abs(got - float(objective_oracle(new, old, rewards, eps, eps_high))) < 1e-12

    def test_asymmetric_clip(self):
        g = group_with([1.5], [1.0])
        g.eps_high = 0.28
        assert gspo_objective(g) == pytest.approx(1.28)


def test_clip_helper():
    assert [clip(x, 0.8, 1.2) for x in (0.1, 1.0, 5.0)] == [0.8, 1.0, 1.2]


def test_group_report_fields():
    report = group_report(GspoGroup("q1", [[-1.0, -1.0], [-2.0]], [[-1.0, -1.0], [-2.0]], [1.0, 0.0], rollout_ids=["a", "b"]))
    assert report["G"] == 2 and report["lengths"] == [2, 1]
    assert report["advantages"] == [1.0, -1.0] and report["objective"] == 0.0
    assert report["clip_range"] == [0.8, 1.2]


def test_mismatched_group_rejected():
    with pytest.raises(ValueError):
        GspoGroup("q", [[0.0]], [[0.0], [0.0]], [1.0])
