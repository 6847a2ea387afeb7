"""Sequence-level clipped policy objective with group-normalized advantages.

Numerics only: no gradients, no optimizer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Any, Sequence


def sequence_ratio(logp_new: Sequence[float], logp_old: Sequence[float]) -> float:
    """Length-normalized likelihood ratio ``(pi_new / pi_old) ** (1 / L)``.

    Computed in log space as ``exp(mean(logp_new - logp_old))``.
    """
    if len(logp_new) != len(logp_old):
        raise ValueError(f"length mismatch: {len(logp_new)} vs {len(logp_old)}")
    if not logp_new:
        raise ValueError("sequence must have at least one token")
    return math.exp(math.fsum(a - b for a, b in zip(logp_new, logp_old)) / len(logp_new))


def group_advantages(rewards: Sequence[float]) -> list[float]:
    """``(r - mean) / std`` with the population std; a constant group gives zeros."""
    g = len(rewards)
    if g < 2:
        raise ValueError("group normalization needs at least two rewards")
    if max(rewards) == min(rewards):
        return [0.0] * g
    mean = math.fsum(rewards) / g
    std = math.sqrt(math.fsum((r - mean) ** 2 for r in rewards) / g)
    return [(r - mean) / std for r in rewards]


def clip(x: float, lo: float, hi: float) -> float:
    return min(max(x, lo), hi)


@dataclass
class GspoGroup:
    """Rollouts sampled for one query.

    ``eps_high`` defaults to ``eps`` for a symmetric clip range.
    """

    query: str
    logp_new: list[list[float]]
    logp_old: list[list[float]]
    rewards: list[float]
    eps: float = 0.2
    eps_high: float | None = None
    rollout_ids: list[str] = field(default_factory=list)
    ratios: list[float] | None = None
    advantages: list[float] | None = None

    def __post_init__(self) -> None:
        if not (len(self.logp_new) == len(self.logp_old) == len(self.rewards)):
            raise ValueError("logp_new, logp_old and rewards must have one entry per rollout")

    @property
    def size(self) -> int:
        return len(self.rewards)

    @property
    def lengths(self) -> list[int]:
        return [len(x) for x in self.logp_new]

    @property
    def clip_range(self) -> tuple[float, float]:
        high = self.eps if self.eps_high is None else self.eps_high
        return 1.0 - self.eps, 1.0 + high

    def populated(self) -> GspoGroup:
        return replace(
            self,
            ratios=[sequence_ratio(n, o) for n, o in zip(self.logp_new, self.logp_old)],
            advantages=group_advantages(self.rewards),
        )


def gspo_objective(group: GspoGroup) -> float:
    """Mean over the group of ``min(s * A, clip(s) * A)``."""
    if group.ratios is None or group.advantages is None:
        group = group.populated()
    lo, hi = group.clip_range
    terms = [min(s * a, clip(s, lo, hi) * a) for s, a in zip(group.ratios, group.advantages)]
    return math.fsum(terms) / len(terms)


def group_report(group: GspoGroup) -> dict[str, Any]:
    group = group.populated()
    lo, hi = group.clip_range
    return {
        "query": group.query,
        "G": group.size,
        "rollout_ids": group.rollout_ids,
        "lengths": group.lengths,
        "rewards": group.rewards,
        "ratios": group.ratios,
        "advantages": group.advantages,
        "clip_range": [lo, hi],
        "objective": gspo_objective(group),
    }
