"""Slow, independent reference implementations used only by tests."""

from __future__ import annotations

import math
import random

import mpmath

mpmath.mp.dps = 50


def ratio_oracle(logp_new, logp_old):
    """Product of per-token probability ratios, then the L-th root, at 50 digits."""
    prod = mpmath.mpf(1)
    for a, b in zip(logp_new, logp_old):
        prod *= mpmath.exp(mpmath.mpf(a)) / mpmath.exp(mpmath.mpf(b))
    return prod ** (mpmath.mpf(1) / len(logp_new))


def ratio_oracle_float(logp_new, logp_old):
    """Same product-then-root form in plain floats; fast enough for large sweeps."""
    return math.prod(math.exp(a) / math.exp(b) for a, b in zip(logp_new, logp_old)) ** (1 / len(logp_new))


def advantages_oracle(rewards):
    r = [mpmath.mpf(x) for x in rewards]
    mean = sum(r) / len(r)
    var = sum((x - mean) ** 2 for x in r) / len(r)
    if var == 0:
        return [mpmath.mpf(0)] * len(r)
    std = mpmath.sqrt(var)
    return [(x - mean) / std for x in r]


def clipped_term_oracle(s, a, lo, hi):
    """min(s*A, clip(s)*A) by case analysis instead of min/max."""
    if s < lo:
        c = lo
    elif s > hi:
        c = hi
    else:
        c = s
    u, v = s * a, c * a
    return u if u <= v else v


def objective_oracle(logp_new, logp_old, rewards, eps, eps_high=None, ratio=ratio_oracle):
    hi = 1 + (eps if eps_high is None else eps_high)
    lo = 1 - eps
    adv = advantages_oracle(rewards)
    terms = [clipped_term_oracle(ratio(n, o), a, lo, hi) for n, o, a in zip(logp_new, logp_old, adv)]
    return sum(terms) / len(terms)


def random_group(rng: random.Random, identical: bool = False):
    g = rng.randint(2, 16)
    logp_old, logp_new = [], []
    for _ in range(g):
        length = rng.randint(1, 48)
        old = [rng.uniform(-6.0, -0.01) for _ in range(length)]
        scale = rng.choice([0.01, 0.1, 0.5])
        new = list(old) if identical else [x + rng.gauss(0.0, scale) for x in old]
        logp_old.append(old)
        logp_new.append(new)
    kind = rng.random()
    if kind < 0.4:
        rewards = [float(rng.choice([-1, 0, 1])) for _ in range(g)]
    elif kind < 0.5:
        rewards = [0.5] * g
    else:
        rewards = [rng.uniform(-1, 1) for _ in range(g)]
    eps = rng.choice([0.1, 0.2, 0.3])
    eps_high = rng.choice([None, None, 0.28])
    return logp_new, logp_old, rewards, eps, eps_high


def naive_search(state, query, role, limit):
    """Every (message index, offset) at which ``query`` starts, by brute force."""
    out = []
    for m in state.messages:
        if role != "all" and m.role != role:
            continue
        for i in range(len(m.content) - len(query) + 1):
            if m.content[i : i + len(query)] == query:
                out.append((m.index, i))
    return out[:limit]


def last_write_wins(lines, pattern):
    """Ground truth from a single forward scan over update lines."""
    truth = {}
    for line in lines:
        m = pattern.fullmatch(line)
        truth[m.group(1)] = m.group(2)
    return truth


def tail_holds_every_final_update(task, num_fragments=10, keep=2):
    """Each key's last update line starts inside the last ``keep`` slices of the stream.

    Slices follow the equal-partition rule, so the trailing ones are all ``len // n`` long.
    """
    cut = len(task.stream) - keep * (len(task.stream) // num_fragments)
    last_start, pos = {}, 0
    for line, (key, _) in zip(task.lines, task.updates):
        last_start[key] = pos
        pos += len(line) + 1
    return all(p >= cut for p in last_start.values())
