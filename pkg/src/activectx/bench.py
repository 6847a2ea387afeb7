"""Synthetic long-context tasks, answer scoring, and context-reduction reports.

Two task families:

* key-value update streams where only the last update per key counts, and
  earlier updates act as interference;
* multi-needle chains of family relations hidden in filler text, where the
  answer is the far end of the chain.
"""

from __future__ import annotations

import logging
import random
import re
from dataclasses import asdict, dataclass, field
from typing import Any

from activectx.runtime import TrajectoryRecord

log = logging.getLogger(__name__)

PI_KEYS = [
    "law", "climate", "emotion", "planet", "river", "fabric", "instrument", "spice",
    "mineral", "bird", "dance", "vehicle", "beverage", "tree", "sport", "metal",
    "language", "flower", "weapon", "insect", "cuisine", "profession", "currency", "gemstone",
    "mammal", "architecture", "disease", "garment", "tool", "weather", "vegetable", "fish",
    "painting", "festival", "element", "reptile", "furniture", "music", "fruit", "mythology",
    "ocean", "mountain", "poem", "medicine", "material", "color",
]

_ADJECTIVES = [
    "amber", "bold", "brisk", "calm", "crimson", "dusty", "eager", "faint", "gentle", "golden",
    "hollow", "icy", "jagged", "keen", "lucid", "mellow", "narrow", "olive", "pale", "quiet",
    "rustic", "silver", "tidal", "vivid",
]
_NOUNS = [
    "anchor", "basin", "canyon", "dome", "ember", "falcon", "glacier", "harbor", "island",
    "jungle", "kettle", "lantern", "meadow", "nectar", "orchard", "pebble", "quarry", "ridge",
    "summit", "thicket", "valley", "willow", "yarrow", "zephyr",
]
VALUE_POOL = [f"{a} {n}" for a in _ADJECTIVES for n in _NOUNS]

PI_LINE = "The value of {key} is now {value}."
PI_LINE_RE = re.compile(r"The value of (.+?) is now (.+?)\.")
PI_QUESTION = (
    "Question: what is the current (most recent) value of every key above? "
    "Answer with one line per key in the form 'key: value'."
)


class SizeError(ValueError):
    pass


@dataclass
class PiTask:
    keys: list[str]
    updates_per_key: int
    updates: list[tuple[str, str]]
    truth: dict[str, str]
    seed: int

    @property
    def lines(self) -> list[str]:
        return [PI_LINE.format(key=k, value=v) for k, v in self.updates]

    @property
    def stream(self) -> str:
        return "\n".join(self.lines)

    def prompt(self) -> str:
        return (
            "Below is a stream of updates to several keys. Later updates overwrite earlier ones.\n\n"
            f"{self.stream}\n\n{PI_QUESTION}"
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "kind": "pi",
            "seed": self.seed,
            "keys": self.keys,
            "updates_per_key": self.updates_per_key,
            "updates": [list(u) for u in self.updates],
            "truth": self.truth,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> PiTask:
        return cls(
            keys=list(data["keys"]),
            updates_per_key=data["updates_per_key"],
            updates=[(k, v) for k, v in data["updates"]],
            truth=dict(data["truth"]),
            seed=data["seed"],
        )


def _pi_keys(n_keys: int) -> list[str]:
    if n_keys <= len(PI_KEYS):
        return PI_KEYS[:n_keys]
    return PI_KEYS + [f"key{i}" for i in range(len(PI_KEYS) + 1, n_keys + 1)]


def gen_pi_task(n_keys: int = 46, n_updates: int = 64, seed: int = 0) -> PiTask:
    """Interleaved update stream; the truth is the last value written per key."""
    if n_keys < 1 or n_updates < 1:
        raise ValueError("n_keys and n_updates must be >= 1")
    if n_updates > len(VALUE_POOL):
        raise ValueError(f"at most {len(VALUE_POOL)} updates per key are supported")
    rng = random.Random(seed)
    keys = _pi_keys(n_keys)
    values = {k: rng.sample(VALUE_POOL, n_updates) for k in keys}
    order = [k for k in keys for _ in range(n_updates)]
    rng.shuffle(order)
    cursor = dict.fromkeys(keys, 0)
    updates = []
    for k in order:
        updates.append((k, values[k][cursor[k]]))
        cursor[k] += 1
    truth = {k: values[k][-1] for k in keys}
    return PiTask(keys, n_updates, updates, truth, seed)


def parse_answer(answer: str) -> dict[str, str]:
    """``key: value`` lines, keys and values lowercased and trimmed."""
    out = {}
    for line in answer.splitlines():
        key, sep, value = line.partition(":")
        if sep and key.strip():
            out[key.strip().lower()] = value.strip().lower()
    return out


def score_pi(answer: str, task: PiTask) -> float:
    parsed = parse_answer(answer)
    if not parsed:
        log.warning("could not parse any 'key: value' lines from answer")
        return 0.0
    hits = sum(parsed.get(k.lower()) == v.lower() for k, v in task.truth.items())
    return hits / len(task.truth)


def lost_keys(answer: str, task: PiTask) -> list[str]:
    """Keys whose answered value is missing or stale."""
    parsed = parse_answer(answer)
    return [k for k, v in task.truth.items() if parsed.get(k.lower()) != v.lower()]


NAMES = [
    "Adelaide", "Bartholomew", "Cassius", "Delphine", "Evander", "Florentin", "Genevieve",
    "Horatio", "Isadora", "Jasper", "Katarina", "Leopold", "Marguerite", "Nathaniel",
    "Octavia", "Percival", "Quentin", "Rosalind", "Sebastian", "Theodora", "Ulysses",
    "Valentina", "Wilhelmina", "Xavier", "Yvonne", "Zacharias",
]
RELATIONS = ["father", "mother", "grandfather", "grandmother"]

_FILLER = [
    "The morning market opened early and the stalls filled with fresh bread.",
    "A light rain fell over the harbor while the boats rocked gently.",
    "Several travelers paused at the crossroads to study the faded map.",
    "The library kept its oldest volumes in a cool room behind the stairs.",
    "Wind moved through the tall grass at the edge of the quiet field.",
    "An old clock in the square chimed twice before falling silent again.",
    "The river bent sharply near the mill and slowed into a wide pool.",
    "Lanterns along the bridge were lit one by one as evening arrived.",
    "The baker argued cheerfully with a customer about the price of flour.",
    "Snow lingered on the northern slopes long after the valley had thawed.",
    "A small orchestra rehearsed in the hall with the windows open.",
    "The road to the coast was lined with stone walls and wild roses.",
    "Children chased a kite across the meadow until the string snapped.",
    "The workshop smelled of cedar shavings and warm machine oil.",
    "Fog rolled in from the sea and softened the outlines of the towers.",
    "The gardener trimmed the hedges into neat and patient shapes.",
    "A caravan of carts creaked slowly along the dusty southern road.",
    "The lighthouse keeper logged the passing ships in a worn ledger.",
    "Bees hummed among the clover while the afternoon grew warm.",
    "The museum guard nodded at each visitor who entered the east wing.",
]

NEEDLE_QUESTION = (
    "Question: based on the family relationships described in the text, who is the oldest "
    "ancestor that {start} can trace back to? Answer with the name only."
)
NEEDLE_FACT = "{older} is {younger}'s {relation}."


@dataclass
class NeedleTask:
    haystack: str
    needles: list[str]
    chain: list[str]
    question: str
    answer: str
    depth: float
    seed: int
    needle_offsets: list[int] = field(default_factory=list)

    def prompt(self) -> str:
        return f"{self.haystack}\n\n{self.question}"

    def to_dict(self) -> dict[str, Any]:
        return {"kind": "needle", **asdict(self)}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> NeedleTask:
        data = {k: v for k, v in data.items() if k != "kind"}
        return cls(**data)


def gen_needle_task(
    n_needles: int = 3, context_chars: int = 16_000, depth: float = 0.4, seed: int = 0
) -> NeedleTask:
    """Filler text with a relation chain planted from ``depth`` onwards.

    Needle ``k`` goes at the first sentence boundary at or after fraction
    ``depth + k * (1 - depth) / n_needles`` of the document; the needles are
    planted in shuffled order so document order does not reveal the chain.
    """
    if not 2 <= n_needles <= 5:
        raise ValueError("n_needles must be between 2 and 5")
    if not 0.0 <= depth < 1.0:
        raise ValueError("depth must be in [0, 1)")
    rng = random.Random(seed)
    chain = rng.sample(NAMES, n_needles + 1)
    needles = [
        NEEDLE_FACT.format(older=chain[i + 1], younger=chain[i], relation=rng.choice(RELATIONS))
        for i in range(n_needles)
    ]
    needle_chars = sum(len(n) + 1 for n in needles)
    budget = context_chars - needle_chars
    if budget < 0:
        raise SizeError(f"{context_chars} chars cannot hold {needle_chars} chars of needles")

    sentences: list[str] = []
    length = 0
    while True:
        s = rng.choice(_FILLER)
        if length + len(s) + 1 > budget:
            break
        sentences.append(s)
        length += len(s) + 1
    boundaries = [0]
    for s in sentences:
        boundaries.append(boundaries[-1] + len(s) + 1)

    placement = needles[:]
    rng.shuffle(placement)
    slots = []
    for k in range(n_needles):
        target = (depth + k * (1.0 - depth) / n_needles) * length
        slot = next((i for i, b in enumerate(boundaries) if b >= target), len(sentences))
        slots.append(max(slot, slots[-1] if slots else 0))

    pieces: list[str] = []
    offsets: list[int] = [0] * n_needles
    cursor = 0
    pending = list(zip(slots, placement))
    for i in range(len(sentences) + 1):
        while pending and pending[0][0] == i:
            _, needle = pending.pop(0)
            offsets[needles.index(needle)] = cursor
            pieces.append(needle)
            cursor += len(needle) + 1
        if i < len(sentences):
            pieces.append(sentences[i])
            cursor += len(sentences[i]) + 1
    haystack = " ".join(pieces)
    return NeedleTask(
        haystack=haystack,
        needles=needles,
        chain=chain,
        question=NEEDLE_QUESTION.format(start=chain[0]),
        answer=chain[-1],
        depth=depth,
        seed=seed,
        needle_offsets=offsets,
    )


def _normalize_name(text: str) -> str:
    return text.strip().strip(".!").strip().lower()


def score_needle(answer: str, task: NeedleTask) -> float:
    return 1.0 if _normalize_name(answer) == task.answer.lower() else 0.0


def task_from_dict(data: dict[str, Any]) -> PiTask | NeedleTask:
    kind = data.get("kind")
    if kind == "pi":
        return PiTask.from_dict(data)
    if kind == "needle":
        return NeedleTask.from_dict(data)
    raise ValueError(f"unknown task kind {kind!r}")


def score_task(answer: str, task: PiTask | NeedleTask) -> float:
    return score_pi(answer, task) if isinstance(task, PiTask) else score_needle(answer, task)


@dataclass(frozen=True)
class ReductionReport:
    initial_tokens: int
    final_tokens: int
    reduction: float

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


def context_reduction(rec: TrajectoryRecord) -> ReductionReport:
    """``1 - final / initial`` rendered token estimate, clamped to ``[0, 1]``.

    A turn that only appends search results grows its context; that counts
    as no reduction rather than a negative one.
    """
    initial, final = rec.initial_context_tokens, rec.final_context_tokens
    if initial <= 0:
        return ReductionReport(initial, final, 0.0)
    return ReductionReport(initial, final, min(1.0, max(0.0, 1.0 - final / initial)))
