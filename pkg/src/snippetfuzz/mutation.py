"""Snippet-level mutation schemes, havoc plans and the byte-blind baseline."""

from __future__ import annotations

import random
import re
from dataclasses import dataclass, field
from typing import Iterator, Sequence

from .message import MAX_MESSAGE_LEN, Seed, Snippet, SnippetSet

EMPTY = "empty"
BYTE_FLIP = "byteflip"
DATA_BOUNDARY = "boundary"
DICTIONARY = "dictionary"
REPEAT = "repeat"

ALLOWED_REPEATS = (2, 4, 8, 16, 128)
DEFAULT_BOUNDARIES = (0, -1, 255, 256, 65535, 65536, 2147483647, 4294967296)
DEFAULT_DICTIONARY = (b"true", b"false", b"null", b"0", b"", b"A" * 64, b"%s%n%x")

_DECIMAL = re.compile(rb"^-?[0-9]+$")


class InvalidSnippet(ValueError):
    pass


class MutationOverflow(ValueError):
    pass


class NotApplicable(ValueError):
    """The scheme has no meaning for this snippet (e.g. a boundary on text)."""


@dataclass(frozen=True)
class MutationScheme:
    kind: str
    value: int | None = None

    def __str__(self) -> str:
        return self.kind if self.value is None else f"{self.kind}({self.value})"

    def to_list(self) -> list:
        return [self.kind, self.value]


@dataclass
class MutationConfig:
    dictionary: list = field(default_factory=lambda: list(DEFAULT_DICTIONARY))
    boundaries: list = field(default_factory=lambda: list(DEFAULT_BOUNDARIES))
    repeat_counts: list = field(default_factory=lambda: list(ALLOWED_REPEATS))
    havoc_budget: int = 10_000
    havoc_max_targets: int = 8
    byte_flip: str = "complement"

    def __post_init__(self):
        self.dictionary = [bytes(d) for d in self.dictionary]
        bad = [c for c in self.repeat_counts if c not in ALLOWED_REPEATS]
        if bad:
            raise ValueError(f"repeat counts must be drawn from {ALLOWED_REPEATS}, got {bad}")
        if self.byte_flip not in ("complement", "bit0"):
            raise ValueError(f"unknown byte_flip mode {self.byte_flip!r}")

    def schemes(self) -> list:
        """All schemes in enumeration order."""
        return [
            MutationScheme(EMPTY),
            MutationScheme(BYTE_FLIP),
            *(MutationScheme(DATA_BOUNDARY, b) for b in self.boundaries),
            *(MutationScheme(DICTIONARY, i) for i in range(len(self.dictionary))),
            *(MutationScheme(REPEAT, c) for c in self.repeat_counts),
        ]

    def to_dict(self) -> dict:
        return {
            "dictionary": [d.hex() for d in self.dictionary],
            "boundaries": list(self.boundaries),
            "repeat_counts": list(self.repeat_counts),
            "havoc_budget": self.havoc_budget,
            "havoc_max_targets": self.havoc_max_targets,
            "byte_flip": self.byte_flip,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MutationConfig":
        d = dict(d)
        if "dictionary" in d:
            d["dictionary"] = [bytes.fromhex(x) for x in d["dictionary"]]
        return cls(**d)


def is_numeric(data: bytes) -> bool:
    return bool(_DECIMAL.match(data))


def applicable(scheme: MutationScheme, snippet_bytes: bytes) -> bool:
    return scheme.kind != DATA_BOUNDARY or is_numeric(snippet_bytes)


def _flip(data: bytes, mode: str) -> bytes:
    if mode == "bit0":
        return bytes(b ^ 0x01 for b in data)
    return bytes(b ^ 0xFF for b in data)


def apply_scheme(m: bytes, s: Snippet, scheme: MutationScheme,
                 config: MutationConfig | None = None) -> bytes:
    config = config or DEFAULT_CONFIG
    if not (0 <= s.start < s.end <= len(m)):
        raise InvalidSnippet(f"snippet [{s.start},{s.end}) outside message of {len(m)} bytes")
    head, body, tail = m[:s.start], m[s.start:s.end], m[s.end:]
    kind = scheme.kind
    if kind == EMPTY:
        body = b""
    elif kind == BYTE_FLIP:
        body = _flip(body, config.byte_flip)
    elif kind == DATA_BOUNDARY:
        if not is_numeric(body):
            raise NotApplicable(f"snippet {body!r} is not a decimal integer")
        body = str(scheme.value).encode()
    elif kind == DICTIONARY:
        body = config.dictionary[scheme.value]
    elif kind == REPEAT:
        body = body * scheme.value
    else:
        raise ValueError(f"unknown scheme {kind!r}")
    out = head + body + tail
    if len(out) > MAX_MESSAGE_LEN:
        raise MutationOverflow(f"mutated message would be {len(out)} bytes")
    return out


@dataclass(frozen=True)
class MutationPlan:
    seed_id: str
    message_index: int
    round: int
    targets: tuple  # ((snippet index, MutationScheme), ...)
    rng_seed: int | None = None

    def to_dict(self) -> dict:
        return {
            "seed": self.seed_id,
            "message_index": self.message_index,
            "round": self.round,
            "targets": [[i, s.kind, s.value] for i, s in self.targets],
            "rng_seed": self.rng_seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MutationPlan":
        targets = tuple((i, MutationScheme(k, v)) for i, k, v in d["targets"])
        return cls(d["seed"], d["message_index"], d["round"], targets, d.get("rng_seed"))


def _snippet_set(seed: Seed, message_index: int, round_no: int) -> SnippetSet:
    for ss in seed.snippet_annotations.get(message_index, ()):
        if ss.round == round_no:
            return ss
    raise InvalidSnippet(f"seed {seed.id!r} has no snippet set for message {message_index} round {round_no}")


def mutate_message(m: bytes, ss: SnippetSet, targets: Sequence, config: MutationConfig | None = None) -> bytes:
    # Right-to-left so earlier offsets stay valid after length-changing splices.
    for idx, scheme in sorted(targets, key=lambda t: ss.snippets[t[0]].start, reverse=True):
        m = apply_scheme(m, ss.snippets[idx], scheme, config)
    return m


def apply_plan(seed: Seed, plan: MutationPlan, config: MutationConfig | None = None) -> tuple:
    ss = _snippet_set(seed, plan.message_index, plan.round)
    seq = list(seed.sequence)
    seq[plan.message_index] = mutate_message(seq[plan.message_index], ss, plan.targets, config)
    return tuple(seq)


def enumerate_plans(seed: Seed, snippet_sets: Sequence[SnippetSet],
                    config: MutationConfig | None = None) -> Iterator[MutationPlan]:
    """Every single-snippet plan, in a fixed order.

    Sets in the order given, snippets left to right, then schemes in the
    order Empty, ByteFlip, each boundary, each dictionary entry, each repeat
    count. Boundary plans are emitted for every snippet; executing one on a
    non-numeric snippet raises NotApplicable and the caller skips it.
    """
    config = config or DEFAULT_CONFIG
    schemes = config.schemes()
    for ss in snippet_sets:
        for idx in range(len(ss.snippets)):
            for scheme in schemes:
                yield MutationPlan(seed.id, ss.message_index, ss.round, ((idx, scheme),))


def plan_count(snippet_sets: Sequence[SnippetSet], config: MutationConfig) -> int:
    per = 2 + len(config.boundaries) + len(config.dictionary) + len(config.repeat_counts)
    return per * sum(len(ss.snippets) for ss in snippet_sets)


def havoc_plan(seed: Seed, snippet_sets: Sequence[SnippetSet], plan_seed: int,
               config: MutationConfig | None = None) -> MutationPlan:
    """The havoc plan determined entirely by ``plan_seed``."""
    config = config or DEFAULT_CONFIG
    rng = random.Random(plan_seed)
    ss = snippet_sets[rng.randrange(len(snippet_sets))]
    n = len(ss.snippets)
    k = rng.randint(1, min(config.havoc_max_targets, n))
    picked = sorted(rng.sample(range(n), k))
    message = seed.sequence[ss.message_index]
    schemes = config.schemes()
    targets = []
    for idx in picked:
        s = ss.snippets[idx]
        choices = [sc for sc in schemes if applicable(sc, message[s.start:s.end])]
        targets.append((idx, rng.choice(choices)))
    return MutationPlan(seed.id, ss.message_index, ss.round, tuple(targets), plan_seed)


def havoc_next(seed: Seed, snippet_sets: Sequence[SnippetSet], rng: random.Random,
               config: MutationConfig | None = None) -> MutationPlan:
    if not snippet_sets:
        raise ValueError("havoc needs at least one snippet set")
    return havoc_plan(seed, snippet_sets, rng.getrandbits(64), config)


class _BudgetExhausted:
    def __repr__(self) -> str:
        return "BUDGET_EXHAUSTED"


BUDGET_EXHAUSTED = _BudgetExhausted()


def havoc_plans(seed: Seed, snippet_sets: Sequence[SnippetSet], rng: random.Random,
                config: MutationConfig | None = None, budget: int | None = None):
    """Yield havoc plans, then BUDGET_EXHAUSTED once ``budget`` plans were issued.

    The consumer stops early (new category, crash) by simply not asking for
    more.
    """
    config = config or DEFAULT_CONFIG
    budget = config.havoc_budget if budget is None else budget
    for _ in range(budget):
        yield havoc_next(seed, snippet_sets, rng, config)
    yield BUDGET_EXHAUSTED


# -- byte-blind baseline ------------------------------------------------------

BYTE_OPS = ("overwrite", "delete", "duplicate")


def apply_byte_op(m: bytes, op: str, start: int, length: int, fill: bytes = b"") -> bytes:
    end = min(start + length, len(m))
    if op == "overwrite":
        return m[:start] + fill[: end - start] + m[end:]
    if op == "delete":
        return m[:start] + m[end:]
    if op == "duplicate":
        return m[:end] + m[start:end] + m[end:]
    raise ValueError(f"unknown byte op {op!r}")


def nosnippet_op(m: bytes, rng: random.Random) -> dict:
    if not m:
        raise ValueError("cannot mutate an empty message")
    op = rng.choice(BYTE_OPS)
    start = rng.randrange(len(m))
    length = min(rng.randint(1, 4), len(m) - start)
    fill = bytes(rng.getrandbits(8) for _ in range(length)) if op == "overwrite" else b""
    return {"op": op, "start": start, "length": length, "fill": fill.hex()}


def nosnippet_mutate(m: bytes, rng: random.Random) -> bytes:
    """AFL-style blind mutation of 1..4 consecutive bytes."""
    d = nosnippet_op(m, rng)
    return apply_byte_op(m, d["op"], d["start"], d["length"], bytes.fromhex(d["fill"]))


DEFAULT_CONFIG = MutationConfig()
