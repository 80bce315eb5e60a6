"""Messages, snippets, seeds and the on-disk seed corpus format."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

MAX_MESSAGE_LEN = 65535

# A message is a plain ``bytes`` value and a message sequence a tuple of them.
Message = bytes
MessageSequence = tuple

_HEX_RE = re.compile(r"^(?:[0-9a-f]{2})*$")
_CORPUS_KEYS = {"seeds", "restoring", "restart_command"}
_SEED_KEYS = {"id", "messages"}


class MalformedCorpus(ValueError):
    pass


class InvalidPartition(ValueError):
    pass


@dataclass(frozen=True)
class Snippet:
    start: int
    end: int
    category: int

    def __len__(self) -> int:
        return self.end - self.start


@dataclass(frozen=True)
class SnippetSet:
    message_index: int
    snippets: tuple
    round: int = 0

    @property
    def boundaries(self) -> list[int]:
        return [s.start for s in self.snippets[1:]]

    @property
    def categories(self) -> list[int]:
        return [s.category for s in self.snippets]

    def ranges(self) -> tuple:
        return tuple((s.start, s.end) for s in self.snippets)

    def to_dict(self) -> dict:
        return {
            "message_index": self.message_index,
            "round": self.round,
            "boundaries": self.boundaries,
            "categories": self.categories,
        }

    @classmethod
    def from_dict(cls, d: dict, length: int) -> "SnippetSet":
        ss = apply_partition(b"\x00" * length, d["boundaries"], d["categories"],
                             message_index=d.get("message_index", 0), round=d.get("round", 0))
        return ss


@dataclass(frozen=True)
class Origin:
    """Where a seed came from. ``parent`` is None for initial seeds."""

    parent: str | None = None
    category: int | None = None
    message_index: int | None = None

    @property
    def initial(self) -> bool:
        return self.parent is None


@dataclass
class Seed:
    id: str
    sequence: tuple
    origin: Origin = field(default_factory=Origin)
    snippet_annotations: dict = field(default_factory=dict)

    def __post_init__(self):
        self.sequence = tuple(bytes(m) for m in self.sequence)


@dataclass
class SeedCorpus:
    seeds: list
    restoring_sequence: tuple = ()
    restart_command: str | None = None

    def __post_init__(self):
        self.restoring_sequence = tuple(bytes(m) for m in self.restoring_sequence)
        validate_corpus(self)

    def get(self, seed_id: str) -> Seed:
        for seed in self.seeds:
            if seed.id == seed_id:
                return seed
        raise KeyError(seed_id)


def validate_corpus(corpus: SeedCorpus) -> None:
    if not any(s.origin.initial for s in corpus.seeds):
        raise MalformedCorpus("corpus contains no initial seed")
    ids = [s.id for s in corpus.seeds]
    dupes = sorted({i for i in ids if ids.count(i) > 1})
    if dupes:
        raise MalformedCorpus(f"duplicate seed ids: {dupes}")
    known = set(ids)
    for seed in corpus.seeds:
        if not seed.sequence:
            raise MalformedCorpus(f"seed {seed.id!r}: empty message sequence")
        for i, m in enumerate(seed.sequence):
            if len(m) > MAX_MESSAGE_LEN:
                raise MalformedCorpus(f"seed {seed.id!r} message {i}: {len(m)} bytes exceeds {MAX_MESSAGE_LEN}")
        if not seed.origin.initial and seed.origin.parent not in known:
            raise MalformedCorpus(f"seed {seed.id!r}: unknown parent {seed.origin.parent!r}")


def validate_partition(ss: SnippetSet, length: int) -> None:
    """Raise InvalidPartition unless ``ss`` tiles [0, length) exactly."""
    pos = 0
    for s in ss.snippets:
        if s.start != pos or s.end <= s.start:
            raise InvalidPartition(f"snippet {s} does not continue at offset {pos}")
        pos = s.end
    if pos != length or (length > 0 and not ss.snippets):
        raise InvalidPartition(f"snippets cover [0, {pos}) but message has {length} bytes")


def apply_partition(message: bytes, boundaries: Sequence[int], categories: Sequence[int],
                    message_index: int = 0, round: int = 0) -> SnippetSet:
    n = len(message)
    edges = [0, *boundaries, n]
    if any(b <= a for a, b in zip(edges, edges[1:])):
        raise InvalidPartition(f"boundaries {list(boundaries)} not strictly increasing within (0, {n})")
    if len(categories) != len(edges) - 1:
        raise InvalidPartition(f"{len(categories)} categories for {len(edges) - 1} segments")
    snippets = tuple(Snippet(a, b, int(c)) for a, b, c in zip(edges, edges[1:], categories))
    return SnippetSet(message_index, snippets, round)


# -- corpus files -----------------------------------------------------------

def _decode_hex(value, where: str) -> bytes:
    if not isinstance(value, str) or not _HEX_RE.match(value):
        raise MalformedCorpus(f"{where}: expected even-length lowercase hex string, got {value!r}")
    return bytes.fromhex(value)


def _decode_messages(value, where: str) -> tuple:
    if not isinstance(value, list):
        raise MalformedCorpus(f"{where}: expected a list of hex strings")
    return tuple(_decode_hex(v, f"{where}[{i}]") for i, v in enumerate(value))


def corpus_from_dict(doc) -> SeedCorpus:
    if not isinstance(doc, dict):
        raise MalformedCorpus("corpus root must be a JSON object")
    unknown = set(doc) - _CORPUS_KEYS
    if unknown:
        raise MalformedCorpus(f"unknown top-level keys: {sorted(unknown)}")
    raw_seeds = doc.get("seeds")
    if not isinstance(raw_seeds, list) or not raw_seeds:
        raise MalformedCorpus("'seeds' must be a non-empty list")
    seeds = []
    for i, raw in enumerate(raw_seeds):
        where = f"seeds[{i}]"
        if not isinstance(raw, dict) or set(raw) != _SEED_KEYS:
            raise MalformedCorpus(f"{where}: expected keys {sorted(_SEED_KEYS)}")
        if not isinstance(raw["id"], str) or not raw["id"]:
            raise MalformedCorpus(f"{where}.id: expected non-empty string")
        msgs = _decode_messages(raw["messages"], f"{where}.messages")
        if not msgs:
            raise MalformedCorpus(f"{where}.messages: empty sequence")
        seeds.append(Seed(raw["id"], msgs))
    restoring = _decode_messages(doc.get("restoring", []), "restoring")
    cmd = doc.get("restart_command")
    if cmd is not None and not isinstance(cmd, str):
        raise MalformedCorpus("restart_command: expected string or null")
    return SeedCorpus(seeds, restoring, cmd)


def corpus_to_dict(corpus: SeedCorpus) -> dict:
    return {
        "seeds": [{"id": s.id, "messages": [m.hex() for m in s.sequence]}
                  for s in corpus.seeds if s.origin.initial],
        "restoring": [m.hex() for m in corpus.restoring_sequence],
        "restart_command": corpus.restart_command,
    }


def load_seed_corpus(path) -> SeedCorpus:
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MalformedCorpus(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return corpus_from_dict(doc)


def dumps_corpus(corpus: SeedCorpus) -> str:
    return json.dumps(corpus_to_dict(corpus), indent=2) + "\n"


def save_seed_corpus(corpus: SeedCorpus, path) -> None:
    Path(path).write_text(dumps_corpus(corpus))


def make_corpus(seeds: Iterable, restoring: Iterable = (), restart_command=None) -> SeedCorpus:
    """Build a corpus from ``{id: [bytes, ...]}`` or a list of byte sequences."""
    if isinstance(seeds, dict):
        items = list(seeds.items())
    else:
        items = [(f"seed{i}", seq) for i, seq in enumerate(seeds)]
    return SeedCorpus([Seed(k, tuple(v)) for k, v in items], tuple(restoring), restart_command)
