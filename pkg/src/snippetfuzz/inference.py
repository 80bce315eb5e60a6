"""Snippet inference: probe generation, initial snippets and response clustering."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .message import Snippet, SnippetSet, validate_partition
from .similarity import ResponsePool, _raw

NONRESPONSIVE = -1

_WHITESPACE = frozenset(b" \t\n\r\x0b\x0c")


class EmptyMessage(ValueError):
    pass


class LengthMismatch(ValueError):
    pass


class MissingCategory(KeyError):
    pass


@dataclass(frozen=True)
class ProbeSet:
    base: bytes
    probes: tuple  # ((1-based index, probe bytes), ...)

    def __len__(self) -> int:
        return len(self.probes)

    def __iter__(self):
        return iter(self.probes)


def generate_probes(m: bytes) -> ProbeSet:
    m = bytes(m)
    if not m:
        raise EmptyMessage("cannot probe an empty message")
    return ProbeSet(m, tuple((i + 1, m[:i] + m[i + 1:]) for i in range(len(m))))


@dataclass(frozen=True)
class FeatureVector:
    self_similarity: float
    length: int
    alpha_segments: int
    numeric_segments: int
    symbol_segments: int

    def as_tuple(self) -> tuple:
        return (self.self_similarity, self.length, self.alpha_segments,
                self.numeric_segments, self.symbol_segments)


def _byte_class(b: int) -> str | None:
    if 65 <= b <= 90 or 97 <= b <= 122:
        return "a"
    if 48 <= b <= 57:
        return "n"
    if b in _WHITESPACE:
        return None
    return "s"


def vectorize_response(r, self_sim: float) -> FeatureVector:
    """Summarise a response as (self-similarity, length, #alpha, #numeric, #symbol).

    A segment is a maximal run of bytes of one class. Whitespace separates
    runs but is not itself counted, which is what reproduces the reference
    vectors for the Hue-style error replies.
    """
    data = _raw(r)
    counts = {"a": 0, "n": 0, "s": 0}
    prev = None
    for b in data:
        cls = _byte_class(b)
        if cls is not None and cls != prev:
            counts[cls] += 1
        prev = cls
    return FeatureVector(self_sim, len(data), counts["a"], counts["n"], counts["s"])


def _runs(labels: Sequence[int]) -> list[tuple[int, int, int]]:
    out = []
    start = 0
    for i in range(1, len(labels) + 1):
        if i == len(labels) or labels[i] != labels[start]:
            out.append((start, i, labels[start]))
            start = i
    return out


def initial_snippets(m: bytes, byte_categories: Sequence[int], message_index: int = 0) -> SnippetSet:
    if len(byte_categories) != len(m):
        raise LengthMismatch(f"{len(byte_categories)} categories for {len(m)} bytes")
    snippets = tuple(Snippet(a, b, c) for a, b, c in _runs(list(byte_categories)))
    ss = SnippetSet(message_index, snippets, 0)
    validate_partition(ss, len(m))
    return ss


@dataclass(frozen=True)
class MergeEvent:
    round: int
    a: int
    b: int
    merged: int
    distance: float


@dataclass
class ClusterState:
    clusters: dict  # cluster id -> {"members": set of categories, "center": tuple}
    history: list = field(default_factory=list)
    sets: list = field(default_factory=list)


def _category_vector(pool: ResponsePool, category: int) -> tuple:
    if category == NONRESPONSIVE:
        return (0.0, 0, 0, 0, 0)
    cat = pool[category]
    return vectorize_response(cat.representative, cat.self_similarity).as_tuple()


def _relabel(initial: SnippetSet, cluster_of: dict, round_no: int) -> SnippetSet:
    labels = []
    for s in initial.snippets:
        labels.extend([cluster_of[s.category]] * (s.end - s.start))
    snippets = tuple(Snippet(a, b, c) for a, b, c in _runs(labels))
    return SnippetSet(initial.message_index, snippets, round_no)


def cluster_snippets(initial: SnippetSet, pool: ResponsePool) -> ClusterState:
    """Agglomerative clustering of the response categories behind ``initial``.

    Every category seen in the initial snippets starts as its own cluster,
    centred on its response's feature vector. Each round merges the closest
    pair (Euclidean distance on raw vectors; ties go to the lexicographically
    smallest id pair), replaces both with a new cluster centred on the mean of
    the two centres, and re-derives snippets from the merged labels.
    """
    cats = sorted({s.category for s in initial.snippets})
    for c in cats:
        if c != NONRESPONSIVE and c not in pool:
            raise MissingCategory(c)
    clusters = {c: {"members": {c}, "center": _category_vector(pool, c)} for c in cats}
    cluster_of = {c: c for c in cats}
    next_id = max([len(pool), *(c + 1 for c in cats)])
    state = ClusterState(clusters, [], [initial])
    round_no = 0
    while len(clusters) > 1:
        round_no += 1
        ids = sorted(clusters)
        best = None
        for i, a in enumerate(ids):
            for b in ids[i + 1:]:
                d = math.dist(clusters[a]["center"], clusters[b]["center"])
                if best is None or d < best[0]:
                    best = (d, a, b)
        d, a, b = best
        ca, cb = clusters.pop(a), clusters.pop(b)
        center = tuple((x + y) / 2 for x, y in zip(ca["center"], cb["center"]))
        merged = next_id
        next_id += 1
        clusters[merged] = {"members": ca["members"] | cb["members"], "center": center}
        for c in clusters[merged]["members"]:
            cluster_of[c] = merged
        state.history.append(MergeEvent(round_no, a, b, merged, d))
        state.sets.append(_relabel(initial, cluster_of, round_no))
    return state


def hierarchical_cluster(initial: SnippetSet, pool: ResponsePool) -> list:
    return cluster_snippets(initial, pool).sets


def distinct_snippet_sets(sets: Iterable[SnippetSet]) -> list:
    """Drop later sets whose byte ranges repeat an earlier set."""
    seen = set()
    out = []
    for ss in sets:
        key = ss.ranges()
        if key not in seen:
            seen.add(key)
            out.append(ss)
    return out


def annotation_record(seed_id: str, ss: SnippetSet, data_labels: Sequence[bool] | None = None) -> dict:
    rec = {"seed": seed_id, "message_index": ss.message_index, "round": ss.round,
           "boundaries": ss.boundaries, "categories": ss.categories}
    if data_labels is not None:
        rec["data"] = [bool(x) for x in data_labels]
    return rec


def write_annotations(path, records: Iterable[dict]) -> None:
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def read_annotations(path) -> list:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]
