"""Scoring an inferred segmentation against per-byte ground truth."""

from __future__ import annotations

import statistics
from typing import Sequence

from .inference import LengthMismatch
from .message import SnippetSet


def snippet_labels(ss: SnippetSet, data_flags: Sequence[bool]) -> list[int]:
    """Expand per-snippet data flags to one 0/1 label per byte."""
    if len(data_flags) != len(ss.snippets):
        raise LengthMismatch(f"{len(data_flags)} flags for {len(ss.snippets)} snippets")
    out = []
    for s, flag in zip(ss.snippets, data_flags):
        out.extend([1 if flag else 0] * (s.end - s.start))
    return out


def segmentation_similarity(inferred: Sequence[int], ground_truth: Sequence[int]) -> float:
    """Share of bytes whose data/non-data label agrees with the ground truth."""
    if len(inferred) != len(ground_truth):
        raise LengthMismatch(f"{len(inferred)} inferred labels vs {len(ground_truth)} ground-truth labels")
    if not inferred:
        return 1.0
    wrong = sum(1 for a, b in zip(inferred, ground_truth) if bool(a) != bool(b))
    return 1 - wrong / len(inferred)


def best_similarity(candidates, ground_truth: Sequence[int]) -> tuple[float, int]:
    """Best (score, round) over ``candidates``, an iterable of (SnippetSet, data flags)."""
    best = None
    for ss, flags in candidates:
        score = segmentation_similarity(snippet_labels(ss, flags), ground_truth)
        if best is None or score > best[0]:
            best = (score, ss.round)
    if best is None:
        raise ValueError("no snippet sets to score")
    return best


def labels_from_spans(length: int, spans) -> list[int]:
    """0/1 labels for a message of ``length`` bytes with data at ``spans``."""
    out = [0] * length
    for start, end in spans:
        for i in range(start, end):
            out[i] = 1
    return out


def evaluate_annotations(annotations: Sequence[dict], truth: Sequence[dict]) -> dict:
    """Score annotation records against ground-truth records.

    Annotation records carry ``seed``, ``message_index``, ``round``,
    ``length``, ``boundaries`` and ``data``; ground-truth records carry
    ``seed``, ``message_index`` and ``labels`` (a list or a 0/1 string).
    The best round per message is kept.
    """
    want = {}
    for rec in truth:
        labels = rec["labels"]
        if isinstance(labels, str):
            labels = [int(c) for c in labels]
        want[(rec["seed"], rec["message_index"])] = labels
    per_message: dict = {}
    for rec in annotations:
        key = (rec["seed"], rec["message_index"])
        if key not in want:
            continue
        if "data" not in rec:
            raise ValueError(f"annotation for {key[0]}#{key[1]} has no data labels")
        bounds = [0, *rec["boundaries"], rec["length"]]
        labels = []
        for (a, b), flag in zip(zip(bounds, bounds[1:]), rec["data"]):
            labels.extend([1 if flag else 0] * (b - a))
        score = segmentation_similarity(labels, want[key])
        if key not in per_message or score > per_message[key]["score"]:
            per_message[key] = {"seed": key[0], "message_index": key[1], "round": rec["round"],
                                "score": score}
    scores = [v["score"] for v in per_message.values()]
    return {
        "messages": sorted(per_message.values(), key=lambda v: (v["seed"], v["message_index"])),
        "mean": statistics.fmean(scores) if scores else None,
        "median": statistics.median(scores) if scores else None,
        "missing": sorted(f"{s}#{i}" for s, i in want if (s, i) not in per_message),
    }
