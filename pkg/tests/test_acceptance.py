"""Acceptance criteria 1-8. Each test prints one PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v``; the lines are printed even
when output capture is on.
"""

import math
import random
import statistics
import time

import pytest

from conftest import ON_TRUE, R1, R3, R4, make_campaign
from oracles import levenshtein_recursive, xor_similarity
from snippetfuzz.config import NOSNIPPET, SNIPPET
from snippetfuzz.evaluation import labels_from_spans, segmentation_similarity, snippet_labels
from snippetfuzz.inference import MergeEvent, cluster_snippets, initial_snippets, vectorize_response
from snippetfuzz.message import Seed, Snippet, apply_partition, make_corpus
from snippetfuzz.mock import MockDevice, builtin_corpus, load_profile
from snippetfuzz.monitor import CRASH, CRASH_PATTERN, NO_CRASH, detect_crash, event_pattern
from snippetfuzz.mutation import (ALLOWED_REPEATS, BYTE_FLIP, EMPTY, MutationConfig, MutationScheme, apply_scheme,
                                  enumerate_plans, plan_count)
from snippetfuzz.report import strip_timestamps
from snippetfuzz.similarity import Response, edit_distance, similarity_score
from snippetfuzz.transport import LoopbackSession, ResetRestarter, send_sequence

RUNS = 10
EXEC_BUDGET = 5000


@pytest.fixture
def verdict(capsys):
    def report(number: int, title: str, ok: bool, detail: str) -> None:
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {number}: {title} -- {detail}")
        assert ok, detail
    return report


def test_c1_similarity_golden(verdict):
    t0 = time.perf_counter()
    s34 = similarity_score(R3, R4)
    rng = random.Random(2024)
    mismatches = 0
    for _ in range(1000):
        a = bytes(rng.randrange(256) if rng.random() < 0.3 else rng.choice(b"ab")
                  for _ in range(rng.randint(0, 12)))
        b = bytes(rng.randrange(256) if rng.random() < 0.3 else rng.choice(b"ab")
                  for _ in range(rng.randint(0, 12)))
        mismatches += edit_distance(a, b) != levenshtein_recursive(a, b)
    elapsed = time.perf_counter() - t0
    ok = abs(s34 - 0.979) <= 0.001 and mismatches == 0 and elapsed < 5
    verdict(1, "similarity golden values", ok,
            f"s34={s34:.4f}, oracle mismatches={mismatches}/1000, {elapsed:.2f}s")


def test_c2_feature_vectors(verdict):
    v1 = vectorize_response(Response(R1), 1.0).as_tuple()
    v3 = vectorize_response(Response(R3), 1.0).as_tuple()
    v4 = vectorize_response(Response(R4), 1.0).as_tuple()
    ok = v1 == (1, 91, 10, 2, 10) and v3 == v4 == (1, 94, 11, 2, 13)
    verdict(2, "feature-vector golden values", ok, f"r1={v1} r3={v3} r4={v4}")


def test_c3_clustering_trace(verdict, table_pool):
    cats = [1, 1, 2, 3, 1, 1, 1, 1, 1, 1, 1]
    state = cluster_snippets(initial_snippets(ON_TRUE, cats), table_pool)
    expected = [MergeEvent(1, 2, 3, 4, 0.0), MergeEvent(2, 1, 4, 5, math.sqrt(19))]
    history_ok = [(e.round, e.a, e.b, e.merged) for e in state.history] == \
        [(e.round, e.a, e.b, e.merged) for e in expected] and \
        all(math.isclose(e.distance, x.distance) for e, x in zip(state.history, expected))
    final_ok = state.sets[-1].ranges() == ((0, len(ON_TRUE)),)
    merged_on = state.sets[1].ranges() == ((0, 2), (2, 4), (4, 11))
    verdict(3, "clustering golden trace", history_ok and final_ok and merged_on,
            "history=" + ", ".join(f"r{e.round}:{e.a}+{e.b}->#{e.merged}@{e.distance:.3f}" for e in state.history))


def _segmentation_scores():
    corpus = builtin_corpus("jsonlike")
    scores = []
    for seed in corpus.seeds:
        c, device = make_campaign(corpus=make_corpus({seed.id: seed.sequence}, corpus.restoring_sequence))
        s = c.corpus.seeds[0]
        c.run_snippet_determination(s, 0)
        c.run_mutation_stage(s, havoc=False)
        truth = device.ground_truth(s.sequence[0])
        labelled = c.state.data_ranges.get((s.id, 0), set())
        best = max(segmentation_similarity(
            snippet_labels(ss, [(sn.start, sn.end) in labelled for sn in ss.snippets]), truth)
            for ss in s.snippet_annotations[0])
        scores.append(best)
    return scores


def test_c4_segmentation_quality(verdict):
    t0 = time.perf_counter()
    scores = _segmentation_scores()
    elapsed = time.perf_counter() - t0
    m = b'{"on":true,"sta":140,"bri":254}'
    spans = lambda words: [(m.index(w), m.index(w) + len(w)) for w in words]
    inferred = labels_from_spans(len(m), spans([b"on", b"sta", b"bri"]))
    truth = labels_from_spans(len(m), spans([b"on", b"true", b"sta", b"140", b"bri", b"254"]))
    table = segmentation_similarity(inferred, truth)
    median = statistics.median(scores)
    ok = (len(scores) >= 10 and median >= 0.85 and abs(table - 1 + 10 / 31) < 1e-12
          and table == xor_similarity(inferred, truth) and elapsed < 120)
    verdict(4, "segmentation quality on the JsonLike mock", ok,
            f"median={median:.3f} over {len(scores)} messages (min {min(scores):.3f}), "
            f"worked-example check={table:.3f}, {elapsed:.1f}s")


def test_c5_crash_protocol(verdict):
    profile = load_profile("jsonlike")
    silent = MockDevice(profile)
    silent.set_script(["silent"])
    session = LoopbackSession(silent)
    v1 = detect_crash((ON_TRUE,), session, ResetRestarter(silent))
    pattern = event_pattern(v1.timeline)
    once = MockDevice(profile)
    once.set_script(["drop"])
    session = LoopbackSession(once)
    first = send_sequence((ON_TRUE,), session)
    v2 = detect_crash((ON_TRUE,), session, ResetRestarter(once), first.timeout_at)
    resends = pattern.count("resend")
    ok = (v1.verdict == CRASH and pattern == CRASH_PATTERN and resends == 3 and pattern.count("restart") == 1
          and pattern.count("confirm") == 1 and first.timeout_at == 0 and v2.verdict == NO_CRASH)
    verdict(5, "crash-protocol conformance", ok,
            f"silent: {resends} resends, {pattern.count('restart')} restart, {pattern.count('confirm')} confirm "
            f"-> {v1.verdict}; drop-once -> {v2.verdict}")


_RUNS: dict = {}


def _campaigns():
    if not _RUNS:
        for mode in (SNIPPET, NOSNIPPET):
            _RUNS[mode] = [make_campaign("jsonlike_fault", mode=mode, exec_budget=EXEC_BUDGET, rng_seed=r)[0].fuzz()
                           for r in range(RUNS)]
    return _RUNS


def test_c6_differential(verdict):
    t0 = time.perf_counter()
    runs = _campaigns()
    elapsed = time.perf_counter() - t0
    found = sum(1 for r in runs[SNIPPET] if r["findings"])
    found_ns = sum(1 for r in runs[NOSNIPPET] if r["findings"])
    cats = statistics.median(r["stats"]["distinct_categories"] for r in runs[SNIPPET])
    cats_ns = statistics.median(r["stats"]["distinct_categories"] for r in runs[NOSNIPPET])
    budget_ok = all(r["stats"]["executions"] == EXEC_BUDGET for rs in runs.values() for r in rs)
    ok = found >= 8 and cats > cats_ns and budget_ok and elapsed < 600
    verdict(6, "Snippet vs NoSnippet on the injected-fault mock", ok,
            f"crash found in {found}/{RUNS} snippet runs ({found_ns}/{RUNS} nosnippet); "
            f"median categories {cats} vs {cats_ns} at {EXEC_BUDGET} execs; {elapsed:.0f}s")


def test_c7_monotone_and_deterministic(verdict):
    runs = _campaigns()
    monotone = all(
        all(a["categories"] <= b["categories"] for a, b in zip(r["timeline"], r["timeline"][1:]))
        for rs in runs.values() for r in rs)
    again = {mode: make_campaign("jsonlike_fault", mode=mode, exec_budget=EXEC_BUDGET, rng_seed=0)[0].fuzz()
             for mode in (SNIPPET, NOSNIPPET)}
    identical = all(strip_timestamps(again[m]) == strip_timestamps(runs[m][0]) for m in again)
    verdict(7, "monotone timelines and deterministic reports", monotone and identical,
            f"monotone in {sum(len(v) for v in runs.values())} runs: {monotone}; repeat runs identical: {identical}")


def test_c8_mutation_suite(verdict):
    params = b'{"id": 0, "method": "start_cf", "params": ["4, 4,  "1000, 2, 2700,100,500'
    second = params.index(b"4", params.index(b"4") + 1)
    emptied = apply_scheme(params, Snippet(second, second + 1, 0), MutationScheme(EMPTY))
    table_ok = b'["4, ,  "1000' in emptied

    rng = random.Random(99)
    involution = 0
    for _ in range(1000):
        m = bytes(rng.randrange(256) for _ in range(rng.randint(1, 50)))
        a = rng.randrange(len(m))
        s = Snippet(a, rng.randint(a + 1, len(m)), 0)
        once = apply_scheme(m, s, MutationScheme(BYTE_FLIP))
        involution += apply_scheme(once, s, MutationScheme(BYTE_FLIP)) == m and once != m

    counts_ok = 0
    for _ in range(50):
        n = rng.randint(1, 30)
        cuts = sorted(rng.sample(range(1, 31), rng.randint(0, min(n, 29))))
        m = bytes(31)
        sets = [apply_partition(m, cuts, list(range(len(cuts) + 1)), round=0),
                apply_partition(m, cuts[: len(cuts) // 2], list(range(len(cuts) // 2 + 1)), round=1)]
        cfg = MutationConfig(dictionary=[b"x"] * rng.randint(0, 8), boundaries=list(range(rng.randint(0, 8))),
                             repeat_counts=rng.sample(ALLOWED_REPEATS, rng.randint(0, 5)))
        seed = Seed("s", (m,))
        per = 2 + len(cfg.boundaries) + len(cfg.dictionary) + len(cfg.repeat_counts)
        expected = per * sum(len(ss.snippets) for ss in sets)
        counts_ok += len(list(enumerate_plans(seed, sets, cfg))) == expected == plan_count(sets, cfg)

    ok = table_ok and involution == 1000 and counts_ok == 50
    verdict(8, "mutation-scheme unit suite", ok,
            f"Empty example {'reproduced' if table_ok else 'differs'}; ByteFlip involution {involution}/1000; "
            f"plan counts {counts_ok}/50")
