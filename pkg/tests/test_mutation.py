import random

import pytest
from hypothesis import given, strategies as st

from snippetfuzz.message import Seed, Snippet, apply_partition
from snippetfuzz.mutation import (ALLOWED_REPEATS, BUDGET_EXHAUSTED, BYTE_FLIP, DATA_BOUNDARY, DICTIONARY, EMPTY,
                                  REPEAT, InvalidSnippet, MutationConfig, MutationOverflow, MutationPlan,
                                  MutationScheme, NotApplicable, apply_byte_op, apply_plan, apply_scheme,
                                  enumerate_plans, havoc_plan, havoc_plans, is_numeric, mutate_message,
                                  nosnippet_mutate, nosnippet_op, plan_count)

PARAMS = b'{"id": 0, "method": "start_cf", "params": ["4, 4,  "1000, 2, 2700,100,500'


def _snippet(m: bytes, needle: bytes, occurrence: int = 0) -> Snippet:
    pos = -1
    for _ in range(occurrence + 1):
        pos = m.index(needle, pos + 1)
    return Snippet(pos, pos + len(needle), 0)


def test_empty_scheme_example():
    out = apply_scheme(PARAMS, _snippet(PARAMS, b"4", 1), MutationScheme(EMPTY))
    assert b'["4, ,  "1000' in out
    assert len(out) == len(PARAMS) - 1


def test_multi_snippet_example():
    # empty the first "4" and repeat the "00" of 2700 twice
    first = _snippet(PARAMS, b"4")
    at = PARAMS.index(b"2700") + 2
    zeros = Snippet(at, at + 2, 0)
    cuts = sorted({first.start, first.end, zeros.start, zeros.end} - {0, len(PARAMS)})
    ss = apply_partition(PARAMS, cuts, list(range(len(cuts) + 1)))
    idx = {s.start: i for i, s in enumerate(ss.snippets)}
    out = mutate_message(PARAMS, ss, [(idx[first.start], MutationScheme(EMPTY)),
                                      (idx[zeros.start], MutationScheme(REPEAT, 2))])
    assert b'[", 4,  "1000, 2, 270000,100' in out


def test_each_scheme():
    m = b'{"bri":254}'
    s = Snippet(7, 10, 0)
    assert apply_scheme(m, s, MutationScheme(BYTE_FLIP)) == b'{"bri":' + bytes([0xCD, 0xCA, 0xCB]) + b"}"
    assert apply_scheme(m, s, MutationScheme(DATA_BOUNDARY, 65536)) == b'{"bri":65536}'
    assert apply_scheme(m, s, MutationScheme(DATA_BOUNDARY, -1)) == b'{"bri":-1}'
    assert apply_scheme(m, s, MutationScheme(DICTIONARY, 2)) == b'{"bri":null}'
    assert apply_scheme(m, s, MutationScheme(REPEAT, 4)) == b'{"bri":254254254254}'
    with pytest.raises(NotApplicable):
        apply_scheme(m, Snippet(2, 5, 0), MutationScheme(DATA_BOUNDARY, 0))
    with pytest.raises(InvalidSnippet):
        apply_scheme(m, Snippet(5, 20, 0), MutationScheme(EMPTY))
    with pytest.raises(MutationOverflow):
        apply_scheme(b"x" * 600, Snippet(0, 600, 0), MutationScheme(REPEAT, 128))


def test_bit0_flip_mode():
    cfg = MutationConfig(byte_flip="bit0")
    assert apply_scheme(b"ab", Snippet(0, 2, 0), MutationScheme(BYTE_FLIP), cfg) == b"`c"


def test_numeric_detection():
    assert is_numeric(b"254") and is_numeric(b"-1")
    assert not is_numeric(b"") and not is_numeric(b"2a") and not is_numeric(b"1.5")


@given(st.binary(min_size=1, max_size=64), st.data())
def test_byte_flip_involution(m, data):
    a = data.draw(st.integers(0, len(m) - 1))
    b = data.draw(st.integers(a + 1, len(m)))
    s = Snippet(a, b, 0)
    for mode in ("complement", "bit0"):
        cfg = MutationConfig(byte_flip=mode)
        once = apply_scheme(m, s, MutationScheme(BYTE_FLIP), cfg)
        assert once != m
        assert apply_scheme(once, s, MutationScheme(BYTE_FLIP), cfg) == m


def test_repeat_counts_validated():
    assert ALLOWED_REPEATS == (2, 4, 8, 16, 128)
    with pytest.raises(ValueError):
        MutationConfig(repeat_counts=[3])


def _seed_with_sets(m=b'{"on":true,"bri":254}'):
    seed = Seed("s", (m,))
    sets = [apply_partition(m, [2, 4, 6, 10, 13, 16, 18], list(range(8)), round=0),
            apply_partition(m, [2, 10, 18], [0, 1, 2, 3], round=1)]
    seed.snippet_annotations[0] = sets
    return seed, sets


def test_enumerate_count_and_order():
    seed, sets = _seed_with_sets()
    cfg = MutationConfig()
    plans = list(enumerate_plans(seed, sets, cfg))
    assert len(plans) == plan_count(sets, cfg) == 12 * (2 + 8 + 7 + 5)
    assert plans[0].targets == ((0, MutationScheme(EMPTY)),)
    assert plans[1].targets == ((0, MutationScheme(BYTE_FLIP)),)
    assert plans[-1].round == 1
    assert plans[-1].targets == ((3, MutationScheme(REPEAT, 128)),)


def test_count_formula_random_configs():
    rng = random.Random(11)
    seed, sets = _seed_with_sets()
    for _ in range(50):
        cfg = MutationConfig(dictionary=[b"x"] * rng.randint(0, 6), boundaries=list(range(rng.randint(0, 9))),
                             repeat_counts=rng.sample(ALLOWED_REPEATS, rng.randint(0, 5)))
        per = 2 + len(cfg.boundaries) + len(cfg.dictionary) + len(cfg.repeat_counts)
        assert len(list(enumerate_plans(seed, sets, cfg))) == per * 12 == plan_count(sets, cfg)


def test_plan_round_trip_and_replay():
    seed, sets = _seed_with_sets()
    plan = havoc_plan(seed, sets, 1234)
    again = MutationPlan.from_dict(plan.to_dict())
    assert again == plan
    assert apply_plan(seed, again) == apply_plan(seed, plan)
    assert havoc_plan(seed, sets, 1234) == plan


def test_havoc_plans_respect_limits():
    seed, sets = _seed_with_sets()
    cfg = MutationConfig(havoc_budget=300, havoc_max_targets=3)
    plans = list(havoc_plans(seed, sets, random.Random(5), cfg))
    assert plans[-1] is BUDGET_EXHAUSTED
    plans = plans[:-1]
    assert len(plans) == 300
    m = seed.sequence[0]
    for p in plans:
        ss = next(s for s in sets if s.round == p.round)
        assert 1 <= len(p.targets) <= min(3, len(ss.snippets))
        assert len({i for i, _ in p.targets}) == len(p.targets)
        for i, scheme in p.targets:
            body = m[ss.snippets[i].start:ss.snippets[i].end]
            assert scheme.kind != DATA_BOUNDARY or is_numeric(body)
        apply_plan(seed, p, cfg)


def test_unknown_round_rejected():
    seed, sets = _seed_with_sets()
    with pytest.raises(InvalidSnippet):
        apply_plan(seed, MutationPlan("s", 0, 9, ((0, MutationScheme(EMPTY)),)))


def test_config_round_trip():
    cfg = MutationConfig(dictionary=[b"\x00x"], boundaries=[7], repeat_counts=[2], havoc_budget=5)
    assert MutationConfig.from_dict(cfg.to_dict()) == cfg


def test_byte_ops():
    assert apply_byte_op(b"abcdef", "delete", 1, 2) == b"adef"
    assert apply_byte_op(b"abcdef", "duplicate", 1, 2) == b"abcbcdef"
    assert apply_byte_op(b"abcdef", "overwrite", 4, 2, b"XY") == b"abcdXY"
    with pytest.raises(ValueError):
        apply_byte_op(b"a", "smash", 0, 1)


@given(st.binary(min_size=1, max_size=30), st.integers(0, 2 ** 32))
def test_nosnippet_touches_at_most_four_bytes(m, seed):
    rng = random.Random(seed)
    op = nosnippet_op(m, rng)
    assert 1 <= op["length"] <= 4
    out = apply_byte_op(m, op["op"], op["start"], op["length"], bytes.fromhex(op["fill"]))
    assert abs(len(out) - len(m)) <= 4
    assert nosnippet_mutate(m, random.Random(seed)) == out
