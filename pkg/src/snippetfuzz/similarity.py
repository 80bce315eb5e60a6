"""Response similarity and response-pool classification.

Two responses are compared with a length-normalised edit distance. A pool
keeps one representative per response category together with that
representative's self-similarity (the similarity of two replies to the same
probe), which acts as the per-category noise threshold.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import NamedTuple

log = logging.getLogger(__name__)

MAX_COMPARE_LEN = 8192


@dataclass(frozen=True)
class Response:
    data: bytes
    received_at: float = 0.0

    def __len__(self) -> int:
        return len(self.data)


def _raw(r) -> bytes:
    return r.data if isinstance(r, Response) else bytes(r)


def _truncate(b: bytes) -> bytes:
    if len(b) > MAX_COMPARE_LEN:
        log.warning("response of %d bytes truncated to %d for comparison", len(b), MAX_COMPARE_LEN)
        return b[:MAX_COMPARE_LEN]
    return b


def edit_distance_dp(a: bytes, b: bytes) -> int:
    """Levenshtein distance by the classic two-row dynamic program."""
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, x in enumerate(a, 1):
        cur = [i]
        for j, y in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (x != y)))
        prev = cur
    return prev[-1]


def edit_distance(a, b) -> int:
    """Unit-cost Levenshtein distance between two byte strings.

    Uses the bit-parallel formulation (Myers 1999, Hyyro 2003): the DP column
    for the shorter string is packed into a Python int, so each byte of the
    longer string costs a handful of big-int operations instead of a row of
    Python-level cell updates.
    """
    a, b = _truncate(_raw(a)), _truncate(_raw(b))
    if a == b:
        return 0
    if len(a) < len(b):
        a, b = b, a
    m = len(b)
    if m == 0:
        return len(a)
    peq: dict[int, int] = {}
    for i, c in enumerate(b):
        peq[c] = peq.get(c, 0) | (1 << i)
    mask = (1 << m) - 1
    last = 1 << (m - 1)
    pv, mv, score = mask, 0, m
    for c in a:
        eq = peq.get(c, 0)
        xv = eq | mv
        xh = (((eq & pv) + pv) ^ pv) | eq
        ph = (mv | ~(xh | pv)) & mask
        mh = pv & xh
        if ph & last:
            score += 1
        elif mh & last:
            score -= 1
        ph = ((ph << 1) | 1) & mask
        mh = (mh << 1) & mask
        pv = (mh | ~(xv | ph)) & mask
        mv = ph & xv
    return score


def similarity_score(r_k, r_t) -> float:
    a, b = _raw(r_k), _raw(r_t)
    longest = max(len(a), len(b))
    if longest == 0:
        return 1.0
    return 1.0 - edit_distance(a, b) / min(longest, MAX_COMPARE_LEN)


def self_similarity(r, r_repeat) -> float:
    return similarity_score(r, r_repeat)


def same_category(r_i, s_ii: float, r_j, s_jj: float) -> bool:
    s_ij = similarity_score(r_i, r_j)
    return s_ij >= s_ii or s_ij >= s_jj


def _similarity_upper_bound(a: bytes, b: bytes) -> float:
    longest = max(len(a), len(b))
    if longest == 0:
        return 1.0
    return 1.0 - abs(len(a) - len(b)) / longest


@dataclass
class Category:
    id: int
    representative: Response
    probe: bytes
    self_similarity: float

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "representative": self.representative.data.hex(),
            "probe": self.probe.hex(),
            "self_similarity": self.self_similarity,
        }


class Classification(NamedTuple):
    category: int
    new: bool


@dataclass
class ResponsePool:
    owner: tuple = ("", 0)
    categories: list = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.categories)

    def __getitem__(self, category_id: int) -> Category:
        return self.categories[category_id]

    def __contains__(self, category_id: int) -> bool:
        return 0 <= category_id < len(self.categories)

    def match(self, r, s_ii: float | None = None) -> int | None:
        """First category whose representative shares a category with ``r``.

        With ``s_ii`` unknown only the representative's own threshold is
        applied; that is the cheap check used before paying for a repeat
        transmission.
        """
        data = _raw(r)
        for cat in self.categories:
            rep = cat.representative.data
            threshold = cat.self_similarity if s_ii is None else min(cat.self_similarity, s_ii)
            if _similarity_upper_bound(data, rep) < threshold:
                continue
            if similarity_score(data, rep) >= threshold:
                return cat.id
        return None

    def add(self, r, probe: bytes, self_sim: float) -> int:
        if not isinstance(r, Response):
            r = Response(bytes(r))
        cid = len(self.categories)
        self.categories.append(Category(cid, r, bytes(probe), self_sim))
        return cid

    def snapshot(self) -> list:
        return [c.to_dict() for c in self.categories]


def classify_response(r, r_repeat, pool: ResponsePool, probe: bytes = b"") -> Classification:
    s_ii = self_similarity(r, r_repeat)
    cid = pool.match(r, s_ii)
    if cid is not None:
        return Classification(cid, False)
    return Classification(pool.add(r, probe, s_ii), True)
