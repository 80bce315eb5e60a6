"""The fuzzing campaign loop.

Per seed message: probe every byte, classify the replies into the message's
response pool, cut the message into snippets and refine them by clustering;
then mutate whole snippets, keep any sequence that produced a new response
category as a new seed, and hand every timeout to the crash monitor.

Everything the campaign does is appended to an event list. The report is a
pure function of that list (see ``report.build_report``), which is what makes
a findings log replayable.
"""

from __future__ import annotations

import logging
import random
from collections import Counter
from dataclasses import dataclass, field

from .config import NOSNIPPET, SNIPPET, CampaignConfig
from .inference import (NONRESPONSIVE, EmptyMessage, annotation_record, distinct_snippet_sets,
                        generate_probes, hierarchical_cluster, initial_snippets)
from .message import Origin, Seed, SeedCorpus
from .monitor import CrashRecord, detect_crash, restore_device
from .mutation import (BUDGET_EXHAUSTED, DATA_BOUNDARY, DICTIONARY, MutationOverflow, MutationPlan,
                       NotApplicable, apply_byte_op, apply_plan, enumerate_plans, havoc_plans,
                       nosnippet_op)
from .similarity import ResponsePool, classify_response
from .transport import CommandRestarter, NoRestarter, RestartHookFailed, Session, send_sequence

log = logging.getLogger(__name__)

EXEC_KINDS = ("baseline", "baseline_repeat", "reference", "probe", "probe_repeat", "mutation", "confirm")


class OutOfBudget(Exception):
    pass


@dataclass
class StageSummary:
    seed_id: str
    plans_executed: int = 0
    plans_skipped: int = 0
    havoc_plans: int = 0
    havoc_exhausted: bool = False
    new_categories: int = 0
    crashes: int = 0


@dataclass
class CampaignState:
    corpus: SeedCorpus
    pools: dict = field(default_factory=dict)
    queue: list = field(default_factory=list)
    timeline: list = field(default_factory=list)
    executions: int = 0
    findings: list = field(default_factory=list)
    events: list = field(default_factory=list)
    reject_category: dict = field(default_factory=dict)
    data_ranges: dict = field(default_factory=dict)

    @property
    def total_categories(self) -> int:
        return sum(len(p) for p in self.pools.values())


def _replace(seq, idx: int, message: bytes) -> tuple:
    seq = list(seq)
    seq[idx] = message
    return tuple(seq)


def _complement(m: bytes) -> bytes:
    return bytes(b ^ 0xFF for b in m)


class Campaign:
    def __init__(self, corpus: SeedCorpus, session: Session, config: CampaignConfig,
                 restarter=None, sink=None):
        self.corpus = corpus
        self.session = session
        self.config = config
        self.mcfg = config.mutation
        if restarter is None:
            restarter = CommandRestarter(corpus.restart_command) if corpus.restart_command else NoRestarter()
        self.restarter = restarter
        self.sink = sink
        self.rng = random.Random(config.rng_seed)
        self.state = CampaignState(corpus)
        self.counts = Counter()
        self.t0 = session.now()
        self.halted = False
        self._seed_counter = 0
        self._tried: dict = {}
        self._mutated: set = set()
        self._crash_keys: set = set()

    # bookkeeping -------------------------------------------------------------

    def elapsed(self) -> float:
        return self.session.now() - self.t0

    def emit(self, ev: dict) -> None:
        self.state.events.append(ev)
        if self.sink is not None:
            self.sink(ev)

    def root_of(self, seed: Seed) -> str:
        while not seed.origin.initial:
            seed = self.corpus.get(seed.origin.parent)
        return seed.id

    def pool_key(self, seed: Seed, idx: int) -> tuple:
        return (self.root_of(seed), idx)

    def pool(self, key: tuple) -> ResponsePool:
        if key not in self.state.pools:
            self.state.pools[key] = ResponsePool(key)
        return self.state.pools[key]

    def _charge(self) -> None:
        if self.halted:
            raise OutOfBudget("campaign halted")
        budget = self.config.exec_budget
        if budget is not None and self.state.executions >= budget:
            raise OutOfBudget("execution budget")
        tb = self.config.time_budget_s
        if tb is not None and self.elapsed() >= tb:
            raise OutOfBudget("time budget")

    def _new_category(self, key: tuple, cid: int, seed_id: str) -> None:
        total = self.state.total_categories
        t = self.elapsed()
        self.state.timeline.append((t, total))
        self.emit({"type": "category", "t": t, "pool": f"{key[0]}#{key[1]}", "id": cid,
                   "seed": seed_id, "total": total})

    # transmission ------------------------------------------------------------

    def execute(self, seq, kind: str, seed_id: str, idx: int, plan=None, op=None, probe_index=None):
        """Send one test sequence, run the crash protocol on timeout, restore.

        Returns the reply to message ``idx``, or None if the device crashed.
        """
        self._charge()
        self.state.executions += 1
        self.counts[kind] += 1
        t = self.elapsed()
        res = send_sequence(seq, self.session)
        ev = {"type": "exec", "n": self.state.executions, "t": t, "kind": kind, "seed": seed_id,
              "msg": idx, "seq": [m.hex() for m in seq]}
        if plan is not None:
            ev["plan"] = plan
        if op is not None:
            ev["op"] = op
        if probe_index is not None:
            ev["probe"] = probe_index
        if not res.ok:
            verdict = detect_crash(seq, self.session, self.restarter, res.timeout_at)
            self.counts["crash_resend"] += verdict.transmissions
            self.counts["restart"] += verdict.restarts
            if verdict.crashed:
                ev["resp"] = None
                self.emit(ev)
                rec = verdict.record
                rec.plan = plan
                rec.seed_id = seed_id
                self._record_crash(rec, t)
                self._recover()
                return None
            res = verdict.result
        reply = res.reply_to(idx)
        ev["resp"] = reply.data.hex() if reply is not None else ""
        self.emit(ev)
        self._restore(seq, seed_id)
        return reply

    def _restore(self, previous, seed_id: str) -> None:
        r = restore_device(self.session, self.corpus.restoring_sequence, self.restarter, previous)
        self.counts["restore"] += r.transmissions
        if r.verdict is not None:
            self.counts["crash_resend"] += r.verdict.transmissions
            self.counts["restart"] += r.verdict.restarts
            if r.verdict.crashed:
                r.verdict.record.seed_id = seed_id
                self._record_crash(r.verdict.record, self.elapsed())
                self._recover()

    def _recover(self) -> None:
        self.counts["recovery_restart"] += 1
        try:
            self.restarter()
        except RestartHookFailed as exc:
            log.error("device could not be restarted after a crash, stopping: %s", exc)
            self.halted = True
            return
        self.session.sleep(self.session.config.boot_wait_ms / 1000)
        try:
            self.session.reconnect()
        except ConnectionError:
            pass

    def _record_crash(self, rec: CrashRecord, t: float) -> None:
        key = rec.sequence
        if key in self._crash_keys:
            self.emit({"type": "crash_repeat", "t": t, "seq": [m.hex() for m in key]})
            return
        self._crash_keys.add(key)
        self.state.findings.append(rec)
        self.emit({"type": "crash", "t": t, "record": rec.to_dict()})

    def _wait_until(self, t_abs: float) -> None:
        gap = t_abs - self.session.now()
        if gap > 0:
            self.session.sleep(gap)

    def probe_pair(self, seq, kind: str, seed: Seed, idx: int, pool: ResponsePool, probe_index=None):
        """Send ``seq`` twice one probe interval apart and classify the pair."""
        interval = self.session.config.probe_repeat_interval_ms / 1000
        start = self.session.now()
        r = self.execute(seq, kind, seed.id, idx, probe_index=probe_index)
        if r is None:
            return None
        self._wait_until(start + interval)
        r2 = self.execute(seq, kind + "_repeat", seed.id, idx, probe_index=probe_index)
        if r2 is None:
            return None
        c = classify_response(r, r2, pool, seq[idx])
        if c.new:
            self._new_category(pool.owner, c.category, seed.id)
        return c

    def observe(self, seq, kind: str, seed: Seed, idx: int, pool: ResponsePool, plan=None, op=None):
        """Send once; repeat only when the reply matches no known category."""
        start = self.session.now()
        r = self.execute(seq, kind, seed.id, idx, plan=plan, op=op)
        if r is None:
            return None
        cid = pool.match(r)
        if cid is not None:
            return cid, False
        self._wait_until(start + self.session.config.probe_repeat_interval_ms / 1000)
        r2 = self.execute(seq, "confirm", seed.id, idx, plan=plan, op=op)
        if r2 is None:
            return None
        c = classify_response(r, r2, pool, seq[idx])
        if c.new:
            self._new_category(pool.owner, c.category, seed.id)
        return c.category, c.new

    def reserve_seed(self, parent: Seed, seq, category: int, idx: int) -> Seed:
        self._seed_counter += 1
        seed = Seed(f"n{self._seed_counter:05d}", tuple(seq), Origin(parent.id, category, idx))
        self.corpus.seeds.append(seed)
        self.state.queue.append(seed.id)
        self.emit({"type": "seed", "id": seed.id, "parent": parent.id, "category": category,
                   "msg": idx, "seq": [m.hex() for m in seed.sequence], "t": self.elapsed()})
        return seed

    # stages ------------------------------------------------------------------

    def run_snippet_determination(self, seed: Seed, idx: int):
        m = seed.sequence[idx]
        if not m:
            raise EmptyMessage(f"seed {seed.id} message {idx} is empty")
        key = self.pool_key(seed, idx)
        pool = self.pool(key)
        if len(pool) == 0:
            self.probe_pair(seed.sequence, "baseline", seed, idx, pool)
        if key not in self.state.reject_category:
            out = self.observe(_replace(seed.sequence, idx, _complement(m)), "reference", seed, idx, pool)
            self.state.reject_category[key] = out[0] if out else None
        categories = []
        new_seeds = []
        for i, probe in generate_probes(m):
            seq = _replace(seed.sequence, idx, probe)
            c = self.probe_pair(seq, "probe", seed, idx, pool, probe_index=i)
            if c is None:
                categories.append(NONRESPONSIVE)
                continue
            categories.append(c.category)
            if c.new:
                new_seeds.append(self.reserve_seed(seed, seq, c.category, idx))
        initial = initial_snippets(m, categories, idx)
        sets = distinct_snippet_sets(hierarchical_cluster(initial, pool))
        seed.snippet_annotations[idx] = sets
        for ss in sets:
            rec = annotation_record(seed.id, ss)
            rec.update({"type": "annotation", "length": len(m)})
            self.emit(rec)
        return seed, new_seeds

    def _label_data(self, seed: Seed, idx: int, start: int, end: int) -> None:
        ranges = self.state.data_ranges.setdefault((seed.id, idx), set())
        if (start, end) not in ranges:
            ranges.add((start, end))
            self.emit({"type": "label", "seed": seed.id, "msg": idx, "start": start, "end": end})

    def _run_plan(self, seed: Seed, plan: MutationPlan, pool: ResponsePool, key: tuple,
                  summary: StageSummary) -> str:
        try:
            seq = apply_plan(seed, plan, self.mcfg)
        except (NotApplicable, MutationOverflow):
            summary.plans_skipped += 1
            return "skip"
        idx = plan.message_index
        tried = self._tried.setdefault((seed.id, idx), {})
        mutated = seq[idx]
        if mutated in tried:
            summary.plans_skipped += 1
            outcome = tried[mutated]
        else:
            out = self.observe(seq, "mutation", seed, idx, pool, plan=plan.to_dict())
            summary.plans_executed += 1
            outcome = None if out is None else out[0]
            tried[mutated] = outcome
            if out is None:
                summary.crashes += 1
                return "crash"
            if out[1]:
                summary.new_categories += 1
                self.reserve_seed(seed, seq, out[0], idx)
                self._maybe_label(seed, plan, outcome, key)
                return "new"
        self._maybe_label(seed, plan, outcome, key)
        return "ok"

    def _maybe_label(self, seed, plan, outcome, key) -> None:
        if outcome is None or len(plan.targets) != 1:
            return
        snippet_idx, scheme = plan.targets[0]
        if scheme.kind not in (DICTIONARY, DATA_BOUNDARY):
            return
        if outcome == self.state.reject_category.get(key):
            return
        ss = next(s for s in seed.snippet_annotations[plan.message_index] if s.round == plan.round)
        sn = ss.snippets[snippet_idx]
        self._label_data(seed, plan.message_index, sn.start, sn.end)

    def run_mutation_stage(self, seed: Seed, deterministic: bool = True, havoc: bool = True) -> StageSummary:
        summary = StageSummary(seed.id)
        for idx, sets in sorted(seed.snippet_annotations.items()):
            if not sets:
                continue
            key = self.pool_key(seed, idx)
            pool = self.pool(key)
            if deterministic:
                for plan in enumerate_plans(seed, sets, self.mcfg):
                    self._run_plan(seed, plan, pool, key, summary)
            if not havoc:
                continue
            for plan in havoc_plans(seed, sets, self.rng, self.mcfg):
                if plan is BUDGET_EXHAUSTED:
                    summary.havoc_exhausted = True
                    break
                summary.havoc_plans += 1
                if self._run_plan(seed, plan, pool, key, summary) in ("new", "crash"):
                    break
        self.emit({"type": "stage", "seed": seed.id, "executed": summary.plans_executed,
                   "skipped": summary.plans_skipped, "havoc": summary.havoc_plans,
                   "new_categories": summary.new_categories, "crashes": summary.crashes})
        return summary

    # campaign ----------------------------------------------------------------

    def _unbounded(self) -> bool:
        return self.config.exec_budget is None and self.config.time_budget_s is None

    def _snippet_loop(self) -> None:
        self.state.queue = [s.id for s in self.corpus.seeds]
        while True:
            before = self.state.executions
            i = 0
            # without a budget only the initial seeds are swept, once
            limit = len(self.corpus.seeds) if self._unbounded() else None
            while i < len(self.state.queue) and (limit is None or i < limit):
                seed = self.corpus.get(self.state.queue[i])
                i += 1
                for idx in range(len(seed.sequence)):
                    if idx not in seed.snippet_annotations:
                        if seed.sequence[idx]:
                            self.run_snippet_determination(seed, idx)
                        else:
                            seed.snippet_annotations[idx] = []
                first = seed.id not in self._mutated
                self._mutated.add(seed.id)
                self.run_mutation_stage(seed, deterministic=first)
            if self._unbounded() or self.state.executions == before:
                return

    def _nosnippet_loop(self) -> None:
        slots = [(s, i) for s in self.corpus.seeds for i in range(len(s.sequence)) if s.sequence[i]]
        if not slots:
            return
        limit = self.mcfg.havoc_budget * len(slots) if self._unbounded() else None
        k = 0
        while limit is None or k < limit:
            seed, idx = slots[k % len(slots)]
            k += 1
            op = nosnippet_op(seed.sequence[idx], self.rng)
            mutated = apply_byte_op(seed.sequence[idx], op["op"], op["start"], op["length"],
                                    bytes.fromhex(op["fill"]))
            self.observe(_replace(seed.sequence, idx, mutated), "mutation", seed, idx,
                         self.pool(self.pool_key(seed, idx)), op=op)

    def fuzz(self) -> dict:
        from .report import build_report

        self.t0 = self.session.now()
        self.emit({"type": "start", "t": 0.0, "config": self.config.to_dict(),
                   "seeds": [{"id": s.id, "seq": [m.hex() for m in s.sequence]} for s in self.corpus.seeds],
                   "restoring": [m.hex() for m in self.corpus.restoring_sequence]})
        try:
            if self.config.mode == SNIPPET:
                self._snippet_loop()
            elif self.config.mode == NOSNIPPET:
                self._nosnippet_loop()
        except OutOfBudget as exc:
            log.info("campaign stopped: %s", exc)
        self.emit({"type": "end", "t": self.elapsed(), "counts": dict(sorted(self.counts.items())),
                   "sequences_sent": self.session.sequences_sent, "halted": self.halted})
        return build_report(self.state.events)
