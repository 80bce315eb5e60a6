"""Campaign reports, built only from the event log.

``build_report`` reads nothing but the events a campaign emitted, so running
it over a saved findings log reproduces the live report exactly.
"""

from __future__ import annotations

import csv
import json
from collections import Counter
from pathlib import Path

from .message import Origin, Seed, apply_partition
from .mutation import MutationConfig, MutationPlan, apply_plan, apply_byte_op

REPORT_JSON = "report.json"
SUMMARY_TXT = "summary.txt"
TIMELINE_CSV = "timeline.csv"
FINDINGS_LOG = "findings.jsonl"

TIME_KEYS = frozenset({"t", "started_at", "finished_at", "elapsed_s"})


class ReportError(OSError):
    pass


def _annotations(events) -> list:
    labels: dict = {}
    for ev in events:
        if ev["type"] == "label":
            labels.setdefault((ev["seed"], ev["msg"]), set()).add((ev["start"], ev["end"]))
    out = []
    for ev in events:
        if ev["type"] != "annotation":
            continue
        ranges = labels.get((ev["seed"], ev["message_index"]), set())
        bounds = [0] + list(ev["boundaries"]) + [ev["length"]]
        spans = list(zip(bounds, bounds[1:]))
        out.append({
            "seed": ev["seed"], "message_index": ev["message_index"], "round": ev["round"],
            "length": ev["length"], "boundaries": ev["boundaries"], "categories": ev["categories"],
            "data": [span in ranges for span in spans],
        })
    return out


def build_report(events) -> dict:
    events = list(events)
    start = next((e for e in events if e["type"] == "start"), None)
    end = next((e for e in events if e["type"] == "end"), None)
    execs = [e for e in events if e["type"] == "exec"]
    by_kind = Counter(e["kind"] for e in execs)
    counts = dict(end["counts"]) if end else {}
    sent = end["sequences_sent"] if end else None
    accounted = sum(counts.get(k, 0) for k in counts if k not in ("restart", "recovery_restart"))

    timeline = [{"t": e["t"], "categories": e["total"]} for e in events if e["type"] == "category"]
    findings = [e["record"] for e in events if e["type"] == "crash"]
    seeds = []
    if start:
        seeds = [{"id": s["id"], "parent": None, "category": None, "message_index": None,
                  "sequence": s["seq"]} for s in start["seeds"]]
    seeds += [{"id": e["id"], "parent": e["parent"], "category": e["category"],
               "message_index": e["msg"], "sequence": e["seq"]} for e in events if e["type"] == "seed"]
    return {
        "config": start["config"] if start else None,
        "elapsed_s": end["t"] if end else 0.0,
        "halted": bool(end and end.get("halted")),
        "stats": {
            "executions": len(execs),
            "executions_by_kind": dict(sorted(by_kind.items())),
            "distinct_categories": timeline[-1]["categories"] if timeline else 0,
            "crashes": len(findings),
            "duplicate_crashes": sum(1 for e in events if e["type"] == "crash_repeat"),
            "seeds": len(seeds),
        },
        "transmissions": {
            "by_kind": counts,
            "sequences_sent": sent,
            "reconciled": sent is not None and accounted == sent,
        },
        "timeline": timeline,
        "findings": findings,
        "seeds": seeds,
        "annotations": _annotations(events),
    }


def strip_timestamps(obj):
    """A copy of ``obj`` without any timing fields, for run-to-run comparison."""
    if isinstance(obj, dict):
        return {k: strip_timestamps(v) for k, v in obj.items() if k not in TIME_KEYS}
    if isinstance(obj, list):
        return [strip_timestamps(v) for v in obj]
    return obj


def fingerprint(report: dict) -> str:
    return json.dumps(strip_timestamps(report), sort_keys=True)


def render_summary(report: dict) -> str:
    st = report["stats"]
    tr = report["transmissions"]
    cfg = report.get("config") or {}
    lines = [
        f"mode: {cfg.get('mode')}  rng seed: {cfg.get('rng_seed')}  target: {cfg.get('target_spec')}",
        f"elapsed: {report['elapsed_s']:.1f}s{'  (halted: device could not be restarted)' if report['halted'] else ''}",
        f"executions: {st['executions']}  " + " ".join(f"{k}={v}" for k, v in st["executions_by_kind"].items()),
        f"distinct response categories: {st['distinct_categories']}",
        f"seeds: {st['seeds']}",
        f"sequences sent: {tr['sequences_sent']}  reconciled: {'yes' if tr['reconciled'] else 'NO'}",
        f"crashes: {st['crashes']} (+{st['duplicate_crashes']} repeats)",
    ]
    for i, f in enumerate(report["findings"], 1):
        where = " during restore" if f.get("during_restore") else ""
        lines.append(f"  #{i} [{f['verdict']}{where}] seed {f['seed']}: " + " | ".join(f["sequence"]))
    return "\n".join(lines) + "\n"


def timeline_rows(report: dict) -> list:
    """(timestamp_s, cumulative categories), one row per distinct timestamp."""
    rows: list = []
    for point in report["timeline"]:
        t = round(point["t"], 6)
        if rows and rows[-1][0] == t:
            rows[-1] = (t, point["categories"])
        else:
            rows.append((t, point["categories"]))
    return rows


def emit_report(report: dict, out_dir) -> dict:
    out = Path(out_dir)
    paths = {"report": out / REPORT_JSON, "summary": out / SUMMARY_TXT, "timeline": out / TIMELINE_CSV}
    try:
        out.mkdir(parents=True, exist_ok=True)
        paths["report"].write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
        paths["summary"].write_text(render_summary(report))
        with open(paths["timeline"], "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["timestamp_s", "cumulative_categories"])
            w.writerows(timeline_rows(report))
    except OSError as exc:
        raise ReportError(f"cannot write report to {out}: {exc}") from exc
    return paths


# -- findings log ---------------------------------------------------------------

class JsonlSink:
    """Appends each event to a JSON-lines file as it happens."""

    def __init__(self, path):
        self.path = Path(path)
        try:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self.fh = open(self.path, "w")
        except OSError as exc:
            raise ReportError(f"cannot open findings log {self.path}: {exc}") from exc

    def __call__(self, ev: dict) -> None:
        self.fh.write(json.dumps(ev, sort_keys=True) + "\n")

    def close(self) -> None:
        self.fh.close()


def read_events(path) -> list:
    try:
        with open(path) as fh:
            return [json.loads(line) for line in fh if line.strip()]
    except OSError as exc:
        raise ReportError(f"cannot read findings log {path}: {exc}") from exc


def verify_replay(events) -> list:
    """Re-derive every logged test sequence from its seed and plan.

    Returns a list of mismatch descriptions; empty means every mutation in the
    log is reproducible from the logged seeds, annotations and plans.
    """
    events = list(events)
    start = next(e for e in events if e["type"] == "start")
    mcfg = MutationConfig.from_dict(start["config"]["mutation"])
    seeds = {}
    for s in start["seeds"]:
        seeds[s["id"]] = Seed(s["id"], tuple(bytes.fromhex(m) for m in s["seq"]), Origin())
    problems = []
    for ev in events:
        kind = ev["type"]
        if kind == "seed":
            seeds[ev["id"]] = Seed(ev["id"], tuple(bytes.fromhex(m) for m in ev["seq"]),
                                   Origin(ev["parent"], ev["category"], ev["msg"]))
        elif kind == "annotation":
            seed = seeds[ev["seed"]]
            m = seed.sequence[ev["message_index"]]
            ss = apply_partition(m, ev["boundaries"], ev["categories"], ev["message_index"], ev["round"])
            seed.snippet_annotations.setdefault(ev["message_index"], []).append(ss)
        elif kind == "exec" and ev["kind"] in ("mutation", "confirm"):
            logged = tuple(bytes.fromhex(m) for m in ev["seq"])
            seed = seeds[ev["seed"]]
            if "plan" in ev:
                derived = apply_plan(seed, MutationPlan.from_dict(ev["plan"]), mcfg)
            elif "op" in ev:
                op = ev["op"]
                derived = list(seed.sequence)
                i = ev["msg"]
                derived[i] = apply_byte_op(derived[i], op["op"], op["start"], op["length"],
                                           bytes.fromhex(op["fill"]))
                derived = tuple(derived)
            elif ev["kind"] == "mutation":
                problems.append(f"exec {ev['n']}: mutation without plan")
                continue
            else:
                continue
            if derived != logged:
                problems.append(f"exec {ev['n']}: plan does not reproduce the logged sequence")
    return problems


def replay(path) -> tuple:
    """(report rebuilt from a findings log, list of replay mismatches)."""
    events = read_events(path)
    return build_report(events), verify_replay(events)


__all__ = [
    "build_report", "emit_report", "render_summary", "timeline_rows", "strip_timestamps",
    "fingerprint", "JsonlSink", "read_events", "verify_replay", "replay", "ReportError",
]
