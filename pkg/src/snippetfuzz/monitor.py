"""Crash detection by timeout, resend and restart; device restoration."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

from .transport import RestartHookFailed, SequenceResult, Session, send_sequence

log = logging.getLogger(__name__)

RESENDS = 3

NO_CRASH = "no_crash"
CRASH = "crash"
CRASH_UNCONFIRMED = "crash_unconfirmed"


@dataclass
class CrashRecord:
    sequence: tuple
    timeline: list
    verdict: str = CRASH
    plan: dict | None = None
    started_at: float = 0.0
    finished_at: float = 0.0
    seed_id: str | None = None
    during_restore: bool = False

    def to_dict(self) -> dict:
        return {
            "sequence": [m.hex() for m in self.sequence],
            "verdict": self.verdict,
            "plan": self.plan,
            "seed": self.seed_id,
            "during_restore": self.during_restore,
            "timeline": self.timeline,
            "started_at": self.started_at,
            "finished_at": self.finished_at,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CrashRecord":
        return cls(tuple(bytes.fromhex(m) for m in d["sequence"]), d["timeline"], d["verdict"],
                   d.get("plan"), d.get("started_at", 0.0), d.get("finished_at", 0.0),
                   d.get("seed"), d.get("during_restore", False))


@dataclass
class MonitorVerdict:
    verdict: str
    result: SequenceResult | None = None
    record: CrashRecord | None = None
    timeline: list = field(default_factory=list)
    transmissions: int = 0
    restarts: int = 0

    @property
    def crashed(self) -> bool:
        return self.verdict != NO_CRASH


def detect_crash(seq, session: Session, restarter, timeout_at: int = 0) -> MonitorVerdict:
    """Decide whether a timed-out sequence crashed the device.

    Resend up to three times; any complete answer means a transient fault.
    After three timeouts restart the device, wait for it to boot and send
    once more. Silence after that is a crash.
    """
    t0 = session.now()
    timeline = [{"event": "timeout", "attempt": 0, "message_index": timeout_at, "t": t0}]
    sent = 0
    for attempt in range(1, RESENDS + 1):
        timeline.append({"event": "resend", "attempt": attempt, "t": session.now()})
        sent += 1
        res = send_sequence(seq, session)
        if res.ok:
            timeline.append({"event": "reply", "attempt": attempt, "t": session.now()})
            timeline.append({"event": "verdict", "verdict": NO_CRASH, "t": session.now()})
            return MonitorVerdict(NO_CRASH, res, None, timeline, sent, 0)
        timeline.append({"event": "timeout", "attempt": attempt, "message_index": res.timeout_at,
                         "t": session.now()})
    timeline.append({"event": "restart", "t": session.now()})
    try:
        restarter()
    except RestartHookFailed as exc:
        log.warning("restart hook failed: %s", exc)
        timeline.append({"event": "restart_failed", "error": str(exc), "t": session.now()})
        timeline.append({"event": "verdict", "verdict": CRASH_UNCONFIRMED, "t": session.now()})
        rec = CrashRecord(tuple(seq), timeline, CRASH_UNCONFIRMED, started_at=t0, finished_at=session.now())
        return MonitorVerdict(CRASH_UNCONFIRMED, None, rec, timeline, sent, 1)
    session.sleep(session.config.boot_wait_ms / 1000)
    try:
        session.reconnect()
    except ConnectionError:
        pass
    timeline.append({"event": "confirm", "t": session.now()})
    sent += 1
    res = send_sequence(seq, session)
    if res.ok:
        timeline.append({"event": "reply", "attempt": RESENDS + 1, "t": session.now()})
        timeline.append({"event": "verdict", "verdict": NO_CRASH, "t": session.now()})
        return MonitorVerdict(NO_CRASH, res, None, timeline, sent, 1)
    timeline.append({"event": "timeout", "attempt": RESENDS + 1, "message_index": res.timeout_at,
                     "t": session.now()})
    timeline.append({"event": "verdict", "verdict": CRASH, "t": session.now()})
    rec = CrashRecord(tuple(seq), timeline, CRASH, started_at=t0, finished_at=session.now())
    return MonitorVerdict(CRASH, None, rec, timeline, sent, 1)


def event_pattern(timeline) -> list:
    """The timeline reduced to event names, for exact protocol checks."""
    return [e["event"] for e in timeline]


CRASH_PATTERN = ["timeout", "resend", "timeout", "resend", "timeout", "resend", "timeout",
                 "restart", "confirm", "timeout", "verdict"]


def is_conformant_crash(record: CrashRecord) -> bool:
    return record.verdict == CRASH and event_pattern(record.timeline) == CRASH_PATTERN


@dataclass
class RestoreResult:
    acknowledged: bool
    verdict: MonitorVerdict | None = None
    transmissions: int = 0


def restore_device(session: Session, restoring, restarter, previous=None) -> RestoreResult:
    """Send the restoring sequence; replies are ignored, only liveness counts.

    If the restoring sequence itself times out the crash protocol runs on it,
    and a resulting crash is attributed to ``previous`` -- the test sequence
    that left the device in that state.
    """
    restoring = tuple(restoring)
    if not restoring:
        return RestoreResult(True)
    res = send_sequence(restoring, session)
    if res.ok:
        return RestoreResult(True, None, 1)
    verdict = detect_crash(restoring, session, restarter, res.timeout_at)
    if verdict.record is not None and previous is not None:
        verdict.record.sequence = tuple(previous)
        verdict.record.during_restore = True
    return RestoreResult(not verdict.crashed, verdict, 1)
