"""Sessions to a target device and sequence transmission.

Two session kinds share one small interface (``open``, ``close``,
``exchange``, ``sleep``, ``now``):

* ``SocketSession`` talks TCP or UDP to a real address.
* ``LoopbackSession`` calls a ``MockDevice`` in-process on a virtual clock,
  so timeouts, probe intervals and boot waits cost no wall-clock time and
  campaigns are exactly reproducible.
"""

from __future__ import annotations

import logging
import shlex
import socket
import subprocess
import time
from dataclasses import dataclass, field

from .framing import DELIMITER, LENGTH_PREFIX, READ_UNTIL_TIMEOUT, Framing
from .similarity import Response

log = logging.getLogger(__name__)

TCP = "tcp"
UDP = "udp"


class TargetUnreachable(ConnectionError):
    pass


class RestartHookFailed(RuntimeError):
    pass


@dataclass
class TargetConfig:
    host: str = "127.0.0.1"
    port: int = 0
    protocol: str = TCP
    framing: Framing = field(default_factory=Framing)
    response_timeout_ms: int = 2000
    inter_message_delay_ms: int = 0
    probe_repeat_interval_ms: int = 1000
    boot_wait_ms: int = 10000

    def __post_init__(self):
        if self.protocol not in (TCP, UDP):
            raise ValueError(f"protocol must be tcp or udp, got {self.protocol!r}")
        if self.response_timeout_ms < 100:
            raise ValueError("response_timeout_ms must be at least 100")
        if isinstance(self.framing, dict):
            self.framing = Framing.from_dict(self.framing)

    def to_dict(self) -> dict:
        return {
            "host": self.host, "port": self.port, "protocol": self.protocol,
            "framing": self.framing.to_dict(),
            "response_timeout_ms": self.response_timeout_ms,
            "inter_message_delay_ms": self.inter_message_delay_ms,
            "probe_repeat_interval_ms": self.probe_repeat_interval_ms,
            "boot_wait_ms": self.boot_wait_ms,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TargetConfig":
        return cls(**d)


class VirtualClock:
    def __init__(self, start: float = 0.0):
        self.t = start

    def __call__(self) -> float:
        return self.t

    def advance(self, seconds: float) -> None:
        self.t += max(0.0, seconds)


class Session:
    """Base class; subclasses implement ``_exchange``."""

    config: TargetConfig

    def __init__(self, config: TargetConfig):
        self.config = config
        self.transmissions = 0
        self.sequences_sent = 0

    def open(self):
        return self

    def close(self) -> None:
        pass

    def reconnect(self) -> None:
        self.close()
        self.open()

    def now(self) -> float:
        return time.monotonic()

    def sleep(self, seconds: float) -> None:
        if seconds > 0:
            time.sleep(seconds)

    def exchange(self, payload: bytes):
        """Send one message, return its reply bytes, or None on timeout."""
        self.transmissions += 1
        return self._exchange(bytes(payload))

    def _exchange(self, payload: bytes):
        raise NotImplementedError

    def __enter__(self):
        return self.open()

    def __exit__(self, *exc):
        self.close()


class SocketSession(Session):
    def __init__(self, config: TargetConfig):
        super().__init__(config)
        self.sock = None
        self.buf = b""

    def open(self):
        timeout = self.config.response_timeout_ms / 1000
        try:
            if self.config.protocol == UDP:
                self.sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
                self.sock.connect((self.config.host, self.config.port))
            else:
                self.sock = socket.create_connection((self.config.host, self.config.port), timeout=timeout)
        except OSError as exc:
            raise TargetUnreachable(f"{self.config.host}:{self.config.port}: {exc}") from exc
        self.sock.settimeout(timeout)
        self.buf = b""
        return self

    def close(self) -> None:
        if self.sock is not None:
            try:
                self.sock.close()
            except OSError:
                pass
            self.sock = None

    def _exchange(self, payload: bytes):
        if self.sock is None:
            self.open()
        framing = self.config.framing
        timeout = self.config.response_timeout_ms / 1000
        if self.config.protocol == UDP:
            self.sock.send(payload)
            try:
                return self.sock.recv(65536)
            except socket.timeout:
                return None
            except OSError as exc:
                raise ConnectionError(str(exc)) from exc
        try:
            self.sock.sendall(framing.encode(payload))
        except OSError as exc:
            raise ConnectionError(str(exc)) from exc
        if framing.kind == READ_UNTIL_TIMEOUT:
            return self._read_until_idle(timeout)
        deadline = time.monotonic() + timeout
        while True:
            frame, self.buf = framing.split(self.buf)
            if frame is not None:
                return frame
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                return None
            self.sock.settimeout(remaining)
            try:
                chunk = self.sock.recv(65536)
            except socket.timeout:
                return None
            except OSError as exc:
                raise ConnectionError(str(exc)) from exc
            if not chunk:
                raise ConnectionError("connection closed by target")
            self.buf += chunk

    def _read_until_idle(self, timeout: float, idle: float = 0.05):
        self.sock.settimeout(timeout)
        try:
            data = self.sock.recv(65536)
        except socket.timeout:
            return None
        except OSError as exc:
            raise ConnectionError(str(exc)) from exc
        if not data:
            raise ConnectionError("connection closed by target")
        self.sock.settimeout(idle)
        while True:
            try:
                more = self.sock.recv(65536)
            except (socket.timeout, OSError):
                break
            if not more:
                break
            data += more
        return data


class LoopbackSession(Session):
    """In-process session against a MockDevice sharing a virtual clock."""

    def __init__(self, device, config: TargetConfig | None = None, clock: VirtualClock | None = None,
                 latency_ms: float = 1.0):
        super().__init__(config or TargetConfig())
        self.device = device
        self.clock = clock or VirtualClock()
        self.latency = latency_ms / 1000
        device.clock = self.clock

    def now(self) -> float:
        return self.clock()

    def sleep(self, seconds: float) -> None:
        self.clock.advance(seconds)

    def _exchange(self, payload: bytes):
        reply = self.device.handle_message(payload)
        if reply is None:
            self.clock.advance(self.config.response_timeout_ms / 1000)
            return None
        self.clock.advance(self.latency)
        return reply


@dataclass
class SequenceResult:
    responses: list
    timeout_at: int | None = None

    @property
    def ok(self) -> bool:
        return self.timeout_at is None

    def reply_to(self, index: int) -> Response | None:
        return self.responses[index] if index < len(self.responses) else None


def send_sequence(seq, session: Session) -> SequenceResult:
    """Send ``seq`` in order, reading one framed reply after each message.

    A dropped connection is retried once on a fresh connection; if that also
    fails the first unanswered message is reported as a timeout so the crash
    monitor takes over.
    """
    delay = session.config.inter_message_delay_ms / 1000
    session.sequences_sent += 1
    responses = []
    for i, msg in enumerate(seq):
        if i and delay:
            session.sleep(delay)
        try:
            reply = session.exchange(msg)
        except ConnectionError:
            try:
                session.reconnect()
                reply = session.exchange(msg)
            except ConnectionError:
                return SequenceResult(responses, i)
        if reply is None:
            return SequenceResult(responses, i)
        responses.append(Response(reply, session.now()))
    return SequenceResult(responses)


# -- restart hooks ------------------------------------------------------------

class CommandRestarter:
    """Runs an external command (e.g. a smart-plug power cycle)."""

    def __init__(self, command: str, timeout: float = 60.0):
        self.command = command
        self.timeout = timeout

    def __call__(self) -> None:
        try:
            subprocess.run(shlex.split(self.command), check=True, timeout=self.timeout,
                           stdout=subprocess.DEVNULL, stderr=subprocess.DEVNULL)
        except (OSError, subprocess.SubprocessError) as exc:
            raise RestartHookFailed(f"{self.command!r}: {exc}") from exc


class ControlChannelRestarter:
    """Sends RESET to a mock server's control port."""

    def __init__(self, host: str, control_port: int):
        self.host = host
        self.control_port = control_port

    def __call__(self) -> None:
        from .mock.server import control_command
        try:
            reply = control_command(self.host, self.control_port, "RESET")
        except OSError as exc:
            raise RestartHookFailed(str(exc)) from exc
        if reply != "OK":
            raise RestartHookFailed(f"control channel answered {reply!r}")


class ResetRestarter:
    """Calls ``reset()`` on an in-process device."""

    def __init__(self, device):
        self.device = device

    def __call__(self) -> None:
        self.device.reset()


class NoRestarter:
    def __call__(self) -> None:
        raise RestartHookFailed("no restart hook configured")


def framing_summary(f: Framing) -> str:
    if f.kind == DELIMITER:
        return f"delim:{f.delimiter.hex()}"
    if f.kind == LENGTH_PREFIX:
        return f"len:{f.width}:{f.byteorder}"
    return "timeout"
