"""Network front end for a MockDevice.

The data port speaks the profile's framing over TCP (one fuzzing connection
at a time) or UDP (one datagram per message). The control port is
``data port + 1`` and takes newline-terminated commands::

    RESET            -> OK
    STATE?           -> {"state": ..., "hung": ..., ...}
    SCRIPT <json>    -> OK      e.g. SCRIPT ["drop", "reply"]
"""

from __future__ import annotations

import json
import logging
import socket
import threading

from ..framing import READ_UNTIL_TIMEOUT
from .device import DeviceProfile, MockDevice

log = logging.getLogger(__name__)


class PortInUse(OSError):
    pass


def _bind(kind, host: str, port: int) -> socket.socket:
    s = socket.socket(socket.AF_INET, kind)
    s.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
    try:
        s.bind((host, port))
    except OSError:
        s.close()
        raise
    return s


class MockServer:
    def __init__(self, profile: DeviceProfile, host: str = "127.0.0.1", port: int | None = None):
        self.profile = profile
        self.device = MockDevice(profile)
        self.host = host
        self._stop = threading.Event()
        self._threads: list = []
        kind = socket.SOCK_DGRAM if profile.protocol == "udp" else socket.SOCK_STREAM
        want = profile.port if port is None else port
        self.data_sock, self.ctrl_sock = self._bind_pair(kind, want)
        self.port = self.data_sock.getsockname()[1]
        self.control_port = self.port + 1

    def _bind_pair(self, kind, port: int):
        for _ in range(50):
            try:
                data = _bind(kind, self.host, port)
            except OSError as exc:
                raise PortInUse(f"port {port} unavailable: {exc}") from None
            actual = data.getsockname()[1]
            try:
                ctrl = _bind(socket.SOCK_STREAM, self.host, actual + 1)
            except OSError as exc:
                data.close()
                if port:
                    raise PortInUse(f"control port {actual + 1} unavailable: {exc}") from None
                continue
            return data, ctrl
        raise PortInUse("could not find a free data/control port pair")

    # lifecycle ---------------------------------------------------------------

    def start(self) -> "MockServer":
        target = self._serve_udp if self.profile.protocol == "udp" else self._serve_tcp
        for fn in (target, self._serve_control):
            t = threading.Thread(target=fn, daemon=True)
            t.start()
            self._threads.append(t)
        return self

    def stop(self) -> None:
        self._stop.set()
        for s in (self.data_sock, self.ctrl_sock):
            try:
                s.close()
            except OSError:
                pass
        for t in self._threads:
            t.join(timeout=2)
        self._threads.clear()

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()

    # data path ---------------------------------------------------------------

    def _serve_tcp(self):
        framing = self.profile.framing
        self.data_sock.listen(4)
        self.data_sock.settimeout(0.1)
        while not self._stop.is_set():
            try:
                conn, _ = self.data_sock.accept()
            except socket.timeout:
                continue
            except OSError:
                return
            with conn:
                conn.settimeout(0.1)
                buf = b""
                while not self._stop.is_set():
                    try:
                        chunk = conn.recv(65536)
                    except socket.timeout:
                        continue
                    except OSError:
                        break
                    if not chunk:
                        break
                    buf += chunk
                    closed = False
                    while True:
                        frame, buf = framing.split(buf)
                        if frame is None:
                            break
                        reply = self.device.handle_message(frame)
                        if reply is not None:
                            conn.sendall(framing.encode(reply))
                        if self.device.down:
                            closed = True
                            break
                        if framing.kind == READ_UNTIL_TIMEOUT:
                            break
                    if closed:
                        break

    def _serve_udp(self):
        self.data_sock.settimeout(0.1)
        while not self._stop.is_set():
            try:
                data, addr = self.data_sock.recvfrom(65536)
            except socket.timeout:
                continue
            except OSError:
                return
            reply = self.device.handle_message(data)
            if reply is not None:
                self.data_sock.sendto(reply, addr)

    # control channel ---------------------------------------------------------

    def control(self, line: str) -> str:
        cmd, _, arg = line.strip().partition(" ")
        cmd = cmd.upper()
        if cmd == "RESET":
            self.device.reset()
            return "OK"
        if cmd == "STATE?":
            return json.dumps(self.device.inspect(), sort_keys=True)
        if cmd == "SCRIPT":
            try:
                self.device.set_script(json.loads(arg or "[]"))
            except (ValueError, TypeError) as exc:
                return f"ERR {exc}"
            return "OK"
        return f"ERR unknown command {cmd!r}"

    def _serve_control(self):
        self.ctrl_sock.listen(4)
        self.ctrl_sock.settimeout(0.1)
        while not self._stop.is_set():
            try:
                conn, _ = self.ctrl_sock.accept()
            except socket.timeout:
                continue
            except OSError:
                return
            with conn, conn.makefile("rwb") as fh:
                conn.settimeout(5)
                try:
                    for raw in fh:
                        fh.write(self.control(raw.decode("utf-8", "replace")).encode() + b"\n")
                        fh.flush()
                except OSError:
                    pass


def serve(profile: DeviceProfile, host: str = "127.0.0.1", port: int | None = None) -> MockServer:
    return MockServer(profile, host, port).start()


def control_command(host: str, control_port: int, line: str, timeout: float = 5.0) -> str:
    with socket.create_connection((host, control_port), timeout=timeout) as s, s.makefile("rwb") as fh:
        fh.write(line.encode() + b"\n")
        fh.flush()
        return fh.readline().decode().strip()
