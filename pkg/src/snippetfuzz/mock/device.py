"""Mock IoT device: sanitizer -> function switch -> functions -> replier.

A ``MockDevice`` is transport-free: ``handle_message`` maps input bytes to a
reply or to ``None`` (silence). The TCP/UDP server in ``server.py`` and the
in-process loopback session both drive the same object.
"""

from __future__ import annotations

import copy
import json
import random
import string
import threading
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from ..framing import Framing
from .grammars import GRAMMARS, FormatError, InvalidValue, UnknownCommand, json_type_name

HANG = "hang"
ABORT = "abort"
CORRUPT = "corrupt"

DROP = "drop"
REPLY = "reply"
SILENT = "silent"


class ProfileError(ValueError):
    pass


@dataclass(frozen=True)
class FaultSpec:
    """A modelled defect: ``trigger`` selects inputs, ``behavior`` says what happens.

    Triggers are dicts with a ``kind``:

    * ``type_mismatch`` -- value at ``path`` has a JSON type other than ``expected``
    * ``empty_value`` -- value at ``path`` is an empty string
    * ``oversized`` -- raw value at ``path`` is longer than ``max_len`` bytes

    Behaviors: ``hang`` (for ``seconds``, or until reset when null),
    ``abort`` (device stops until reset), ``corrupt`` (garbled reply).
    """

    trigger: dict
    behavior: str = HANG
    seconds: float | None = None

    @classmethod
    def from_dict(cls, d: dict) -> "FaultSpec":
        b = d.get("behavior", {"kind": HANG})
        if isinstance(b, str):
            b = {"kind": b}
        if b["kind"] not in (HANG, ABORT, CORRUPT):
            raise ProfileError(f"unknown fault behavior {b['kind']!r}")
        return cls(dict(d["trigger"]), b["kind"], b.get("seconds"))

    def to_dict(self) -> dict:
        return {"trigger": self.trigger, "behavior": {"kind": self.behavior, "seconds": self.seconds}}


@dataclass
class DeviceProfile:
    name: str
    grammar: str
    functions: dict
    initial_state: dict = field(default_factory=dict)
    faults: list = field(default_factory=list)
    randomness: list = field(default_factory=list)
    framing: Framing = field(default_factory=Framing)
    protocol: str = "tcp"
    port: int = 0
    address: str = ""
    rng_seed: int = 0

    def __post_init__(self):
        if self.grammar not in GRAMMARS:
            raise ProfileError(f"unknown grammar {self.grammar!r}")
        for f in self.faults:
            path = f.trigger.get("path", "")
            head = path.split(".")[0]
            if head and head not in self.functions:
                raise ProfileError(f"fault trigger path {path!r} names no handler")
        for r in self.randomness:
            if r.get("kind") not in ("token", "timestamp"):
                raise ProfileError(f"unknown randomness kind {r.get('kind')!r}")

    @classmethod
    def from_dict(cls, d: dict) -> "DeviceProfile":
        d = copy.deepcopy(d)
        d["faults"] = [FaultSpec.from_dict(f) for f in d.get("faults", [])]
        if "framing" in d:
            d["framing"] = Framing.from_dict(d["framing"])
        return cls(**d)

    def to_dict(self) -> dict:
        return {
            "name": self.name, "grammar": self.grammar, "functions": self.functions,
            "initial_state": self.initial_state, "faults": [f.to_dict() for f in self.faults],
            "randomness": self.randomness, "framing": self.framing.to_dict(),
            "protocol": self.protocol, "port": self.port, "address": self.address,
            "rng_seed": self.rng_seed,
        }

    def with_faults(self, faults) -> "DeviceProfile":
        p = copy.deepcopy(self)
        p.faults = [f if isinstance(f, FaultSpec) else FaultSpec.from_dict(f) for f in faults]
        return p

    def with_randomness(self, randomness) -> "DeviceProfile":
        p = copy.deepcopy(self)
        p.randomness = list(randomness)
        return p


BUILTIN_PROFILES = ("jsonlike", "jsonlike_fault", "keyvalue", "custombyte")



def load_profile(name_or_path) -> DeviceProfile:
    """Load a shipped profile by name, or any profile JSON file by path."""
    if str(name_or_path) in BUILTIN_PROFILES:
        text = resources.files(__package__).joinpath("profiles", f"{name_or_path}.json").read_text()
    else:
        text = Path(name_or_path).read_text()
    return DeviceProfile.from_dict(json.loads(text))


def builtin_corpus(name: str):
    """The seed corpus shipped for a built-in profile."""
    from ..message import corpus_from_dict

    if name not in BUILTIN_PROFILES:
        raise ProfileError(f"no shipped corpus for {name!r}")
    text = resources.files(__package__).joinpath("corpora", f"{name}.json").read_text()
    return corpus_from_dict(json.loads(text))


def _lookup_path(commands, path: str):
    parts = path.split(".")
    for c in commands:
        if c.name == parts[0]:
            node, raw = c.value, c.raw
            for p in parts[1:]:
                if not isinstance(node, dict) or p not in node:
                    return False, None, None
                node, raw = node[p], json.dumps(node[p])
            return True, node, raw
    return False, None, None


def fault_matches(trigger: dict, commands) -> bool:
    kind = trigger.get("kind")
    found, value, raw = _lookup_path(commands, trigger.get("path", ""))
    if not found:
        return False
    if kind == "type_mismatch":
        return json_type_name(value) != trigger["expected"]
    if kind == "empty_value":
        return value == "" or value == b""
    if kind == "oversized":
        return len(raw) > trigger["max_len"]
    raise ProfileError(f"unknown fault trigger {kind!r}")


class MockDevice:
    """One emulated device with resettable state and a scripted drop schedule."""

    def __init__(self, profile: DeviceProfile, clock=time.monotonic):
        self.profile = profile
        self.grammar = GRAMMARS[profile.grammar](profile)
        self.clock = clock
        self.lock = threading.RLock()
        self.script: list = []
        self.received = 0
        self.replied = 0
        self.resets = 0
        self._reset_state()

    def _reset_state(self):
        self.state = copy.deepcopy(self.profile.initial_state)
        self.hung_until = None
        self.down = False
        self.rng = random.Random(self.profile.rng_seed)

    # control channel ---------------------------------------------------------

    def reset(self) -> None:
        with self.lock:
            self.resets += 1
            self._reset_state()

    def inspect(self) -> dict:
        with self.lock:
            return {"state": copy.deepcopy(self.state), "hung": self.is_silent(),
                    "received": self.received, "replied": self.replied, "resets": self.resets}

    def set_script(self, entries) -> None:
        """Install a per-message schedule of ``drop``/``reply``; ``silent`` drops forever.

        The script survives ``reset`` (it models the network, not the device).
        """
        for e in entries:
            if e not in (DROP, REPLY, SILENT):
                raise ValueError(f"bad script entry {e!r}")
        with self.lock:
            self.script = list(entries)

    # data path ---------------------------------------------------------------

    def is_silent(self) -> bool:
        if self.down:
            return True
        if self.hung_until is None:
            return False
        return self.clock() < self.hung_until

    def handle_message(self, data: bytes):
        with self.lock:
            self.received += 1
            if self.script:
                step = self.script[0]
                if step != SILENT:
                    self.script.pop(0)
                if step in (DROP, SILENT):
                    return None
            if self.is_silent():
                return None
            self.hung_until = None
            reply = self._process(bytes(data))
            if reply is not None:
                self.replied += 1
            return reply

    def _process(self, data: bytes):
        g = self.grammar
        try:
            commands = g.sanitize(data)
        except FormatError:
            return self._finish(g.reply_format_error())
        try:
            specs = [g.lookup(c) for c in commands]
        except UnknownCommand as e:
            return self._finish(g.reply_unknown(e))
        for fault in self.profile.faults:
            if fault_matches(fault.trigger, commands):
                return self._fault(fault)
        try:
            for c, spec in zip(commands, specs):
                g.validate(c, spec)
        except UnknownCommand as e:
            return self._finish(g.reply_unknown(e))
        except InvalidValue as e:
            return self._finish(g.reply_invalid(e))
        for c in commands:
            self.state[c.name] = c.value if not isinstance(c.value, bytes) else c.value.hex()
        return self._finish(g.reply_success(commands))

    def _fault(self, fault: FaultSpec):
        if fault.behavior == HANG:
            self.hung_until = float("inf") if fault.seconds is None else self.clock() + fault.seconds
            return None
        if fault.behavior == ABORT:
            self.down = True
            return None
        return b"\xff\xfe" + bytes(self.rng.getrandbits(8) for _ in range(6))

    def _random_fields(self) -> list:
        out = []
        for r in self.profile.randomness:
            if r["kind"] == "token":
                alphabet = string.ascii_lowercase + string.digits
                out.append((r["field"], "".join(self.rng.choice(alphabet) for _ in range(r.get("length", 8)))))
            else:
                out.append((r["field"], f"{int(self.clock() * 1000) % 10**10:010d}"))
        return out

    def _finish(self, reply) -> bytes:
        reply = self.grammar.add_fields(reply, self._random_fields())
        return self.grammar.encode(reply)

    def ground_truth(self, data: bytes):
        """Per-byte data (1) / syntax (0) labels, or None if the input is rejected."""
        return self.grammar.ground_truth(bytes(data))
