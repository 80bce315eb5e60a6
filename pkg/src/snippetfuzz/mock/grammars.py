"""Sanitizer, function switch and replier for the three mock message formats.

Each grammar turns raw input into a list of ``Command`` objects (or raises
``FormatError``), checks them against the profile's function table, and
renders replies. Reply wording is fixture data modelled on the devices each
format imitates; only the Hue-style JSON replies are pinned to known text.

The JSON parser is hand-written rather than ``json.loads`` for two reasons:
it records which bytes carry data (the segmentation ground truth), and it
reproduces a parser quirk on purpose. When an object member's string value
is directly followed by ``:`` -- the shape left behind when an opening brace
is deleted -- the parser folds the chain into an array instead of failing,
and then tolerates the surplus closing brace at the end of the input. That
is how a mangled ``schedule`` object can reach function code as an array.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field


class FormatError(ValueError):
    pass


class UnknownCommand(LookupError):
    def __init__(self, name: str, address: str = ""):
        super().__init__(name)
        self.name = name
        self.address = address


class InvalidValue(ValueError):
    def __init__(self, name: str, raw: str, address: str = ""):
        super().__init__(name)
        self.name = name
        self.raw = raw
        self.address = address


@dataclass
class Command:
    name: str
    value: object
    raw: str
    args: list = field(default_factory=list)


class Bareword(str):
    """An unquoted token that is not a JSON literal."""


# -- JSON-like ----------------------------------------------------------------

_WS = b" \t\r\n"
_LITERALS = {"true": True, "false": False, "null": None}
_ESCAPES = {ord('"'): '"', ord("\\"): "\\", ord("/"): "/", ord("b"): "\b",
            ord("f"): "\f", ord("n"): "\n", ord("r"): "\r", ord("t"): "\t"}


class _JsonParser:
    def __init__(self, data: bytes):
        self.s = data
        self.i = 0
        self.labels = [0] * len(data)
        self.quirk = False

    def fail(self, what: str):
        raise FormatError(f"{what} at offset {self.i}")

    def ws(self):
        while self.i < len(self.s) and self.s[self.i] in _WS:
            self.i += 1

    def peek(self):
        return self.s[self.i] if self.i < len(self.s) else None

    def expect(self, ch: int):
        if self.peek() != ch:
            self.fail(f"expected {chr(ch)!r}")
        self.i += 1

    def document(self):
        self.ws()
        members = self.members_of_object()
        self.ws()
        rest = self.s[self.i:]
        if rest and not (self.quirk and all(b in b"}" + _WS for b in rest)):
            self.fail("trailing data")
        return members

    def members_of_object(self):
        self.expect(ord("{"))
        members = []
        self.ws()
        if self.peek() == ord("}"):
            self.i += 1
            return members
        while True:
            self.ws()
            if self.peek() != ord('"'):
                self.fail("expected member name")
            key, _, _ = self.value()
            self.ws()
            self.expect(ord(":"))
            self.ws()
            val, a, b = self.value()
            self.ws()
            while self.peek() == ord(":") and isinstance(val, str) and not isinstance(val, Bareword):
                # Missing "{": fold "k": "x": {...} into "k": ["x", {...}].
                self.quirk = True
                self.i += 1
                self.ws()
                nxt, _, b = self.value()
                val = [val, nxt] if not isinstance(val, list) else val + [nxt]
                self.ws()
            members.append((key, val, self.s[a:b].decode("latin-1")))
            ch = self.peek()
            if ch == ord(","):
                self.i += 1
                continue
            if ch == ord("}"):
                self.i += 1
                return members
            self.fail("expected ',' or '}'")

    def value(self):
        ch = self.peek()
        start = self.i
        if ch is None:
            self.fail("unexpected end of input")
        if ch == ord("{"):
            return dict((k, v) for k, v, _ in self.members_of_object()), start, self.i
        if ch == ord("["):
            return self.array(), start, self.i
        if ch == ord('"'):
            return self.string(), start, self.i
        if ch == ord("-") or 48 <= ch <= 57:
            return self.number(), start, self.i
        if 65 <= ch <= 90 or 97 <= ch <= 122 or ch == ord("_"):
            return self.word(), start, self.i
        self.fail("unexpected byte")

    def array(self):
        self.expect(ord("["))
        out = []
        self.ws()
        if self.peek() == ord("]"):
            self.i += 1
            return out
        while True:
            self.ws()
            v, _, _ = self.value()
            out.append(v)
            self.ws()
            ch = self.peek()
            if ch == ord(","):
                self.i += 1
            elif ch == ord("]"):
                self.i += 1
                return out
            else:
                self.fail("expected ',' or ']'")

    def string(self):
        self.expect(ord('"'))
        chars = []
        while True:
            ch = self.peek()
            if ch is None:
                self.fail("unterminated string")
            if ch == ord('"'):
                self.i += 1
                return "".join(chars)
            if ch < 0x20:
                self.fail("control byte in string")
            self.labels[self.i] = 1
            if ch == ord("\\"):
                self.i += 1
                esc = self.peek()
                if esc in _ESCAPES:
                    chars.append(_ESCAPES[esc])
                    self.labels[self.i] = 1
                    self.i += 1
                elif esc == ord("u"):
                    hexpart = self.s[self.i + 1:self.i + 5]
                    try:
                        chars.append(chr(int(hexpart, 16)))
                    except ValueError:
                        self.fail("bad unicode escape")
                    for k in range(self.i, self.i + 5):
                        self.labels[k] = 1
                    self.i += 5
                else:
                    self.fail("bad escape")
                continue
            chars.append(chr(ch))
            self.i += 1

    def number(self):
        start = self.i
        if self.peek() == ord("-"):
            self.i += 1
        if self.peek() == ord("0"):
            self.i += 1
        elif self.peek() is not None and 49 <= self.peek() <= 57:
            while self.peek() is not None and 48 <= self.peek() <= 57:
                self.i += 1
        else:
            self.fail("bad number")
        is_float = False
        if self.peek() == ord("."):
            is_float = True
            self.i += 1
            if not (self.peek() is not None and 48 <= self.peek() <= 57):
                self.fail("bad fraction")
            while self.peek() is not None and 48 <= self.peek() <= 57:
                self.i += 1
        if self.peek() in (ord("e"), ord("E")):
            is_float = True
            self.i += 1
            if self.peek() in (ord("+"), ord("-")):
                self.i += 1
            if not (self.peek() is not None and 48 <= self.peek() <= 57):
                self.fail("bad exponent")
            while self.peek() is not None and 48 <= self.peek() <= 57:
                self.i += 1
        for k in range(start, self.i):
            self.labels[k] = 1
        text = self.s[start:self.i].decode()
        return float(text) if is_float else int(text)

    def word(self):
        start = self.i
        while self.peek() is not None and (chr(self.peek()).isalnum() or self.peek() == ord("_")) \
                and self.peek() < 128:
            self.i += 1
        for k in range(start, self.i):
            self.labels[k] = 1
        w = self.s[start:self.i].decode()
        if w in _LITERALS:
            return _LITERALS[w]
        return Bareword(w)


def json_type_name(v) -> str:
    if isinstance(v, bool):
        return "bool"
    if isinstance(v, int):
        return "int"
    if isinstance(v, float):
        return "float"
    if isinstance(v, Bareword):
        return "bareword"
    if isinstance(v, str):
        return "string"
    if isinstance(v, list):
        return "array"
    if isinstance(v, dict):
        return "object"
    return "null"


def _check_value(spec: dict, v) -> bool:
    t = spec.get("type")
    if t == "bool":
        return isinstance(v, bool)
    if t == "int":
        return (json_type_name(v) == "int" and spec.get("min", -(1 << 63)) <= v <= spec.get("max", 1 << 63))
    if t == "enum":
        return json_type_name(v) == "string" and v in spec["values"]
    if t == "string":
        return json_type_name(v) == "string" and len(v) <= spec.get("max_len", 1 << 16)
    if t == "object":
        return isinstance(v, dict)
    return False


def _render_json(v) -> str:
    if isinstance(v, Bareword):
        return str(v)
    return json.dumps(v, separators=(",", ":"))


def _esc(s: str) -> str:
    return json.dumps(s)[1:-1]


class JsonGrammar:
    name = "json"

    def __init__(self, profile):
        self.profile = profile
        self.address = profile.address or "/lights/1/state"

    def sanitize(self, data: bytes) -> list:
        members = _JsonParser(data).document()
        return [Command(k, v, raw) for k, v, raw in members]

    def ground_truth(self, data: bytes):
        p = _JsonParser(data)
        try:
            p.document()
        except FormatError:
            return None
        return p.labels

    def lookup(self, cmd: Command) -> dict:
        spec = self.profile.functions.get(cmd.name)
        if spec is None:
            raise UnknownCommand(cmd.name, f"{self.address}/{cmd.name}")
        return spec

    def validate(self, cmd: Command, spec: dict) -> None:
        if not _check_value(spec, cmd.value):
            raise InvalidValue(cmd.name, cmd.raw, f"{self.address}/{cmd.name}")
        if spec.get("type") == "object":
            for sub, subval in cmd.value.items():
                subspec = spec.get("fields", {}).get(sub)
                path = f"{self.address}/{cmd.name}/{sub}"
                if subspec is None:
                    raise UnknownCommand(sub, path)
                if not _check_value(subspec, subval):
                    raise InvalidValue(sub, _render_json(subval), path)

    def reply_format_error(self) -> str:
        return ('{"error":{"type":2,"address":"%s","description":"body contains invalid json"}}'
                % self.address)

    def reply_unknown(self, e: UnknownCommand) -> str:
        return ('{"error":{"type":6,"address":"%s","description":"parameter, %s, not available"}}'
                % (_esc(e.address), _esc(e.name)))

    def reply_invalid(self, e: InvalidValue) -> str:
        return ('{"error":{"type":7,"address":"%s","description":"invalid value, %s, for parameter, %s"}}'
                % (_esc(e.address), _esc(e.raw), _esc(e.name)))

    def reply_success(self, cmds: list) -> str:
        parts = []
        for c in cmds:
            shown = "updated" if isinstance(c.value, dict) else c.value
            parts.append('{"success":{"%s/%s":%s}}' % (self.address, _esc(c.name), _render_json(shown)))
        return parts[0] if len(parts) == 1 else "[" + ",".join(parts) + "]"

    def add_fields(self, reply: str, fields: list) -> str:
        extra = "".join(',"%s":"%s"' % (k, v) for k, v in fields)
        if not extra:
            return reply
        if reply.endswith("]"):
            return reply[:-2] + extra + "}]"
        return reply[:-1] + extra + "}"

    def encode(self, reply: str) -> bytes:
        return reply.encode("latin-1", "replace")


# -- key=value ------------------------------------------------------------------

_KV_SAFE = set(b"abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789_-.%+/")


class KeyValueGrammar:
    """``func=<name>&key=value&...`` requests with ``status=...`` replies."""

    name = "keyvalue"

    def __init__(self, profile):
        self.profile = profile

    def _pairs(self, data: bytes):
        if not data:
            raise FormatError("empty request")
        pairs = []
        pos = 0
        for chunk in data.split(b"&"):
            if chunk.count(b"=") != 1:
                raise FormatError(f"malformed pair at offset {pos}")
            k, v = chunk.split(b"=")
            if not k or any(b not in _KV_SAFE for b in k + v):
                raise FormatError(f"bad characters at offset {pos}")
            pairs.append((pos, k, v))
            pos += len(chunk) + 1
        return pairs

    def sanitize(self, data: bytes) -> list:
        pairs = self._pairs(data)
        if pairs[0][1] != b"func":
            raise FormatError("request must start with func=")
        func = pairs[0][2].decode()
        args = [(k.decode(), v.decode()) for _, k, v in pairs[1:]]
        return [Command(func, dict(args), func, args)]

    def ground_truth(self, data: bytes):
        try:
            pairs = self._pairs(data)
        except FormatError:
            return None
        labels = [0] * len(data)
        for pos, k, v in pairs:
            for i in range(pos, pos + len(k)):
                labels[i] = 1
            for i in range(pos + len(k) + 1, pos + len(k) + 1 + len(v)):
                labels[i] = 1
        return labels

    def lookup(self, cmd: Command) -> dict:
        spec = self.profile.functions.get(cmd.name)
        if spec is None:
            raise UnknownCommand(cmd.name)
        return spec

    def validate(self, cmd: Command, spec: dict) -> None:
        params = spec.get("params", {})
        for k, v in cmd.args:
            p = params.get(k)
            if p is None:
                raise UnknownCommand(k, "param")
            t = p.get("type")
            ok = True
            if t == "int":
                ok = v.lstrip("-").isdigit() and p.get("min", -(1 << 63)) <= int(v) <= p.get("max", 1 << 63)
            elif t == "enum":
                ok = v in p["values"]
            elif t == "string":
                ok = 0 < len(v) <= p.get("max_len", 1 << 16)
            if not ok:
                raise InvalidValue(k, v)
        cmd.value = {k: (int(v) if params[k].get("type") == "int" else v) for k, v in cmd.args}

    def reply_format_error(self) -> str:
        return "status=error&code=1&msg=malformed+request"

    def reply_unknown(self, e: UnknownCommand) -> str:
        if e.address == "param":
            return f"status=error&code=3&msg=unknown+parameter+{e.name}"
        return f"status=error&code=2&msg=unknown+function+{e.name}"

    def reply_invalid(self, e: InvalidValue) -> str:
        return f"status=error&code=4&msg=invalid+value+{e.raw}+for+{e.name}"

    def reply_success(self, cmds: list) -> str:
        c = cmds[0]
        tail = "".join(f"&{k}={v}" for k, v in c.args)
        return f"status=ok&func={c.name}{tail}"

    def add_fields(self, reply: str, fields: list) -> str:
        return reply + "".join(f"&{k}={v}" for k, v in fields)

    def encode(self, reply: str) -> bytes:
        return reply.encode("latin-1", "replace")


# -- custom bytes -----------------------------------------------------------------

MAGIC = 0x55


class CustomByteGrammar:
    """LIFX-flavoured binary frames: ``0x55 <len> <opcode> <payload...>``.

    ``len`` counts the opcode plus payload. Replies are binary too: an
    ``0xE0``-``0xE2`` status byte for errors and ``opcode | 0x80`` followed
    by the accepted payload on success.
    """

    name = "custombyte"

    def __init__(self, profile):
        self.profile = profile

    def sanitize(self, data: bytes) -> list:
        if len(data) < 3 or data[0] != MAGIC:
            raise FormatError("bad magic")
        if data[1] != len(data) - 2:
            raise FormatError("length mismatch")
        return [Command(f"0x{data[2]:02x}", data[3:], data[3:].hex(), list(data[3:]))]

    def ground_truth(self, data: bytes):
        try:
            self.sanitize(data)
        except FormatError:
            return None
        return [0, 0] + [1] * (len(data) - 2)

    def lookup(self, cmd: Command) -> dict:
        spec = self.profile.functions.get(cmd.name)
        if spec is None:
            raise UnknownCommand(cmd.name)
        return spec

    def validate(self, cmd: Command, spec: dict) -> None:
        payload = cmd.value
        argspecs = spec.get("args", [])
        if spec.get("type") == "string":
            if not (0 < len(payload) <= spec.get("max_len", 255)) or not all(32 <= b < 127 for b in payload):
                raise InvalidValue(cmd.name, "0")
            return
        if len(payload) != len(argspecs):
            raise InvalidValue(cmd.name, str(len(payload)))
        for i, (b, a) in enumerate(zip(payload, argspecs)):
            if "values" in a and b not in a["values"]:
                raise InvalidValue(cmd.name, str(i))
            if not (a.get("min", 0) <= b <= a.get("max", 255)):
                raise InvalidValue(cmd.name, str(i))

    def reply_format_error(self) -> bytes:
        return bytes([MAGIC, 1, 0xE0])

    def reply_unknown(self, e: UnknownCommand) -> bytes:
        return bytes([MAGIC, 2, 0xE1, int(e.name, 16)])

    def reply_invalid(self, e: InvalidValue) -> bytes:
        return bytes([MAGIC, 3, 0xE2, int(e.name, 16), int(e.raw) & 0xFF])

    def reply_success(self, cmds: list) -> bytes:
        c = cmds[0]
        body = bytes([int(c.name, 16) | 0x80]) + bytes(c.value)
        return bytes([MAGIC, len(body)]) + body

    def add_fields(self, reply: bytes, fields: list) -> bytes:
        extra = b"".join(v.encode() for _, v in fields)
        return reply + extra

    def encode(self, reply) -> bytes:
        return reply if isinstance(reply, bytes) else reply.encode("latin-1")


GRAMMARS = {"json": JsonGrammar, "keyvalue": KeyValueGrammar, "custombyte": CustomByteGrammar}
