"""Message framing on a byte stream."""

from __future__ import annotations

from dataclasses import dataclass

DELIMITER = "delimiter"
LENGTH_PREFIX = "length_prefix"
READ_UNTIL_TIMEOUT = "read_until_timeout"


@dataclass(frozen=True)
class Framing:
    kind: str = DELIMITER
    delimiter: bytes = b"\n"
    width: int = 2
    byteorder: str = "big"

    def __post_init__(self):
        if self.kind not in (DELIMITER, LENGTH_PREFIX, READ_UNTIL_TIMEOUT):
            raise ValueError(f"unknown framing {self.kind!r}")
        if self.kind == DELIMITER and not self.delimiter:
            raise ValueError("delimiter framing needs a non-empty delimiter")
        if self.kind == LENGTH_PREFIX:
            if self.width not in (1, 2, 4):
                raise ValueError(f"length prefix width must be 1, 2 or 4, got {self.width}")
            if self.byteorder not in ("big", "little"):
                raise ValueError(f"byteorder must be big or little, got {self.byteorder!r}")

    def encode(self, payload: bytes) -> bytes:
        if self.kind == DELIMITER:
            return payload + self.delimiter
        if self.kind == LENGTH_PREFIX:
            limit = 1 << (8 * self.width)
            if len(payload) >= limit:
                raise ValueError(f"{len(payload)} bytes do not fit a {self.width}-byte length prefix")
            return len(payload).to_bytes(self.width, self.byteorder) + payload
        return payload

    def split(self, buf: bytes):
        """Return (first complete frame or None, remaining buffer)."""
        if self.kind == DELIMITER:
            idx = buf.find(self.delimiter)
            if idx < 0:
                return None, buf
            return buf[:idx], buf[idx + len(self.delimiter):]
        if self.kind == LENGTH_PREFIX:
            if len(buf) < self.width:
                return None, buf
            n = int.from_bytes(buf[:self.width], self.byteorder)
            if len(buf) < self.width + n:
                return None, buf
            return buf[self.width:self.width + n], buf[self.width + n:]
        if not buf:
            return None, buf
        return buf, b""

    def to_dict(self) -> dict:
        return {"kind": self.kind, "delimiter": self.delimiter.hex(), "width": self.width,
                "byteorder": self.byteorder}

    @classmethod
    def from_dict(cls, d: dict) -> "Framing":
        d = dict(d)
        if "delimiter" in d:
            d["delimiter"] = bytes.fromhex(d["delimiter"])
        return cls(**d)

    @classmethod
    def parse(cls, text: str) -> "Framing":
        """Parse a CLI framing spec: ``delim:0a``, ``len:2:big`` or ``timeout``."""
        parts = text.split(":")
        if parts[0] in ("delim", DELIMITER):
            return cls(DELIMITER, bytes.fromhex(parts[1]) if len(parts) > 1 else b"\n")
        if parts[0] in ("len", LENGTH_PREFIX):
            width = int(parts[1]) if len(parts) > 1 else 2
            order = parts[2] if len(parts) > 2 else "big"
            return cls(LENGTH_PREFIX, width=width, byteorder=order)
        if parts[0] in ("timeout", READ_UNTIL_TIMEOUT):
            return cls(READ_UNTIL_TIMEOUT)
        raise ValueError(f"unrecognised framing {text!r}")
