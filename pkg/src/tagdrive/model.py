"""Domain types: tag codes, serials, discs, the authorized-code database."""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Iterator, Mapping

from .errors import MalformedText, NonMonotoneTimestamp, WidthMismatch

DEFAULT_WIDTH = 96

_SERIAL_RE = re.compile(r"^[A-Z0-9-]{4,64}$")
_HEX_RE = re.compile(r"^[0-9a-fA-F]+$")
_BIN_RE = re.compile(r"^[01]+$")


@dataclass(frozen=True, eq=False)
class TagCode:
    """Fixed-width bit string stored in a tag.

    Equality across different widths raises WidthMismatch instead of
    returning False.
    """

    value: int
    width: int

    def __post_init__(self):
        if self.width <= 0:
            raise ValueError(f"code width must be positive, got {self.width}")
        if not 0 <= self.value < (1 << self.width):
            raise WidthMismatch(f"value does not fit in {self.width} bits")

    def __eq__(self, other):
        if not isinstance(other, TagCode):
            return NotImplemented
        if other.width != self.width:
            raise WidthMismatch(f"cannot compare {self.width}-bit and {other.width}-bit codes")
        return self.value == other.value

    def __hash__(self):
        return hash((self.width, self.value))

    def __str__(self):
        return format_code(self)

    def __repr__(self):
        return f"TagCode({format_code(self)!r}, width={self.width})"

    @property
    def nbytes(self) -> int:
        return (self.width + 7) // 8

    def to_bytes(self) -> bytes:
        return self.value.to_bytes(self.nbytes, "big")

    @classmethod
    def from_bytes(cls, data: bytes, width: int) -> "TagCode":
        if len(data) != (width + 7) // 8:
            raise WidthMismatch(f"{len(data)} bytes cannot hold a {width}-bit code")
        return cls(int.from_bytes(data, "big"), width)

    def flip(self, bit: int) -> "TagCode":
        return TagCode(self.value ^ (1 << bit), self.width)


def format_code(code: TagCode) -> str:
    if code.width % 8 == 0:
        return format(code.value, f"0{code.width // 4}x")
    return "0b" + format(code.value, f"0{code.width}b")


def parse_code(text: str, width: int) -> TagCode:
    """Parse lowercase/uppercase hex or a ``0b`` bit string into a code of ``width`` bits."""
    if not isinstance(text, str):
        raise MalformedText(f"expected text, got {type(text).__name__}")
    s = text.strip()
    # canonical hex may itself begin with "0b"; digit count tells the forms apart
    if s[:2] in ("0b", "0B") and _BIN_RE.match(s[2:]) and len(s) - 2 == width:
        return TagCode(int(s[2:], 2), width)
    h = s[2:] if s[:2] in ("0x", "0X") else s
    if _HEX_RE.match(h) and len(h) * 4 == width:
        return TagCode(int(h, 16), width)
    if s[:2] in ("0b", "0B") and _BIN_RE.match(s[2:]):
        raise WidthMismatch(f"{len(s) - 2} bits given, deployment width is {width}")
    if _HEX_RE.match(h):
        raise WidthMismatch(f"{len(h) * 4} bits given, deployment width is {width}")
    raise MalformedText(f"not a hex or 0b code: {text!r}")


@dataclass(frozen=True)
class VisibleSerial:
    text: str

    def __post_init__(self):
        if not isinstance(self.text, str) or not _SERIAL_RE.match(self.text):
            raise MalformedText(f"invalid visible serial: {self.text!r}")

    def __str__(self):
        return self.text


class FrequencyBand(enum.Enum):
    LF_125kHz = "LF_125kHz"
    HF_13_56MHz = "HF_13_56MHz"
    UHF_860_960MHz = "UHF_860_960MHz"
    MW_2_4GHz = "MW_2_4GHz"


@dataclass(frozen=True)
class RfidTag:
    code: TagCode
    band: FrequencyBand = FrequencyBand.HF_13_56MHz
    damaged: bool = False


@dataclass(frozen=True)
class Disc:
    serial: VisibleSerial
    tag: RfidTag | None
    content: object | None = None  # SealedImage, kept untyped to avoid an import cycle
    title: str = ""


class Source(enum.Enum):
    LocalProvision = "LocalProvision"
    RemoteActivation = "RemoteActivation"


@dataclass(frozen=True)
class ActivationRecord:
    serial: VisibleSerial
    activated_at: int  # UTC epoch seconds
    source: Source = Source.RemoteActivation


class CodeDatabase:
    """Immutable set of authorized codes; ``insert`` returns a new database.

    Readers can hold a reference while a single writer swaps in a new one.
    """

    __slots__ = ("_width", "_entries", "_latest")

    def __init__(self, width: int = DEFAULT_WIDTH, entries: Mapping[TagCode, ActivationRecord] | None = None):
        self._width = width
        self._entries: dict[TagCode, ActivationRecord] = {}
        self._latest: int | None = None
        for code, rec in (entries or {}).items():
            self._check(code)
            self._entries[code] = rec
            if self._latest is None or rec.activated_at > self._latest:
                self._latest = rec.activated_at

    @property
    def width(self) -> int:
        return self._width

    @property
    def entries(self) -> Mapping[TagCode, ActivationRecord]:
        return MappingProxyType(self._entries)

    @property
    def latest_timestamp(self) -> int | None:
        return self._latest

    def _check(self, code: TagCode):
        if code.width != self._width:
            raise WidthMismatch(f"{code.width}-bit code used with {self._width}-bit database")

    def insert(self, code: TagCode, rec: ActivationRecord) -> "CodeDatabase":
        self._check(code)
        if code in self._entries:
            return self  # earliest record wins
        if self._latest is not None and rec.activated_at < self._latest:
            raise NonMonotoneTimestamp(
                f"activation at {rec.activated_at} precedes latest entry at {self._latest}")
        new = CodeDatabase(self._width)
        new._entries = dict(self._entries)
        new._entries[code] = rec
        new._latest = rec.activated_at
        return new

    def __contains__(self, code: TagCode) -> bool:
        self._check(code)
        return code in self._entries

    def __iter__(self) -> Iterator[TagCode]:
        return iter(self._entries)

    def __len__(self):
        return len(self._entries)

    def __eq__(self, other):
        if not isinstance(other, CodeDatabase):
            return NotImplemented
        return self._width == other._width and self._entries == other._entries

    def __repr__(self):
        return f"CodeDatabase(width={self._width}, codes={sorted(map(str, self._entries))})"


def db_insert(db: CodeDatabase, code: TagCode, rec: ActivationRecord) -> CodeDatabase:
    return db.insert(code, rec)


def db_contains(db: CodeDatabase, code: TagCode) -> bool:
    return code in db


@dataclass(frozen=True)
class DriveConfig:
    """Drive timing and reader parameters.

    ``tag_read_ms`` and ``auth_ms`` space out the trace samples so each
    state change lands on its own millisecond.
    """

    spin_up_ms: int = 240
    read_retries: int = 2
    reader_bands: frozenset = field(default_factory=lambda: frozenset({FrequencyBand.HF_13_56MHz}))
    bit_error_rate: float = 0.0
    p_detect: float = 0.9
    tag_read_ms: int = 20
    auth_ms: int = 10

    def __post_init__(self):
        object.__setattr__(self, "reader_bands", frozenset(self.reader_bands))
        if not self.reader_bands:
            raise ValueError("reader_bands must not be empty")
        if self.spin_up_ms < 0 or self.read_retries < 0:
            raise ValueError("spin_up_ms and read_retries must be >= 0")
        if self.tag_read_ms < 1 or self.auth_ms < 1:
            raise ValueError("tag_read_ms and auth_ms must be >= 1")
        for p in (self.bit_error_rate, self.p_detect):
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"probability out of range: {p}")
