"""Stream identifiers and the 48-entry stream mapping table (SMR/S2CR pairs)."""

import enum
from dataclasses import dataclass
from typing import NamedTuple

from .errors import FieldOutOfRange, IndexOutOfRange, UnsupportedFeature, WrongStreamMode

SID_BITS = 15
SID_MASK = (1 << SID_BITS) - 1
NUM_ENTRIES = 48


class StreamIdFields(NamedTuple):
    axi_id: int
    master_port: int
    upper: int


def make_stream_id(master_port: int, axi_id: int) -> int:
    """Compose a StreamID from a 4-bit master port code and a 6-bit AXI ID."""
    if not 0 <= master_port < 16:
        raise FieldOutOfRange(f"master port 0x{master_port:x} does not fit in 4 bits")
    if not 0 <= axi_id < 64:
        raise FieldOutOfRange(f"AXI ID 0x{axi_id:x} does not fit in 6 bits")
    return (master_port << 6) | axi_id


def decompose(sid: int) -> StreamIdFields:
    if not 0 <= sid <= SID_MASK:
        raise FieldOutOfRange(f"StreamID 0x{sid:x} exceeds {SID_BITS} bits")
    return StreamIdFields(sid & 0x3F, (sid >> 6) & 0xF, sid >> 10)


@dataclass(frozen=True)
class Smr:
    valid: bool = False
    mask: int = 0
    id: int = 0
    extended: bool = False

    def __post_init__(self):
        if self.extended:
            raise UnsupportedFeature("extended stream matching (EXIDENABLE) is not modeled")
        for name in ("mask", "id"):
            v = getattr(self, name)
            if not 0 <= v <= SID_MASK:
                raise FieldOutOfRange(f"SMR {name} 0x{v:x} exceeds {SID_BITS} bits")

    def matches(self, sid: int) -> bool:
        return self.valid and ((sid ^ self.id) & ~self.mask & SID_MASK) == 0


class S2crType(enum.Enum):
    TRANSLATION = 0b00
    BYPASS = 0b01
    FAULT = 0b10
    RESERVED = 0b11


class InstCfg(enum.Enum):
    DEFAULT = "default"
    DATA = "data"
    INSTRUCTION = "instruction"

    @classmethod
    def from_code(cls, code: int) -> "InstCfg":
        # 0b11 was observed as "expecting an instruction" on the board
        return {0b00: cls.DEFAULT, 0b01: cls.DEFAULT, 0b10: cls.DATA, 0b11: cls.INSTRUCTION}[code & 3]


@dataclass(frozen=True)
class S2cr:
    ctype: S2crType = S2crType.FAULT
    cbndx: int = 0
    instcfg: InstCfg = InstCfg.DEFAULT

    def __post_init__(self):
        if not 0 <= self.cbndx < 16:
            raise FieldOutOfRange(f"CBNDX {self.cbndx} outside 0..15")


@dataclass(frozen=True)
class Matched:
    index: int


@dataclass(frozen=True)
class NoMatch:
    pass


@dataclass(frozen=True)
class MultipleMatch:
    indices: tuple


class StreamMode(enum.Enum):
    MATCHING = "matching"
    INDEXING = "indexing"


class StreamMapTable:
    def __init__(self, mode=StreamMode.MATCHING):
        self.mode = mode
        self.entries = [(Smr(), S2cr()) for _ in range(NUM_ENTRIES)]
        self._compiled = None

    def __len__(self):
        return NUM_ENTRIES

    def program_entry(self, n: int, smr: Smr, s2cr: S2cr) -> None:
        if not 0 <= n < NUM_ENTRIES:
            raise IndexOutOfRange(f"stream map entry {n} outside 0..{NUM_ENTRIES - 1}")
        self.entries[n] = (smr, s2cr)
        self._compiled = None

    def invalidate_entry(self, n: int) -> None:
        smr, s2cr = self.entries[n]
        self.program_entry(n, Smr(False, smr.mask, smr.id), s2cr)

    def free_entry(self):
        """Lowest-index entry whose SMR is not valid, or None."""
        for n, (smr, _) in enumerate(self.entries):
            if not smr.valid:
                return n
        return None

    def s2cr(self, n: int) -> S2cr:
        return self.entries[n][1]

    def match_stream(self, sid: int):
        if self.mode is not StreamMode.MATCHING:
            raise WrongStreamMode("table is in stream indexing mode")
        if self._compiled is None:
            # (id bits that must match, care mask) for every valid entry
            self._compiled = [
                (n, smr.id & ~smr.mask & SID_MASK, ~smr.mask & SID_MASK)
                for n, (smr, _) in enumerate(self.entries) if smr.valid
            ]
        hits = [n for n, want, care in self._compiled if sid & care == want]
        if not hits:
            return NoMatch()
        if len(hits) == 1:
            return Matched(hits[0])
        return MultipleMatch(tuple(hits))

    def index_stream(self, sid: int):
        if self.mode is not StreamMode.INDEXING:
            raise WrongStreamMode("table is in stream matching mode")
        return Matched(sid) if 0 <= sid < NUM_ENTRIES else NoMatch()

    def resolve(self, sid: int):
        if self.mode is StreamMode.MATCHING:
            return self.match_stream(sid)
        return self.index_stream(sid)
