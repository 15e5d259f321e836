"""SMMU transaction pipeline: stream mapping, context resolution, TLB and walk.

Single non-secure security state. Every transaction produces a ``TXN`` trace
event, one ``MATCH``/``NOMATCH``/``MULTI`` event when the stream table is
consulted, one ``WALK`` event per descriptor fetch and a closing ``OUT``
event.
"""

import enum
from dataclasses import dataclass
from typing import Callable, Optional, Union

from .context_bank import Cbar, ContextBankFile
from .phys_mem import PAGE_MASK, PAGE_SHIFT, PAGE_SIZE, PhysMemory
from .stream_mapping import (
    InstCfg,
    Matched,
    MultipleMatch,
    NoMatch,
    S2crType,
    SID_MASK,
    StreamMapTable,
)
from .translation_table import WalkFault, walk


class Access(enum.Enum):
    READ = "R"
    WRITE = "W"


class Kind(enum.Enum):
    DATA = "D"
    INSTRUCTION = "I"


class UnmatchedPolicy(enum.Enum):
    BYPASS = "bypass"
    FAULT = "fault"


@dataclass(frozen=True)
class Transaction:
    stream_id: int
    va: int
    access: Access
    kind: Kind = Kind.DATA
    data: bytes = b""
    length: int = 0
    cache_bits: int = 0

    def __post_init__(self):
        if not 0 <= self.stream_id <= SID_MASK:
            raise ValueError(f"StreamID 0x{self.stream_id:x} exceeds 15 bits")
        if self.access is Access.WRITE:
            object.__setattr__(self, "data", bytes(self.data))
            object.__setattr__(self, "length", len(self.data))
        if self.length < 1:
            raise ValueError("transaction payload must be at least one byte")
        if (self.va & PAGE_MASK) + self.length > PAGE_SIZE:
            raise ValueError(f"transaction at 0x{self.va:x} (+{self.length}) crosses a 4 KB page")

    @classmethod
    def read(cls, sid, va, length, **kw):
        return cls(sid, va, Access.READ, length=length, **kw)

    @classmethod
    def write(cls, sid, va, data, **kw):
        return cls(sid, va, Access.WRITE, data=data, **kw)


class GlobalFaultReason(enum.Enum):
    UNMATCHED_STREAM = "UnmatchedStream"
    MULTIPLE_MATCH = "MultipleMatch"
    STREAM_FAULT_CONTEXT = "StreamFaultContext"

    def __str__(self):
        return self.value


class ContextFaultReason(enum.Enum):
    INVALID_CONTEXT = "InvalidContext"
    INSTCFG_MISMATCH = "InstCfgMismatch"

    def __str__(self):
        return self.value


@dataclass(frozen=True)
class Bypassed:
    pa: int


@dataclass(frozen=True)
class Translated:
    pa: int
    bank: int


@dataclass(frozen=True)
class GlobalFault:
    reason: GlobalFaultReason


@dataclass(frozen=True)
class ContextFault:
    bank: int
    reason: Union[WalkFault, ContextFaultReason]

    @property
    def reason_name(self) -> str:
        if isinstance(self.reason, WalkFault):
            return str(self.reason.kind)
        return str(self.reason)


Outcome = Union[Bypassed, Translated, GlobalFault, ContextFault]


@dataclass(frozen=True)
class AccessResult:
    outcome: Outcome
    data: Optional[bytes] = None

    @property
    def ok(self) -> bool:
        return isinstance(self.outcome, (Bypassed, Translated))


def outcome_tag(outcome) -> str:
    return {Bypassed: "BYPASS", Translated: "XLATE", GlobalFault: "GFAULT",
            ContextFault: "CFAULT"}[type(outcome)]


class Smmu:
    """State of one SMMU instance plus the translate/access pipeline."""

    def __init__(self, trace: Optional[Callable[[str], None]] = None,
                 unmatched_policy=UnmatchedPolicy.BYPASS):
        self.global_enable = True
        self.unmatched_policy = unmatched_policy
        self.table = StreamMapTable()
        self.banks = ContextBankFile()
        self.tlb: dict[tuple[int, int], int] = {}
        self.trace = trace
        self._seq = 0

    def emit(self, text: str) -> None:
        if self.trace is not None:
            self.trace(f"EVT {self._seq} {text}")
        self._seq += 1

    # -- TLB maintenance --------------------------------------------------
    def tlb_invalidate_all(self) -> None:
        self.tlb.clear()

    def tlb_invalidate_va(self, bank: int, va: int) -> None:
        self.tlb.pop((bank, va >> PAGE_SHIFT), None)

    def tlb_invalidate_bank(self, bank: int) -> None:
        for key in [k for k in self.tlb if k[0] == bank]:
            del self.tlb[key]

    # -- pipeline ----------------------------------------------------------
    def _out(self, outcome):
        tag = outcome_tag(outcome)
        if isinstance(outcome, Bypassed):
            self.emit(f"OUT {tag} pa=0x{outcome.pa:012x}")
        elif isinstance(outcome, Translated):
            self.emit(f"OUT {tag} pa=0x{outcome.pa:012x} cb={outcome.bank}")
        elif isinstance(outcome, GlobalFault):
            self.emit(f"OUT {tag} reason={outcome.reason}")
        else:
            extra = ""
            if isinstance(outcome.reason, WalkFault) and outcome.reason.level is not None:
                extra = f" level={outcome.reason.level}"
            self.emit(f"OUT {tag} reason={outcome.reason_name} cb={outcome.bank}{extra}")
        return outcome

    def translate(self, mem: PhysMemory, txn: Transaction) -> Outcome:
        self.emit(f"TXN sid=0x{txn.stream_id:04x} va=0x{txn.va:012x} kind={txn.kind.value} "
                  f"acc={txn.access.value} cache=0x{txn.cache_bits:x} sec=NS")
        if not self.global_enable:
            return self._out(Bypassed(txn.va))

        hit = self.table.resolve(txn.stream_id)
        if isinstance(hit, NoMatch):
            self.emit("NOMATCH")
            if self.unmatched_policy is UnmatchedPolicy.BYPASS:
                return self._out(Bypassed(txn.va))
            return self._out(GlobalFault(GlobalFaultReason.UNMATCHED_STREAM))
        if isinstance(hit, MultipleMatch):
            self.emit(f"MULTI[{','.join(map(str, hit.indices))}]")
            return self._out(GlobalFault(GlobalFaultReason.MULTIPLE_MATCH))
        assert isinstance(hit, Matched)
        self.emit(f"MATCH idx={hit.index}")

        s2cr = self.table.s2cr(hit.index)
        if s2cr.ctype is S2crType.BYPASS:
            return self._out(Bypassed(txn.va))
        if s2cr.ctype in (S2crType.FAULT, S2crType.RESERVED):
            return self._out(GlobalFault(GlobalFaultReason.STREAM_FAULT_CONTEXT))

        cb = s2cr.cbndx
        bank = self.banks[cb]
        if (s2cr.instcfg is InstCfg.INSTRUCTION and txn.kind is Kind.DATA) or \
                (s2cr.instcfg is InstCfg.DATA and txn.kind is Kind.INSTRUCTION):
            return self._context_fault(cb, ContextFaultReason.INSTCFG_MISMATCH)
        if bank.cbar is not Cbar.STAGE1_S2_BYPASS:
            return self._context_fault(cb, ContextFaultReason.INVALID_CONTEXT)
        if not bank.enabled:
            return self._out(Bypassed(txn.va))

        key = (cb, txn.va >> PAGE_SHIFT)
        ppn = self.tlb.get(key)
        if ppn is not None:
            return self._out(Translated((ppn << PAGE_SHIFT) | (txn.va & PAGE_MASK), cb))

        def fetch(level, desc, desc_pa):
            self.emit(f"WALK cb={cb} L{level} desc=0x{desc:016x} @0x{desc_pa:012x}")

        result = walk(mem, bank.walk_config(), txn.va, fetch)
        if isinstance(result, WalkFault):
            return self._context_fault(cb, result)
        self.tlb[key] = result >> PAGE_SHIFT
        return self._out(Translated(result, cb))

    def _context_fault(self, cb, reason):
        self.banks[cb].last_fault = reason
        return self._out(ContextFault(cb, reason))

    def access(self, mem: PhysMemory, txn: Transaction) -> AccessResult:
        """Translate ``txn`` and perform the memory access when it succeeds."""
        outcome = self.translate(mem, txn)
        if not isinstance(outcome, (Bypassed, Translated)):
            return AccessResult(outcome)
        if txn.access is Access.WRITE:
            mem.write_bytes(outcome.pa, txn.data)
            return AccessResult(outcome)
        return AccessResult(outcome, mem.read_bytes(outcome.pa, txn.length))
