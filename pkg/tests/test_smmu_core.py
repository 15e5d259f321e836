import re

import pytest

from smmusim.context_bank import Cbar
from smmusim.smmu import (
    Bypassed,
    ContextFault,
    ContextFaultReason,
    GlobalFault,
    GlobalFaultReason,
    Kind,
    Smmu,
    Transaction,
    Translated,
    UnmatchedPolicy,
)
from smmusim.stream_mapping import InstCfg, S2cr, S2crType, Smr
from smmusim.translation_table import FaultKind, WalkConfig, WalkFault, map_page

TXN_RE = re.compile(r"^EVT \d+ TXN sid=0x[0-9a-f]{4} va=0x[0-9a-f]{12} kind=[DI] acc=[RW] "
                    r"cache=0x[0-9a-f]+ sec=NS$")
WALK_RE = re.compile(r"^EVT \d+ WALK cb=\d+ L[0-3] desc=0x[0-9a-f]{16} @0x[0-9a-f]{12}$")


def setup_bank(smmu, mem, sid=0x200, instcfg=InstCfg.DEFAULT, enable=True):
    cb = smmu.banks.allocate_bank()
    root = mem.alloc_table_page()
    cfg = smmu.banks.program_bank(cb, root, 0x10, 0b101)
    smmu.banks[cb].enabled = enable
    smmu.table.program_entry(0, Smr(True, 0, sid), S2cr(S2crType.TRANSLATION, cb, instcfg))
    return cb, cfg


def w(sid, va, kind=Kind.DATA):
    return Transaction.write(sid, va, b"\xef\xbe\xfe\xca", kind=kind)


def test_transaction_validation():
    with pytest.raises(ValueError):
        Transaction.read(0x200, 0x1000, 0)
    with pytest.raises(ValueError):
        Transaction.read(0x200, 0x1FFE, 4)
    with pytest.raises(ValueError):
        Transaction.read(1 << 15, 0x1000, 4)
    assert Transaction.read(0x200, 0x1FFC, 4).length == 4


def test_unmatched_bypass_default(smmu, mem, trace):
    r = smmu.access(mem, w(0x14E8, 0x60002000))
    assert r.outcome == Bypassed(0x60002000)
    assert mem.read_word32(0x60002000) == 0xCAFEBEEF
    assert TXN_RE.match(trace[0])
    assert trace[1:] == ["EVT 1 NOMATCH", "EVT 2 OUT BYPASS pa=0x000060002000"]


def test_unmatched_fault_policy(mem, trace):
    s = Smmu(trace.append, UnmatchedPolicy.FAULT)
    assert s.access(mem, w(0x14E8, 0x60002000)).outcome == GlobalFault(GlobalFaultReason.UNMATCHED_STREAM)
    assert mem.read_word32(0x60002000) == 0
    assert trace[-1].endswith("OUT GFAULT reason=UnmatchedStream")


def test_global_disable_bypasses_everything(smmu, mem):
    setup_bank(smmu, mem)
    smmu.global_enable = False
    assert smmu.translate(mem, w(0x200, 0x70002000)) == Bypassed(0x70002000)


def test_translate_and_trace(smmu, mem, trace):
    cb, cfg = setup_bank(smmu, mem)
    map_page(mem, cfg, 0x70002000, 0x60002000)
    r = smmu.access(mem, w(0x200, 0x70002000))
    assert r.outcome == Translated(0x60002000, cb)
    assert mem.read_word32(0x60002000) == 0xCAFEBEEF
    assert trace[1] == "EVT 1 MATCH idx=0"
    walks = [t for t in trace if " WALK " in t]
    assert len(walks) == 4 and all(WALK_RE.match(t) for t in walks)
    assert [t.split()[4] for t in walks] == ["L0", "L1", "L2", "L3"]
    assert trace[-1] == f"EVT {len(trace) - 1} OUT XLATE pa=0x000060002000 cb={cb}"


def test_read_returns_data(smmu, mem):
    _, cfg = setup_bank(smmu, mem)
    map_page(mem, cfg, 0x70000000, 0x60000000)
    mem.write_word32(0x60000010, 0x12345678)
    r = smmu.access(mem, Transaction.read(0x200, 0x70000010, 4))
    assert r.data == (0x12345678).to_bytes(4, "little")


def test_tlb_hit_skips_walk(smmu, mem, trace):
    _, cfg = setup_bank(smmu, mem)
    map_page(mem, cfg, 0x70002000, 0x60002000)
    smmu.translate(mem, w(0x200, 0x70002000))
    trace.clear()
    assert smmu.translate(mem, w(0x200, 0x70002004)).pa == 0x60002004
    assert not any(" WALK " in t for t in trace)


def test_tlb_invalidation_variants(smmu, mem):
    cb, cfg = setup_bank(smmu, mem)
    map_page(mem, cfg, 0x70002000, 0x60002000)
    smmu.translate(mem, w(0x200, 0x70002000))
    smmu.tlb_invalidate_va(cb, 0x70002123)
    assert smmu.tlb == {}
    smmu.translate(mem, w(0x200, 0x70002000))
    smmu.tlb_invalidate_bank(cb + 1)
    assert len(smmu.tlb) == 1
    smmu.tlb_invalidate_bank(cb)
    assert smmu.tlb == {}


def test_walk_fault_is_context_fault(smmu, mem, trace):
    cb, _ = setup_bank(smmu, mem)
    out = smmu.translate(mem, w(0x200, 0x70002000))
    assert out == ContextFault(cb, WalkFault(FaultKind.TRANSLATION, 0, 0x70002000))
    assert smmu.banks[cb].last_fault == out.reason
    assert trace[-1].endswith(f"OUT CFAULT reason=TranslationFault cb={cb} level=0")
    assert smmu.tlb == {}


def test_multiple_match_gfault(smmu, mem, trace):
    setup_bank(smmu, mem)
    smmu.table.program_entry(5, Smr(True, 0x3F, 0x200), S2cr(S2crType.BYPASS))
    assert smmu.translate(mem, w(0x200, 0x1000)) == GlobalFault(GlobalFaultReason.MULTIPLE_MATCH)
    assert "EVT 1 MULTI[0,5]" in trace


@pytest.mark.parametrize("ctype,expected", [
    (S2crType.BYPASS, Bypassed(0x1000)),
    (S2crType.FAULT, GlobalFault(GlobalFaultReason.STREAM_FAULT_CONTEXT)),
    (S2crType.RESERVED, GlobalFault(GlobalFaultReason.STREAM_FAULT_CONTEXT)),
])
def test_s2cr_types(smmu, mem, ctype, expected):
    smmu.table.program_entry(0, Smr(True, 0, 0x200), S2cr(ctype))
    assert smmu.translate(mem, w(0x200, 0x1000)) == expected


@pytest.mark.parametrize("instcfg,kind,faults", [
    (InstCfg.INSTRUCTION, Kind.DATA, True),
    (InstCfg.INSTRUCTION, Kind.INSTRUCTION, False),
    (InstCfg.DATA, Kind.INSTRUCTION, True),
    (InstCfg.DATA, Kind.DATA, False),
    (InstCfg.DEFAULT, Kind.DATA, False),
    (InstCfg.DEFAULT, Kind.INSTRUCTION, False),
])
def test_instcfg_check(smmu, mem, instcfg, kind, faults):
    cb, cfg = setup_bank(smmu, mem, instcfg=instcfg)
    map_page(mem, cfg, 0x70002000, 0x60002000)
    out = smmu.translate(mem, w(0x200, 0x70002000, kind))
    if faults:
        assert out == ContextFault(cb, ContextFaultReason.INSTCFG_MISMATCH)
    else:
        assert out == Translated(0x60002000, cb)


@pytest.mark.parametrize("cbar", [Cbar.STAGE2, Cbar.STAGE1_S2_FAULT, Cbar.STAGE1_THEN_STAGE2])
def test_non_stage1_cbar_invalid_context(smmu, mem, cbar):
    cb, _ = setup_bank(smmu, mem)
    smmu.banks[cb].cbar = cbar
    assert smmu.translate(mem, w(0x200, 0x1000)) == ContextFault(cb, ContextFaultReason.INVALID_CONTEXT)


def test_disabled_bank_bypasses(smmu, mem):
    setup_bank(smmu, mem, enable=False)
    assert smmu.translate(mem, w(0x200, 0x70002000)) == Bypassed(0x70002000)


def test_sequence_numbers_monotonic(smmu, mem, trace):
    for va in (0x1000, 0x2000, 0x3000):
        smmu.translate(mem, w(0x14E8, va))
    assert [int(t.split()[1]) for t in trace] == list(range(len(trace)))


def test_cache_bits_in_trace(smmu, mem, trace):
    smmu.translate(mem, Transaction.write(0x200, 0x1000, b"x", cache_bits=0xF))
    assert "cache=0xf" in trace[0]


def test_walkconfig_from_bank_uses_ttbr(smmu, mem):
    cb, cfg = setup_bank(smmu, mem)
    assert smmu.banks[cb].walk_config() == WalkConfig(48, 48, cfg.root)
