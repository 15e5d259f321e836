import pytest
from hypothesis import given
from hypothesis import strategies as st

from smmusim.errors import FieldOutOfRange, IndexOutOfRange, UnsupportedFeature, WrongStreamMode
from smmusim.stream_mapping import (
    InstCfg,
    Matched,
    MultipleMatch,
    NoMatch,
    S2cr,
    S2crType,
    Smr,
    StreamMapTable,
    StreamMode,
    decompose,
    make_stream_id,
)


def test_stream_id_examples():
    assert make_stream_id(0x8, 0) == 0x200
    assert make_stream_id(0x9, 0) == 0x240
    assert make_stream_id(0xF, 0x3F) == 0x3FF


def test_decompose_fpd_channel():
    f = decompose(0x14E8)
    assert (f.axi_id, f.master_port, f.upper) == (0x28, 0x3, 0x5)


@given(st.integers(0, 15), st.integers(0, 63))
def test_compose_decompose_roundtrip(port, axi):
    f = decompose(make_stream_id(port, axi))
    assert (f.master_port, f.axi_id, f.upper) == (port, axi, 0)


@pytest.mark.parametrize("port,axi", [(16, 0), (0, 64), (-1, 0)])
def test_field_overflow(port, axi):
    with pytest.raises(FieldOutOfRange):
        make_stream_id(port, axi)


def test_decompose_range():
    with pytest.raises(FieldOutOfRange):
        decompose(1 << 15)


def test_smr_predicate_examples():
    assert Smr(True, 0, 0x200).matches(0x200)
    assert not Smr(True, 0, 0x200).matches(0x240)
    assert Smr(True, 0x7F, 0x200).matches(0x240)
    assert not Smr(False, 0x7FFF, 0).matches(0x123)
    assert Smr(True, 0x7FFF, 0).matches(0x7ABC)


def test_smr_extended_unsupported():
    with pytest.raises(UnsupportedFeature):
        Smr(True, 0, 0, extended=True)


def test_smr_field_width():
    with pytest.raises(FieldOutOfRange):
        Smr(True, 1 << 15, 0)


def test_instcfg_codes():
    assert InstCfg.from_code(0b11) is InstCfg.INSTRUCTION
    assert InstCfg.from_code(0b10) is InstCfg.DATA
    assert InstCfg.from_code(0b00) is InstCfg.DEFAULT


def test_reset_table_nomatch():
    t = StreamMapTable()
    assert len(t) == 48
    assert t.match_stream(0x14E8) == NoMatch()
    assert t.s2cr(0).ctype is S2crType.FAULT


def test_single_and_multiple_match():
    t = StreamMapTable()
    t.program_entry(3, Smr(True, 0, 0x200), S2cr(S2crType.TRANSLATION, 1))
    assert t.match_stream(0x200) == Matched(3)
    t.program_entry(7, Smr(True, 0x40, 0x200), S2cr())
    assert t.match_stream(0x200) == MultipleMatch((3, 7))
    assert t.match_stream(0x240) == Matched(7)
    t.invalidate_entry(3)
    assert t.match_stream(0x200) == Matched(7)


def test_program_index_bounds():
    t = StreamMapTable()
    with pytest.raises(IndexOutOfRange):
        t.program_entry(48, Smr(True, 0, 0), S2cr())


def test_free_entry():
    t = StreamMapTable()
    assert t.free_entry() == 0
    for n in range(48):
        t.program_entry(n, Smr(True, 0, n), S2cr())
    assert t.free_entry() is None
    t.invalidate_entry(17)
    assert t.free_entry() == 17


def test_indexing_mode():
    t = StreamMapTable(StreamMode.INDEXING)
    assert t.resolve(5) == Matched(5)
    assert t.resolve(47) == Matched(47)
    assert t.resolve(48) == NoMatch()
    with pytest.raises(WrongStreamMode):
        t.match_stream(5)
    with pytest.raises(WrongStreamMode):
        StreamMapTable().index_stream(5)


def brute(entries, sid):
    hits = [n for n, (v, m, i) in enumerate(entries)
            if v and all(((sid >> b) & 1) == ((i >> b) & 1) for b in range(15) if not (m >> b) & 1)]
    if not hits:
        return NoMatch()
    return Matched(hits[0]) if len(hits) == 1 else MultipleMatch(tuple(hits))


@given(st.lists(st.tuples(st.booleans(), st.integers(0, 0x7FFF), st.integers(0, 0x7FFF)),
                min_size=48, max_size=48),
       st.lists(st.integers(0, 0x7FFF), min_size=1, max_size=20))
def test_match_agrees_with_bitwise_brute_force(entries, sids):
    t = StreamMapTable()
    for n, (v, m, i) in enumerate(entries):
        t.program_entry(n, Smr(v, m, i), S2cr())
    for sid in sids:
        assert t.match_stream(sid) == brute(entries, sid)


def test_reprogram_invalidates_cache():
    t = StreamMapTable()
    t.program_entry(0, Smr(True, 0, 1), S2cr())
    assert t.match_stream(1) == Matched(0)
    t.program_entry(0, Smr(True, 0, 2), S2cr())
    assert t.match_stream(1) == NoMatch()
    assert t.match_stream(2) == Matched(0)
