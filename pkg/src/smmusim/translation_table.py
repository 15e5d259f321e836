"""AArch64 long-descriptor translation tables, 4 KB granule.

Tables live inside a :class:`~smmusim.phys_mem.PhysMemory`. Levels 0..3
correspond to the Linux PGD/PUD/PMD/PTE levels. Descriptor layout:

* bit 0      VALID
* bit 1      TYPE (table at levels 0-2, page at level 3)
* bits 47:12 output address (next table or output page)
* bits 63:52 software bits, ignored by the walker

Everything else is written as zero by the builder and ignored on walks.
"""

import enum
from dataclasses import dataclass
from typing import Callable, Optional

from .errors import (
    InputOutOfRange,
    InvalidWalkConfig,
    MisalignedAddress,
    NotMapped,
    OutputOutOfRange,
    Remap,
    UnsupportedGranule,
)
from .phys_mem import PAGE_MASK, PAGE_SIZE, PhysMemory

VA_LIMIT = 1 << 49

DESC_VALID = 1 << 0
DESC_TYPE = 1 << 1
DESC_ADDR_MASK = ((1 << 48) - 1) & ~PAGE_MASK
DESC_SW_MASK = ((1 << 12) - 1) << 52

OA_WIDTHS = (32, 36, 40, 42, 44, 48)
GRANULE = 4096


def level_index(va: int, level: int) -> int:
    if level not in (0, 1, 2, 3):
        raise ValueError(f"bad level {level}")
    return (va >> (39 - 9 * level)) & 0x1FF


def start_level(ia_bits: int) -> int:
    if 40 <= ia_bits <= 48:
        return 0
    if 31 <= ia_bits <= 39:
        return 1
    if 25 <= ia_bits <= 30:
        return 2
    raise InvalidWalkConfig(f"input size {ia_bits} outside [25, 48]")


def make_table_desc(pa: int) -> int:
    return (pa & DESC_ADDR_MASK) | DESC_TYPE | DESC_VALID


make_page_desc = make_table_desc


def desc_output(desc: int) -> int:
    return desc & DESC_ADDR_MASK


@dataclass(frozen=True)
class WalkConfig:
    ia_bits: int
    oa_bits: int
    root: int
    granule: int = GRANULE

    def __post_init__(self):
        if self.granule != GRANULE:
            raise UnsupportedGranule(f"granule {self.granule} not supported (4 KB only)")
        start_level(self.ia_bits)
        if self.oa_bits not in OA_WIDTHS:
            raise InvalidWalkConfig(f"output size {self.oa_bits} not one of {OA_WIDTHS}")
        if self.root & PAGE_MASK:
            raise MisalignedAddress(f"table root 0x{self.root:x} not 4 KB aligned")

    @property
    def start_level(self) -> int:
        return start_level(self.ia_bits)


class FaultKind(enum.Enum):
    ADDRESS_SIZE_INPUT = "AddressSizeFaultInput"
    ADDRESS_SIZE_OUTPUT = "AddressSizeFaultOutput"
    TRANSLATION = "TranslationFault"

    def __str__(self):
        return self.value


@dataclass(frozen=True)
class WalkFault:
    kind: FaultKind
    level: Optional[int]
    va: int

    def __str__(self):
        if self.level is None:
            return str(self.kind)
        return f"{self.kind}/L{self.level}"


# Called as on_fetch(level, descriptor, descriptor_address).
FetchHook = Callable[[int, int, int], None]


def walk(mem: PhysMemory, cfg: WalkConfig, va: int, on_fetch: Optional[FetchHook] = None):
    """Translate ``va`` under ``cfg``; returns a PA or a :class:`WalkFault`."""
    if va < 0 or va >= 1 << cfg.ia_bits:
        return WalkFault(FaultKind.ADDRESS_SIZE_INPUT, None, va)
    table = cfg.root
    for level in range(cfg.start_level, 4):
        desc_pa = table + 8 * level_index(va, level)
        desc = mem.read_u64(desc_pa)
        if on_fetch is not None:
            on_fetch(level, desc, desc_pa)
        # block descriptors (TYPE=0) are never generated and fault like invalid ones
        if not desc & DESC_VALID or not desc & DESC_TYPE:
            return WalkFault(FaultKind.TRANSLATION, level, va)
        table = desc_output(desc)
    pa = table | (va & PAGE_MASK)
    if pa >= 1 << cfg.oa_bits:
        return WalkFault(FaultKind.ADDRESS_SIZE_OUTPUT, None, va)
    return pa


def _check_va(cfg, va):
    if va & PAGE_MASK:
        raise MisalignedAddress(f"va 0x{va:x} not 4 KB aligned")
    if va < 0 or va >= 1 << cfg.ia_bits:
        raise InputOutOfRange(f"va 0x{va:x} outside {cfg.ia_bits}-bit input range")


def _leaf_slot(mem, cfg, va, allocate):
    """Return the address of the level-3 descriptor for ``va``, or None."""
    table = cfg.root
    for level in range(cfg.start_level, 3):
        desc_pa = table + 8 * level_index(va, level)
        desc = mem.read_u64(desc_pa)
        if not desc & DESC_VALID:
            if not allocate:
                return None
            nxt = mem.alloc_table_page()
            mem.write_u64(desc_pa, make_table_desc(nxt))
            table = nxt
        elif not desc & DESC_TYPE:
            raise InvalidWalkConfig(
                f"block descriptor at L{level} for va 0x{va:x}; only 4 KB pages are supported")
        else:
            table = desc_output(desc)
    return table + 8 * level_index(va, 3)


def map_page(mem: PhysMemory, cfg: WalkConfig, va: int, pa: int) -> None:
    _check_va(cfg, va)
    if pa & PAGE_MASK:
        raise MisalignedAddress(f"pa 0x{pa:x} not 4 KB aligned")
    if pa < 0 or pa >= 1 << cfg.oa_bits:
        raise OutputOutOfRange(f"pa 0x{pa:x} outside {cfg.oa_bits}-bit output range")
    slot = _leaf_slot(mem, cfg, va, allocate=True)
    old = mem.read_u64(slot)
    if old & DESC_VALID:
        if desc_output(old) == pa:
            return
        raise Remap(f"va 0x{va:x} already maps to 0x{desc_output(old):x}")
    mem.write_u64(slot, make_page_desc(pa))


def unmap_page(mem: PhysMemory, cfg: WalkConfig, va: int) -> None:
    _check_va(cfg, va)
    slot = _leaf_slot(mem, cfg, va, allocate=False)
    if slot is None or not mem.read_u64(slot) & DESC_VALID:
        raise NotMapped(f"va 0x{va:x} is not mapped")
    mem.write_u64(slot, 0)


def build_process_table(mem: PhysMemory, ia_bits: int, mappings, oa_bits: int = 40) -> WalkConfig:
    """Build a standalone table standing in for a user process's page tables.

    The returned config's ``root`` plays the part of the process pgd that
    gets handed to the SMMU.
    """
    mappings = list(mappings)
    vas = [va for va, _ in mappings]
    if len(set(vas)) != len(vas):
        raise Remap("duplicate virtual address in process mappings")
    cfg = WalkConfig(ia_bits=ia_bits, oa_bits=oa_bits, root=mem.alloc_table_page())
    for va, pa in mappings:
        map_page(mem, cfg, va, pa)
    return cfg


__all__ = [
    "DESC_VALID", "DESC_TYPE", "DESC_ADDR_MASK", "FaultKind", "PAGE_SIZE", "VA_LIMIT",
    "WalkConfig", "WalkFault", "build_process_table", "desc_output", "level_index",
    "make_page_desc", "make_table_desc", "map_page", "start_level", "unmap_page", "walk",
]
